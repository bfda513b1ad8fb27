"""Phase-space groups, multipliers and convolution semigroups of measures.

Two groups are supported, both abelian and unimodular:

* ``GroupContext.finite(d)``: the discrete phase space Z_d x Z_d, odd ``d``,
  with counting measure as Haar measure;
* ``GroupContext.plane()``: the translations R x R of the phase plane with
  Haar measure ``dq dp / (2 pi)``.

Group elements are arrays whose last axis has length 2, ``(a, b)`` or
``(q, p)``; every function here broadcasts over leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

WEIGHT_TOL = 1e-12
PSD_TOL = 1e-12


@dataclass(frozen=True)
class GroupContext:
    kind: str
    d: int | None = None

    def __post_init__(self):
        if self.kind == "finite":
            if self.d is None or self.d < 3 or self.d % 2 == 0:
                raise ValueError(f"finite phase space needs an odd d >= 3, got {self.d}")
        elif self.kind == "plane":
            if self.d is not None:
                raise ValueError("the plane group takes no d")
        else:
            raise ValueError(f"unknown group kind {self.kind!r}")

    @classmethod
    def finite(cls, d: int) -> "GroupContext":
        return cls("finite", int(d))

    @classmethod
    def plane(cls) -> "GroupContext":
        return cls("plane")

    @property
    def is_finite(self) -> bool:
        return self.kind == "finite"

    @property
    def haar_weight(self) -> float:
        """Haar mass of a point (finite) or density w.r.t. dq dp (plane)."""
        return 1.0 if self.is_finite else 1.0 / (2 * np.pi)

    @property
    def modular_value(self) -> float:
        return 1.0

    @property
    def inv2(self) -> int:
        """Inverse of 2 modulo d."""
        return (self.d + 1) // 2

    @property
    def omega(self) -> complex:
        return np.exp(2j * np.pi / self.d)

    def identity(self) -> np.ndarray:
        return np.zeros(2, dtype=int if self.is_finite else float)

    def element(self, g) -> np.ndarray:
        """Validate and canonicalize a (batch of) group element(s)."""
        g = np.asarray(g)
        if g.shape[-1:] != (2,):
            raise ValueError(f"group elements need a trailing axis of length 2, got {g.shape}")
        if self.is_finite:
            if not np.issubdtype(g.dtype, np.integer):
                gi = np.rint(g.astype(float))
                if not np.array_equal(gi, g):
                    raise ValueError("non-integer element passed to a finite phase space")
                g = gi.astype(np.int64)
            return np.mod(g, self.d)
        if np.iscomplexobj(g):
            raise ValueError("plane elements must be real")
        return g.astype(float)

    def compose(self, g, h) -> np.ndarray:
        out = self.element(g) + self.element(h)
        return np.mod(out, self.d) if self.is_finite else out

    def inverse(self, g) -> np.ndarray:
        out = -self.element(g)
        return np.mod(out, self.d) if self.is_finite else out

    def elements(self) -> np.ndarray:
        """All d^2 elements, row-major in (a, b)."""
        if not self.is_finite:
            raise ValueError("the plane has no finite element list")
        a, b = np.meshgrid(np.arange(self.d), np.arange(self.d), indexing="ij")
        return np.stack([a.ravel(), b.ravel()], axis=-1)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "d": self.d} if self.is_finite else {"kind": "plane"}


def _check_same(ctx: GroupContext, *gs):
    return [ctx.element(g) for g in gs]


def symplectic_form(ctx: GroupContext, g, h):
    """``q p' - p q'``; reduced mod d on the finite group."""
    g, h = _check_same(ctx, g, h)
    s = g[..., 0] * h[..., 1] - g[..., 1] * h[..., 0]
    return np.mod(s, ctx.d) if ctx.is_finite else s


def multiplier_value(ctx: GroupContext, g, h):
    r"""Weyl multiplier ``m(g, h)`` with ``U(g h) = m(g, h) U(g) U(h)``.

    Plane: :math:`\exp(\tfrac{i}{2}(q\tilde p - p\tilde q))`.
    Finite: :math:`\omega^{2^{-1}(a b' - b a')}` with the inverse of 2 taken mod d.
    """
    s = symplectic_form(ctx, g, h)
    if ctx.is_finite:
        return np.exp(2j * np.pi * np.mod(ctx.inv2 * s, ctx.d) / ctx.d)
    return np.exp(0.5j * s)


def temme_value(ctx: GroupContext, g, h):
    """Phase of the two-sided representation: ``m(g, g^-1 h)^* m(g^-1 h, g)``."""
    g, h = _check_same(ctx, g, h)
    k = ctx.compose(ctx.inverse(g), h)
    return np.conj(multiplier_value(ctx, g, k)) * multiplier_value(ctx, k, g)


# --------------------------------------------------------------------------
# measures


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finitely supported probability measure ``sum_i w_i delta_{g_i}``."""

    ctx: GroupContext
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = self.ctx.element(np.atleast_2d(self.points))
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.ndim != 2 or len(pts) != len(w) or len(w) == 0:
            raise ValueError("points and weights must be non-empty and of equal length")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_array(cls, ctx: GroupContext, w) -> "DiscreteMeasure":
        """Measure on Z_d x Z_d from a (d, d) weight table; zero entries are dropped."""
        w = np.asarray(w, dtype=float)
        if w.shape != (ctx.d, ctx.d):
            raise ValueError(f"weight table must have shape ({ctx.d}, {ctx.d})")
        keep = w.ravel() != 0
        return cls(ctx, ctx.elements()[keep], w.ravel()[keep])

    def to_array(self) -> np.ndarray:
        if not self.ctx.is_finite:
            raise ValueError("dense weight tables exist only on the finite group")
        out = np.zeros((self.ctx.d, self.ctx.d))
        np.add.at(out, (self.points[:, 0], self.points[:, 1]), self.weights)
        return out

    @property
    def is_point_mass(self) -> bool:
        return len(self.weights) == 1


@dataclass(frozen=True, eq=False)
class GaussianMeasure:
    """Normal distribution on the plane with a non-zero PSD covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(2)
        cov = np.asarray(self.cov, dtype=float).reshape(2, 2)
        _check_psd(cov)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def ctx(self) -> GroupContext:
        return GroupContext.plane()


def _check_psd(cov: np.ndarray):
    if np.abs(cov - cov.T).max() > PSD_TOL:
        raise ValueError("covariance is not symmetric")
    if np.linalg.eigvalsh((cov + cov.T) / 2).min() < -PSD_TOL:
        raise ValueError("covariance is not positive semidefinite")


def point_mass(ctx: GroupContext, g=None) -> DiscreteMeasure:
    g = ctx.identity() if g is None else g
    return DiscreteMeasure(ctx, np.atleast_2d(g), [1.0])


def uniform(ctx: GroupContext) -> DiscreteMeasure:
    n = ctx.d * ctx.d
    return DiscreteMeasure(ctx, ctx.elements(), np.full(n, 1.0 / n))


def _finite_convolve_arrays(mu: np.ndarray, nu: np.ndarray) -> np.ndarray:
    out = np.zeros_like(nu)
    for a, b in zip(*np.nonzero(mu)):
        out += mu[a, b] * np.roll(nu, (a, b), axis=(0, 1))
    return out


def convolve(mu, nu):
    """Convolution ``(mu * nu)(g) = sum_h mu(h) nu(h^-1 g)``."""
    if mu.ctx != nu.ctx:
        raise ValueError("measures live on different groups")
    if isinstance(mu, DiscreteMeasure) and isinstance(nu, DiscreteMeasure):
        if mu.ctx.is_finite:
            return DiscreteMeasure.from_array(mu.ctx, _finite_convolve_arrays(mu.to_array(), nu.to_array()))
        acc: dict = {}
        for g, wg in zip(mu.points, mu.weights):
            for h, wh in zip(nu.points, nu.weights):
                key = tuple(g + h)
                acc[key] = acc.get(key, 0.0) + wg * wh
        return DiscreteMeasure(mu.ctx, np.array(list(acc.keys())), np.array(list(acc.values())))
    if isinstance(mu, GaussianMeasure) and isinstance(nu, GaussianMeasure):
        return GaussianMeasure(mu.mean + nu.mean, mu.cov + nu.cov)
    # a point mass only shifts a Gaussian; any other mixture has no closed form here
    for a, b in ((mu, nu), (nu, mu)):
        if isinstance(a, DiscreteMeasure) and a.is_point_mass and isinstance(b, GaussianMeasure):
            return GaussianMeasure(b.mean + a.points[0], b.cov)
    raise ValueError("cannot convolve a multi-point discrete measure with a Gaussian")


def adjoint_measure(mu):
    """The measure ``g -> mu(g^-1)``."""
    if isinstance(mu, GaussianMeasure):
        return GaussianMeasure(-mu.mean, mu.cov)
    return DiscreteMeasure(mu.ctx, mu.ctx.inverse(mu.points), mu.weights)


def measures_close(mu, nu, atol: float = 1e-12) -> bool:
    if isinstance(mu, GaussianMeasure) or isinstance(nu, GaussianMeasure):
        if not (isinstance(mu, GaussianMeasure) and isinstance(nu, GaussianMeasure)):
            return False
        return np.allclose(mu.mean, nu.mean, rtol=0, atol=atol) and np.allclose(mu.cov, nu.cov, rtol=0, atol=atol)
    if mu.ctx != nu.ctx:
        return False
    if mu.ctx.is_finite:
        return float(np.abs(mu.to_array() - nu.to_array()).max()) <= atol
    merged = convolve(mu, point_mass(mu.ctx))  # merges duplicate points
    other = convolve(nu, point_mass(nu.ctx))
    a = {tuple(p): w for p, w in zip(merged.points, merged.weights)}
    b = {tuple(p): w for p, w in zip(other.points, other.weights)}
    keys = set(a) | set(b)
    return all(abs(a.get(k, 0.0) - b.get(k, 0.0)) <= atol for k in keys)


# --------------------------------------------------------------------------
# convolution semigroups


def convolution_matrix(nu: DiscreteMeasure) -> np.ndarray:
    """Matrix of ``phi -> nu * phi`` on the d^2-dimensional group algebra."""
    ctx = nu.ctx
    d = ctx.d
    els = ctx.elements()
    P = np.zeros((d * d, d * d))
    w = nu.to_array()
    for col, (a, b) in enumerate(els):
        P[:, col] = np.roll(w, (a, b), axis=(0, 1)).ravel()
    return P


def compound_poisson_at(base: DiscreteMeasure, rate: float, t: float) -> DiscreteMeasure:
    """``exp(t rate (P_base - I)) delta_e`` by exact matrix exponential."""
    if not base.ctx.is_finite:
        raise ValueError("compound Poisson semigroups are defined on the finite group only")
    if rate <= 0:
        raise ValueError("rate must be positive")
    if t < 0:
        raise ValueError("t must be non-negative")
    d = base.ctx.d
    if t == 0:
        return point_mass(base.ctx)
    P = convolution_matrix(base)
    gen = t * rate * (P - np.eye(d * d))
    w = scipy.linalg.expm(gen)[:, 0]
    if w.min() < -1e-14:
        raise ArithmeticError(f"matrix exponential produced weight {w.min():.3e}")
    w = np.clip(w, 0.0, None)
    return DiscreteMeasure.from_array(base.ctx, w.reshape(d, d))


def gaussian_at(drift, diffusion, t: float):
    """Brownian motion with drift on the plane at time ``t``.

    Returns a point mass when the covariance ``t * diffusion`` vanishes.
    """
    b = np.asarray(drift, dtype=float).reshape(2)
    S = np.asarray(diffusion, dtype=float).reshape(2, 2)
    _check_psd(S)
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0 or not np.any(S):
        return point_mass(GroupContext.plane(), t * b)
    return GaussianMeasure(t * b, t * S)


@dataclass(frozen=True, eq=False)
class CompoundPoisson:
    base: DiscreteMeasure
    rate: float
    kind = "compound_poisson"

    @property
    def ctx(self) -> GroupContext:
        return self.base.ctx

    def at(self, t: float) -> DiscreteMeasure:
        return compound_poisson_at(self.base, self.rate, t)

    def adjoint(self) -> "CompoundPoisson":
        return CompoundPoisson(adjoint_measure(self.base), self.rate)


@dataclass(frozen=True, eq=False)
class GaussianSemigroup:
    drift: np.ndarray
    diffusion: np.ndarray
    kind = "gaussian"

    def __post_init__(self):
        object.__setattr__(self, "drift", np.asarray(self.drift, dtype=float).reshape(2))
        S = np.asarray(self.diffusion, dtype=float).reshape(2, 2)
        _check_psd(S)
        object.__setattr__(self, "diffusion", S)

    @property
    def ctx(self) -> GroupContext:
        return GroupContext.plane()

    def at(self, t: float):
        return gaussian_at(self.drift, self.diffusion, t)

    def adjoint(self) -> "GaussianSemigroup":
        return GaussianSemigroup(-self.drift, self.diffusion)


# --------------------------------------------------------------------------
# sampling and characteristic functions


def _psd_factor(S: np.ndarray) -> np.ndarray:
    """``F`` with ``F F^T = S``; Cholesky when possible, eigen-factor otherwise."""
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        lam, V = np.linalg.eigh(S)
        return V * np.sqrt(np.clip(lam, 0.0, None))


def sample(mu, n: int, seed) -> np.ndarray:
    """``n`` i.i.d. draws from ``mu`` as an ``(n, 2)`` array.

    Discrete measures are sampled by inverse CDF over the lexicographically
    sorted support, Gaussians by Box-Muller pairs pushed through a factor of
    the covariance.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if isinstance(mu, DiscreteMeasure):
        order = np.lexsort((mu.points[:, 1], mu.points[:, 0]))
        pts = mu.points[order]
        cdf = np.cumsum(mu.weights[order])
        idx = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
        return pts[np.minimum(idx, len(pts) - 1)]
    u1 = 1.0 - rng.random(n)  # (0, 1], keeps the log finite
    u2 = rng.random(n)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.stack([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)], axis=-1)
    return mu.mean + z @ _psd_factor(mu.cov).T


def symplectic_char(mu, points) -> np.ndarray:
    r"""Symplectic Fourier transform of a plane measure,
    :math:`\int e^{i(\tilde q p - \tilde p q)}\,d\mu(q, p)`, at ``points`` = (q~, p~)."""
    if mu.ctx.is_finite:
        raise ValueError("symplectic_char is defined for plane measures only")
    k = np.asarray(points, dtype=float)
    qt, pt = k[..., 0], k[..., 1]
    if isinstance(mu, GaussianMeasure):
        kv = np.stack([-pt, qt], axis=-1)
        quad = np.einsum("...i,ij,...j->...", kv, mu.cov, kv)
        return np.exp(1j * (kv @ mu.mean) - 0.5 * quad)
    out = np.zeros(qt.shape, dtype=complex)
    for (q, p), w in zip(mu.points, mu.weights):
        out += w * np.exp(1j * (qt * p - pt * q))
    return out


def is_positive_definite(f, points, ctx: GroupContext) -> float:
    """Minimum eigenvalue of the plain Gram matrix ``M_jk = f(g_j^-1 g_k)``.

    ``f`` is a callable on a single group element or a mapping keyed by
    element tuples.  A missing or non-finite value is an error.
    """
    pts = ctx.element(np.atleast_2d(points))
    n = len(pts)
    if n > 256:
        raise ValueError("at most 256 points")
    M = np.empty((n, n), dtype=complex)
    for j in range(n):
        for k in range(n):
            diff = ctx.compose(ctx.inverse(pts[j]), pts[k])
            try:
                val = f[tuple(diff.tolist())] if isinstance(f, dict) else f(diff)
            except (KeyError, IndexError) as exc:
                raise ValueError(f"function undefined at {tuple(diff.tolist())}") from exc
            val = complex(np.asarray(val).reshape(()))
            if not np.isfinite(val):
                raise ValueError(f"function undefined at {tuple(diff.tolist())}")
            M[j, k] = val
    return float(np.linalg.eigvalsh((M + M.conj().T) / 2).min())


# --------------------------------------------------------------------------
# JSON encodings


def measure_to_dict(mu) -> dict:
    if isinstance(mu, GaussianMeasure):
        return {"mean": mu.mean.tolist(), "cov": mu.cov.tolist()}
    return {"support": mu.points.tolist(), "weights": mu.weights.tolist()}


def measure_from_dict(ctx: GroupContext, obj: dict):
    if "mean" in obj:
        if ctx.is_finite:
            raise ValueError("Gaussian measures need the plane group")
        return GaussianMeasure(obj["mean"], obj["cov"])
    return DiscreteMeasure(ctx, np.asarray(obj["support"]), obj["weights"])


def semigroup_to_dict(sg) -> dict:
    if isinstance(sg, CompoundPoisson):
        return {"kind": "compound_poisson", "base": measure_to_dict(sg.base), "rate": sg.rate}
    return {"kind": "gaussian", "drift": sg.drift.tolist(), "diffusion": sg.diffusion.tolist()}


def semigroup_from_dict(ctx: GroupContext, obj: dict):
    kind = obj.get("kind")
    if kind == "compound_poisson":
        return CompoundPoisson(measure_from_dict(ctx, obj["base"]), float(obj["rate"]))
    if kind == "gaussian":
        return GaussianSemigroup(obj["drift"], obj["diffusion"])
    raise ValueError(f"unknown semigroup kind {kind!r}")
