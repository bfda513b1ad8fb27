"""Randomly generated semigroups ``T_t = integral of S(g) dmu_t(g)``.

The same convolution semigroup ``mu_t`` drives six actions:

``twirl``            ``rho -> U(g) rho U(g)^*`` on density operators,
``two_sided``        the two-sided phase representation on Fourier-Wigner tomograms,
``fw_multiply``      closed form of ``two_sided``: multiply by the symplectic
                     characteristic function of ``mu_t``,
``wigner_convolve``  the same dynamics on the Wigner side: convolve with ``mu_t``,
``left_translate``   ``f -> integral of f(g^-1 x) dmu_t(g)``,
``right_translate``  ``f -> integral of f(x g) dmu_t(g)``.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.fft
import scipy.linalg

from .core_ops import as_operator
from .groups import (
    CompoundPoisson,
    DiscreteMeasure,
    GaussianMeasure,
    GaussianSemigroup,
    GroupContext,
    _psd_factor,
    adjoint_measure,
    sample,
    symplectic_char,
    temme_value,
)
from .phase_space import PhaseGrid, symplectic_fourier
from .weyl import (
    Representation,
    Tomogram,
    _support,
    displacement_elements,
    fw_transform,
    weyl_operators,
)

ACTIONS = ("twirl", "two_sided", "fw_multiply", "wigner_convolve", "left_translate", "right_translate")
HERMITE_NODES = 192
DEFAULT_SHARDS = 16


# --------------------------------------------------------------------------
# twirling


@dataclass(frozen=True, eq=False)
class MonteCarloTwirl:
    """Sample mean of ``U(g) rho U(g)^*`` plus the per-shard means behind it."""

    mean: np.ndarray
    shard_means: np.ndarray
    n_samples: int

    def standard_error(self, transform=None) -> np.ndarray:
        """Elementwise standard error of ``transform(mean)`` from the shard spread."""
        vals = np.array([transform(s) if transform else s for s in self.shard_means])
        k = len(vals)
        return np.sqrt(np.sum(np.abs(vals - vals.mean(axis=0)) ** 2, axis=0) / (k - 1) / k)


def _conjugations(rep: Representation, rho: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """``sum_i U(g_i) rho U(g_i)^*`` over the rows of ``pts`` (unnormalized)."""
    if rep.is_finite:
        W = weyl_operators(rep.dim)
        g = rep.ctx.element(pts)
        U = W[g[:, 0], g[:, 1]]
        return np.einsum("kij,jl,kml->im", U, rho, U.conj())
    K = _support(rho)
    acc = np.zeros((rep.dim, rep.dim), dtype=complex)
    rk = rho[:K, :K]
    for s in range(0, len(pts), 4096):
        D = displacement_elements(pts[s : s + 4096, 0], pts[s : s + 4096, 1], rep.dim, K)
        acc += np.einsum("kij,jl,kml->im", D, rk, D.conj(), optimize=True)
    return acc


def twirl(rep: Representation, rho, mu, method: str = "exact", n_samples: int = 100_000, seed=0, **kw) -> np.ndarray:
    """Average of ``U(g) rho U(g)^*`` over ``mu``, renormalized to unit trace.

    ``method="exact"`` sums over a finitely supported measure; Gaussian
    measures need ``method="monte_carlo"`` (see :func:`twirl_monte_carlo`).
    """
    rho = as_operator(rho)
    if rho.shape[0] != rep.dim:
        raise ValueError("state dimension does not match the representation")
    if method == "monte_carlo":
        return twirl_monte_carlo(rep, rho, mu, n_samples, seed, **kw).mean
    if method != "exact":
        raise ValueError(f"unknown twirl method {method!r}")
    if not isinstance(mu, DiscreteMeasure):
        raise ValueError("exact twirling needs a finitely supported measure; use method='monte_carlo'")
    if mu.ctx != rep.ctx:
        raise ValueError("measure and representation live on different groups")
    if rep.is_finite:
        W = weyl_operators(rep.dim)
        U = W[mu.points[:, 0], mu.points[:, 1]]
        out = np.einsum("k,kij,jl,kml->im", mu.weights, U, rho, U.conj(), optimize=True)
    else:
        out = sum(w * _conjugations(rep, rho, g[None, :]) for g, w in zip(mu.points, mu.weights))
    return out / np.trace(out).real


def twirl_monte_carlo(
    rep: Representation, rho, mu, n_samples: int, seed, shards: int = DEFAULT_SHARDS, workers: int = 1
) -> MonteCarloTwirl:
    """Monte Carlo twirl over ``n_samples`` draws split into ``shards``.

    Each shard draws from its own child of ``SeedSequence(seed)`` and the
    shards are averaged in index order, so the result does not depend on
    ``workers``.  The output is trace-renormalized but never projected onto
    the positive cone.
    """
    rho = as_operator(rho)
    if shards < 2 or n_samples < shards:
        raise ValueError("need at least two shards and one sample per shard")
    seeds = np.random.SeedSequence(seed).spawn(shards)
    sizes = np.full(shards, n_samples // shards)
    sizes[: n_samples % shards] += 1

    def run(k):
        pts = sample(mu, int(sizes[k]), np.random.default_rng(seeds[k]))
        return _conjugations(rep, rho, pts) / sizes[k]

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, range(shards)))
    else:
        parts = [run(k) for k in range(shards)]
    parts = np.array(parts)
    mean = np.tensordot(sizes / sizes.sum(), parts, axes=1)
    return MonteCarloTwirl(mean / np.trace(mean).real, parts, int(n_samples))


# --------------------------------------------------------------------------
# tomographic actions


def two_sided_apply(ctx: GroupContext, g, f: Tomogram) -> Tomogram:
    """``(T(g) f)(h) = m~(g, h) f(h)``; the conjugation ``g^-1 h g`` is trivial here."""
    if f.side != "fourier_wigner":
        raise ValueError("the two-sided action works on fourier_wigner tomograms")
    if ctx.is_finite != f.is_finite or (ctx.is_finite and ctx != f.domain):
        raise ValueError("tomogram does not live on this group")
    pts = ctx.elements().reshape(ctx.d, ctx.d, 2) if ctx.is_finite else f.domain.points()
    return f.with_values(temme_value(ctx, g, pts) * f.values)


@lru_cache(maxsize=8)
def _hermite_rule(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    z, w = np.polynomial.hermite_e.hermegauss(nodes)
    return z, w / w.sum()


def _gaussian_key(mu: GaussianMeasure) -> tuple:
    return tuple(mu.mean.tolist()), tuple(mu.cov.ravel().tolist())


@lru_cache(maxsize=64)
def _cached_grid_array(kind: str, key: tuple, grid: PhaseGrid, nodes: int) -> np.ndarray:
    """Per-(Gaussian, grid) multiplier arrays, reused across inputs; read-only."""
    mu = GaussianMeasure(np.array(key[0]), np.array(key[1]).reshape(2, 2))
    if kind == "hermite":
        out = _hermite_char(mu, grid, nodes)
    else:
        out = symplectic_char(mu, grid.points())
    out.setflags(write=False)
    return out


def _grid_char(mu, grid: PhaseGrid) -> np.ndarray:
    """Characteristic function of ``mu`` at every node of ``grid``."""
    if isinstance(mu, GaussianMeasure):
        return _cached_grid_array("closed_form", _gaussian_key(mu), grid, 0)
    return symplectic_char(mu, grid.points())


def _hermite_char(mu: GaussianMeasure, grid: PhaseGrid, nodes: int) -> np.ndarray:
    """Average of ``m~(g, h)`` over ``g ~ mu`` for every grid node ``h``, by Gauss-Hermite quadrature.

    ``g = mean + F z`` with ``z`` standard normal makes the phase a product of
    one-dimensional integrals of ``exp(i c z)``.  Each ``c`` is linear in the
    grid coordinates, so the node sum is a matrix product over the two axes.
    """
    z, w = _hermite_rule(nodes)
    F = _psd_factor(mu.cov)
    x = grid.axis
    out = temme_value(GroupContext.plane(), mu.mean, grid.points())
    # m~(F z, h) = prod_k exp(-i z_k sigma(F e_k, h)), sigma(u, h) = u_q h_p - u_p h_q
    for k in range(2):
        uq, up = F[:, k]
        A = np.exp(1j * up * np.outer(x, z))  # q~ part
        B = np.exp(-1j * uq * np.outer(x, z))  # p~ part
        out = out * ((A * w) @ B.T)
    return out


def tomographic_step(f: Tomogram, semigroup, t: float, nodes: int = HERMITE_NODES) -> Tomogram:
    """Integral of the two-sided action over ``mu_t``.

    Finitely supported ``mu_t`` is summed exactly; a Gaussian ``mu_t`` on the
    plane is integrated by Gauss-Hermite quadrature, independent of the closed
    form used by :func:`fw_multiply_step`.
    """
    mu = semigroup.at(t)
    ctx = mu.ctx
    if isinstance(mu, DiscreteMeasure):
        acc = np.zeros_like(f.values)
        for g, w in zip(mu.points, mu.weights):
            acc += w * two_sided_apply(ctx, g, f).values
        return f.with_values(acc)
    if f.is_finite:
        raise ValueError("Gaussian semigroups act on the plane only")
    return f.with_values(_cached_grid_array("hermite", _gaussian_key(mu), f.domain, nodes) * f.values)


def fw_multiply_step(f: Tomogram, semigroup, t: float) -> Tomogram:
    """Multiply a plane Fourier-Wigner tomogram by the characteristic function of ``mu_t``."""
    if f.is_finite:
        raise ValueError("fw_multiply_step is defined on the plane only")
    if f.side != "fourier_wigner":
        raise ValueError("fw_multiply_step expects a fourier_wigner tomogram")
    return f.with_values(_grid_char(semigroup.at(t), f.domain) * f.values)


# Kernel entries beyond exp(-BLUR_CUTOFF / 2) of the peak are dropped; e^-45 is far below double precision.
BLUR_CUTOFF = 90.0


def _gaussian_density(mu, grid: PhaseGrid, half_width: int | None = None) -> np.ndarray | None:
    """Gaussian density times ``h^2`` at grid offsets ``-m .. m``; None if singular.

    ``m`` defaults to the smallest half width holding the density above the
    cutoff, capped at ``n/2``.
    """
    if not isinstance(mu, GaussianMeasure) or np.linalg.eigvalsh(mu.cov).min() <= 1e-14:
        return None
    if half_width is None:
        reach = np.sqrt(BLUR_CUTOFF * np.diag(mu.cov).max()) + np.abs(mu.mean).max()
        half_width = min(grid.n // 2, int(np.ceil(reach / grid.h)))
    off = grid.h * np.arange(-half_width, half_width + 1)
    X, Y = np.meshgrid(off - mu.mean[0], off - mu.mean[1], indexing="ij")
    Ci = np.linalg.inv(mu.cov)
    quad = Ci[0, 0] * X**2 + 2 * Ci[0, 1] * X * Y + Ci[1, 1] * Y**2
    return np.exp(-0.5 * quad) / (2 * np.pi * np.sqrt(np.linalg.det(mu.cov))) * grid.h**2


@lru_cache(maxsize=32)
def _blur_spectrum(key: tuple, grid: PhaseGrid) -> tuple[np.ndarray, int] | None:
    mu = GaussianMeasure(np.array(key[0]), np.array(key[1]).reshape(2, 2))
    kernel = _gaussian_density(mu, grid)
    if kernel is None:
        return None
    size = scipy.fft.next_fast_len(grid.n + kernel.shape[0] - 1)
    spec = scipy.fft.fft2(kernel, s=(size, size))
    spec.setflags(write=False)
    return spec, kernel.shape[0] // 2


def _blur(values: np.ndarray, mu, grid: PhaseGrid) -> np.ndarray | None:
    """Zero-padded linear convolution with the sampled density of ``mu``; None if not applicable."""
    if not isinstance(mu, GaussianMeasure):
        return None
    cached = _blur_spectrum(_gaussian_key(mu), grid)
    if cached is None:
        return None
    spec, m = cached
    size = spec.shape[0]
    full = scipy.fft.ifft2(scipy.fft.fft2(values, s=(size, size)) * spec)
    return full[m:m + grid.n, m:m + grid.n]


def _fourier_translate(values: np.ndarray, grid: PhaseGrid, mu) -> np.ndarray:
    """``integral of f(x - g) dmu(g)`` through the symplectic Fourier transform."""
    dual = grid.dual()
    spec = symplectic_fourier(values, grid) * _grid_char(mu, dual)
    return symplectic_fourier(spec, dual)


def wigner_convolve_step(rho: Tomogram, semigroup, t: float, route: str = "fourier") -> Tomogram:
    """Convolve a Wigner function with ``mu_t``: ``integral of rho(x - g) dmu_t(g)``.

    ``route="fourier"`` conjugates :func:`fw_multiply_step` by the symplectic
    Fourier transform; ``route="blur"`` convolves with the sampled Gaussian
    density in position space.
    """
    if rho.is_finite:
        raise ValueError("wigner_convolve_step is defined on the plane only")
    if rho.side != "wigner":
        raise ValueError("wigner_convolve_step expects a wigner tomogram")
    mu = semigroup.at(t)
    if route == "fourier":
        return rho.with_values(_fourier_translate(rho.values, rho.domain, mu))
    if route == "blur":
        out = _blur(rho.values, mu, rho.domain)
        if out is None:
            raise ValueError("the blur route needs a non-degenerate Gaussian measure")
        return rho.with_values(out)
    raise ValueError(f"unknown route {route!r}")


def translate_step(f: Tomogram, semigroup, t: float, side: str = "left") -> Tomogram:
    """Average of left or right translates of ``f`` over ``mu_t``.

    ``left``: ``x -> f(g^-1 x) = f(x - g)``; ``right``: ``x -> f(x g) = f(x + g)``.
    On a grid, a non-degenerate Gaussian is applied as a position-space blur
    and any other plane measure through the Fourier shift theorem.
    """
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    mu = semigroup.at(t)
    if side == "right":
        mu = adjoint_measure(mu)  # f(x + g) = f(x - (-g))
    if f.is_finite:
        if mu.ctx != f.domain:
            raise ValueError("measure and function live on different groups")
        acc = np.zeros_like(f.values)
        for (a, b), w in zip(mu.points, mu.weights):
            acc += w * np.roll(f.values, (a, b), axis=(0, 1))
        return f.with_values(acc)
    out = _blur(f.values, mu, f.domain)
    if out is not None:
        return f.with_values(out)
    return f.with_values(_fourier_translate(f.values, f.domain, mu))


# --------------------------------------------------------------------------
# handles


@dataclass(frozen=True, eq=False)
class SemigroupHandle:
    """A convolution semigroup bound to one of :data:`ACTIONS`.

    ``rep`` is needed for ``twirl``; ``twirl_options`` are forwarded to
    :func:`twirl` (for example ``method="monte_carlo"``).
    """

    action: str
    semigroup: CompoundPoisson | GaussianSemigroup
    rep: Representation | None = None
    twirl_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise ValueError(f"unknown action {self.action!r}; expected one of {ACTIONS}")
        if self.action == "twirl" and self.rep is None:
            raise ValueError("the twirl action needs a representation")

    @property
    def ctx(self) -> GroupContext:
        return self.semigroup.ctx

    def apply(self, psi, t: float):
        """``T_t psi``."""
        if t < 0:
            raise ValueError("t must be non-negative")
        a = self.action
        if a == "twirl":
            return twirl(self.rep, psi, self.semigroup.at(t), **self.twirl_options)
        if a == "two_sided":
            return tomographic_step(psi, self.semigroup, t)
        if a == "fw_multiply":
            return fw_multiply_step(psi, self.semigroup, t)
        if a == "wigner_convolve":
            return wigner_convolve_step(psi, self.semigroup, t)
        return translate_step(psi, self.semigroup, t, side=a.split("_")[0])


def _values(x) -> np.ndarray:
    return x.values if isinstance(x, Tomogram) else np.asarray(x)


def semigroup_law_defect(handle: SemigroupHandle, psi, t: float, s: float) -> float:
    """``max |T_t T_s psi - T_{t+s} psi|``."""
    lhs = handle.apply(handle.apply(psi, s), t)
    rhs = handle.apply(psi, t + s)
    return float(np.abs(_values(lhs) - _values(rhs)).max())


# --------------------------------------------------------------------------
# generators


@dataclass(frozen=True)
class GeneratorEstimate:
    value: object
    error: float


def _rebuild(template, values):
    return template.with_values(values) if isinstance(template, Tomogram) else values


def estimate_generator(handle: SemigroupHandle, psi, h: float = 1e-3) -> GeneratorEstimate:
    """Finite-difference estimate of ``lim (T_h psi - psi) / h``.

    ``D_c(h) = 2 D(h/2) - D(h)`` removes the first-order error of the forward
    quotient ``D(h) = (T_h psi - psi) / h``; a Richardson step
    ``(4 D_c(h/2) - D_c(h)) / 3`` then removes the second-order term.  The
    reported error is ``max |D_c(h/2) - D_c(h)|``.
    """
    if not h > 0:
        raise ValueError("step h must be positive")
    base = _values(psi)

    def forward(step):
        return (_values(handle.apply(psi, step)) - base) / step

    Df = {k: forward(h / k) for k in (1, 2, 4)}
    Dc_h = 2 * Df[2] - Df[1]
    Dc_h2 = 2 * Df[4] - Df[2]
    est = (4 * Dc_h2 - Dc_h) / 3
    return GeneratorEstimate(_rebuild(psi, est), float(np.abs(Dc_h2 - Dc_h).max()))


@dataclass(frozen=True, eq=False)
class Superoperator:
    """Matrix acting on row-major vectorized ``dim x dim`` operators."""

    matrix: np.ndarray
    dim: int

    def apply(self, A) -> np.ndarray:
        A = as_operator(A)
        return (self.matrix @ A.ravel()).reshape(self.dim, self.dim)

    def exp(self, t: float) -> "Superoperator":
        return Superoperator(scipy.linalg.expm(t * self.matrix), self.dim)

    def hermiticity_defect(self, probes) -> float:
        """``max |L(A^*) - L(A)^*|`` over the probe operators."""
        return max(float(np.abs(self.apply(A.conj().T) - self.apply(A).conj().T).max()) for A in probes)

    def trace_functional(self) -> np.ndarray:
        """``vec(I)^T L``; zero for a trace-annihilating generator."""
        return np.eye(self.dim).ravel() @ self.matrix


def analytic_generator(handle: SemigroupHandle) -> Superoperator:
    """``rho -> rate * (sum_g nu(g) U(g) rho U(g)^* - rho)`` for a compound-Poisson twirl."""
    if handle.action != "twirl":
        raise ValueError("analytic generators are available for the twirl action only")
    sg = handle.semigroup
    if not isinstance(sg, CompoundPoisson) or not handle.rep.is_finite:
        raise ValueError("analytic generators need a compound-Poisson semigroup on a finite group")
    d = handle.rep.dim
    W = weyl_operators(d)
    M = np.zeros((d * d, d * d), dtype=complex)
    for (a, b), w in zip(sg.base.points, sg.base.weights):
        U = W[a, b]
        M += w * np.kron(U, U.conj())
    return Superoperator(sg.rate * (M - np.eye(d * d)), d)


# --------------------------------------------------------------------------
# checks


@dataclass(frozen=True)
class IntertwiningResult:
    deviation: float
    error_bar: float | None = None


def check_intertwining(
    rep: Representation, rho, semigroup, t: float, n_samples: int = 200_000, seed=0, shards: int = DEFAULT_SHARDS
) -> IntertwiningResult:
    """Compare ``fw(twirl(rho, mu_t))`` with ``tomographic_step(fw(rho), t)``.

    Exact when ``mu_t`` is finitely supported.  For a Gaussian ``mu_t`` the
    twirl is Monte Carlo and ``error_bar`` is the largest shard standard error
    of the transformed twirl; the closed-form tomographic side is used.
    """
    rho = as_operator(rho)
    mu = semigroup.at(t)
    rhs = tomographic_step(fw_transform(rep, rho), semigroup, t)
    if isinstance(mu, DiscreteMeasure):
        lhs = fw_transform(rep, twirl(rep, rho, mu))
        return IntertwiningResult(float(np.abs(lhs.values - rhs.values).max()))
    mc = twirl_monte_carlo(rep, rho, mu, n_samples, seed, shards=shards)
    lhs = fw_transform(rep, mc.mean)
    err = mc.standard_error(lambda s: fw_transform(rep, s / np.trace(s).real).values)
    return IntertwiningResult(float(np.abs(lhs.values - rhs.values).max()), float(err.max()))


def choi_state(channel, dim: int) -> np.ndarray:
    """``(1/dim) sum_ij |i><j| (x) channel(|i><j|)``: the channel on half a maximally entangled state."""
    out = np.zeros((dim * dim, dim * dim), dtype=complex)
    for i in range(dim):
        for j in range(dim):
            E = np.zeros((dim, dim), dtype=complex)
            E[i, j] = 1.0
            out[i * dim : (i + 1) * dim, j * dim : (j + 1) * dim] = channel(E)
    return out / dim


def twirl_channel(rep: Representation, mu):
    """The linear map ``A -> sum_g w_g U(g) A U(g)^*`` (no renormalization)."""
    if not isinstance(mu, DiscreteMeasure):
        raise ValueError("channel matrices need a finitely supported measure")
    W = weyl_operators(rep.dim)
    U = W[mu.points[:, 0], mu.points[:, 1]]
    return lambda A: np.einsum("k,kij,jl,kml->im", mu.weights, U, A, U.conj())


# --------------------------------------------------------------------------
# export


def write_evolution_csv(rows, path) -> Path:
    """Write ``(t, observable_name, value, error_estimate)`` rows in the given order."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "observable_name", "value", "error_estimate"])
        for t, name, value, err in rows:
            w.writerow([repr(float(t)), name, repr(float(value)), "" if err is None else repr(float(err))])
    return path
