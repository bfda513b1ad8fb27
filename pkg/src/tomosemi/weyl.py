"""Square-integrable projective representations and group-covariant tomograms.

Two representations of phase-space translations are available:

* the discrete Weyl system ``U(a, b) = w^{ab/2} X^a Z^b`` on C^d (odd d),
* the Weyl system ``D(q, p) = exp(i(p Q - q P))`` restricted to the first
  ``N`` Fock states, sampled on a :class:`~tomosemi.phase_space.PhaseGrid`.

Both satisfy ``U(g h) = m(g, h) U(g) U(h)`` with the multiplier of
:func:`tomosemi.groups.multiplier_value`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.special import gammaln

from .core_ops import as_operator, embed, random_density
from .groups import GroupContext, multiplier_value
from .phase_space import PhaseGrid, symplectic_fourier

FINITE_SPREAD_TOL = 1e-6
GRID_SPREAD_TOL = 1e-3


class NotSquareIntegrableError(ValueError):
    """The Moyal sum is not proportional to the HS norm at this discretization."""


# --------------------------------------------------------------------------
# operators


@lru_cache(maxsize=16)
def weyl_operators(d: int) -> np.ndarray:
    """All discrete Weyl operators as a read-only array ``W[a, b] = U(a, b)``."""
    ctx = GroupContext.finite(d)
    w = ctx.omega
    X = np.roll(np.eye(d), 1, axis=0)  # X|j> = |j+1>
    Z = np.diag(w ** np.arange(d))
    Xp = [np.linalg.matrix_power(X, a) for a in range(d)]
    Zp = [np.linalg.matrix_power(Z, b) for b in range(d)]
    W = np.empty((d, d, d, d), dtype=complex)
    for a in range(d):
        for b in range(d):
            W[a, b] = w ** ((ctx.inv2 * a * b) % d) * (Xp[a] @ Zp[b])
    W.setflags(write=False)
    return W


def discrete_weyl(d: int, g) -> np.ndarray:
    ctx = GroupContext.finite(d)
    a, b = ctx.element(g)
    return weyl_operators(d)[a, b].copy()


def _displacement_block(q, p, rows: int, cols: int) -> np.ndarray:
    """Matrix elements laid out as ``(rows, cols, n_points)``."""
    alpha = (q + 1j * p) / np.sqrt(2)
    x = np.abs(alpha) ** 2
    absa = np.sqrt(x)
    phase = np.ones_like(alpha)
    nz = absa > 0
    phase[nz] = alpha[nz] / absa[nz]
    out = np.zeros((rows, cols, len(q)), dtype=complex)
    # base_k = e^{-x/2} |alpha|^k / sqrt(k!) and ph_k = phase^k, both built up in k
    base = np.exp(-x / 2)
    ph = np.ones_like(alpha)
    for k in range(max(rows, cols)):
        if k:
            base = base * absa / np.sqrt(k)
            ph = ph * phase
        nb = max(min(rows - k, cols), 0)
        na = max(min(rows, cols - k), 0) if k else 0
        n_lo = max(nb, na)
        if n_lo == 0:
            continue
        # generalized Laguerre L_j^{(k)}(x), three-term recurrence in j
        lag = np.empty((n_lo, len(q)))
        lag[0] = 1.0
        if n_lo > 1:
            lag[1] = 1.0 + k - x
        for j in range(1, n_lo - 1):
            lag[j + 1] = ((2 * j + 1 + k - x) * lag[j] - (j + k) * lag[j - 1]) / (j + 1)
        lo = np.arange(n_lo)
        # sqrt(j! k! / (j + k)!)
        binom = np.exp(0.5 * (gammaln(lo + 1) + gammaln(k + 1) - gammaln(lo + k + 1)))
        mag = (binom[:, None] * lag) * base
        if nb:
            out[lo[:nb] + k, lo[:nb]] = mag[:nb] * ph
        if na:
            out[lo[:na], lo[:na] + k] = mag[:na] * (-1) ** k * np.conj(ph)
    return out


def displacement_elements(q, p, rows: int, cols: int | None = None) -> np.ndarray:
    r"""Fock matrix elements :math:`\langle m|D(q,p)|n\rangle` for ``m < rows``, ``n < cols``.

    Uses the closed Laguerre form with ``alpha = (q + i p)/sqrt(2)``; the values
    are those of the untruncated operator.  Returns shape ``(len(q), rows, cols)``.
    """
    cols = rows if cols is None else cols
    q = np.atleast_1d(np.asarray(q, dtype=float)).ravel()
    p = np.atleast_1d(np.asarray(p, dtype=float)).ravel()
    return np.moveaxis(_displacement_block(q, p, rows, cols), -1, 0)


def _ladder(N: int):
    a = np.diag(np.sqrt(np.arange(1, N)), 1)
    Q = (a + a.T) / np.sqrt(2)
    P = (a - a.T) / (1j * np.sqrt(2))
    return Q, P


def displacement(N: int, g, method: str = "exact") -> np.ndarray:
    """The displacement operator on the first ``N`` Fock states.

    ``method="exact"`` projects the true operator onto the truncated space;
    ``method="expm"`` exponentiates the truncated generator ``i(p Q - q P)``.
    Both agree on the low-lying sector for moderate displacements.
    """
    if N < 8:
        raise ValueError("Fock truncation must be at least 8")
    q, p = (float(v) for v in np.asarray(g, dtype=float).reshape(2))
    if method == "exact":
        return displacement_elements(q, p, N)[0]
    if method == "expm":
        Q, P = _ladder(N)
        return scipy.linalg.expm(1j * (p * Q - q * P))
    raise ValueError(f"unknown method {method!r}")


def number_operator(N: int) -> np.ndarray:
    return np.diag(np.arange(N, dtype=complex))


def fock_state(N: int, n: int) -> np.ndarray:
    rho = np.zeros((N, N), dtype=complex)
    rho[n, n] = 1.0
    return rho


def localized_density(N: int, seed, support: int = 4) -> np.ndarray:
    """Random density operator living on the lowest ``support`` Fock states."""
    return embed(random_density(support, seed), N)


# --------------------------------------------------------------------------
# representations


@dataclass(frozen=True, eq=False)
class Representation:
    """A projective representation together with its calibrated constants."""

    kind: str
    ctx: GroupContext
    dim: int
    grid: PhaseGrid | None = None
    duflo_moore: float | None = None
    klm_phase: str | None = None

    @property
    def is_finite(self) -> bool:
        return self.kind == "discrete_weyl"

    @property
    def fw_domain(self):
        return self.ctx if self.is_finite else self.grid

    @property
    def point_weight(self) -> float:
        return self.ctx.haar_weight if self.is_finite else self.grid.weight

    def operator(self, g) -> np.ndarray:
        if self.is_finite:
            return discrete_weyl(self.dim, g)
        return displacement(self.dim, g)

    def domain_points(self) -> np.ndarray:
        """Group elements of the FW domain, shape ``(*domain_shape, 2)``."""
        if self.is_finite:
            return self.ctx.elements().reshape(self.dim, self.dim, 2)
        return self.grid.points()

    def describe(self) -> dict:
        out = {"kind": self.kind, "dim": self.dim, "duflo_moore": self.duflo_moore}
        if self.grid is not None:
            out["grid"] = self.grid.to_dict()
        return out


def _support(A: np.ndarray) -> int:
    nz = np.nonzero(np.any(A != 0, axis=0) | np.any(A != 0, axis=1))[0]
    return int(nz[-1]) + 1 if len(nz) else 1


def weyl_traces(rep: Representation, A) -> np.ndarray:
    """``tr(U(g)^* A)`` for every ``g`` in the FW domain (no normalization)."""
    A = as_operator(A)
    if A.shape[0] != rep.dim:
        raise ValueError(f"operator dimension {A.shape[0]} does not match representation dimension {rep.dim}")
    if rep.is_finite:
        return np.einsum("abij,ij->ab", weyl_operators(rep.dim).conj(), A)
    K = _support(A)
    Q, P = rep.grid.mesh()
    q, p = Q.ravel(), P.ravel()
    out = np.empty(q.size, dtype=complex)
    chunk = max(256, 4_000_000 // (K * K))
    Ak = A[:K, :K]
    for s in range(0, q.size, chunk):
        D = _displacement_block(q[s : s + chunk], p[s : s + chunk], K, K)
        out[s : s + chunk] = np.conj(np.einsum("mnk,mn->k", D, Ak.conj()))
    return out.reshape(Q.shape)


def duflo_moore_constant(rep: Representation, probes, threshold: float | None = None) -> float:
    """The constant ``c`` with ``sum_g |tr(U(g)^* A)|^2 w_g = c^2 ||A||^2``.

    Raises :class:`NotSquareIntegrableError` if the ratio varies across the
    probes by more than ``threshold`` (relative).
    """
    probes = list(probes)
    if len(probes) < 3:
        raise ValueError("need at least three probe operators")
    if threshold is None:
        threshold = FINITE_SPREAD_TOL if rep.is_finite else GRID_SPREAD_TOL
    cs = []
    for A in probes:
        tr = weyl_traces(rep, A)
        cs.append(np.sqrt(np.sum(np.abs(tr) ** 2) * rep.point_weight) / np.linalg.norm(A))
    cs = np.asarray(cs)
    spread = float((cs.max() - cs.min()) / cs.mean())
    if spread > threshold:
        raise NotSquareIntegrableError(
            f"Moyal ratio spread {spread:.3e} exceeds {threshold:.1e}: representation is not "
            "square integrable at this discretization"
        )
    return float(cs.mean())


def _default_probes(rep: Representation):
    if rep.is_finite:
        return [random_density(rep.dim, s) for s in range(3)]
    return [localized_density(rep.dim, s, support=4) for s in range(3)]


def _klm_gram(ctx: GroupContext, fvals: np.ndarray, pts: np.ndarray, phase: str) -> np.ndarray:
    gj, gk = pts[:, None, :], pts[None, :, :]
    m = multiplier_value(ctx, gj, gk)
    return fvals * (m if phase == "multiplier" else np.conj(m))


def _calibrate_klm_phase(rep: Representation) -> str | None:
    """Pick the Gram phase for which ``M_jk = d_U^-1 tr(U_j U_k^* rho)``."""
    rng = np.random.default_rng(20231)
    if rep.is_finite:
        rho = random_density(rep.dim, rng)
        pts = rep.ctx.element(rng.integers(0, rep.dim, size=(6, 2)))
    else:
        rho = localized_density(rep.dim, rng, support=2)
        pts = rng.uniform(-0.5, 0.5, size=(5, 2))
    ops = [rep.operator(g) for g in pts]
    oracle = np.array([[np.trace(Uj @ Uk.conj().T @ rho) for Uk in ops] for Uj in ops]) / rep.duflo_moore
    fvals = np.empty(oracle.shape, dtype=complex)
    for j, gj in enumerate(pts):
        for k, gk in enumerate(pts):
            h = rep.ctx.compose(rep.ctx.inverse(gj), gk)
            fvals[j, k] = np.trace(rep.operator(h).conj().T @ rho) / rep.duflo_moore
    for phase in ("multiplier", "conj_multiplier"):
        if np.abs(_klm_gram(rep.ctx, fvals, pts, phase) - oracle).max() < 1e-8:
            return phase
    return None


def _finish(rep: Representation, probes=None) -> Representation:
    c = duflo_moore_constant(rep, probes if probes is not None else _default_probes(rep))
    rep = Representation(rep.kind, rep.ctx, rep.dim, rep.grid, c, None)
    return Representation(rep.kind, rep.ctx, rep.dim, rep.grid, c, _calibrate_klm_phase(rep))


@lru_cache(maxsize=16)
def discrete_weyl_representation(d: int) -> Representation:
    return _finish(Representation("discrete_weyl", GroupContext.finite(d), d))


@lru_cache(maxsize=8)
def fock_representation(N: int = 32, grid: PhaseGrid | None = None) -> Representation:
    if N < 8:
        raise ValueError("Fock truncation must be at least 8")
    grid = PhaseGrid.self_dual(256) if grid is None else grid
    return _finish(Representation("fock_displacement", GroupContext.plane(), N, grid))


def unitarity_defect(rep: Representation, points, sector: int | None = None) -> float:
    """``max |U U^* - I|`` restricted to the lowest ``sector`` basis states."""
    sector = rep.dim // 2 if sector is None else sector
    worst = 0.0
    for g in np.atleast_2d(points):
        U = rep.operator(g)
        worst = max(worst, float(np.abs((U @ U.conj().T)[:sector, :sector] - np.eye(sector)).max()))
    return worst


# --------------------------------------------------------------------------
# tomograms


@dataclass(frozen=True, eq=False)
class Tomogram:
    """Samples of a phase-space function.

    ``side`` is ``"fourier_wigner"`` or ``"wigner"``; ``domain`` is the finite
    group context or the :class:`PhaseGrid` the samples live on.
    """

    side: str
    domain: object
    values: np.ndarray
    source: Representation | None = None

    def __post_init__(self):
        if self.side not in ("fourier_wigner", "wigner"):
            raise ValueError(f"unknown tomogram side {self.side!r}")
        shape = (self.domain.d,) * 2 if isinstance(self.domain, GroupContext) else (self.domain.n,) * 2
        values = np.asarray(self.values, dtype=complex)
        if values.shape != shape:
            raise ValueError(f"values of shape {values.shape} do not fit a domain of shape {shape}")
        object.__setattr__(self, "values", values)

    @property
    def is_finite(self) -> bool:
        return isinstance(self.domain, GroupContext)

    @property
    def weight(self) -> float:
        return self.domain.haar_weight if self.is_finite else self.domain.weight

    def with_values(self, values) -> "Tomogram":
        return Tomogram(self.side, self.domain, values, self.source)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.weight))

    def at(self, g) -> complex:
        """Value at a group element (finite) or a grid node (plane)."""
        if self.is_finite:
            a, b = self.domain.element(g)
            return complex(self.values[a, b])
        q, p = np.asarray(g, dtype=float)
        return complex(self.values[self.domain.index_of(q, p)])

    def same_domain(self, other: "Tomogram") -> bool:
        if self.is_finite != other.is_finite:
            return False
        if self.is_finite:
            return self.domain == other.domain
        return self.domain.matches(other.domain)


def require_same_domain(*tomos: Tomogram):
    first = tomos[0]
    for t in tomos[1:]:
        if not first.same_domain(t):
            raise ValueError("tomograms live on different domains")


def fw_transform(rep: Representation, rho) -> Tomogram:
    """Fourier-Wigner transform ``g -> d_U^-1 tr(U(g)^* rho)``."""
    vals = weyl_traces(rep, rho) / rep.duflo_moore
    return Tomogram("fourier_wigner", rep.fw_domain, vals, rep)


def fw_inverse(rep: Representation, f: Tomogram, cutoff: float = 1e-18) -> np.ndarray:
    """``d_U^-1 sum_g f(g) U(g) w_g``, the adjoint of :func:`fw_transform`.

    On a grid, nodes with ``|f| <= cutoff * max|f|`` are skipped; their total
    contribution is below ``cutoff`` times the grid's Haar mass.
    """
    if f.side != "fourier_wigner":
        raise ValueError("fw_inverse expects a fourier_wigner tomogram")
    if rep.is_finite:
        if not (f.is_finite and f.domain == rep.ctx):
            raise ValueError("tomogram domain does not match the representation")
        return np.einsum("ab,abij->ij", f.values, weyl_operators(rep.dim)) * (rep.point_weight / rep.duflo_moore)
    if f.is_finite or not f.domain.matches(rep.grid):
        raise ValueError("tomogram domain does not match the representation")
    Q, P = rep.grid.mesh()
    vals = f.values.ravel()
    keep = np.abs(vals) > cutoff * np.abs(vals).max() if vals.any() else np.zeros(vals.size, bool)
    q, p, vals = Q.ravel()[keep], P.ravel()[keep], vals[keep]
    N = rep.dim
    acc = np.zeros((N, N), dtype=complex)
    chunk = max(256, 4_000_000 // (N * N))
    for s in range(0, q.size, chunk):
        D = _displacement_block(q[s : s + chunk], p[s : s + chunk], N, N)
        acc += D @ vals[s : s + chunk]
    return acc * (rep.point_weight / rep.duflo_moore)


def involution(f: Tomogram) -> Tomogram:
    """``g -> f(g^-1)^*``; the image of the operator adjoint on the FW side."""
    v = np.flip(f.values, axis=(0, 1))
    v = np.roll(v, 1, axis=(0, 1))  # index i -> (n - i) mod n
    return f.with_values(np.conj(v))


def wigner_transform(rep: Representation, rho) -> Tomogram:
    """Standard Wigner transform, the symplectic Fourier transform of the FW side."""
    if rep.is_finite:
        raise ValueError("the standard Wigner transform is defined for the phase plane only")
    fw = fw_transform(rep, rho)
    return Tomogram("wigner", rep.grid.dual(), symplectic_fourier(fw.values, rep.grid), rep)


def fw_to_wigner(f: Tomogram) -> Tomogram:
    if f.is_finite or f.side != "fourier_wigner":
        raise ValueError("expects a fourier_wigner tomogram on a grid")
    return Tomogram("wigner", f.domain.dual(), symplectic_fourier(f.values, f.domain), f.source)


def wigner_to_fw(f: Tomogram) -> Tomogram:
    if f.is_finite or f.side != "wigner":
        raise ValueError("expects a wigner tomogram on a grid")
    return Tomogram("fourier_wigner", f.domain.dual(), symplectic_fourier(f.values, f.domain), f.source)


def wigner_inverse(rep: Representation, f: Tomogram) -> np.ndarray:
    return fw_inverse(rep, wigner_to_fw(f))


def expectation_phase_space(A: Tomogram, rho: Tomogram) -> float:
    """``sum A(x) rho(x) w`` over the grid: ``tr(A rho)`` for Hermitian ``A``."""
    if A.side != "wigner" or rho.side != "wigner":
        raise ValueError("expectation values pair two wigner-side tomograms")
    require_same_domain(A, rho)
    return float(np.real(np.sum(A.values * rho.values) * A.weight))


def klm_check(rep: Representation, f: Tomogram, points) -> float:
    """Minimum eigenvalue of the twisted Gram matrix ``f(g_j^-1 g_k) m(g_j, g_k)``.

    Non-negative (up to rounding) whenever ``f`` is the tomogram of a positive
    operator.  On a grid the points and all their differences must be nodes.
    """
    if rep.klm_phase is None:
        raise ValueError("KLM phase convention is not calibrated for this representation")
    if f.side != "fourier_wigner":
        raise ValueError("klm_check expects a fourier_wigner tomogram")
    pts = rep.ctx.element(np.atleast_2d(points))
    if len(pts) > 128:
        raise ValueError("at most 128 points")
    n = len(pts)
    fvals = np.empty((n, n), dtype=complex)
    for j in range(n):
        for k in range(n):
            try:
                fvals[j, k] = f.at(rep.ctx.compose(rep.ctx.inverse(pts[j]), pts[k]))
            except ValueError as exc:
                raise ValueError(f"tomogram undefined at a required difference point: {exc}") from None
    M = _klm_gram(rep.ctx, fvals, pts, rep.klm_phase)
    return float(np.linalg.eigvalsh((M + M.conj().T) / 2).min())


def grid_points_near_origin(grid: PhaseGrid, n_points: int, radius: int, seed) -> np.ndarray:
    """Distinct random grid nodes within ``radius`` index steps of the origin."""
    rng = np.random.default_rng(seed)
    o = grid.n // 2
    idx = set()
    while len(idx) < n_points:
        idx.add(tuple(rng.integers(-radius, radius + 1, size=2)))
    idx = np.array(sorted(idx)) + o
    return np.stack([grid.axis[idx[:, 0]], grid.axis[idx[:, 1]]], axis=-1)


# --------------------------------------------------------------------------
# export


def save_tomogram(f: Tomogram, path) -> tuple[Path, Path]:
    """Write ``path`` (CSV: index1, index2, re, im) and a ``.json`` sidecar."""
    path = Path(path)
    n = f.values.shape[0]
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    with open(path, "w") as fh:
        fh.write("index1,index2,re,im\n")
        for a, b, v in zip(i.ravel(), j.ravel(), f.values.ravel()):
            fh.write(f"{a},{b},{float(v.real)!r},{float(v.imag)!r}\n")
    meta = {"side": f.side, "source": f.source.describe() if f.source is not None else None}
    if f.is_finite:
        meta["group"] = f.domain.to_dict()
    else:
        meta["grid"] = f.domain.to_dict()
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps(meta, indent=2))
    return path, sidecar


def load_tomogram(path) -> Tomogram:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    if "group" in meta:
        domain = GroupContext.finite(meta["group"]["d"])
        n = domain.d
    else:
        domain = PhaseGrid(meta["grid"]["n"], meta["grid"]["L"])
        n = domain.n
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    vals = np.zeros((n, n), dtype=complex)
    vals[data[:, 0].astype(int), data[:, 1].astype(int)] = data[:, 2] + 1j * data[:, 3]
    return Tomogram(meta["side"], domain, vals)
