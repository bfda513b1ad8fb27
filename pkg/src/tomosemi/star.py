"""Star products on phase-space functions.

* :func:`finite_twisted` multiplies functions on Z_d x Z_d,
* :func:`twisted_convolution` multiplies Fourier-Wigner tomograms on a grid,
* :func:`twisted_product` multiplies Wigner-side functions, either through the
  symplectic Fourier transform or through the Moyal integral kernel.

Each product is the image of operator multiplication under the corresponding
transform.  The normalization constants are not hard-coded: :func:`star_kernel`
measures them once against operator products and they are then reused.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import fftconvolve

from .core_ops import random_density
from .groups import GroupContext, multiplier_value
from .phase_space import PhaseGrid, symplectic_fourier
from .weyl import (
    Tomogram,
    discrete_weyl_representation,
    fock_representation,
    fw_transform,
    localized_density,
    require_same_domain,
)

DIRECT_MAX_N = 64
KERNEL_MAX_N = 64


@dataclass(frozen=True)
class StarKernel:
    """A star product together with its measured normalization constant.

    ``exponent_sign`` only matters for the Moyal kernel: it is the sign ``s``
    in ``exp(2 i s [sigma(x1, x2) + sigma(x2, x) + sigma(x, x1)])``.
    """

    kind: str
    normalization: float
    exponent_sign: int = 1


# --------------------------------------------------------------------------
# raw (unnormalized) products


def _finite_raw(ctx: GroupContext, f1: np.ndarray, f2: np.ndarray) -> np.ndarray:
    d = ctx.d
    els = ctx.elements()
    out = np.zeros((d, d), dtype=complex)
    # sum over h of f1(h) f2(g - h) conj(m(h, g - h)); g runs over the whole table
    for a, b in els:
        shifted = np.roll(f2, (a, b), axis=(0, 1))  # shifted[g] = f2(g - h)
        diff = np.mod(els - (a, b), d)
        phase = np.conj(multiplier_value(ctx, (a, b), diff)).reshape(d, d)
        out += f1[a, b] * shifted * phase
    return out


def _row_shifted(f2: np.ndarray, i: int) -> np.ndarray:
    """``R[i', :] = f2[i - i' + n/2, :]``, zero where that row is off the grid."""
    n = f2.shape[0]
    rows = i - np.arange(n) + n // 2
    ok = (rows >= 0) & (rows < n)
    R = np.zeros_like(f2)
    R[ok] = f2[rows[ok]]
    return R


def _grid_conv_fast(f1: np.ndarray, f2: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    n = grid.n
    x = grid.axis
    out = np.empty((n, n), dtype=complex)
    # e^{-(i/2) p q'} for output p (column) and summation q' (row)
    back = np.exp(-0.5j * np.outer(x, x))
    for i in range(n):
        chirped = f1 * np.exp(0.5j * x[i] * x)[None, :]
        full = fftconvolve(chirped, _row_shifted(f2, i), axes=1)
        block = full[:, n // 2 : n // 2 + n]  # [i', j]
        out[i] = np.einsum("kj,jk->j", block, back)
    return out * grid.weight


def _grid_conv_direct(f1: np.ndarray, f2: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    n = grid.n
    x = grid.axis
    table = np.exp(0.5j * np.outer(x, x))  # table[a, b] = e^{(i/2) x_a x_b}
    idx = np.arange(n)
    out = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            ri = i - idx + n // 2
            rj = j - idx + n // 2
            oi = (ri >= 0) & (ri < n)
            oj = (rj >= 0) & (rj < n)
            g2 = f2[np.ix_(ri[oi], rj[oj])]
            g1 = f1[np.ix_(idx[oi], idx[oj])]
            ph = table[i, idx[oj]][None, :] * np.conj(table[j, idx[oi]])[:, None]
            out[i, j] = np.sum(g1 * g2 * ph)
    return out * grid.weight


def _moyal_raw(f1: np.ndarray, f2: np.ndarray, grid: PhaseGrid, sign: int) -> np.ndarray:
    """Moyal kernel integral with unit prefactor and Lebesgue measure.

    Contracts the six-fold sum one variable at a time: p2, then q2, then
    (q1, p1).  Cost is O(n^5).
    """
    x = grid.axis
    h = grid.h
    s = 2j * sign
    E = np.exp(s * np.outer(x, x))  # E[a, b] = e^{2 i s x_a x_b}
    # exponent: q1 p2 - p1 q2 + q2 p - p2 q + q p1 - p q1
    # G[q1, q, q2] = sum_p2 f2[q2, p2] e^{2is p2 (q1 - q)}
    Ep2 = np.einsum("ab,cb->acb", E, np.conj(E))  # [q1, q, p2]
    G = np.einsum("xb,acb->acx", f2, Ep2)
    # H[q1, q, p, p1] = sum_q2 G[q1, q, q2] e^{2is q2 (p - p1)}
    Eq2 = np.einsum("xp,xr->xpr", E, np.conj(E))  # [q2, p, p1]
    H = np.einsum("acx,xpr->acpr", G, Eq2)
    # out[q, p] = sum_{q1, p1} f1 e^{2is (q p1 - p q1)} H
    return np.einsum("ar,cr,pa,acpr->cp", f1, E, np.conj(E), H, optimize=True) * h**4


# --------------------------------------------------------------------------
# calibration


def _fit_constant(raw: np.ndarray, target: np.ndarray) -> tuple[float, float]:
    c = np.vdot(raw, target) / np.vdot(raw, raw)
    resid = float(np.abs(c * raw - target).max() / np.abs(target).max())
    return complex(c), resid


def _calibrate_finite() -> StarKernel:
    rep = discrete_weyl_representation(3)
    A, B = random_density(3, 11), random_density(3, 12)
    raw = _finite_raw(rep.ctx, fw_transform(rep, A).values, fw_transform(rep, B).values)
    c, resid = _fit_constant(raw, fw_transform(rep, A @ B).values)
    if resid > 1e-10 or abs(c.imag) > 1e-10:
        raise ArithmeticError(f"finite twisted convolution is not a homomorphism (residual {resid:.2e})")
    return StarKernel("finite_twisted", float(c.real) * np.sqrt(3))  # stored per unit d^{-1/2}


def _calibration_rep():
    return fock_representation(16, PhaseGrid.self_dual(64))


def _calibrate_grid() -> StarKernel:
    rep = _calibration_rep()
    A, B = localized_density(16, 21), localized_density(16, 22)
    fa, fb = fw_transform(rep, A).values, fw_transform(rep, B).values
    raw = _grid_conv_fast(fa, fb, rep.grid)
    c, resid = _fit_constant(raw, fw_transform(rep, A @ B).values)
    if resid > 1e-6 or abs(c.imag) > 1e-6:
        raise ArithmeticError(f"twisted convolution is not a homomorphism (residual {resid:.2e})")
    return StarKernel("twisted_convolution", float(c.real))


def _gaussian_pair(grid: PhaseGrid):
    Q, P = grid.mesh()
    f1 = np.exp(-((Q - 0.3) ** 2 + (P + 0.2) ** 2) / 1.4)
    f2 = np.exp(-(Q**2 + (P - 0.4) ** 2) / 2.0) * (1 + 0.5j * Q)
    return f1, f2


def _calibrate_moyal() -> StarKernel:
    grid = PhaseGrid(32, 4.0)
    f1, f2 = _gaussian_pair(grid)
    target = twisted_product(f1, f2, grid, route="fourier")
    best = None
    for sign in (1, -1):
        c, resid = _fit_constant(_moyal_raw(f1, f2, grid, sign), target)
        if best is None or resid < best[2]:
            best = (sign, c, resid)
    sign, c, resid = best
    if resid > 1e-3:
        raise ArithmeticError(f"Moyal kernel does not match the Fourier route (residual {resid:.2e})")
    return StarKernel("twisted_product", float(c.real), sign)


@lru_cache(maxsize=None)
def star_kernel(kind: str) -> StarKernel:
    """The calibrated :class:`StarKernel` of the given kind (computed once).

    ``finite_twisted`` stores ``c * sqrt(d)``, so the constant used on Z_d is
    ``normalization / sqrt(d)``; the other kinds store the constant directly
    (relative to the Haar weight ``h^2 / 2 pi`` and to Lebesgue measure).
    """
    if kind == "finite_twisted":
        return _calibrate_finite()
    if kind == "twisted_convolution":
        return _calibrate_grid()
    if kind == "twisted_product":
        return _calibrate_moyal()
    raise ValueError(f"unknown star kernel {kind!r}")


# --------------------------------------------------------------------------
# public products


def finite_twisted(f1: Tomogram, f2: Tomogram) -> Tomogram:
    """Twisted convolution on Z_d x Z_d; ``fw(A) * fw(B) = fw(AB)`` exactly."""
    if not (f1.is_finite and f2.is_finite):
        raise ValueError("finite_twisted expects tomograms on a finite group")
    if f1.domain != f2.domain:
        raise ValueError(f"group mismatch: d={f1.domain.d} vs d={f2.domain.d}")
    c = star_kernel("finite_twisted").normalization / np.sqrt(f1.domain.d)
    return f1.with_values(c * _finite_raw(f1.domain, f1.values, f2.values))


def twisted_convolution(f1: Tomogram, f2: Tomogram, route: str = "fast") -> Tomogram:
    r"""Twisted convolution of two Fourier-Wigner tomograms on the same grid.

    :math:`(f_1\star f_2)(x) = \int f_1(y) f_2(x-y) e^{\frac i2 \sigma(x, y)}\,\frac{dy}{2\pi}`
    with ``sigma(x, y) = q p' - p q'``, truncated to the grid.  ``route="fast"``
    dresses the rows with chirps and convolves with FFTs; ``route="direct"``
    sums the quadrature with a phase table and is limited to ``n <= 64``.
    Functions on Z_d x Z_d are passed on to :func:`finite_twisted`.
    """
    if f1.is_finite or f2.is_finite:
        return finite_twisted(f1, f2)
    require_same_domain(f1, f2)
    grid = f1.domain
    c = star_kernel("twisted_convolution").normalization
    if route == "fast":
        vals = _grid_conv_fast(f1.values, f2.values, grid)
    elif route == "direct":
        if grid.n > DIRECT_MAX_N:
            raise ValueError(f"direct route is O(n^4); limited to n <= {DIRECT_MAX_N}, got n={grid.n}")
        vals = _grid_conv_direct(f1.values, f2.values, grid)
    else:
        raise ValueError(f"unknown route {route!r}")
    return f1.with_values(c * vals)


def twisted_product(f1, f2, grid: PhaseGrid | None = None, route: str = "fourier"):
    """Twisted (Moyal) product of two Wigner-side functions on one grid.

    Accepts either two ``wigner`` tomograms or two arrays plus ``grid``; the
    result has the same form.  ``route="fourier"`` conjugates the twisted
    convolution by the symplectic Fourier transform.  ``route="kernel"``
    integrates the Moyal kernel directly; it costs O(n^5), so it is limited to
    ``n <= 64`` and to grids with ``2 L h < pi`` where the kernel is not aliased.
    """
    as_tomogram = isinstance(f1, Tomogram)
    if as_tomogram:
        if f1.side != "wigner" or f2.side != "wigner":
            raise ValueError("twisted_product expects wigner-side tomograms")
        require_same_domain(f1, f2)
        grid, v1, v2 = f1.domain, f1.values, f2.values
    else:
        if grid is None:
            raise ValueError("a grid is required when passing arrays")
        v1, v2 = np.asarray(f1, dtype=complex), np.asarray(f2, dtype=complex)
        if v1.shape != (grid.n, grid.n) or v2.shape != (grid.n, grid.n):
            raise ValueError("arrays do not match the grid")
    if route == "fourier":
        dual = grid.dual()
        c = star_kernel("twisted_convolution").normalization
        prod = c * _grid_conv_fast(symplectic_fourier(v1, grid), symplectic_fourier(v2, grid), dual)
        vals = symplectic_fourier(prod, dual)
    elif route == "kernel":
        if grid.n > KERNEL_MAX_N:
            raise ValueError(
                f"kernel route costs O(n^5) (n={grid.n}); subsample to n <= {KERNEL_MAX_N} or use route='fourier'"
            )
        if 2 * grid.L * grid.h >= np.pi:
            raise ValueError("kernel route needs 2 L h < pi; the kernel is aliased on this grid")
        k = star_kernel("twisted_product")
        vals = k.normalization * _moyal_raw(v1, v2, grid, k.exponent_sign)
    else:
        raise ValueError(f"unknown route {route!r}")
    return f1.with_values(vals) if as_tomogram else vals
