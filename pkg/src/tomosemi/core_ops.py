"""Dense operator algebra on finite-dimensional Hilbert spaces.

Operators are plain complex ``numpy`` arrays of shape ``(dim, dim)``.  This
module only adds the few pieces of structure the rest of the package relies
on: the Hilbert-Schmidt pairing, density-operator validation, seeded random
states and a lossless JSON encoding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

HERMITIAN_TOL = 1e-12
EIGENVALUE_TOL = 1e-10
TRACE_TOL = 1e-12


def as_operator(A) -> np.ndarray:
    """Return ``A`` as a square, finite complex128 array (no copy if possible)."""
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise ValueError(f"operator must be a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("operator has non-finite entries")
    return A


def adjoint(A) -> np.ndarray:
    return np.conj(np.asarray(A)).T


def hs_inner(A, B) -> complex:
    """Hilbert-Schmidt inner product ``tr(A^* B)``, antilinear in ``A``."""
    A = as_operator(A)
    B = as_operator(B)
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch: {A.shape[0]} vs {B.shape[0]}")
    return complex(np.vdot(A, B))


def hs_norm(A) -> float:
    return float(np.linalg.norm(as_operator(A)))


def random_density(dim: int, seed) -> np.ndarray:
    """Ginibre random state ``G G^* / tr(G G^*)``.

    ``seed`` may be an integer or a ``numpy.random.Generator``; the same integer
    always yields the same matrix.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = G @ G.conj().T
    rho = rho / np.trace(rho).real
    # exact Hermitian symmetry; the product is only symmetric to rounding
    return (rho + rho.conj().T) / 2


def embed(A, dim: int) -> np.ndarray:
    """Zero-pad ``A`` into the upper-left block of a ``dim``-dimensional operator."""
    A = as_operator(A)
    k = A.shape[0]
    if k > dim:
        raise ValueError(f"cannot embed a {k}-dimensional operator into dimension {dim}")
    out = np.zeros((dim, dim), dtype=complex)
    out[:k, :k] = A
    return out


def pure_state(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


@dataclass
class DensityReport:
    """Outcome of :func:`validate_density`.

    ``violations`` maps the name of each failed invariant (``hermitian``,
    ``positive``, ``trace``) to its measured deviation.
    """

    tol: float
    hermitian_deviation: float
    min_eigenvalue: float
    trace_deviation: float
    violations: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate_density(A, tol: float = EIGENVALUE_TOL) -> DensityReport:
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = np.asarray(A, dtype=complex)
    herm = float(np.abs(A - A.conj().T).max())
    # eigenvalues of the Hermitian part; robust to ~1e-13 asymmetry
    lam = float(np.linalg.eigvalsh((A + A.conj().T) / 2).min())
    tr = float(abs(np.trace(A) - 1.0))
    violations = {}
    if herm > tol:
        violations["hermitian"] = herm
    if lam < -tol:
        violations["positive"] = -lam
    if tr > tol:
        violations["trace"] = tr
    return DensityReport(tol, herm, lam, tr, violations)


def operator_to_dict(A) -> dict:
    A = as_operator(A)
    return {"dim": int(A.shape[0]), "re": A.real.tolist(), "im": A.imag.tolist()}


def operator_from_dict(obj: dict) -> np.ndarray:
    try:
        dim = int(obj["dim"])
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj["im"], dtype=float)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed operator record: {exc}") from None
    if re.shape != (dim, dim) or im.shape != (dim, dim):
        raise ValueError(f"operator record arrays do not have shape ({dim}, {dim})")
    return as_operator(re + 1j * im)


def operator_to_json(A) -> str:
    # repr-based float encoding in json round-trips finite doubles exactly
    return json.dumps(operator_to_dict(A))


def operator_from_json(text: str) -> np.ndarray:
    return operator_from_dict(json.loads(text))
