import numpy as np
import pytest

from tomosemi import star, weyl
from tomosemi.core_ops import random_density
from tomosemi.phase_space import PhaseGrid


def grid_inner(a, b):
    return np.sum(np.conj(a.values) * b.values) * a.weight


@pytest.fixture(scope="module")
def plane_pair(fock256):
    A, B = weyl.localized_density(32, 31), weyl.localized_density(32, 32)
    return A, B, weyl.fw_transform(fock256, A), weyl.fw_transform(fock256, B)


# --------------------------------------------------------------------------
# kernels


def test_kernel_constants_are_calibrated():
    assert star.star_kernel("finite_twisted").normalization == pytest.approx(1.0, abs=1e-12)
    assert star.star_kernel("twisted_convolution").normalization == pytest.approx(1.0, abs=1e-8)
    k = star.star_kernel("twisted_product")
    assert k.normalization == pytest.approx(1 / np.pi**2, rel=1e-6)
    assert k.exponent_sign in (1, -1)


def test_unknown_kernel():
    with pytest.raises(ValueError):
        star.star_kernel("bogus")


# --------------------------------------------------------------------------
# finite group


@pytest.mark.parametrize("d", [3, 5])
def test_finite_homomorphism(d):
    rep = weyl.discrete_weyl_representation(d)
    rng = np.random.default_rng(d)
    worst = 0.0
    for _ in range(20):
        A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        B = random_density(d, rng)
        prod = star.finite_twisted(weyl.fw_transform(rep, A), weyl.fw_transform(rep, B))
        worst = max(worst, np.abs(prod.values - weyl.fw_transform(rep, A @ B).values).max())
    assert worst <= 1e-12


def test_finite_unit(weyl3):
    unit = weyl.fw_transform(weyl3, np.eye(3))
    f = weyl.fw_transform(weyl3, random_density(3, 4))
    assert np.abs(star.finite_twisted(unit, f).values - f.values).max() <= 1e-13
    assert np.abs(star.finite_twisted(f, unit).values - f.values).max() <= 1e-13


def test_finite_associativity(weyl3):
    fs = [weyl.fw_transform(weyl3, random_density(3, s)) for s in range(3)]
    lhs = star.finite_twisted(star.finite_twisted(fs[0], fs[1]), fs[2])
    rhs = star.finite_twisted(fs[0], star.finite_twisted(fs[1], fs[2]))
    assert np.abs(lhs.values - rhs.values).max() <= 1e-12


def test_finite_d_mismatch(weyl3):
    f3 = weyl.fw_transform(weyl3, np.eye(3) / 3)
    f5 = weyl.fw_transform(weyl.discrete_weyl_representation(5), np.eye(5) / 5)
    with pytest.raises(ValueError, match="mismatch"):
        star.finite_twisted(f3, f5)


def test_finite_h_star_identity(weyl3):
    rng = np.random.default_rng(7)
    ops = [rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)) for _ in range(3)]
    f1, f2, f3 = (weyl.fw_transform(weyl3, A) for A in ops)
    lhs = grid_inner(star.finite_twisted(f1, f2), f3)
    rhs = grid_inner(f2, star.finite_twisted(weyl.involution(f1), f3))
    assert abs(lhs - rhs) <= 1e-12


def test_finite_submultiplicative(weyl3):
    rng = np.random.default_rng(9)
    for _ in range(20):
        f1 = weyl.fw_transform(weyl3, rng.normal(size=(3, 3)))
        f2 = weyl.fw_transform(weyl3, rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
        assert star.finite_twisted(f1, f2).norm() <= f1.norm() * f2.norm() * (1 + 1e-12)


# --------------------------------------------------------------------------
# twisted convolution on the grid


def test_twisted_convolution_unit(fock256, plane_pair):
    unit = weyl.fw_transform(fock256, np.eye(32))
    f = plane_pair[2]
    assert np.abs(star.twisted_convolution(f, unit).values - f.values).max() <= 1e-5


def test_twisted_convolution_homomorphism(fock256, plane_pair):
    A, B, fa, fb = plane_pair
    prod = star.twisted_convolution(fa, fb)
    assert np.abs(prod.values - weyl.fw_transform(fock256, A @ B).values).max() <= 1e-4


def test_twisted_convolution_noncommutative(plane_pair):
    A, B, fa, fb = plane_pair
    assert np.linalg.norm(A @ B - B @ A) > 0.01
    ab = star.twisted_convolution(fa, fb)
    ba = star.twisted_convolution(fb, fa)
    assert ab.with_values(ab.values - ba.values).norm() > 0.01


def test_routes_agree(fock64):
    grid = PhaseGrid.self_dual(32)
    rep = weyl.fock_representation(16, grid)
    a = weyl.fw_transform(rep, weyl.localized_density(16, 1))
    b = weyl.fw_transform(rep, weyl.localized_density(16, 2))
    diff = star.twisted_convolution(a, b, "direct").values - star.twisted_convolution(a, b, "fast").values
    assert np.abs(diff).max() <= 1e-8


def test_direct_route_size_limit(plane_pair):
    with pytest.raises(ValueError, match="n <= 64"):
        star.twisted_convolution(plane_pair[2], plane_pair[3], route="direct")


def test_grid_mismatch(plane_pair, fock64):
    other = weyl.fw_transform(fock64, weyl.fock_state(32, 0))
    with pytest.raises(ValueError, match="different domains"):
        star.twisted_convolution(plane_pair[2], other)


def test_grid_h_star_identity(fock256, plane_pair):
    _, _, f1, f2 = plane_pair
    f3 = weyl.fw_transform(fock256, weyl.localized_density(32, 33))
    lhs = grid_inner(star.twisted_convolution(f1, f2), f3)
    rhs = grid_inner(f2, star.twisted_convolution(weyl.involution(f1), f3))
    assert abs(lhs - rhs) <= 1e-4


def test_grid_submultiplicative(plane_pair):
    _, _, f1, f2 = plane_pair
    assert star.twisted_convolution(f1, f2).norm() <= f1.norm() * f2.norm() * (1 + 1e-6)


# --------------------------------------------------------------------------
# twisted product


def test_moyal_homomorphism(fock256, plane_pair):
    A, B, fa, fb = plane_pair
    prod = star.twisted_product(weyl.fw_to_wigner(fa), weyl.fw_to_wigner(fb))
    assert np.abs(prod.values - weyl.wigner_transform(fock256, A @ B).values).max() <= 1e-4


def gaussians(grid):
    Q, P = grid.mesh()
    f1 = np.exp(-((Q + 0.4) ** 2 + (P - 0.1) ** 2) / 1.2)
    f2 = np.exp(-(2 * Q**2 + (P + 0.3) ** 2) / 2.5) * np.exp(0.3j * Q)
    return f1, f2


def test_twisted_product_routes_agree():
    grid = PhaseGrid(32, 4.0)
    f1, f2 = gaussians(grid)
    kern = star.twisted_product(f1, f2, grid, route="kernel")
    four = star.twisted_product(f1, f2, grid, route="fourier")
    assert np.abs(kern - four).max() <= 1e-3


def test_twisted_product_conjugation(plane_pair):
    _, _, fa, fb = plane_pair
    wa, wb = weyl.fw_to_wigner(fa), weyl.fw_to_wigner(fb)
    wa = wa.with_values(wa.values * (1 + 0.5j))  # make the inputs genuinely complex
    lhs = np.conj(star.twisted_product(wa, wb).values)
    rhs = star.twisted_product(wb.with_values(np.conj(wb.values)), wa.with_values(np.conj(wa.values))).values
    assert np.abs(lhs - rhs).max() <= 1e-6


def test_kernel_route_rejects_large_grid():
    grid = PhaseGrid(128, 10.0)
    f1, f2 = gaussians(grid)
    with pytest.raises(ValueError, match="O\\(n\\^5\\)"):
        star.twisted_product(f1, f2, grid, route="kernel")


def test_kernel_route_rejects_aliased_grid():
    grid = PhaseGrid(32, 8.0)
    f1, f2 = gaussians(grid)
    with pytest.raises(ValueError, match="aliased"):
        star.twisted_product(f1, f2, grid, route="kernel")


def test_twisted_product_needs_wigner_side(plane_pair):
    with pytest.raises(ValueError):
        star.twisted_product(plane_pair[2], plane_pair[3])
