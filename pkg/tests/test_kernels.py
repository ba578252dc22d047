import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from phononlab import kernels as K
from phononlab.kernels import (DomainError, HopitalArgs, QuadratureConfig, gamma, hopital_Z,
                               hopital_bound, kernel_K, phi, phi0, row_norm_sq)

mpmath.mp.dps = 30
finite_k = st.floats(0.0, 200.0, allow_nan=False)


def mp_phi(k):
    k = mpmath.mpf(k)
    return k * k / mpmath.sinh(k) if k else mpmath.mpf(0)


def _trapezoid_richardson(f, hi, n):
    """Trapezoid at n and n//2 intervals on (0, hi), Richardson-combined."""
    def trap(m):
        x = np.linspace(0.0, hi, m + 1)
        return integrate.trapezoid(f(x), x)
    a, b = trap(n), trap(n // 2)
    return a + (a - b) / 3.0


def np_phi(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    m = x > 0
    out[m] = x[m] ** 2 / np.sinh(x[m])
    return out


# --- phi ------------------------------------------------------------------

def test_phi_values():
    assert phi(0.0) == 0.0
    assert phi0(0.0) == 0.0
    assert phi(1.0) == pytest.approx(float(1 / mpmath.sinh(1)), rel=1e-15)
    assert phi(1.0) == pytest.approx(0.850918, abs=1e-6)
    # sqrt(30)/pi^2 = 0.5549581..., so phi0(1) = 0.4722247 (not 0.472199)
    assert phi0(1.0) == pytest.approx(0.4722247, abs=1e-7)
    assert phi0(1.0) == pytest.approx(float(mpmath.sqrt(30) / mpmath.pi**2 / mpmath.sinh(1)),
                                      rel=1e-15)


@pytest.mark.parametrize("k", [1e-8, 5e-5, 9.99e-5, 1e-4, 1.01e-4, 0.3, 29.9, 30.0, 30.1, 300.0, 700.0])
def test_phi_matches_high_precision_across_branches(k):
    assert phi(k) == pytest.approx(float(mp_phi(k)), rel=2e-15)


def test_phi_large_argument_no_overflow():
    with np.errstate(over="raise", invalid="raise"):
        v = phi(np.array([700.0, 1e3]))
    assert np.all(np.isfinite(v)) and v[0] > 0


def test_phi_vectorized_matches_scalar():
    ks = np.geomspace(1e-7, 100, 57)
    np.testing.assert_array_equal(phi(ks), [phi(float(k)) for k in ks])


@pytest.mark.parametrize("bad", [-1e-12, -3.0, math.inf, math.nan])
def test_phi_domain(bad):
    with pytest.raises(DomainError):
        phi(bad)


def test_phi0_unit_norm():
    val = integrate.quad(lambda k: phi0(k) ** 2, 0, 80, limit=200, epsabs=1e-13)[0]
    assert val == pytest.approx(1.0, abs=1e-12)
    assert integrate.quad(lambda k: phi(k) ** 2, 0, 80, limit=200)[0] == pytest.approx(
        math.pi**4 / 30, rel=1e-12)


# --- gamma ----------------------------------------------------------------

def test_gamma_trapezoid_oracle():
    # symmetric-kink form sinh k int (phi(|k-k'|) + phi(k+k')) phi(k') dk'
    k = 1.0
    ref = math.sinh(k) * _trapezoid_richardson(
        lambda x: (np_phi(np.abs(k - x)) + np_phi(k + x)) * np_phi(x), 60.0, 1_200_000)
    assert gamma(k) == pytest.approx(ref, rel=1e-10)


def test_gamma_mpmath_oracle():
    k = 2.5
    f = lambda x: (mp_phi(abs(k - x)) + mp_phi(k + x)) * mp_phi(x)
    ref = mpmath.sinh(k) * mpmath.quad(f, [0, k / 2, k, 10, 60])
    assert gamma(k) == pytest.approx(float(ref), rel=1e-10)


def test_gamma_asymptotics():
    for k in (1e-3, 1e-4, 1e-5):
        assert abs(gamma(k) / k / (math.pi**4 / 15) - 1) < 0.01
    for k in (50.0, 80.0):
        assert abs(15 * gamma(k) / k**5 - 1) < 0.02


def test_gamma_zero_and_positive():
    assert gamma(0.0) == 0.0
    ks = np.geomspace(1e-6, 60, 25)
    assert np.all(gamma(ks) > 0)


def test_gamma_domain():
    with pytest.raises(DomainError):
        gamma(-1.0)


# --- kernel ---------------------------------------------------------------

def test_kernel_values():
    assert kernel_K(1.0, 1.0) == pytest.approx(float(-4 / mpmath.sinh(2)), rel=1e-15)
    assert kernel_K(1.0, 1.0) == pytest.approx(-1.10288, abs=1e-5)
    assert kernel_K(3.0, 0.0) == 0.0 and kernel_K(0.0, 3.0) == 0.0


@settings(max_examples=300, deadline=None)
@given(finite_k, finite_k)
def test_kernel_exactly_symmetric(a, b):
    assert kernel_K(a, b) == kernel_K(b, a)


def test_kernel_matrix_symmetric(rng):
    x = rng.uniform(0, 40, 300)
    M = kernel_K(x[:, None], x[None, :])
    assert np.array_equal(M, M.T)


def test_weighted_kernel():
    eps_vals = [weighted_kernel_abs(e) for e in (1e-2, 1e-3, 1e-4)]
    assert eps_vals[0] > eps_vals[1] > eps_vals[2]
    ref = float((mp_phi(1) - mp_phi(3)) * 2) / math.sqrt(gamma(1.0) * gamma(2.0))
    assert K.weighted_kernel(1.0, 2.0) == pytest.approx(ref, rel=1e-12)
    assert K.weighted_kernel(2.0, 1.0) == K.weighted_kernel(1.0, 2.0)
    with pytest.raises(DomainError):
        K.weighted_kernel(0.0, 1.0)


def weighted_kernel_abs(e):
    return abs(K.weighted_kernel(e, e))


# --- row norms and moments -------------------------------------------------

def test_row_norm_trapezoid_oracle():
    k = 2.0
    ref = _trapezoid_richardson(lambda x: kernel_K(k, x) ** 2, 80.0, 1_280_000)
    assert row_norm_sq(k) == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("k", [1e-3, 0.1, 1.0, 3.0, 10.0, 40.0])
def test_row_norm_below_bound(k):
    assert row_norm_sq(k) < K.row_norm_bound(k)


def test_row_norm_small_k_bound():
    c = 2 * math.pi**3 / math.sqrt(21)
    assert c == pytest.approx(13.5323, abs=1e-4)
    for k in (0.1, 0.01, 0.001):
        assert math.sqrt(row_norm_sq(k)) <= c * k


def test_row_norm_bound_at_one():
    assert K.row_norm_bound(1.0) == pytest.approx(209.0974, abs=1e-3)


def test_kernel_row_integral_mpmath():
    k = 0.7
    ref = mpmath.quad(lambda x: (mp_phi(abs(k - x)) - mp_phi(k + x)) * k * x, [0, k, 10, 80])
    assert K.kernel_row_integral(k) == pytest.approx(float(ref), rel=1e-10)


def test_moments():
    assert K.sinh2_moment(4) == pytest.approx(math.pi**4 / 30, abs=1e-8)
    assert K.sinh2_moment(6) == pytest.approx(math.pi**6 / 42, abs=1e-8)
    assert K.sinh2_moment(2) == pytest.approx(math.pi**2 / 6, abs=1e-8)
    with pytest.raises(DomainError):
        K.sinh2_moment(1)


# --- configuration ----------------------------------------------------------

def test_quadrature_config_validation():
    with pytest.raises(ValueError):
        QuadratureConfig(abs_tol=0)
    with pytest.raises(ValueError):
        QuadratureConfig(tail_cutoff=5.0)  # tail bound far above abs_tol
    with pytest.raises(ValueError):
        QuadratureConfig(max_panels=0)
    with pytest.raises(AttributeError):
        K.DEFAULT_QUADRATURE.abs_tol = 1.0


def test_tail_closed_form():
    # int_T^inf x^3 e^{-2x} dx against quad
    T = 7.0
    ref = integrate.quad(lambda x: x**3 * math.exp(-2 * x), T, np.inf)[0]
    assert K._tail_poly_exp([0, 0, 0, 1.0], T) == pytest.approx(ref, rel=1e-12)


# --- Hilbert-Schmidt norm -----------------------------------------------------

def test_hs_norm_restricted_below_full():
    full = K.hs_norm_C0(QuadratureConfig(tail_cutoff=30.0))
    part = K.hs_norm_C0(QuadratureConfig(tail_cutoff=30.0), lower=1.0)
    assert 0 < part.value <= full.value
    assert full.tail_estimate >= 0
    with pytest.raises(DomainError):
        K.hs_norm_C0(lower=100.0)


# --- Hopital lemma --------------------------------------------------------

def test_hopital_theta_zero_closed_form():
    a = HopitalArgs(3.0, 0.0, 0.5)
    z = hopital_Z(a)
    assert z.value() == pytest.approx(math.expm1(1.5) / 0.5, rel=1e-12)
    assert z <= hopital_bound(a)


def test_hopital_example():
    a = HopitalArgs(2.0, 1.0, 1.0)
    ref = mpmath.quad(lambda s: mpmath.exp(s) / (s + 1), [0, 2])
    assert hopital_Z(a).value() == pytest.approx(float(ref), rel=1e-10)
    assert hopital_bound(a).value() == pytest.approx((2 / 3 + 3 * math.exp(-2 / 3)) * math.e**2,
                                                     rel=1e-14)


def test_hopital_large_exponent_is_scaled():
    a = HopitalArgs(1e4, 1.0, 1.0)  # e^{1e4} overflows a float
    z, b = hopital_Z(a), hopital_bound(a)
    assert z.exponent == 1e4 and math.isfinite(z.mantissa)
    assert z <= b
    with pytest.raises(OverflowError):
        hopital_Z(HopitalArgs(2e6, 1.0, 1.0))


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 500.0), st.floats(0.0, 4.0), st.floats(1e-3, 5.0))
def test_hopital_bound_property(t, th, rho):
    # for theta = 0 and large rho t the true margin 3 e^{-rho t/3} drops below
    # one ulp, so allow the quadrature's own relative tolerance
    a = HopitalArgs(t, th, rho)
    z, b = hopital_Z(a), hopital_bound(a)
    assert z.exponent == b.exponent
    assert z.mantissa <= b.mantissa * (1 + K.DEFAULT_QUADRATURE.rel_tol)


def test_hopital_args_validation():
    with pytest.raises(DomainError):
        HopitalArgs(1.0, 0.0, 0.0)
    with pytest.raises(DomainError):
        HopitalArgs(-1.0, 0.0, 1.0)
