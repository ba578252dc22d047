"""Scalar special functions of the linearized phonon collision operator.

The equilibrium mode ``phi``, the collision frequency ``gamma``, the
scattering kernel ``kernel_K`` and a few integral norms built from them.
All semi-infinite integrals are truncated at ``QuadratureConfig.tail_cutoff``
with a closed-form bound on the discarded tail.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, interpolate

__all__ = [
    "DomainError",
    "QuadratureError",
    "QuadratureConfig",
    "DEFAULT_QUADRATURE",
    "PHI_NORM_SQ",
    "PHI0_SCALE",
    "phi",
    "phi0",
    "gamma",
    "kernel_K",
    "weighted_kernel",
    "row_norm_sq",
    "row_norm_bound",
    "kernel_row_integral",
    "sinh2_moment",
    "HSNorm",
    "hs_norm_C0",
    "HopitalArgs",
    "Scaled",
    "hopital_Z",
    "hopital_bound",
]

PHI_NORM_SQ = math.pi**4 / 30.0
PHI0_SCALE = math.sqrt(30.0) / math.pi**2

# phi(k) <= PHI_TAIL_CONST * 2 k^2 e^{-k} for k >= 1
PHI_TAIL_CONST = 1.0 / (1.0 - math.exp(-2.0))

_SMALL_K = 1e-4
_LARGE_K = 30.0


class DomainError(ValueError):
    """Argument outside the domain of a kernel function."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


def _tail_poly_exp(coeffs, T, rate=2.0):
    """Closed form of int_T^inf P(x) e^{-rate x} dx, P given low-to-high."""
    total = 0.0
    for n, c in enumerate(coeffs):
        if c == 0.0:
            continue
        # int_T^inf x^n e^{-a x} dx = e^{-aT} sum_j n!/j! T^j / a^{n-j+1}
        s = sum(math.factorial(n) / math.factorial(j) * T**j / rate ** (n - j + 1)
                for j in range(n + 1))
        total += c * s
    return total * math.exp(-rate * T)


@dataclass(frozen=True)
class QuadratureConfig:
    """Tolerances and truncation for adaptive quadrature."""

    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    tail_cutoff: float = 60.0
    max_panels: int = 200

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("abs_tol and rel_tol must be positive")
        if not self.tail_cutoff > 0:
            raise ValueError("tail_cutoff must be positive")
        if int(self.max_panels) != self.max_panels or self.max_panels < 1:
            raise ValueError("max_panels must be a positive integer")
        if self.envelope_tail() > self.abs_tol:
            raise ValueError(
                f"tail_cutoff={self.tail_cutoff} leaves a tail bound "
                f"{self.envelope_tail():.3e} above abs_tol={self.abs_tol:.1e}")

    def envelope_tail(self):
        """Bound on int_T^inf (2k^2 e^{-k})^2 dk (with the k>=1 constant)."""
        T = max(self.tail_cutoff, 1.0)
        tail = 4.0 * PHI_TAIL_CONST**2 * _tail_poly_exp([0, 0, 0, 0, 1.0], T)
        if self.tail_cutoff < 1.0:
            tail += 1.0  # phi^2 <= 1 on [0, 1]; crude but honest
        return tail

    @property
    def quad_kw(self):
        return dict(epsabs=self.abs_tol, epsrel=self.rel_tol,
                    limit=int(self.max_panels))


DEFAULT_QUADRATURE = QuadratureConfig()


def _check_k(k, strict=False):
    arr = np.asarray(k, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("wavenumber must be finite")
    if strict:
        if np.any(arr <= 0):
            raise DomainError("wavenumber must be positive")
    elif np.any(arr < 0):
        raise DomainError("wavenumber must be non-negative")
    return arr


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


def _phi_raw(k):
    k = np.asarray(k, dtype=float)
    out = np.empty_like(k)
    small = k < _SMALL_K
    large = k > _LARGE_K
    mid = ~(small | large)
    ks = k[small]
    out[small] = ks * (1.0 - ks**2 / 6.0 + 7.0 * ks**4 / 360.0)
    kl = k[large]
    out[large] = 2.0 * kl**2 * np.exp(-kl) / (-np.expm1(-2.0 * kl))
    km = k[mid]
    out[mid] = km**2 / np.sinh(km)
    return out


def phi(k):
    """Equilibrium mode k^2 / sinh k, with phi(0) = 0."""
    arr = _check_k(k)
    return _out(_phi_raw(arr), k)


def phi0(k):
    """Unit-L2 equilibrium mode (sqrt(30)/pi^2) phi(k)."""
    arr = _check_k(k)
    return _out(PHI0_SCALE * _phi_raw(arr), k)


def _h(x):
    # x^2 / (1 - e^{-2x}), continuous at 0
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] ** 2 / (-np.expm1(-2.0 * x[pos]))
    return out


def _quad(f, a, b, cfg, points=None):
    kw = cfg.quad_kw
    if points is not None:
        kw["points"] = points
    res = integrate.quad(f, a, b, full_output=1, **kw)
    val, err = res[0], res[1]
    if len(res) > 3 and "roundoff" not in res[3]:
        raise QuadratureError(f"quad on [{a:g}, {b:g}]: {res[3]}")
    if err > max(10 * cfg.abs_tol, 10 * cfg.rel_tol * abs(val)):
        raise QuadratureError(f"quad on [{a:g}, {b:g}]: error estimate {err:.2e}")
    return val


def _gamma_scalar(k, cfg):
    if k == 0.0:
        return 0.0
    s = -math.expm1(-2.0 * k)
    T = cfg.tail_cutoff

    def inner(kp):
        return 2.0 * s * float(_h(k - kp)) * float(_h(kp))

    def outer(kp):
        kk = k + kp
        return (2.0 * kk * kk * math.exp(-kp) * s / (-math.expm1(-2.0 * kk))
                * float(_phi_raw(kp)))

    near = _quad(inner, 0.0, k, cfg, points=[0.5 * k])
    far = _quad(outer, 0.0, T, cfg)
    # tail: integrand <= 4 C (k + x)^2 x^2 e^{-2x} / (1 - e^{-2T})
    c = 4.0 * PHI_TAIL_CONST / (-math.expm1(-2.0 * T))
    tail = c * _tail_poly_exp([0.0, 0.0, k * k, 2.0 * k, 1.0], T)
    if tail > cfg.abs_tol + cfg.rel_tol * (near + far):
        raise QuadratureError(f"gamma({k}): tail bound {tail:.2e} exceeds tolerance")
    return near + far


def gamma(k, cfg=DEFAULT_QUADRATURE):
    """Collision frequency from the split form.

    sinh k int_0^k phi(k-k') phi(k') dk' + 2 sinh k int_0^inf phi(k+k') phi(k') dk'.
    Both integrands are rewritten with expm1 so that no sinh is formed.
    """
    arr = _check_k(k)
    vals = np.array([_gamma_scalar(float(x), cfg) for x in arr.ravel()])
    return _out(vals.reshape(arr.shape), k)


def kernel_K(k, k2):
    """Scattering kernel (phi(|k-k2|) - phi(k+k2)) k k2, exactly symmetric."""
    a = _check_k(k)
    b = _check_k(k2)
    val = (_phi_raw(np.abs(a - b)) - _phi_raw(a + b)) * (a * b)
    return float(val) if val.ndim == 0 else val


def weighted_kernel(k, k2, cfg=DEFAULT_QUADRATURE):
    """K(k,k2) / sqrt(Gamma(k) Gamma(k2)) for positive arguments."""
    _check_k(k, strict=True)
    _check_k(k2, strict=True)
    return kernel_K(k, k2) / np.sqrt(gamma(k, cfg) * gamma(k2, cfg))


def row_norm_bound(k):
    """Upper bound (4/15) pi^4 k^4 + (4/21) pi^6 k^2 for row_norm_sq."""
    k = np.asarray(k, dtype=float)
    return 4.0 / 15.0 * math.pi**4 * k**4 + 4.0 / 21.0 * math.pi**6 * k**2


def _kernel_tail(k, T, power):
    # |K(k, k+u)| <= k (k+u) C 2 u^2 e^{-u} for u >= T >= 1 (phi(k+k') <= phi(u))
    C = 2.0 * PHI_TAIL_CONST
    if power == 2:
        # k^2 (k+u)^2 C^2 u^4 e^{-2u}
        coeffs = np.zeros(7)
        coeffs[4:7] = np.array([k * k, 2 * k, 1.0]) * k * k * C * C
        return _tail_poly_exp(coeffs, T, 2.0)
    coeffs = np.zeros(4)
    coeffs[2:4] = np.array([k, 1.0]) * k * C
    return _tail_poly_exp(coeffs, T, 1.0)


def row_norm_sq(k, cfg=DEFAULT_QUADRATURE):
    """int_0^inf K(k,k')^2 dk' with a panel break at k' = k."""
    arr = _check_k(k, strict=True)
    T = cfg.tail_cutoff
    out = []
    for x in arr.ravel():
        x = float(x)

        def f(kp, x=x):
            return kernel_K(x, kp) ** 2

        val = _quad(f, 0.0, x, cfg) + _quad(f, x, x + T, cfg)
        tail = _kernel_tail(x, T, 2)
        if tail > cfg.abs_tol + cfg.rel_tol * val:
            raise QuadratureError(f"row_norm_sq({x}): tail {tail:.2e}")
        out.append(val)
    return _out(np.array(out).reshape(arr.shape), k)


def kernel_row_integral(k, cfg=DEFAULT_QUADRATURE):
    """int_0^inf K(k,k') dk', used for singularity subtraction on grids."""
    arr = _check_k(k)
    T = cfg.tail_cutoff
    out = []
    for x in arr.ravel():
        x = float(x)
        if x == 0.0:
            out.append(0.0)
            continue

        def f(kp, x=x):
            return kernel_K(x, kp)

        val = _quad(f, 0.0, x, cfg) + _quad(f, x, x + T, cfg)
        tail = _kernel_tail(x, T, 1)
        if tail > cfg.abs_tol + cfg.rel_tol * abs(val):
            raise QuadratureError(f"kernel_row_integral({x}): tail {tail:.2e}")
        out.append(val)
    return _out(np.array(out).reshape(arr.shape), k)


def sinh2_moment(n, cfg=DEFAULT_QUADRATURE):
    """int_0^inf k^n / sinh^2 k dk for n >= 2."""
    if n < 2:
        raise DomainError("moment diverges for n < 2")
    T = cfg.tail_cutoff

    def f(k):
        if k == 0.0:
            return 1.0 if n == 2 else 0.0
        e = -math.expm1(-2.0 * k)
        return 4.0 * k**n * math.exp(-2.0 * k) / (e * e)

    val = _quad(f, 0.0, T, cfg, points=[1.0, 10.0])
    coeffs = np.zeros(n + 1)
    coeffs[n] = 4.0 / (-math.expm1(-2.0 * T)) ** 2
    tail = _tail_poly_exp(coeffs, T)
    if tail > cfg.abs_tol + cfg.rel_tol * val:
        raise QuadratureError(f"sinh2_moment({n}): tail {tail:.2e}")
    return val


# --- Hilbert-Schmidt norm -------------------------------------------------

@lru_cache(maxsize=8)
def _log_gamma_spline(k_hi, cfg):
    ks = np.geomspace(1e-6, k_hi, 361)
    g = gamma(ks, cfg)
    return interpolate.CubicSpline(np.log(ks), np.log(g / ks))


def _gamma_interp(k, spline):
    k = np.atleast_1d(np.asarray(k, dtype=float))
    lk = np.log(np.maximum(k, 1e-6))
    g = np.exp(spline(lk)) * k
    small = k < 1e-6
    # Gamma(k) ~ pi^4 k / 15 below the tabulated range
    g[small] = math.pi**4 / 15.0 * k[small]
    return g


@dataclass(frozen=True)
class HSNorm:
    """Hilbert-Schmidt norm of the Gamma-weighted kernel."""

    value: float
    tail_estimate: float
    tail_cutoff: float
    lower: float = 0.0


def _hs_pieces(lo, T, cfg):
    """Triangle integrals of K^2/(Gamma Gamma') split at T/2.

    The integrand is symmetric, so the square (lo, X)^2 is twice the triangle
    k' < k < X; the first piece alone is the square with cutoff T/2.
    """
    spline = _log_gamma_spline(T, cfg)
    qkw = dict(epsabs=1e-12, epsrel=1e-8, limit=int(cfg.max_panels))

    def inner(k):
        if k <= lo:
            return 0.0
        gk = _gamma_interp(k, spline)[0]

        def f(kp):
            gkp = _gamma_interp(kp, spline)[0]
            return kernel_K(k, kp) ** 2 / (gk * gkp) if gkp > 0.0 else 0.0

        return integrate.quad(f, lo, k, **qkw)[0]

    mid = max(0.5 * T, lo)
    pts = [p for p in (1e-3, 1e-2, 0.1, 1.0, 10.0) if lo < p < mid]
    first = integrate.quad(inner, lo, mid, points=pts or None, **qkw)[0] if mid > lo else 0.0
    second = integrate.quad(inner, mid, T, **qkw)[0]
    return 2.0 * first, 2.0 * second


def hs_norm_C0(cfg=DEFAULT_QUADRATURE, lower=0.0):
    """C0 over (lower, tail_cutoff)^2 with a truncation estimate.

    The truncation estimate is the change when the cutoff is halved, which
    overstates the true tail because the integrand decays like k^-6.
    """
    T = cfg.tail_cutoff
    if not (0.0 <= lower < T):
        raise DomainError("lower must lie in [0, tail_cutoff)")
    half, rest = _hs_pieces(lower, T, cfg)
    full = math.sqrt(half + rest)
    return HSNorm(full, full - math.sqrt(half), T, lower)


# --- Hopital lemma --------------------------------------------------------

@dataclass(frozen=True)
class HopitalArgs:
    t: float
    theta: float
    rho: float

    def __post_init__(self):
        if not (self.t >= 0 and self.theta >= 0 and self.rho > 0):
            raise DomainError("need t >= 0, theta >= 0, rho > 0")
        if not all(map(math.isfinite, (self.t, self.theta, self.rho))):
            raise DomainError("arguments must be finite")


@dataclass(frozen=True)
class Scaled:
    """Value mantissa * exp(exponent), for quantities that overflow."""

    mantissa: float
    exponent: float

    def value(self):
        return self.mantissa * math.exp(self.exponent)

    def __le__(self, other):
        if self.exponent == other.exponent:
            return self.mantissa <= other.mantissa
        return math.log(self.mantissa) + self.exponent <= (
            math.log(other.mantissa) + other.exponent) if self.mantissa > 0 else True


_MAX_EXPONENT = 1e6


def _check_exponent(args):
    e = args.rho * args.t
    if e > _MAX_EXPONENT:
        raise OverflowError(f"rho*t = {e:.3g} exceeds the scaled range")
    return e


def hopital_Z(args, cfg=DEFAULT_QUADRATURE):
    """int_0^t (s+1)^-theta e^{rho s} ds as Scaled(m, rho t).

    With u = t - s the mantissa is int_0^t (t-u+1)^-theta e^{-rho u} du.
    """
    e = _check_exponent(args)
    t, th, rho = args.t, args.theta, args.rho
    if t == 0.0:
        return Scaled(0.0, 0.0)

    def f(u):
        return (t - u + 1.0) ** (-th) * math.exp(-rho * u)

    u0 = min(t, 50.0 / rho)
    m = _quad(f, 0.0, u0, cfg)
    if u0 < t:
        m += _quad(f, u0, t, cfg)
    return Scaled(m, e)


def hopital_bound(args):
    """[2^theta (t+1)^-theta + 3 e^{-rho t/3}] / rho as Scaled(m, rho t)."""
    e = _check_exponent(args)
    t, th, rho = args.t, args.theta, args.rho
    m = (2.0**th * (t + 1.0) ** (-th) + 3.0 * math.exp(-rho * t / 3.0)) / rho
    return Scaled(m, e)
