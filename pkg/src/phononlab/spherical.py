"""Three-dimensional side: physical units, spherical-harmonic modes, W0 and M.

A distribution Omega(t, p) on R^3 is expanded in real orthonormal spherical
harmonics. Every (l, m) coefficient obeys the same radial equation, which in
the wavenumber k = c|p| / (2 k_B T) becomes df/dt = E f for
f = k Omega / sinh k.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, special

from . import kernels
from .collision import DimensionError
from .evolution import Diagnostics, SolverConfig, _c0_cols, _restore_c0, propagator

__all__ = [
    "PhysicalParams",
    "GridMismatchError",
    "ResolutionError",
    "n0",
    "n0_one_plus",
    "wavenumber",
    "momentum",
    "to_radial",
    "from_radial",
    "legendre",
    "AngularGrid",
    "angular_grid",
    "real_sph_harm",
    "Mode",
    "SphericalField",
    "decompose",
    "reconstruct",
    "band_limited_samples",
    "stationary_theta",
    "weighted_distance",
    "energy_3d",
    "mass_functional",
    "Evolution3D",
    "evolve_3d",
    "w0",
    "w0_diagonal_limit",
    "lambda_analytic",
    "BigM",
    "bigM",
    "calibrate_lambda",
    "radial_operator_3d",
]


class GridMismatchError(ValueError):
    pass


class ResolutionError(ValueError):
    pass


@dataclass(frozen=True)
class PhysicalParams:
    """Coupling g, condensate density n_c, mass m, k_B and temperature T."""

    g: float = 1.0
    n_c: float = 1.0
    m: float = 1.0
    k_B: float = 1.0
    T: float = 0.5

    def __post_init__(self):
        for name in ("g", "n_c", "m", "k_B", "T"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite")

    @property
    def c(self):
        return math.sqrt(self.g * self.n_c / self.m)

    @property
    def scale(self):
        """|p| per unit wavenumber, 2 k_B T / c."""
        return 2.0 * self.k_B * self.T / self.c


def n0(k):
    """Bose occupancy 1 / (e^{2k} - 1)."""
    k = np.asarray(k, dtype=float)
    return 1.0 / np.expm1(2.0 * k)


def n0_one_plus(k):
    """n0 (1 + n0) = 1 / (4 sinh^2 k), in a form safe for large k."""
    k = np.asarray(k, dtype=float)
    e = np.exp(-2.0 * k)
    return e / np.expm1(-2.0 * k) ** 2


def wavenumber(params, r):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise kernels.DomainError("momentum magnitude must be non-negative")
    k = r / params.scale
    return float(k) if k.ndim == 0 else k


def momentum(params, k):
    k = np.asarray(k, dtype=float)
    r = k * params.scale
    return float(r) if r.ndim == 0 else r


def _k_over_sinh(k):
    return kernels.phi(k) / k


def to_radial(radial, k_nodes):
    """f = k Omega / sinh k on the wavenumber nodes (columns allowed)."""
    radial = np.asarray(radial, dtype=float)
    k_nodes = np.asarray(k_nodes, dtype=float)
    if radial.shape[0] != k_nodes.size:
        raise GridMismatchError("radial data and grid differ in length")
    fac = _k_over_sinh(k_nodes)
    return radial * (fac if radial.ndim == 1 else fac[:, None])


def from_radial(f, k_nodes):
    """Inverse of to_radial."""
    f = np.asarray(f, dtype=float)
    k_nodes = np.asarray(k_nodes, dtype=float)
    if f.shape[0] != k_nodes.size:
        raise GridMismatchError("radial data and grid differ in length")
    fac = _k_over_sinh(k_nodes)
    return f / (fac if f.ndim == 1 else fac[:, None])


def legendre(n, x):
    """P_n(x) by the three-term recurrence."""
    if int(n) != n or not 0 <= n <= 64:
        raise kernels.DomainError("degree must be an integer in [0, 64]")
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1):
        raise kernels.DomainError("x must lie in [-1, 1]")
    p_prev, p = np.ones_like(x), x.copy()
    if n == 0:
        out = p_prev
    else:
        for j in range(1, int(n)):
            p_prev, p = p, ((2 * j + 1) * x * p - j * p_prev) / (j + 1)
        out = p
    return float(out) if out.ndim == 0 else out


# --- angular machinery ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AngularGrid:
    """Gauss-Legendre in cos(theta) times uniform azimuth."""

    n_theta: int
    n_phi: int
    theta: np.ndarray  # flattened (n_theta * n_phi,)
    azimuth: np.ndarray
    weights: np.ndarray

    @property
    def size(self):
        return self.theta.size


def angular_grid(L_max, n_theta=None, n_phi=None):
    n_theta = L_max + 1 if n_theta is None else int(n_theta)
    n_phi = 2 * L_max + 1 if n_phi is None else int(n_phi)
    if n_theta < L_max + 1 or n_phi < 2 * L_max + 1:
        raise ResolutionError(
            f"need >= {L_max + 1} polar and >= {2 * L_max + 1} azimuthal nodes")
    x, wx = leggauss(n_theta)
    az = 2.0 * math.pi * np.arange(n_phi) / n_phi
    th = np.arccos(x)
    TH, AZ = np.meshgrid(th, az, indexing="ij")
    W = np.outer(wx, np.full(n_phi, 2.0 * math.pi / n_phi))
    return AngularGrid(n_theta, n_phi, TH.ravel(), AZ.ravel(), W.ravel())


def mode_index(ell, m):
    return ell * ell + ell + m


def mode_list(L_max):
    return [(l, m) for l in range(L_max + 1) for m in range(-l, l + 1)]


def real_sph_harm(ell, m, theta, azimuth):
    """Real orthonormal spherical harmonic; theta is the polar angle."""
    y = special.sph_harm_y(ell, abs(m), theta, azimuth)
    if m == 0:
        return y.real
    sign = (-1.0) ** m
    if m > 0:
        return math.sqrt(2.0) * sign * y.real
    return math.sqrt(2.0) * sign * y.imag


def _harmonic_matrix(L_max, ang):
    return np.array([real_sph_harm(l, m, ang.theta, ang.azimuth) for l, m in mode_list(L_max)])


@dataclass(frozen=True)
class Mode:
    ell: int
    m_index: int
    radial: np.ndarray

    def __post_init__(self):
        if not (self.ell >= 0 and abs(self.m_index) <= self.ell):
            raise ValueError("need |m| <= l")
        if not np.all(np.isfinite(self.radial)):
            raise ValueError("radial data must be finite")


@dataclass(eq=False)
class SphericalField:
    """Radial coefficients Omega_lm(r_i), stored as a ((L+1)^2, N) array."""

    params: PhysicalParams
    L_max: int
    r_nodes: np.ndarray
    r_weights: np.ndarray
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        n_modes = (self.L_max + 1) ** 2
        if self.coeffs.shape != (n_modes, self.r_nodes.size):
            raise DimensionError(
                f"coeffs shape {self.coeffs.shape}, expected {(n_modes, self.r_nodes.size)}")

    @property
    def k_nodes(self):
        return self.r_nodes / self.params.scale

    def mode(self, ell, m):
        return Mode(ell, m, self.coeffs[mode_index(ell, m)])

    @property
    def modes(self):
        return [self.mode(l, m) for l, m in mode_list(self.L_max)]

    def with_coeffs(self, coeffs):
        return SphericalField(self.params, self.L_max, self.r_nodes, self.r_weights, coeffs)

    @classmethod
    def zeros(cls, params, L_max, grid):
        r = momentum(params, grid.nodes)
        return cls(params, L_max, r, grid.weights * params.scale,
                   np.zeros(((L_max + 1) ** 2, grid.n)))

    def to_json(self):
        return json.dumps({
            "params": asdict(self.params),
            "L_max": self.L_max,
            "radial_grid": [float(x) for x in self.r_nodes],
            "radial_weights": [float(x) for x in self.r_weights],
            "modes": [{"ell": l, "m": m, "radial": [float(x) for x in self.coeffs[i]]}
                      for i, (l, m) in enumerate(mode_list(self.L_max))],
        }, indent=1)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        L = int(d["L_max"])
        r = np.array(d["radial_grid"], dtype=float)
        coeffs = np.zeros(((L + 1) ** 2, r.size))
        for md in d["modes"]:
            coeffs[mode_index(md["ell"], md["m"])] = md["radial"]
        return cls(PhysicalParams(**d["params"]), L, r,
                   np.array(d["radial_weights"], dtype=float), coeffs)


def decompose(samples, ang, L_max, params, grid):
    """Project samples of shape (n_angles, N) onto real harmonics up to L_max."""
    samples = np.asarray(samples, dtype=float)
    if ang.n_theta < L_max + 1 or ang.n_phi < 2 * L_max + 1:
        raise ResolutionError("angular grid too coarse for L_max")
    if samples.shape != (ang.size, grid.n):
        raise DimensionError(f"samples shape {samples.shape}, expected {(ang.size, grid.n)}")
    Y = _harmonic_matrix(L_max, ang)
    field0 = SphericalField.zeros(params, L_max, grid)
    return field0.with_coeffs((Y * ang.weights) @ samples)


def reconstruct(fld, ang):
    Y = _harmonic_matrix(fld.L_max, ang)
    return Y.T @ fld.coeffs


def band_limited_samples(rng, L_max, ang, grid, params):
    """Random smooth field of degree <= L_max, returned with its coefficients."""
    r = momentum(params, grid.nodes)
    n_modes = (L_max + 1) ** 2
    amp = rng.standard_normal((n_modes, 3))
    radial = (amp[:, :1] + amp[:, 1:2] * r + amp[:, 2:3] * r * r) * np.exp(-r / params.scale)
    Y = _harmonic_matrix(L_max, ang)
    return Y.T @ radial, radial


# --- stationary state and functionals --------------------------------------

def stationary_theta(field0, grid):
    """Theta_lm(r) = c_lm r, from the c0 functional of each transformed mode."""
    _check_field_grid(field0, grid)
    f = to_radial(field0.coeffs.T, grid.nodes)
    c0 = (grid.weights * grid.phi0) @ f
    # from_radial(c0 phi0_h) = c0 (phi0_h / phi) k, and k = r / scale
    ratio = grid.phi0[0] / grid.phi[0]
    c_lm = c0 * ratio / field0.params.scale
    return field0.with_coeffs(np.outer(c_lm, field0.r_nodes)), c_lm


def _check_field_grid(fld, grid):
    if fld.r_nodes.size != grid.n or not np.allclose(fld.k_nodes, grid.nodes, rtol=1e-13, atol=0):
        raise GridMismatchError("field radial grid does not map onto the operator grid")


def weighted_distance(fld, theta, grid):
    """(int |Omega - Theta|^2 dp / sinh^2 k)^(1/2), summed over modes."""
    k = grid.nodes
    d = fld.coeffs - theta.coeffs
    w = fld.r_weights * fld.r_nodes**2 * n0_one_plus(k) * 4.0
    return math.sqrt(float(np.sum(w * d * d)))


def energy_3d(fld):
    """int n0 (1 + n0) Omega |p| dp; only the (0,0) mode contributes."""
    k = fld.k_nodes
    om = fld.coeffs[0]
    return math.sqrt(4 * math.pi) * float(np.sum(fld.r_weights * fld.r_nodes**3 * n0_one_plus(k) * om))


def mass_functional(fld):
    """int n0 (1 + n0) Omega dp (fluctuation part)."""
    k = fld.k_nodes
    om = fld.coeffs[0]
    return math.sqrt(4 * math.pi) * float(np.sum(fld.r_weights * fld.r_nodes**2 * n0_one_plus(k) * om))


@dataclass
class Evolution3D:
    final: SphericalField
    theta: SphericalField
    mode_diagnostics: dict  # (l, m) -> Diagnostics
    times: np.ndarray
    distance: np.ndarray
    energy: np.ndarray
    mass: np.ndarray


def evolve_3d(field0, op, cfg=SolverConfig()):
    """Evolve every mode with the same radial operator, all modes stacked."""
    grid = op.grid
    _check_field_grid(field0, grid)
    theta, _ = stationary_theta(field0, grid)
    labels = mode_list(field0.L_max)
    F = to_radial(field0.coeffs.T, grid.nodes)
    diags = {lm: Diagnostics(floor=1e3 * np.finfo(float).eps * grid.norm(F[:, i]))
             for i, lm in enumerate(labels)}
    times, dist, energy, mass = [], [], [], []

    def record(t, F):
        for i, lm in enumerate(labels):
            diags[lm].record(t, F[:, i], op)
        fld = field0.with_coeffs(from_radial(F, grid.nodes).T)
        times.append(t)
        dist.append(weighted_distance(fld, theta, grid))
        energy.append(energy_3d(fld))
        mass.append(mass_functional(fld))

    record(0.0, F)
    prop = propagator(op, cfg.scheme, cfg.dt)
    n = cfg.n_steps
    for i in range(1, n + 1):
        F_new = prop.advance(F)
        if cfg.fix:
            F_new = _restore_c0(F_new, _c0_cols(F, grid), grid)
        F = F_new
        if i % cfg.record_every == 0 or i == n:
            record(i * cfg.dt, F)
    final = field0.with_coeffs(from_radial(F, grid.nodes).T)
    return Evolution3D(final, theta, diags, np.array(times), np.array(dist),
                       np.array(energy), np.array(mass))


# --- W0 and M formulas ------------------------------------------------------

def w0(r, r2, params):
    """Zeroth Legendre coefficient W0(r, r') of the transition kernel."""
    r = np.asarray(r, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    if np.any(r <= 0) or np.any(r2 <= 0):
        raise kernels.DomainError("w0 needs positive momenta")
    if np.any(r == r2):
        raise kernels.DomainError("w0 is undefined on the diagonal r = r'")
    k, k2 = r / params.scale, r2 / params.scale
    d = np.abs(k - k2)
    one_plus = lambda x: -1.0 / np.expm1(-2.0 * x)
    # the Heaviside factor selects which of the first two terms is active
    hi, lo = np.maximum(k, k2), np.minimum(k, k2)
    first = (r - r2) ** 2 * n0(hi) * one_plus(lo) * one_plus(d)
    # factors ordered by (hi, lo) so W0 is exactly symmetric
    third = (r + r2) ** 2 * n0(k + k2) * one_plus(hi) * one_plus(lo)
    out = 9.0 / (32.0 * math.pi**2 * params.n_c) * (first - third)
    return float(out) if out.ndim == 0 else out


def w0_diagonal_limit(r, params):
    """Limit of W0(r, r') as r' -> r; only the (r + r')^2 term survives."""
    r = np.asarray(r, dtype=float)
    k = r / params.scale
    one_plus = -1.0 / np.expm1(-2.0 * k)
    out = -9.0 / (32.0 * math.pi**2 * params.n_c) * (2 * r) ** 2 * n0(2 * k) * one_plus**2
    return float(out) if out.ndim == 0 else out


def lambda_analytic(params):
    """Constant mapping the W0 route onto Gamma n0 (1 + n0)."""
    return 128.0 * math.pi**2 * params.n_c / 9.0 * (params.c / (2 * params.k_B * params.T)) ** 5


@dataclass(frozen=True)
class BigM:
    from_w0: float
    closed: float


def bigM(r, params, cfg=kernels.DEFAULT_QUADRATURE):
    """M(r) by quadrature of W0 and in closed form Gamma(k) / (4 sinh^2 k)."""
    if not r > 0:
        raise kernels.DomainError("r must be positive")
    c = params.c
    k = r / params.scale
    r_max = momentum(params, cfg.tail_cutoff)

    def f(rp):
        if rp == r or rp == 0.0:
            return 0.0
        return w0(r, rp, params) * c * rp * rp * rp

    kw = dict(epsabs=0.0, epsrel=1e-11, limit=int(cfg.max_panels))
    pts = [r] if r < r_max else None
    val = integrate.quad(f, 0.0, max(r_max, 2 * r), points=pts, **kw)[0]
    from_w0 = val / (c * r)
    closed = kernels.gamma(k, cfg) * float(n0_one_plus(k))
    return BigM(from_w0, closed)


def calibrate_lambda(params, r_ref=1.0, cfg=kernels.DEFAULT_QUADRATURE):
    m = bigM(r_ref, params, cfg)
    return m.closed / m.from_w0


def radial_operator_3d(op, params, lam=None):
    """Dense 3-D radial operator built from W0 on the operator's grid.

    Returns (gain, loss) with action L(Omega)_i = -loss_i Omega_i + sum_j gain_ij Omega_j.
    loss uses the operator's diagonal rate mapped by n0 (1 + n0).
    """
    grid = op.grid
    lam = lambda_analytic(params) if lam is None else lam
    r = momentum(params, grid.nodes)
    wr = grid.weights * params.scale
    R, R2 = np.meshgrid(r, r, indexing="ij")
    off = R != R2
    W = np.zeros_like(R)
    W[off] = w0(R[off], R2[off], params)
    # the diagonal node carries the continuous limit of W0
    W[~off] = w0_diagonal_limit(R[~off], params)
    gain = lam * W * (r * r * wr)[None, :]
    loss = op.loss_vec * n0_one_plus(grid.nodes)
    return gain, loss
