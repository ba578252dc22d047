"""Grid discretization of the linearized collision operator.

The operator acts on radial data f(k) as

    (E f)(k) = -Gamma(k) f(k) + 2 int_0^inf K(k, k') f(k') dk'

and is realized here on a truncated composite Gauss-Legendre grid.
"""
from __future__ import annotations

import enum
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import interpolate, linalg, optimize

from . import kernels
from .kernels import DEFAULT_QUADRATURE

__all__ = [
    "InvalidSpecError",
    "SymmetryError",
    "DegenerateGammaError",
    "DimensionError",
    "GridSpec",
    "RadialGrid",
    "build_grid",
    "GammaMode",
    "DiscreteOperator",
    "assemble",
    "apply",
    "dirichlet_form",
    "triple_form",
    "c0_functional",
    "project_P",
    "SymmetrizedForm",
    "symmetrize",
    "SpectralGap",
    "spectral_gap",
    "nullspace_residual",
    "EIG_TOL",
]

EIG_TOL = 1e-8


class InvalidSpecError(ValueError):
    """Grid specification violates its preconditions."""


class SymmetryError(RuntimeError):
    """Assembled kernel matrix is not symmetric."""


class DegenerateGammaError(ValueError):
    """A collision frequency on the grid is not strictly positive."""


class DimensionError(ValueError):
    """Node vector has the wrong length."""


@dataclass(frozen=True)
class GridSpec:
    """Composite Gauss-Legendre grid on (k_min, k_max).

    Panel widths grow geometrically by ``panel_growth`` from k_min and are
    capped at a common width chosen so the panels exactly fill the interval.
    """

    n: int = 400
    k_min: float = 1e-6
    k_max: float = 30.0
    panel_growth: float = 2.0
    nodes_per_panel: int = 4
    grid_tol: float = 1e-6

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 8:
            raise InvalidSpecError("n must be an integer >= 8")
        if not (0 < self.k_min < self.k_max) or not math.isfinite(self.k_max):
            raise InvalidSpecError("need 0 < k_min < k_max < inf")
        if not self.panel_growth > 1:
            raise InvalidSpecError("panel_growth must exceed 1")
        if int(self.nodes_per_panel) != self.nodes_per_panel or self.nodes_per_panel < 1:
            raise InvalidSpecError("nodes_per_panel must be a positive integer")
        if not self.grid_tol > 0:
            raise InvalidSpecError("grid_tol must be positive")


@dataclass(frozen=True, eq=False)
class RadialGrid:
    spec: GridSpec
    nodes: np.ndarray
    weights: np.ndarray
    edges: np.ndarray
    phi: np.ndarray
    phi0: np.ndarray  # phi scaled to unit discrete norm

    @property
    def k_min(self):
        return self.spec.k_min

    @property
    def k_max(self):
        return self.spec.k_max

    @property
    def n(self):
        return self.nodes.size

    def norm(self, f):
        return math.sqrt(float(np.sum(self.weights * f * f)))


def _panel_edges(P, k_min, k_max, growth):
    L = k_max - k_min
    growth = float(growth)
    if k_min * growth**P <= k_max:
        # the geometric sequence alone cannot reach k_max: regrade it
        growth = (k_max / k_min) ** (1.0 / P)
    widths = k_min * (growth - 1.0) * growth ** np.arange(P)

    def excess(h):
        return np.minimum(widths, h).sum() - L

    cap = widths[-1]
    if excess(cap) > 0:
        cap = optimize.brentq(excess, 0.0, widths[-1], xtol=1e-300, rtol=1e-15)
    w = np.minimum(widths, cap)
    w *= L / w.sum()
    edges = k_min + np.concatenate([[0.0], np.cumsum(w)])
    edges[-1] = k_max
    return edges


def build_grid(spec=GridSpec()):
    """Nodes and weights of the graded composite Gauss-Legendre rule."""
    if not isinstance(spec, GridSpec):
        spec = GridSpec(**spec)
    q = int(spec.nodes_per_panel)
    P = max(spec.n // q, 1)
    edges = _panel_edges(P, spec.k_min, spec.k_max, spec.panel_growth)
    # leftover nodes go to the widest (last) panels
    if spec.n < q:
        counts = np.array([spec.n])
    else:
        counts = np.full(P, q)
        extra = spec.n - P * q
        if extra:
            counts[P - extra:] += 1
    nodes, weights = [], []
    for a, b, m in zip(edges[:-1], edges[1:], counts):
        x, w = leggauss(int(m))
        nodes.append(0.5 * (b - a) * (x + 1.0) + a)
        weights.append(0.5 * (b - a) * w)
    nodes = np.concatenate(nodes)
    weights = np.concatenate(weights)
    if not (np.all(np.diff(nodes) > 0) and nodes[0] > spec.k_min and nodes[-1] < spec.k_max
            and np.all(weights > 0)):
        raise InvalidSpecError("degenerate grid; try fewer nodes per panel")
    ph = kernels.phi(nodes)
    norm_sq = float(np.sum(weights * ph * ph))
    if abs(kernels.PHI0_SCALE**2 * norm_sq - 1.0) > spec.grid_tol:
        raise InvalidSpecError(
            f"grid integrates phi0^2 to {kernels.PHI0_SCALE**2 * norm_sq!r}, "
            f"outside grid_tol={spec.grid_tol}")
    return RadialGrid(spec, nodes, weights, edges, ph, ph / math.sqrt(norm_sq))


class GammaMode(enum.Enum):
    KERNEL_CONSISTENT = "kernel-consistent"
    QUADRATURE = "quadrature"


@dataclass(eq=False)
class DiscreteOperator:
    """Dense realization of E on a grid.

    ``loss_vec`` is the diagonal rate actually used in the action. It equals
    ``gamma_vec`` in kernel-consistent mode; in quadrature mode it adds the
    singularity-subtraction correction 2 (sum_j K_ij w_j - int K(k_i, k') dk').
    """

    grid: RadialGrid
    gamma_vec: np.ndarray
    kernel_mat: np.ndarray
    gamma_mode: GammaMode
    energy_weights: np.ndarray
    loss_vec: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self):
        return self.grid.n

    def gain_matrix(self):
        """2 K_ij w_j, the discrete T2."""
        if "gain" not in self._cache:
            self._cache["gain"] = 2.0 * self.kernel_mat * self.grid.weights[None, :]
        return self._cache["gain"]

    def matrix(self):
        if "E" not in self._cache:
            E = self.gain_matrix().copy()
            E[np.diag_indices_from(E)] -= self.loss_vec
            self._cache["E"] = E
        return self._cache["E"]


def _map_rows(fn, xs, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return np.array(list(ex.map(fn, xs)))
    return np.array([fn(x) for x in xs])


def assemble(grid, cfg=DEFAULT_QUADRATURE, mode=GammaMode.KERNEL_CONSISTENT, workers=None):
    mode = GammaMode(mode)
    k, w = grid.nodes, grid.weights
    Kmat = kernels.kernel_K(k[:, None], k[None, :])
    if not np.array_equal(Kmat, Kmat.T):
        asym = np.max(np.abs(Kmat - Kmat.T))
        if asym > 4 * np.finfo(float).eps * np.max(np.abs(Kmat)):
            raise SymmetryError(f"kernel matrix asymmetry {asym:.2e}")
        Kmat = 0.5 * (Kmat + Kmat.T)
    if mode is GammaMode.KERNEL_CONSISTENT:
        gvec = 2.0 * (Kmat @ (w * grid.phi)) / grid.phi
        loss = gvec
    else:
        gvec = _map_rows(lambda x: kernels.gamma(float(x), cfg), k, workers)
        kappa = _map_rows(lambda x: kernels.kernel_row_integral(float(x), cfg), k, workers)
        loss = gvec + 2.0 * (Kmat @ w - kappa)
        if np.any(gvec < 0):
            raise DegenerateGammaError("negative collision frequency")
    return DiscreteOperator(grid, gvec, Kmat, mode, w * grid.phi, loss)


def _check_len(op_or_grid, f):
    f = np.asarray(f, dtype=float)
    n = op_or_grid.n
    if f.shape[0] != n:
        raise DimensionError(f"expected {n} nodes, got {f.shape[0]}")
    return f


def apply(op, f):
    """E_h f; f may be a node vector or an (N, m) stack of them."""
    f = _check_len(op, f)
    wf = f * (op.grid.weights if f.ndim == 1 else op.grid.weights[:, None])
    loss = op.loss_vec if f.ndim == 1 else op.loss_vec[:, None]
    return -loss * f + 2.0 * (op.kernel_mat @ wf)


def nullspace_residual(op):
    """max |E_h phi| / max |gamma_vec * phi|."""
    r = apply(op, op.grid.phi)
    return float(np.max(np.abs(r)) / np.max(np.abs(op.gamma_vec * op.grid.phi)))


def dirichlet_form(op, f, g):
    """<-E_h f, g> in the quadrature inner product."""
    g = _check_len(op, g)
    return float(-np.sum(op.grid.weights * g * apply(op, f)))


def _as_function(f, grid):
    if callable(f):
        return f
    f = _check_len(grid, f)
    spl = interpolate.PchipInterpolator(grid.nodes, f, extrapolate=False)

    def fn(x):
        x = np.asarray(x, dtype=float)
        y = spl(x)
        # constant continuation down to k_min, zero past the last node
        y = np.where(x < grid.nodes[0], f[0], y)
        return np.nan_to_num(y, nan=0.0)

    return fn


def triple_form(f, g, grid, panels=200, order=8):
    """Symmetric double-integral form of <-E f, g> on (k_min, k_max)^2.

    f and g are node vectors (interpolated monotonically, zero past k_max) or
    callables. Uses the substitution F(k) phi(k) = k f(k) so no sinh appears.
    """
    ff = _as_function(f, grid)
    gg = _as_function(g, grid)
    lo, hi = grid.k_min, grid.k_max
    edges = np.linspace(lo, hi, panels + 1)
    x, w = leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    s = (0.5 * (b - a) * (x + 1.0) + a).ravel()
    ws = (0.5 * (b - a) * w).ravel()
    ph = kernels.phi(s)
    kf, kg = s * ff(s), s * gg(s)  # phi(k) F(k)
    total = 0.0
    for i in range(s.size):
        kk = s[i] + s
        inside = kk < hi
        p_sum = kernels.phi(kk)
        fk = np.where(inside, kk * ff(np.minimum(kk, hi)), 0.0)
        gk = np.where(inside, kk * gg(np.minimum(kk, hi)), 0.0)
        # weight phi(k+k')phi(k')phi(k) times products of the three F terms
        A = kf[i] * ph * p_sum + kf * ph[i] * p_sum - fk * ph[i] * ph
        B = kg[i] * ph * p_sum + kg * ph[i] * p_sum - gk * ph[i] * ph
        denom = ph[i] * ph * p_sum
        total += ws[i] * float(np.sum(ws * np.divide(A * B, denom, out=np.zeros_like(A),
                                                     where=denom > 0)))
    return total


def c0_functional(f, grid):
    f = _check_len(grid, f)
    return float(np.sum(grid.weights * f * grid.phi0))


def project_P(f, grid):
    c0 = c0_functional(f, grid)
    return c0, c0 * grid.phi0


@dataclass(frozen=True, eq=False)
class SymmetrizedForm:
    matrix: np.ndarray
    alpha_vec: np.ndarray
    rank_one: bool
    grid: RadialGrid

    def to_unknown(self, h):
        """Map a node vector h to the symmetric variable sqrt(w) alpha h."""
        return np.sqrt(self.grid.weights) * self.alpha_vec * h

    def from_unknown(self, g):
        return g / (np.sqrt(self.grid.weights) * self.alpha_vec)


def symmetrize(op, rank_one=True):
    """I - 2 K sqrt(w w')/(alpha alpha') + (phi0 sqrt(w)/alpha)(...)^T.

    alpha^2 is the diagonal rate of the action (``loss_vec``), so that for
    g = sqrt(w) alpha h the form g^T M g equals <-E_h h, h> + c0(h)^2.
    """
    if np.any(op.loss_vec <= 0):
        raise DegenerateGammaError("non-positive collision frequency on grid")
    alpha = np.sqrt(op.loss_vec)
    sw = np.sqrt(op.grid.weights)
    v = sw / alpha
    M = -2.0 * op.kernel_mat * (v[:, None] * v[None, :])
    M[np.diag_indices_from(M)] += 1.0
    if rank_one:
        u = op.grid.phi0 * v
        M += u[:, None] * u[None, :]
    M = 0.5 * (M + M.T)
    return SymmetrizedForm(M, alpha, rank_one, op.grid)


@dataclass(frozen=True, eq=False)
class SpectralGap:
    c_star: float
    spectrum_head: np.ndarray
    groundvec: np.ndarray


def spectral_gap(sym, eig_tol=EIG_TOL, head=10):
    try:
        vals, vecs = linalg.eigh(sym.matrix)
    except linalg.LinAlgError as exc:
        raise RuntimeError(f"eigensolver failed: {exc}") from exc
    c_star = float(vals[0])
    if sym.rank_one and c_star <= eig_tol:
        warnings.warn(f"spectral gap {c_star:.3e} <= eig_tol; grid may be under-resolved",
                      RuntimeWarning, stacklevel=2)
    return SpectralGap(c_star, vals[:head].copy(), vecs[:, 0].copy())
