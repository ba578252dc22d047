"""Time integration of df/dt = E_h f and the decay diagnostics built on it."""
from __future__ import annotations

import csv
import enum
import io
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import interpolate, linalg, special, stats

from .collision import DimensionError, c0_functional

__all__ = [
    "Scheme",
    "SolverConfig",
    "State",
    "Diagnostics",
    "NumericalError",
    "FitError",
    "InsufficientDataError",
    "DegenerateFitError",
    "GridResolutionError",
    "Propagator",
    "propagator",
    "step",
    "evolve",
    "Condition",
    "InitialDataReport",
    "classify_initial_data",
    "DecayFit",
    "decay_fit",
    "HalfLife",
    "experiment_no_uniform_decay",
    "initial_data",
    "PRESETS",
    "DIAG_COLUMNS",
]

DIAG_COLUMNS = ("t", "l2_norm", "energy", "c0", "dist_eq", "min_f", "gamma_norm")


class Scheme(enum.Enum):
    CRANK_NICOLSON = "crank-nicolson"
    ETD_EULER = "etd-euler"
    ETD_RK2 = "etd-rk2"


class NumericalError(RuntimeError):
    """Non-finite values or a singular solve during time stepping."""

    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics


class FitError(ValueError):
    pass


class InsufficientDataError(FitError):
    pass


class DegenerateFitError(FitError):
    def __init__(self, msg, floor_time):
        super().__init__(msg)
        self.floor_time = floor_time


class GridResolutionError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    scheme: Scheme = Scheme.CRANK_NICOLSON
    dt: float = 1e-2
    t_end: float = 200.0
    record_every: int = 10
    conservation_fix: bool | None = None  # None: off for CN, on for ETD

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive")
        if not self.t_end > self.dt:
            raise ValueError("t_end must exceed dt")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValueError("record_every must be a positive integer")

    @property
    def fix(self):
        if self.conservation_fix is None:
            return self.scheme is not Scheme.CRANK_NICOLSON
        return bool(self.conservation_fix)

    @property
    def n_steps(self):
        return int(math.ceil(self.t_end / self.dt - 1e-9))


@dataclass(frozen=True, eq=False)
class State:
    t: float
    f: np.ndarray
    grid: object

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float)
        if f.shape[0] != self.grid.n:
            raise DimensionError(f"state has {f.shape[0]} entries, grid has {self.grid.n}")
        if not np.all(np.isfinite(f)):
            raise NumericalError("state contains non-finite values")
        object.__setattr__(self, "f", f)


def _phi2(z):
    # (e^z - 1 - z) / z^2
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = np.abs(z) < 1e-2
    zs = z[small]
    out[small] = 0.5 + zs / 6.0 + zs**2 / 24.0 + zs**3 / 120.0 + zs**4 / 720.0
    zl = z[~small]
    out[~small] = (np.expm1(zl) - zl) / zl**2
    return out


class Propagator:
    """One-step map f -> f+ for a fixed operator, scheme and dt."""

    def __init__(self, op, scheme, dt):
        self.op = op
        self.scheme = Scheme(scheme)
        self.dt = float(dt)
        n = op.n
        if self.scheme is Scheme.CRANK_NICOLSON:
            E = op.matrix()
            A = np.eye(n) - 0.5 * dt * E
            self._B = np.eye(n) + 0.5 * dt * E
            with warnings.catch_warnings():
                warnings.simplefilter("error", linalg.LinAlgWarning)
                try:
                    self._lu = linalg.lu_factor(A, check_finite=True)
                except (linalg.LinAlgWarning, ValueError) as exc:
                    raise NumericalError(f"Crank-Nicolson matrix is singular: {exc}") from exc
            if np.any(np.diag(self._lu[0]) == 0):
                raise NumericalError("Crank-Nicolson matrix is singular")
        else:
            if np.any(op.loss_vec <= 0):
                raise ValueError("exponential schemes need positive collision frequencies")
            z = -op.loss_vec * dt
            self._e = np.exp(z)
            self._p1 = special.exprel(z)
            self._p2 = _phi2(z)
            self._G = op.gain_matrix()
            if self.scheme is Scheme.ETD_EULER:
                norm = dt * np.linalg.norm(self._G, 2)
                if norm > 1:
                    warnings.warn(f"ETD Euler with dt*||T2|| = {norm:.3g} > 1 may be unstable",
                                  RuntimeWarning, stacklevel=3)

    def _col(self, v, f):
        return v if f.ndim == 1 else v[:, None]

    def advance(self, f):
        dt = self.dt
        if self.scheme is Scheme.CRANK_NICOLSON:
            return linalg.lu_solve(self._lu, self._B @ f, check_finite=False)
        e, p1 = self._col(self._e, f), self._col(self._p1, f)
        Nu = self._G @ f
        a = e * f + dt * p1 * Nu
        if self.scheme is Scheme.ETD_EULER:
            return a
        return a + dt * self._col(self._p2, f) * (self._G @ a - Nu)


def propagator(op, scheme, dt):
    """Cached Propagator; the LU factorization is reused for equal dt."""
    key = ("prop", Scheme(scheme), float(dt))
    if key not in op._cache:
        op._cache[key] = Propagator(op, scheme, dt)
    return op._cache[key]


def _c0_cols(f, grid):
    return (grid.weights * grid.phi0) @ f


def _restore_c0(f_new, c0_target, grid):
    p0 = grid.phi0 if f_new.ndim == 1 else grid.phi0[:, None]
    return f_new + (c0_target - _c0_cols(f_new, grid)) * p0


def step(state, op, cfg):
    prop = propagator(op, cfg.scheme, cfg.dt)
    f_new = prop.advance(state.f)
    if cfg.fix:
        f_new = _restore_c0(f_new, _c0_cols(state.f, op.grid), op.grid)
    return State(state.t + cfg.dt, f_new, state.grid)


@dataclass
class Diagnostics:
    floor: float = 0.0
    rows: list = field(default_factory=list)

    def record(self, t, f, op):
        grid = op.grid
        w = grid.weights
        c0 = float(np.sum(w * f * grid.phi0))
        g = f - c0 * grid.phi0
        if self.rows and not t > self.rows[-1][0]:
            raise ValueError("diagnostic times must increase")
        self.rows.append((
            float(t),
            math.sqrt(float(np.sum(w * f * f))),
            float(np.sum(op.energy_weights * f)),
            c0,
            math.sqrt(float(np.sum(w * g * g))),
            float(np.min(f)),
            math.sqrt(float(np.sum(w * op.gamma_vec * g * g))),
        ))

    def column(self, name):
        i = DIAG_COLUMNS.index(name)
        return np.array([r[i] for r in self.rows])

    def __getattr__(self, name):
        if name in DIAG_COLUMNS:
            return self.column(name)
        raise AttributeError(name)

    def __len__(self):
        return len(self.rows)

    def to_csv(self, path_or_buf=None, prefix=None):
        """Write rows with full round-trip precision; returns text if no target."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        head = list(DIAG_COLUMNS)
        pre = []
        if prefix:
            head = list(prefix) + head
            pre = [str(v) for v in prefix.values()]
        writer.writerow(head)
        for r in self.rows:
            writer.writerow(pre + [repr(float(v)) for v in r])
        text = buf.getvalue()
        if path_or_buf is None:
            return text
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w", newline="") as fh:
                fh.write(text)
        return text


def evolve(f0, op, cfg=SolverConfig(), t0=0.0):
    """Step from t0 to t0 + t_end, recording every ``record_every`` steps."""
    grid = op.grid
    state = State(t0, np.array(f0, dtype=float), grid)
    diag = Diagnostics(floor=1e3 * np.finfo(float).eps * grid.norm(state.f))
    diag.record(state.t, state.f, op)
    prop = propagator(op, cfg.scheme, cfg.dt)
    f = state.f
    n = cfg.n_steps
    for i in range(1, n + 1):
        f_new = prop.advance(f)
        if cfg.fix:
            f_new = _restore_c0(f_new, _c0_cols(f, grid), grid)
        if not np.all(np.isfinite(f_new)):
            raise NumericalError(f"non-finite state at step {i}", diag)
        f = f_new
        if i % cfg.record_every == 0 or i == n:
            diag.record(t0 + i * cfg.dt, f, op)
    return State(t0 + n * cfg.dt, f, grid), diag


# --- initial data -----------------------------------------------------------

class Condition(enum.Enum):
    CONDITION1 = "Condition1"
    CONDITION2 = "Condition2"
    NEITHER = "Neither"


@dataclass(frozen=True)
class InitialDataReport:
    I_value: float
    a_estimate: float | None
    condition_met: Condition
    first_decade_share: float


def _log_integral(f, grid, lo, hi, panels=64, order=8):
    """int_lo^hi f(k)^2 / k dk with f interpolated in log k."""
    k = grid.nodes
    spl = interpolate.PchipInterpolator(np.log(k), f, extrapolate=False)
    x, w = leggauss(order)
    edges = np.linspace(math.log(lo), math.log(hi), panels + 1)
    a, b = edges[:-1, None], edges[1:, None]
    u = (0.5 * (b - a) * (x + 1.0) + a).ravel()
    wu = (0.5 * (b - a) * w).ravel()
    vals = spl(u)
    vals = np.where(u < math.log(k[0]), f[0], vals)
    vals = np.where(u > math.log(k[-1]), f[-1], vals)
    return float(np.sum(wu * vals * vals))


def classify_initial_data(f0, grid, share_tol=0.05, spread_tol=1e-3):
    """Heuristic check of the two small-k conditions on grid data."""
    f0 = np.asarray(f0, dtype=float)
    if f0.shape[0] != grid.n:
        raise DimensionError("initial data does not match grid")
    lo = grid.k_min
    hi = min(1.0, grid.k_max)
    I_val = _log_integral(f0, grid, lo, hi)
    first = _log_integral(f0, grid, lo, min(10.0 * lo, hi))
    share = first / I_val if I_val > 0 else 0.0
    k3, f3 = grid.nodes[:3], f0[:3]
    # Lagrange extrapolation to k = 0 through two and three nodes
    lin = f3[0] - k3[0] * (f3[1] - f3[0]) / (k3[1] - k3[0])
    quad = sum(f3[i] * np.prod([k3[j] / (k3[j] - k3[i]) for j in range(3) if j != i])
               for i in range(3))
    a = float(quad) if abs(quad - lin) <= spread_tol * max(1.0, abs(quad)) else None
    if math.isfinite(I_val) and share < share_tol:
        cond = Condition.CONDITION1
    elif a is not None:
        cond = Condition.CONDITION2
    else:
        cond = Condition.NEITHER
    return InitialDataReport(I_val, a, cond, share)


def initial_data(name, grid, remove_c0=False, **params):
    """Named presets: equilibrium, exp-decay, bump(eps), power(p)."""
    k = grid.nodes
    if name == "equilibrium":
        f = grid.phi0.copy()
    elif name == "exp-decay":
        f = np.exp(-k)
    elif name == "bump":
        eps = float(params.get("eps", 0.05))
        f = ((k > eps) & (k < 2 * eps)).astype(float)
        if not f.any():
            raise GridResolutionError(f"no nodes in ({eps}, {2 * eps})")
    elif name == "power":
        f = k ** float(params.get("p", 1.0)) * np.exp(-k)
    else:
        raise ValueError(f"unknown preset {name!r}")
    if remove_c0:
        f = f - c0_functional(f, grid) * grid.phi0
    return f


PRESETS = ("equilibrium", "exp-decay", "bump", "power")


# --- decay measurements -----------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    slope: float
    r2: float
    intercept: float
    n_rows: int
    window: tuple


def decay_fit(diag, window=(10.0, 200.0)):
    """Slope of log dist_eq against log(1+t) over the window."""
    t = diag.column("t")
    d = diag.column("dist_eq")
    mask = (t >= window[0]) & (t <= window[1])
    if mask.sum() < 10:
        raise InsufficientDataError(f"{mask.sum()} rows in window {window}, need 10")
    at_floor = d[mask] <= diag.floor
    if at_floor.any():
        tf = float(t[mask][np.argmax(at_floor)])
        raise DegenerateFitError(f"dist_eq reaches the round-off floor at t={tf}", tf)
    res = stats.linregress(np.log1p(t[mask]), np.log(d[mask]))
    return DecayFit(float(res.slope), float(res.rvalue**2), float(res.intercept),
                    int(mask.sum()), tuple(window))


@dataclass(frozen=True)
class HalfLife:
    eps: float
    t_half: float
    max_increase: float  # largest one-step growth of dist_eq, should be <= 0


def _bump(grid, eps):
    k = grid.nodes
    inside = (k > eps) & (k < 2 * eps)
    if inside.sum() < 8:
        raise GridResolutionError(
            f"window ({eps}, {2 * eps}) holds {inside.sum()} nodes, need 8")
    g = inside.astype(float)
    g /= grid.norm(g)
    return g - c0_functional(g, grid) * grid.phi0


def _half_lives(op, cfg, eps_list):
    """Advance all bumps as one stacked solve; record each first halving."""
    grid = op.grid
    G = np.stack([_bump(grid, e) for e in eps_list], axis=1)
    prop = propagator(op, cfg.scheme, cfg.dt)
    w = grid.weights[:, None]

    def dist(G):
        return np.sqrt(np.sum(w * (G - np.outer(grid.phi0, _c0_cols(G, grid))) ** 2, axis=0))

    d0 = dist(G)
    d_prev = d0
    worst = np.full(len(eps_list), -math.inf)
    t_half = np.full(len(eps_list), math.inf)
    for i in range(1, cfg.n_steps + 1):
        G_new = prop.advance(G)
        if cfg.fix:
            G_new = _restore_c0(G_new, _c0_cols(G, grid), grid)
        G = G_new
        d = dist(G)
        live = np.isinf(t_half)
        worst[live] = np.maximum(worst[live], (d - d_prev)[live])
        t_half[live & (d <= 0.5 * d0)] = i * cfg.dt
        d_prev = d
        if not np.isinf(t_half).any():
            break
    return [HalfLife(e, float(t), float(m)) for e, t, m in zip(eps_list, t_half, worst)]


def experiment_no_uniform_decay(op, cfg, eps_list, workers=None):
    """Half-life of the distance to equilibrium for data concentrated on (eps, 2 eps).

    With ``workers > 1`` each eps runs in its own process; BLAS calls are not
    safe to issue concurrently from threads with every OpenBLAS build.
    """
    eps_list = [float(e) for e in eps_list]
    for e in eps_list:
        if not 0 < 2 * e < 1:
            raise ValueError("each eps must satisfy 0 < 2 eps < 1")
        _bump(op.grid, e)  # fail early on unresolved windows
    if workers and workers > 1 and len(eps_list) > 1:
        with ProcessPoolExecutor(min(workers, len(eps_list))) as ex:
            parts = ex.map(_half_lives, [op] * len(eps_list), [cfg] * len(eps_list),
                           [[e] for e in eps_list])
            return [p[0] for p in parts]
    return _half_lives(op, cfg, eps_list)
