"""Acceptance checks shared by the test-suite and the ``verify`` command.

Each check returns a :class:`Result`; expensive objects (operators, the long
Crank-Nicolson trajectory) are built once per :class:`Context`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from .collision import (GammaMode, GridSpec, assemble, build_grid, dirichlet_form,
                        nullspace_residual, spectral_gap, symmetrize)
from .evolution import (SolverConfig, decay_fit, evolve, experiment_no_uniform_decay,
                        initial_data)
from .kernels import HopitalArgs, QuadratureConfig
from .spherical import (PhysicalParams, angular_grid, band_limited_samples, bigM,
                        calibrate_lambda, decompose, evolve_3d, radial_operator_3d,
                        reconstruct)

__all__ = ["Result", "Context", "CHECKS", "run_one", "run_all", "ladder_spec"]

LADDER_GRID_TOL = 1e-4


def ladder_spec(base, n):
    """``base`` at ``n`` nodes; coarse rungs integrate phi0^2 only to ~1e-5."""
    return GridSpec(**{**base.__dict__, "n": n,
                       "grid_tol": max(base.grid_tol, LADDER_GRID_TOL)})


@dataclass(frozen=True)
class Result:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:2d} {self.name}: {self.detail}"


class Context:
    """Lazily built shared state for the checks."""

    def __init__(self, seed=0, grid=GridSpec(), quad=QuadratureConfig(),
                 solver=SolverConfig(), eps_grid=GridSpec(panel_growth=1.25),
                 params=PhysicalParams(), workers=1):
        self.seed = seed
        self.grid_spec = grid
        self.quad = quad
        self.solver = solver
        self.eps_grid = eps_grid
        self.params = params
        self.workers = workers
        self._ops = {}

    def op(self, n, mode=GammaMode.KERNEL_CONSISTENT, spec=None):
        spec = spec or GridSpec(**{**self.grid_spec.__dict__, "n": n})
        key = (spec, GammaMode(mode))
        if key not in self._ops:
            self._ops[key] = assemble(build_grid(spec), self.quad, mode)
        return self._ops[key]

    @property
    def op400(self):
        return self.op(self.grid_spec.n)

    @cached_property
    def gaps(self):
        out = {}
        for n in (200, 400):
            op = self.op(n)
            out[n] = (spectral_gap(symmetrize(op)), spectral_gap(symmetrize(op, rank_one=False)))
        return out

    @cached_property
    def conservation_run(self):
        """exp-decay from t = 0 to 200, every step recorded."""
        op = self.op400
        cfg = SolverConfig(self.solver.scheme, self.solver.dt, self.solver.t_end, 1,
                           self.solver.conservation_fix)
        return evolve(initial_data("exp-decay", op.grid), op, cfg)[1]


def check_gamma_small(ctx):
    v = kernels.gamma(1e-3, ctx.quad) / 1e-3
    ref = math.pi**4 / 15
    err = abs(v / ref - 1)
    return Result(1, "collision frequency small-k constant", err < 0.01,
                  f"Gamma(1e-3)/1e-3 = {v:.7f}, pi^4/15 = {ref:.7f}, rel err {err:.2e} (tol 1e-2)")


def check_gamma_large(ctx):
    v = kernels.gamma(50.0, ctx.quad) / 50.0**5
    err = abs(15 * v - 1)
    return Result(2, "collision frequency large-k constant", err < 0.02,
                  f"Gamma(50)/50^5 = {v:.6f}, 1/15 = {1/15:.6f}, rel err {err:.2e} (tol 2e-2)")


def check_moments(ctx):
    e4 = abs(kernels.sinh2_moment(4, ctx.quad) - math.pi**4 / 30)
    e6 = abs(kernels.sinh2_moment(6, ctx.quad) - math.pi**6 / 42)
    return Result(3, "moment identities", max(e4, e6) <= 1e-8,
                  f"|k^4 moment - pi^4/30| = {e4:.1e}, |k^6 moment - pi^6/42| = {e6:.1e} (tol 1e-8)")


def check_kernel_bound(ctx):
    ok = True
    parts = []
    for k in (0.1, 1.0, 10.0):
        v, b = kernels.row_norm_sq(k, ctx.quad), float(kernels.row_norm_bound(k))
        ok &= v < b
        parts.append(f"k={k:g}: {v:.4g}<{b:.4g}")
    c = 2 * math.pi**3 / math.sqrt(21)
    worst = 0.0
    for k in (0.1, 0.01, 0.001):
        ratio = math.sqrt(kernels.row_norm_sq(k, ctx.quad)) / (c * k)
        worst = max(worst, ratio)
    ok &= worst <= 1.0
    parts.append(f"max ||K(k,.)||/(2pi^3 k/sqrt21) = {worst:.4f}")
    return Result(4, "kernel row bounds", bool(ok), "; ".join(parts))


def check_hs_norm(ctx):
    a = kernels.hs_norm_C0(QuadratureConfig(ctx.quad.abs_tol, ctx.quad.rel_tol, 60.0,
                                            ctx.quad.max_panels))
    b = kernels.hs_norm_C0(QuadratureConfig(ctx.quad.abs_tol, ctx.quad.rel_tol, 120.0,
                                            ctx.quad.max_panels))
    change = abs(b.value / a.value - 1)
    ok = math.isfinite(a.value) and a.value > 0 and change < 0.01
    return Result(5, "Hilbert-Schmidt norm finite and stable", ok,
                  f"C0(60) = {a.value:.7f}, C0(120) = {b.value:.7f}, rel change {change:.1e} (tol 1e-2)")


def check_nullspace(ctx):
    kc = nullspace_residual(ctx.op400)
    ladder = [nullspace_residual(ctx.op(n, GammaMode.QUADRATURE, ladder_spec(ctx.grid_spec, n)))
              for n in (100, 200, 400)]
    order = math.log2(ladder[-2] / ladder[-1])
    ok = kc <= 1e-13 and ladder[-1] <= 1e-4 and ladder[0] > ladder[1] > ladder[2] and order >= 2
    return Result(6, "nullspace of the discrete operator", ok,
                  f"kernel-consistent residual {kc:.1e} (tol 1e-13); quadrature residuals "
                  f"N=100,200,400: {ladder[0]:.1e}, {ladder[1]:.1e}, {ladder[2]:.1e}, "
                  f"observed order {order:.2f} (need <=1e-4, order >= 2)")


def check_form_positivity(ctx):
    op = ctx.op400
    rng = np.random.default_rng(ctx.seed)
    F = rng.standard_normal((op.n, 1000))
    G = rng.standard_normal((op.n, 1000))
    E = op.matrix()
    w = op.grid.weights[:, None]
    dff = -np.sum(w * F * (E @ F), axis=0)
    dgg = -np.sum(w * G * (E @ G), axis=0)
    dfg = -np.sum(w * G * (E @ F), axis=0)
    norm2 = np.sum(w * F * F, axis=0)
    pos = float(np.min(dff / norm2))
    cs = float(np.max(np.abs(dfg) - 0.5 * dff - 0.5 * dgg))
    # spot-check the vectorized form against the scalar routine
    same = abs(dirichlet_form(op, F[:, 0], G[:, 0]) - dfg[0]) <= 1e-9 * abs(dfg[0])
    ok = pos >= -1e-10 and cs <= 1e-10 and same
    return Result(7, "positivity and Cauchy-Schwarz of the form", bool(ok),
                  f"min <-Ef,f>/||f||^2 = {pos:.3e} (>= -1e-10); "
                  f"max |<-Ef,g>| - (<-Ef,f>+<-Eg,g>)/2 = {cs:.3e} (<= 1e-10) over 1000 pairs")


def check_spectral_gap(ctx):
    (g200, u200), (g400, u400) = ctx.gaps[200], ctx.gaps[400]
    spread = abs(g400.c_star / g200.c_star - 1)
    lam0 = float(u400.spectrum_head[0])
    sym = symmetrize(ctx.op400, rank_one=False)
    v = sym.to_unknown(ctx.op400.grid.phi)
    cos = abs(float(v @ u400.groundvec)) / np.linalg.norm(v)
    second = float(u400.spectrum_head[1])
    ok = (g200.c_star > 0 and g400.c_star > 0 and spread < 0.05 and -1e-8 <= lam0 <= 1e-6
          and cos >= 0.999 and second > 10 * abs(lam0))
    return Result(8, "spectral gap", ok,
                  f"C*(200) = {g200.c_star:.6f}, C*(400) = {g400.c_star:.6f}, spread {spread:.2e} "
                  f"(tol 5e-2); uncorrected min eig {lam0:.2e} in [-1e-8, 1e-6], "
                  f"ground-vector cosine {cos:.12f} (>= 0.999)")


def check_conservation(ctx):
    d = ctx.conservation_run
    e, c = d.column("energy"), d.column("c0")
    de = float(np.max(np.abs(e - e[0])) / abs(e[0]))
    dc = float(np.max(np.abs(c - c[0])) / abs(c[0]))
    return Result(9, "conservation of energy and c0", max(de, dc) <= 1e-10,
                  f"energy drift {de:.2e}, c0 drift {dc:.2e} over t in [0, {d.column('t')[-1]:g}] "
                  f"(tol 1e-10)")


def check_apriori(ctx):
    d = ctx.conservation_run
    c_star = ctx.gaps[400][0].c_star
    t, l2, gn = d.column("t"), d.column("l2_norm"), d.column("gamma_norm")
    integral = np.concatenate([[0.0], np.cumsum(np.diff(t) * gn[1:] ** 2)])
    lhs = l2**2 + 2 * c_star * integral
    margin = float(np.max(lhs / (2 * l2[0] ** 2)))
    return Result(10, "a-priori energy inequality", margin <= 1.0,
                  f"max (||f||^2 + 2C* int ||f-c0 phi0||_Gamma^2) / (2||f0||^2) = {margin:.4f} (<= 1)")


def check_decay_rate(ctx):
    op = ctx.op400
    f0 = initial_data("exp-decay", op.grid, remove_c0=True)
    _, d = evolve(f0, op, ctx.solver)
    fit = decay_fit(d, (10.0, 200.0))
    min_f = float(np.min(ctx.conservation_run.column("min_f")))
    ok = -0.65 <= fit.slope <= -0.45 and min_f >= -1e-10
    return Result(11, "algebraic decay rate", ok,
                  f"slope {fit.slope:.4f} (r^2 {fit.r2:.6f}) in [-0.65, -0.45]; "
                  f"min f along non-negative run {min_f:.2e} (>= -1e-10)")


def check_no_uniform_decay(ctx):
    op = ctx.op(ctx.eps_grid.n, spec=ctx.eps_grid)
    table = experiment_no_uniform_decay(op, ctx.solver, [0.4, 0.2, 0.1, 0.05], ctx.workers)
    th = [h.t_half for h in table]
    ok = all(b > a for a, b in zip(th, th[1:])) and all(h.max_increase <= 1e-10 for h in table)
    return Result(12, "no uniform decay rate", ok,
                  "t_half for eps = 0.4, 0.2, 0.1, 0.05: " + ", ".join(f"{x:g}" for x in th)
                  + " (strictly increasing)")


def check_3d(ctx, L_dyn=2):
    op = ctx.op400
    grid = op.grid
    params = ctx.params
    gain, loss = radial_operator_3d(op, params)
    theta = grid.nodes * params.scale
    res = float(np.max(np.abs(gain @ theta - loss * theta)) / np.max(np.abs(loss * theta)))
    rng = np.random.default_rng(ctx.seed)
    ang8 = angular_grid(8)
    S, _ = band_limited_samples(rng, 8, ang8, grid, params)
    rt = float(np.max(np.abs(reconstruct(decompose(S, ang8, 8, params, grid), ang8) - S)))
    ang = angular_grid(L_dyn)
    S, _ = band_limited_samples(rng, L_dyn, ang, grid, params)
    ev = evolve_3d(decompose(S, ang, L_dyn, params, grid), op, ctx.solver)
    drift = float(np.max(np.abs(ev.energy - ev.energy[0])) / abs(ev.energy[0]))
    m = (ev.times >= 10) & (ev.times <= 200)
    slope = float(np.polyfit(np.log1p(ev.times[m]), np.log(ev.distance[m]), 1)[0])
    ok = res <= 1e-10 and drift <= 1e-10 and slope <= -0.45 and rt <= 1e-12
    return Result(13, "three-dimensional reduction", ok,
                  f"Theta residual {res:.1e} (<= 1e-10); 3-D energy drift {drift:.1e} (<= 1e-10); "
                  f"distance slope {slope:.4f} (<= -0.45, L_max={L_dyn}); "
                  f"round trip at L_max=8 {rt:.1e} (<= 1e-12)")


def check_w0_consistency(ctx):
    params = ctx.params
    lam = calibrate_lambda(params, 1.0, ctx.quad)
    worst = 0.0
    for r in np.geomspace(1e-2, 20.0, 9) * params.scale:
        m = bigM(float(r), params, ctx.quad)
        worst = max(worst, abs(lam * m.from_w0 - m.closed) / m.closed)
    def scaled_limit(k, power):
        return lam * bigM(k * params.scale, params, ctx.quad).from_w0 * math.sinh(k) ** 2 / k**power

    e0 = abs(scaled_limit(1e-3, 1) / (math.pi**4 / 60) - 1)
    e1 = abs(60 * scaled_limit(50.0, 5) - 1)
    ok = worst < 1e-3 and e0 < 0.01 and e1 < 0.02
    return Result(14, "consistency of W0 and M", ok,
                  f"lambda = {lam:.6f}; max rel mismatch {worst:.1e} (tol 1e-3); "
                  f"small-k limit err {e0:.1e} (tol 1e-2); large-k limit err {e1:.1e} (tol 2e-2)")


def check_hopital(ctx):
    worst, n, ok = 0.0, 0, True
    for t in (0.1, 1.0, 10.0, 100.0):
        for th in (0.0, 0.5, 1.0, 2.0):
            for rho in (0.01, 0.1, 1.0):
                a = HopitalArgs(t, th, rho)
                z, b = kernels.hopital_Z(a, ctx.quad), kernels.hopital_bound(a)
                ok &= z <= b
                worst = max(worst, z.mantissa / b.mantissa)
                n += 1
    return Result(15, "Hopital lemma bound", bool(ok),
                  f"Z <= bound at all {n} grid points; max Z/bound = {worst:.15f}")


CHECKS = [check_gamma_small, check_gamma_large, check_moments, check_kernel_bound,
          check_hs_norm, check_nullspace, check_form_positivity, check_spectral_gap,
          check_conservation, check_apriori, check_decay_rate, check_no_uniform_decay,
          check_3d, check_w0_consistency, check_hopital]


def run_one(ctx, check):
    """Run a check; an exception counts as a failure and is reported, not raised."""
    try:
        return check(ctx)
    except Exception as exc:
        num = CHECKS.index(check) + 1
        name = check.__name__.removeprefix("check_").replace("_", " ")
        return Result(num, name, False, f"error: {type(exc).__name__}: {exc}")


def run_all(ctx=None, report=None):
    ctx = ctx or Context()
    results = []
    for check in CHECKS:
        res = run_one(ctx, check)
        results.append(res)
        if report:
            report(res.line())
    return results
