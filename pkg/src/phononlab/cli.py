"""Command-line front end: ``phononlab <command> [--config FILE] [--out DIR] [--seed N]``.

Every command writes its resolved configuration to ``config.json`` in the output
directory, so a run can be repeated byte for byte.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
from scipy import linalg

from . import acceptance, kernels
from .collision import (DegenerateGammaError, GammaMode, InvalidSpecError, SymmetryError,
                        assemble, build_grid, c0_functional, nullspace_residual, spectral_gap,
                        symmetrize)
from .config import ConfigError, load_config
from .evolution import (FitError, GridResolutionError, NumericalError, classify_initial_data,
                        decay_fit, evolve, experiment_no_uniform_decay, initial_data)
from .spherical import (angular_grid, band_limited_samples, decompose, evolve_3d,
                        mode_list)

log = logging.getLogger("phononlab")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 2, 3, 4

NUMERICAL_ERRORS = (NumericalError, FitError, GridResolutionError, kernels.QuadratureError,
                    kernels.DomainError, SymmetryError, DegenerateGammaError,
                    InvalidSpecError, OverflowError, linalg.LinAlgError, RuntimeError)


def _fmt(x):
    return repr(float(x))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) if isinstance(v, float) else v
                        for v in row])


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _operator(cfg, spec=None):
    grid = build_grid(spec or cfg.grid)
    return assemble(grid, cfg.quadrature, cfg.gamma_mode, cfg.experiment.workers)


def _initial(cfg, grid, remove_c0_default):
    exp = cfg.experiment
    remove = remove_c0_default if exp.remove_c0 is None else exp.remove_c0
    if exp.initial_csv is None:
        return initial_data(exp.preset, grid, remove_c0=remove, **exp.params), exp.preset
    try:
        data = np.loadtxt(exp.initial_csv, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read initial data {exp.initial_csv}: {exc}") from exc
    if data.shape[1] != 2 or np.any(np.diff(data[:, 0]) <= 0):
        raise ConfigError("initial CSV needs increasing k and f0 columns")
    f = np.interp(grid.nodes, data[:, 0], data[:, 1], right=0.0)
    if remove:
        f = f - c0_functional(f, grid) * grid.phi0
    return f, str(exp.initial_csv)


# --- commands ---------------------------------------------------------------

def cmd_kernels(cfg, out):
    q = cfg.quadrature
    ks = np.geomspace(*cfg.experiment.kernel_range, cfg.experiment.kernel_points)
    rows = [(float(k), float(kernels.phi(k)), float(kernels.phi0(k)),
             float(kernels.gamma(k, q)), kernels.row_norm_sq(k, q),
             float(kernels.row_norm_bound(k))) for k in ks]
    _write_csv(out / "kernels.csv", ["k", "phi", "phi0", "gamma", "row_norm", "bound_rhs"], rows)
    study = []
    for T in cfg.experiment.tail_study:
        c = kernels.hs_norm_C0(kernels.QuadratureConfig(q.abs_tol, q.rel_tol, T, q.max_panels))
        study.append({"tail_cutoff": T, "C0": c.value, "tail_estimate": c.tail_estimate})
    restricted = kernels.hs_norm_C0(q, lower=1.0)
    best = study[-1]["C0"]
    _write_json(out / "c0_norm.json", {
        "C0": best,
        "convergence": study,
        "relative_change_last_doubling": abs(study[-1]["C0"] / study[-2]["C0"] - 1)
        if len(study) > 1 else None,
        "C0_restricted_to_k_gt_1": restricted.value,
    })
    return EXIT_OK


SPECTRUM_HEAD = 10


def cmd_spectrum(cfg, out):
    rows = []
    for mode in (GammaMode.KERNEL_CONSISTENT, GammaMode.QUADRATURE):
        for n in cfg.experiment.refinement:
            spec = acceptance.ladder_spec(cfg.grid, n)
            grid = build_grid(spec)
            op = assemble(grid, cfg.quadrature, mode, cfg.experiment.workers)
            gap = spectral_gap(symmetrize(op), head=SPECTRUM_HEAD)
            head = list(gap.spectrum_head) + [float("nan")] * (SPECTRUM_HEAD - gap.spectrum_head.size)
            rows.append([mode.value, n, spec.k_min, spec.k_max, spec.panel_growth,
                         spec.nodes_per_panel, gap.c_star, nullspace_residual(op)]
                        + [float(v) for v in head])
            log.info("%s N=%d: C*=%.6g", mode.value, n, gap.c_star)
    header = ["gamma_mode", "n", "k_min", "k_max", "panel_growth", "nodes_per_panel",
              "c_star", "nullspace_residual"] + [f"lambda_{i + 1}" for i in range(SPECTRUM_HEAD)]
    _write_csv(out / "spectrum.csv", header, rows)
    return EXIT_OK


def _write_state(path, grid, f):
    _write_csv(path, ["k", "weight", "f"], zip(grid.nodes.tolist(), grid.weights.tolist(),
                                                 np.asarray(f, dtype=float).tolist()))


def cmd_evolve(cfg, out):
    op = _operator(cfg)
    f0, _ = _initial(cfg, op.grid, remove_c0_default=False)
    state, diag = evolve(f0, op, cfg.solver)
    diag.to_csv(out / "diagnostics.csv")
    _write_state(out / "final_state.csv", op.grid, state.f)
    return EXIT_OK


def cmd_decay_study(cfg, out):
    exp = cfg.experiment
    op = _operator(cfg)
    f0, label = _initial(cfg, op.grid, remove_c0_default=True)
    report = classify_initial_data(f0, op.grid)
    _, diag = evolve(f0, op, cfg.solver)
    diag.to_csv(out / "diagnostics.csv")
    fit = decay_fit(diag, exp.window)
    eps_op = _operator(cfg, exp.eps_grid)
    table = experiment_no_uniform_decay(eps_op, cfg.solver, exp.eps_list, exp.workers)
    _write_csv(out / "eps_t_half.csv", ["eps", "t_half"], [(h.eps, h.t_half) for h in table])
    _write_json(out / "summary.json", {
        "initial_data": label,
        "condition": report.condition_met.value if report.condition_met else None,
        "a_estimate": report.a_estimate,
        "slope": fit.slope,
        "r2": fit.r2,
        "intercept": fit.intercept,
        "n_rows": fit.n_rows,
        "window": list(fit.window),
        "t_half_increasing": all(b.t_half > a.t_half for a, b in zip(table, table[1:])),
    })
    return EXIT_OK


def cmd_3d(cfg, out):
    op = _operator(cfg)
    L = cfg.experiment.L_max
    ang = angular_grid(L)
    rng = np.random.default_rng(cfg.seed)
    samples, _ = band_limited_samples(rng, L, ang, op.grid, cfg.physics)
    field0 = decompose(samples, ang, L, cfg.physics, op.grid)
    ev = evolve_3d(field0, op, cfg.solver)
    (out / "field0.json").write_text(field0.to_json() + "\n")
    (out / "theta.json").write_text(ev.theta.to_json() + "\n")
    (out / "field_final.json").write_text(ev.final.to_json() + "\n")
    with open(out / "mode_diagnostics.csv", "w", newline="") as fh:
        for i, (ell, m) in enumerate(mode_list(L)):
            text = ev.mode_diagnostics[(ell, m)].to_csv(prefix={"ell": ell, "m": m})
            fh.write(text if i == 0 else text.split("\n", 1)[1])
    _write_csv(out / "aggregate.csv", ["t", "distance", "energy", "mass"],
               zip(ev.times.tolist(), ev.distance.tolist(), ev.energy.tolist(), ev.mass.tolist()))
    window = cfg.experiment.window
    mask = (ev.times >= window[0]) & (ev.times <= window[1])
    slope = (float(np.polyfit(np.log1p(ev.times[mask]), np.log(ev.distance[mask]), 1)[0])
             if mask.sum() >= 2 else None)
    e = ev.energy
    _write_json(out / "summary.json", {
        "L_max": L,
        "energy_drift": float(np.max(np.abs(e - e[0])) / abs(e[0])) if e[0] else None,
        "distance_slope": slope,
        "window": list(window),
        "mass_initial": float(ev.mass[0]),
        "mass_final": float(ev.mass[-1]),
    })
    return EXIT_OK


def cmd_verify(cfg, out):
    ctx = acceptance.Context(seed=cfg.seed, grid=cfg.grid, quad=cfg.quadrature,
                             solver=cfg.solver, eps_grid=cfg.experiment.eps_grid,
                             params=cfg.physics, workers=cfg.experiment.workers)
    results = acceptance.run_all(ctx, report=print)
    _write_csv(out / "verify.csv", ["criterion", "name", "passed", "detail"],
               [(r.number, r.name, str(r.passed).lower(), r.detail) for r in results])
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed"
          + (f"; failed: {failed}" if failed else ""))
    return EXIT_ACCEPTANCE if failed else EXIT_OK


COMMANDS = {
    "kernels": cmd_kernels,
    "spectrum": cmd_spectrum,
    "evolve": cmd_evolve,
    "decay-study": cmd_decay_study,
    "3d": cmd_3d,
    "verify": cmd_verify,
}


def build_parser():
    p = argparse.ArgumentParser(prog="phononlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON run configuration")
        s.add_argument("--out", help="output directory (overrides the config)")
        s.add_argument("--seed", type=int, help="RNG seed (overrides the config)")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            cfg = cfg.replace(seed=args.seed)
        if args.out is not None:
            cfg = cfg.replace(out=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"cannot create {out}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    (out / "config.json").write_text(cfg.to_json() + "\n")
    t0 = time.perf_counter()
    try:
        code = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    log.info("%s finished in %.1f s", args.command, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
