"""
Relaxation to equilibrium
=========================

Evolve exp-decay data with Crank-Nicolson, check conservation, fit the
algebraic decay rate and show that concentrated data relax ever more slowly.
"""

import numpy as np

from phononlab.collision import GridSpec, assemble, build_grid
from phononlab.evolution import (SolverConfig, classify_initial_data, decay_fit, evolve,
                                 experiment_no_uniform_decay, initial_data)

op = assemble(build_grid())
cfg = SolverConfig(dt=1e-2, t_end=200.0)

f0 = initial_data("exp-decay", op.grid)
_, diag = evolve(f0, op, cfg)
e, c0 = diag.energy, diag.c0
print("energy drift", np.max(np.abs(e / e[0] - 1)), " c0 drift", np.max(np.abs(c0 / c0[0] - 1)))
print("smallest value along the run", diag.min_f.min())

g0 = initial_data("exp-decay", op.grid, remove_c0=True)
print(classify_initial_data(g0, op.grid))
_, diag = evolve(g0, op, cfg)
fit = decay_fit(diag, (10.0, 200.0))
print(f"dist_eq ~ (1+t)^{fit.slope:.3f}  (r^2 = {fit.r2:.5f})")

# bumps on (eps, 2 eps) need a finer grid near k = 0
eps_op = assemble(build_grid(GridSpec(panel_growth=1.25)))
for h in experiment_no_uniform_decay(eps_op, cfg, [0.4, 0.2, 0.1, 0.05]):
    print(f"eps = {h.eps:<5g} t_half = {h.t_half:g}")
