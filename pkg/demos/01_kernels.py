"""
Collision frequency and scattering kernel
=========================================

Evaluate phi, Gamma and the kernel rows, and compare Gamma with its two
power-law regimes.
"""

import math

import numpy as np

from phononlab import kernels

# phi(k) = k^2 / sinh k is smooth at 0 and decays like 2 k^2 e^-k
ks = np.array([0.0, 1e-5, 0.5, 1.0, 5.0, 40.0])
print("phi :", kernels.phi(ks))

# Gamma grows linearly for small k and like k^5 for large k
for k in (1e-4, 1e-3, 1e-2):
    print(f"Gamma(k)/k   at k={k:<6g} {kernels.gamma(k) / k:.7f}   (pi^4/15 = {math.pi**4 / 15:.7f})")
for k in (20.0, 50.0, 100.0):
    print(f"Gamma(k)/k^5 at k={k:<6g} {kernels.gamma(k) / k**5:.7f}   (1/15 = {1 / 15:.7f})")

# the kernel is symmetric and vanishes on the axes
print("K(1, 1) =", kernels.kernel_K(1.0, 1.0), " K(2, 0) =", kernels.kernel_K(2.0, 0.0))

# squared row norms stay below their polynomial bound
for k in (0.1, 1.0, 10.0):
    print(f"||K({k:g}, .)||^2 = {kernels.row_norm_sq(k):.6g}  <  {kernels.row_norm_bound(k):.6g}")
