"""The memory as a linear map, and its best input.

Storage followed by retrieval is linear in the signal, so it is fully
described by a kernel K(tau, tau').  Its largest singular value squared is
the best efficiency any input shape can reach.  A shortened window keeps
this demo to a few seconds; ``lml kernel`` builds the full one.
"""

import math

import numpy as np

from lineshape_memory import ControlParams, Lineshape, MemoryParams, build_kernel, svd_modes
from lineshape_memory.kernelopt import kernel_grid
from lineshape_memory.solver import gaussian_input

mem = MemoryParams(5.0, 1.0)
ctrl = ControlParams(2.75 * math.pi, -0.25, 1.25)
grid = kernel_grid(dt=0.05, nz=20, input_window=(-6.0, 4.0), output_window=(-5.0, 20.0))

kernel = build_kernel(mem, ctrl, Lineshape.rectangular(), grid)
modes = svd_modes(kernel)

gauss = gaussian_input(grid, mem.tau_gamma)
print(f"Gaussian input efficiency: {kernel.efficiency(gauss):.4f}")
print("top singular values squared:", np.round(modes.singular_values[:4] ** 2, 4))

# where the optimal input sits relative to the Gaussian
phi = np.abs(modes.optimal_input) ** 2
print(f"optimal input centroid: {np.sum(kernel.tau_in * phi) / np.sum(phi):+.3f} / gamma_i")
