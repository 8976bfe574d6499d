"""Storage-retrieval kernel, its optimal modes, and lineshape optimization.

The memory is linear in the input signal, so A_out(tau) = int K(tau, tau')
A_in(tau') dtau'.  K is built column by column from solver runs with a
unit-area impulse at each input node; because the solver interpolates the
input linearly between nodes, the discrete kernel reproduces the solver for
any input sampled on the same grid.

The lineshape search follows a ladder of inputs that morphs the optimal
input mode of the starting lineshape into the Gaussian signal; at every
rung the spline node values of the lineshape are re-optimized with the
efficiency for that rung's input as the objective.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .lineshape import FrequencyGrid, Lineshape, normalize, sample
from .optimizer import nelder_mead
from .solver import (
    ControlParams,
    FieldState,
    MemoryParams,
    SimGrid,
    _march,
    control_field,
    coupling_weights,
    energy,
    gaussian_input,
    run_memory,
    simulate_retrieval,
)

log = logging.getLogger(__name__)

INPUT_WINDOW = (-60.0, 10.0)
OUTPUT_WINDOW = (-5.0, 70.0)
SPLINE_SPAN = 2.5
NODE_STEP = 0.05
NODE_STEP_FLOOR = 1e-3


class KernelError(ArithmeticError):
    """Numerical failure while building or decomposing a kernel."""


class RungFailure(RuntimeError):
    """A solver failure during one ladder rung."""

    def __init__(self, rung: int, cause: Exception):
        super().__init__(f"rung {rung}: {cause}")
        self.rung = rung


def kernel_grid(dt: float = 0.025, nz: int = 50, freq: FrequencyGrid | None = None,
                input_window=INPUT_WINDOW, output_window=OUTPUT_WINDOW) -> SimGrid:
    """Solver grid whose storage clock is the kernel's input window."""
    freq = FrequencyGrid.uniform() if freq is None else freq
    return SimGrid(nz, dt, input_window[0], input_window[1], output_window[0], output_window[1], freq)


@dataclass
class MemoryKernel:
    tau_out: np.ndarray
    tau_in: np.ndarray
    k: np.ndarray
    dt_in: float
    dt_out: float

    def apply(self, a_in) -> np.ndarray:
        """Output envelope for an input sampled on ``tau_in``."""
        return self.k @ np.asarray(a_in, dtype=complex) * self.dt_in

    def efficiency(self, a_in) -> float:
        a_in = np.asarray(a_in, dtype=complex)
        return energy(self.apply(a_in), self.dt_out) / energy(a_in, self.dt_in)

    def operator_norm(self) -> float:
        """Largest singular value of the quadrature-scaled operator."""
        return float(np.linalg.norm(self.k * math.sqrt(self.dt_in * self.dt_out), 2))

    def edge_ratio(self) -> float:
        """max |K| on the window boundary relative to max |K|."""
        mag = np.abs(self.k)
        edge = max(mag[0].max(), mag[-1].max(), mag[:, 0].max(), mag[:, -1].max())
        return float(edge / mag.max()) if mag.max() > 0 else 0.0


def _columns(mem, ctrl, lineshape, grid, indices):
    times = grid.storage_times
    om = control_field(ctrl, times, mem.tau_gamma)
    deltas, weights = coupling_weights(lineshape, grid.freq, mem.depth)
    dz = 1.0 / grid.nz
    cols = np.zeros((grid.output_times.size, len(indices)), dtype=complex)
    for c, k in enumerate(indices):
        # the medium is empty until the step leading into the impulse node
        s = max(k - 1, 0)
        a = np.zeros(times.size - s, dtype=complex)
        a[k - s] = 1.0 / grid.dt
        p = np.zeros((grid.nz, deltas.size), dtype=complex)
        b = np.zeros_like(p)
        if a.size > 1:
            _march(p, b, deltas, weights, mem, dz, grid.dt, a, om[s:], False)
        state = FieldState(times[s:], a, p, b, deltas, weights, dz, None, None)
        cols[:, c] = simulate_retrieval(state, mem, ctrl, grid).a
    return cols


def build_kernel(mem: MemoryParams, ctrl: ControlParams, lineshape: Lineshape,
                 grid: SimGrid | None = None, jobs: int = 1) -> MemoryKernel:
    """K(tau, tau') from one storage + retrieval run per input node.

    Column k is the output for an input equal to 1/dt on node k and zero
    elsewhere.  ``jobs > 1`` spreads the columns over worker processes.
    """
    grid = kernel_grid() if grid is None else grid
    n_in = grid.storage_times.size
    if mem.d == 0:
        return MemoryKernel(grid.output_times, grid.storage_times,
                            np.zeros((grid.output_times.size, n_in), dtype=complex), grid.dt, grid.dt)
    if jobs <= 1:
        k = _columns(mem, ctrl, lineshape, grid, range(n_in))
    else:
        chunks = np.array_split(np.arange(n_in), jobs * 4)
        with ProcessPoolExecutor(jobs) as pool:
            parts = pool.map(_columns, *zip(*[(mem, ctrl, lineshape, grid, list(c)) for c in chunks]))
            k = np.concatenate(list(parts), axis=1)
    if not np.all(np.isfinite(k)):
        raise KernelError("kernel has non-finite entries")
    return MemoryKernel(grid.output_times, grid.storage_times, k, grid.dt, grid.dt)


@dataclass
class SvdResult:
    singular_values: np.ndarray
    output_modes: np.ndarray
    input_modes: np.ndarray
    dt_in: float
    dt_out: float

    @property
    def optimal_efficiency(self) -> float:
        return float(self.singular_values[0] ** 2)

    @property
    def optimal_input(self) -> np.ndarray:
        return self.input_modes[:, 0]

    def reconstruct(self) -> np.ndarray:
        return (self.output_modes * self.singular_values) @ self.input_modes.conj().T


def svd_modes(kernel: MemoryKernel) -> SvdResult:
    """SVD of K dt_in sqrt(dt_out / dt_in), so lambda^2 is the efficiency of mode phi.

    Modes are returned with unit continuum norm, sum |psi|^2 dt = 1, and
    K = sum_l lambda_l psi_l phi_l^*.
    """
    scaled = kernel.k * math.sqrt(kernel.dt_in * kernel.dt_out)
    try:
        u, s, vh = np.linalg.svd(scaled, full_matrices=False)
    except np.linalg.LinAlgError as err:
        raise KernelError(f"SVD did not converge: {err}") from err
    return SvdResult(s, u / math.sqrt(kernel.dt_out), vh.conj().T / math.sqrt(kernel.dt_in),
                     kernel.dt_in, kernel.dt_out)


def _unit(envelope, dt):
    e = np.asarray(envelope, dtype=complex)
    norm = math.sqrt(energy(e, dt))
    if not norm > 0:
        raise ValueError("envelope has zero norm")
    return e / norm


def interpolation_ladder(opt_input, target, n_steps: int, dt: float = 1.0) -> list[np.ndarray]:
    """Rungs A^(n) = [(N - n) A_opt + (n - 1) A_target] / (N - 1), n = 1..N, unit norm.

    Both endpoints are normalized first, and the optimal mode is rotated to
    the global phase that best overlaps the target, so that the blend never
    passes through a cancellation.
    """
    if n_steps < 2:
        raise ValueError("the ladder needs at least 2 rungs")
    a = _unit(opt_input, dt)
    t = _unit(target, dt)
    overlap = np.vdot(a, t)
    if abs(overlap) > 0:
        a = a * (overlap / abs(overlap))
    n_last = n_steps - 1
    return [_unit(((n_last - n) * a + n * t) / n_last, dt) for n in range(n_steps)]


@dataclass(frozen=True)
class SplineVector:
    """Lineshape values on fixed, uniformly spaced spline nodes."""

    positions: np.ndarray
    values: np.ndarray

    @classmethod
    def uniform(cls, values, span: float = SPLINE_SPAN) -> "SplineVector":
        values = np.asarray(values, dtype=float)
        return cls(np.linspace(-span, span, values.size), values)

    @classmethod
    def from_lineshape(cls, lineshape: Lineshape, n_nodes: int = 51, span: float = SPLINE_SPAN) -> "SplineVector":
        pos = np.linspace(-span, span, n_nodes)
        return cls(pos, np.asarray(lineshape(pos), dtype=float))

    def lineshape(self, grid: FrequencyGrid) -> Lineshape:
        """Clamped at zero and normalized on ``grid``."""
        return normalize(Lineshape.spline(self.positions, np.maximum(self.values, 0.0)), grid)

    def normalized(self, grid: FrequencyGrid) -> "SplineVector":
        return SplineVector(self.positions, self.lineshape(grid).node_arrays()[1])


def best_fit_rectangle(lineshape: Lineshape, grid: FrequencyGrid) -> tuple[float, float]:
    """(half width, height) of the centred rectangle closest in least squares on ``grid``.

    For each candidate half width the optimal height is the mean of f over
    the rectangle; the width is scanned over every grid node.
    """
    f = sample(lineshape, grid)
    w = grid.weights
    x = np.abs(grid.nodes)
    best = (0.0, 0.0, float(np.sum(w * f**2)))
    for h in np.unique(x[x > 0]):
        inside = x <= h
        area = float(np.sum(w[inside]))
        height = float(np.sum(w[inside] * f[inside])) / area
        resid = float(np.sum(w * (f - np.where(inside, height, 0.0)) ** 2))
        if resid < best[2]:
            best = (float(h), height, resid)
    return best[0], best[1]


def rectangularity(lineshape: Lineshape, grid: FrequencyGrid) -> float:
    """L1 distance between the unit-norm profile and its best-fit rectangle."""
    f = sample(normalize(lineshape, grid), grid)
    h, height = best_fit_rectangle(normalize(lineshape, grid), grid)
    rect = np.where(np.abs(grid.nodes) <= h, height, 0.0)
    return float(np.sum(grid.weights * np.abs(f - rect)))


@dataclass(frozen=True)
class LadderConfig:
    rungs: int = 21
    nodes: int = 51
    span: float = SPLINE_SPAN
    max_evals: int = 2000
    f_tol: float = 1e-5
    x_tol: float = 1e-4
    dt: float = 0.025
    nz: int = 50

    @classmethod
    def fast(cls) -> "LadderConfig":
        """7 rungs, 21 nodes and a coarser solver grid."""
        return cls(rungs=7, nodes=21, max_evals=400, dt=0.05, nz=30)

    def grid(self, freq: FrequencyGrid | None = None) -> SimGrid:
        return kernel_grid(self.dt, self.nz, freq)


@dataclass
class LadderResult:
    spline: SplineVector
    lineshape: Lineshape
    trace: list[dict] = field(default_factory=list)

    @property
    def final_efficiency(self) -> float:
        return self.trace[-1]["eta"]


def _trim(envelope: np.ndarray, rel: float = 1e-12) -> int:
    # first input node carrying signal; the medium is empty before it
    mag = np.abs(envelope)
    return int(np.argmax(mag > rel * mag.max()))


def input_efficiency(mem, ctrl, lineshape, grid: SimGrid, a_in) -> float:
    """Solver efficiency for ``a_in`` on ``grid.storage_times``, starting at its first nonzero sample."""
    a_in = np.asarray(a_in, dtype=complex)
    k = max(_trim(a_in) - 1, 0)
    t_start = grid.t_min + k * grid.dt
    sub = SimGrid(grid.nz, grid.dt, t_start, grid.t_store, grid.t_out_min, grid.t_out_max, grid.freq)
    return run_memory(mem, ctrl, lineshape, sub, a_in[k:k + sub.storage_times.size]).efficiency


def optimize_lineshape(mem: MemoryParams, ctrl: ControlParams, start: Lineshape,
                       config: LadderConfig | None = None, jobs: int = 1) -> LadderResult:
    """Walk the input ladder, re-optimizing the spline node values at every rung.

    Rung 1 is the optimal input of ``start``; rung N is the Gaussian signal.
    Each rung runs Nelder-Mead on the node values (clamped at zero and
    renormalized inside the objective), warm-started from the previous rung.
    The trace holds, per rung, the efficiency before and after.
    """
    config = LadderConfig() if config is None else config
    grid = config.grid()
    freq = grid.freq
    kernel = build_kernel(mem, ctrl, start, grid, jobs=jobs)
    modes = svd_modes(kernel)
    target = gaussian_input(grid, mem.tau_gamma)
    ladder = interpolation_ladder(modes.optimal_input, target, config.rungs, grid.dt)

    z = SplineVector.from_lineshape(normalize(start, freq), config.nodes, config.span).normalized(freq)
    trace = [{"rung": 1, "eta_start": modes.optimal_efficiency, "eta": modes.optimal_efficiency,
              "evals": 0, "rectangularity": rectangularity(z.lineshape(freq), freq)}]
    for n in range(1, config.rungs):
        a_in = ladder[n]

        def objective(values):
            ls = SplineVector(z.positions, values).lineshape(freq)
            return input_efficiency(mem, ctrl, ls, grid, a_in)

        try:
            eta0 = objective(z.values)
            steps = NODE_STEP * np.abs(z.values) + NODE_STEP_FLOOR
            res = nelder_mead(objective, z.values, steps, max_evals=config.max_evals,
                              f_tol=config.f_tol, x_tol=config.x_tol,
                              project=lambda v: np.maximum(v, 0.0))
        except (ArithmeticError, ValueError) as err:
            raise RungFailure(n + 1, err) from err
        if res.value >= eta0:
            z = SplineVector(z.positions, res.x).normalized(freq)
        trace.append({"rung": n + 1, "eta_start": eta0, "eta": max(res.value, eta0), "evals": res.n_evals,
                      "rectangularity": rectangularity(z.lineshape(freq), freq)})
        log.info("rung %d: eta %.5f -> %.5f (%d evals)", n + 1, eta0, trace[-1]["eta"], res.n_evals)
    return LadderResult(z, z.lineshape(freq), trace)


def random_profile(seed: int, n_nodes: int = 51, span: float = SPLINE_SPAN,
                   grid: FrequencyGrid | None = None) -> Lineshape:
    """Seeded positive random spline, zero on the outermost nodes."""
    rng = np.random.default_rng(seed)
    values = rng.uniform(0.1, 1.0, n_nodes)
    values[[0, -1]] = 0.0
    grid = FrequencyGrid.uniform() if grid is None else grid
    return SplineVector.uniform(values, span).lineshape(grid)

