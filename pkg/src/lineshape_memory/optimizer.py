"""Nelder-Mead maximization of memory efficiency over the Gaussian control.

The simplex search is implemented here (reflection 1, expansion 2,
contraction 1/2, shrink 1/2) so that trajectories are reproducible and an
optional projection can be applied to every trial point before it is
evaluated.  Control-power limits use that hook: the pulse area is pulled down
onto the bound instead of being penalized.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .lineshape import Lineshape
from .solver import ControlParams, MemoryParams, SimGrid, run_memory

log = logging.getLogger(__name__)

# theta in rad, delay and duration in units of tau_FWHM
CONTROL_BOX = np.array([[0.0, 12.0 * math.pi], [-4.0, 4.0], [0.05, 8.0]])
DEFAULT_START = ControlParams(2.0 * math.pi, 0.0, 1.0)
LOW_CONFIDENCE_EFFICIENCY = 1e-4


class InvalidStartError(ValueError):
    """The starting point lies outside the search box."""


@dataclass(frozen=True)
class OptimizerConfig:
    initial_simplex_scale: tuple[float, ...] = (0.1, 0.1, 0.1)
    max_evals: int = 150
    f_tol: float = 1e-4
    x_tol: float = 1e-3
    restarts: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.max_evals < 50:
            raise ValueError("max_evals must be >= 50")
        if self.f_tol > 1e-3:
            raise ValueError("f_tol must be <= 1e-3")


POWER_CONVENTIONS = ("peak", "verbatim")


@dataclass(frozen=True)
class PowerConstraint:
    """Upper limit on max|Omega|^2, in units of gamma_i^2 (``inf`` = unconstrained).

    ``convention="peak"`` bounds the peak Rabi frequency of the simulated
    control, Omega_0^2 <= max_power.  ``"verbatim"`` applies the pulse-area
    bound theta <= tau_ctrl sqrt(max_power / (8 pi ln 2)) literally, which for
    this solver's Omega is the same as (2 pi Omega_0)^2 <= max_power.
    """

    max_power: float = math.inf
    convention: str = "verbatim"

    def __post_init__(self):
        if not self.max_power > 0:
            raise ValueError("max_power must be > 0")
        if self.convention not in POWER_CONVENTIONS:
            raise ValueError(f"convention must be one of {POWER_CONVENTIONS}")

    @property
    def active(self) -> bool:
        return math.isfinite(self.max_power)

    def theta_bound(self, duration: float, tau_gamma: float) -> float:
        """Largest pulse area allowed for a control of FWHM ``duration * tau_gamma``."""
        factor = 8.0 * math.pi * math.log(2.0)
        if self.convention == "peak":
            factor /= 4.0 * math.pi**2
        return duration * tau_gamma * math.sqrt(self.max_power / factor)

    def power(self, ctrl: ControlParams, tau_gamma: float) -> float:
        """The quantity bounded by ``max_power`` for this convention."""
        p = constraint_power(ctrl, tau_gamma)
        return p / (4.0 * math.pi**2) if self.convention == "peak" else p

    def project(self, ctrl: ControlParams, tau_gamma: float) -> ControlParams:
        if not self.active:
            return ctrl
        bound = self.theta_bound(ctrl.duration, tau_gamma)
        if ctrl.theta <= bound:
            return ctrl
        return ControlParams(bound, ctrl.delay, ctrl.duration)

    def satisfied(self, ctrl: ControlParams, tau_gamma: float) -> bool:
        return not self.active or ctrl.theta <= self.theta_bound(ctrl.duration, tau_gamma) * (1 + 1e-12)


def constraint_power(ctrl: ControlParams, tau_gamma: float) -> float:
    """8 pi ln2 (theta / tau_ctrl)^2, the power measure of the literal theta bound.

    Equal to (2 pi Omega_0)^2.
    """
    tc = ctrl.duration * tau_gamma
    return 8.0 * math.pi * math.log(2.0) * (ctrl.theta / tc) ** 2


@dataclass
class NelderMeadResult:
    x: np.ndarray
    value: float
    n_evals: int
    converged: bool
    best_history: list[float] = field(default_factory=list)


def _inside(x: np.ndarray, bounds: np.ndarray | None) -> bool:
    if bounds is None:
        return True
    return bool(np.all(x >= bounds[:, 0]) and np.all(x <= bounds[:, 1]))


def nelder_mead(
    objective: Callable[[np.ndarray], float],
    start: Sequence[float],
    steps: Sequence[float],
    *,
    bounds: np.ndarray | None = None,
    outside_value: float = 0.0,
    max_evals: int = 200,
    f_tol: float = 1e-4,
    x_tol: float = 1e-3,
    project: Callable[[np.ndarray], np.ndarray] | None = None,
) -> NelderMeadResult:
    """Maximize ``objective`` with the Nelder-Mead simplex.

    Points outside ``bounds`` (shape (n, 2)) score ``outside_value`` without
    calling the objective.  ``project`` maps each trial point before it is
    evaluated; the simplex keeps the raw points.  Stops when both the spread
    of simplex values is below ``f_tol`` and the simplex diameter is below
    ``x_tol``, or after ``max_evals`` evaluations.  ``best_history`` records
    the best value after every evaluation and is nondecreasing.
    """
    x0 = np.asarray(start, dtype=float)
    if not _inside(x0, bounds):
        raise InvalidStartError(f"start {x0} outside search box")
    n = x0.size
    history: list[float] = []
    best = -math.inf
    count = 0

    def f(x):
        nonlocal best, count
        count += 1
        if not _inside(x, bounds):
            val = outside_value
        else:
            val = float(objective(project(x) if project is not None else x))
            if not math.isfinite(val):
                val = outside_value
        best = max(best, val)
        history.append(best)
        return val

    simplex = [x0]
    for i in range(n):
        v = x0.copy()
        v[i] += steps[i]
        if bounds is not None and v[i] > bounds[i, 1]:
            v[i] = x0[i] - steps[i]
        simplex.append(v)
    simplex = np.array(simplex)
    values = np.array([f(v) for v in simplex])
    converged = False

    while count < max_evals:
        order = np.argsort(-values, kind="stable")
        simplex, values = simplex[order], values[order]
        diameter = np.max(np.abs(simplex[1:] - simplex[0]))
        if values[0] - values[-1] <= f_tol and diameter <= x_tol:
            converged = True
            break
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + (centroid - worst)
        fr = f(xr)
        if fr > values[0]:
            xe = centroid + 2.0 * (centroid - worst)
            fe = f(xe)
            if fe > fr:
                simplex[-1], values[-1] = xe, fe
            else:
                simplex[-1], values[-1] = xr, fr
            continue
        if fr > values[-2]:
            simplex[-1], values[-1] = xr, fr
            continue
        if fr > values[-1]:
            xc = centroid + 0.5 * (xr - centroid)
            fc = f(xc)
            if fc >= fr:
                simplex[-1], values[-1] = xc, fc
                continue
        else:
            xc = centroid + 0.5 * (worst - centroid)
            fc = f(xc)
            if fc > values[-1]:
                simplex[-1], values[-1] = xc, fc
                continue
        # shrink toward the best vertex
        for i in range(1, n + 1):
            simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0])
            values[i] = f(simplex[i])

    i = int(np.argmax(values))
    x_best = simplex[i]
    if project is not None:
        x_best = project(x_best)
    return NelderMeadResult(x_best, float(values[i]), count, converged, history)


def maximize_with_restarts(
    objective: Callable[[np.ndarray], float],
    start: Sequence[float],
    config: OptimizerConfig,
    bounds: np.ndarray,
    project: Callable[[np.ndarray], np.ndarray] | None = None,
) -> NelderMeadResult:
    """Nelder-Mead from ``start``, then ``config.restarts`` randomized re-seeds.

    Each re-seed starts from the best point so far, displaced by a uniform
    random offset of up to one simplex step per coordinate and clipped into
    the box, with a fresh simplex.  The best result over all runs is kept.
    """
    rng = np.random.default_rng(config.seed)
    widths = bounds[:, 1] - bounds[:, 0]
    steps = np.asarray(config.initial_simplex_scale, dtype=float) * widths
    best = nelder_mead(objective, start, steps, bounds=bounds, max_evals=config.max_evals,
                       f_tol=config.f_tol, x_tol=config.x_tol, project=project)
    total, history = best.n_evals, list(best.best_history)
    for _ in range(config.restarts):
        seed_point = np.clip(best.x + rng.uniform(-1.0, 1.0, size=best.x.size) * steps,
                             bounds[:, 0], bounds[:, 1])
        trial = nelder_mead(objective, seed_point, steps, bounds=bounds, max_evals=config.max_evals,
                            f_tol=config.f_tol, x_tol=config.x_tol, project=project)
        total += trial.n_evals
        running = max(history[-1], trial.best_history[0]) if history else trial.best_history[0]
        history.extend(max(running, h) for h in trial.best_history)
        if trial.value > best.value:
            best = trial
    return NelderMeadResult(best.x, best.value, total, best.converged, history)


@dataclass
class OptimizationResult:
    mem: MemoryParams
    lineshape: Lineshape
    constraint: PowerConstraint
    control: ControlParams
    efficiency: float
    n_evals: int
    low_confidence: bool
    search_efficiency: float

    @property
    def omega0_sq(self) -> float:
        return self.control.peak_rabi(self.mem.tau_gamma) ** 2

    @property
    def achieved_power(self) -> float:
        """Power of the optimum in the constraint's own convention."""
        return self.constraint.power(self.control, self.mem.tau_gamma)

    def row(self) -> dict:
        return {
            "d": self.mem.d,
            "tau_gamma": self.mem.tau_gamma,
            "lineshape": self.lineshape.kind.value,
            "eta": self.efficiency,
            "theta": self.control.theta,
            "delay": self.control.delay,
            "duration": self.control.duration,
            "omega0_sq": self.omega0_sq,
        }


def search_grid(mem: MemoryParams, ctrl: ControlParams, lineshape: Lineshape) -> SimGrid:
    """Grid used inside the optimizer loop: default resolution, shorter output window.

    The retrieved pulse has left the medium long before 30 / gamma_i (30
    tau_FWHM for long pulses) apart from a weak free-induction tail of order
    1e-4 in efficiency.
    """
    return SimGrid.auto(mem, ctrl, lineshape, nz=40, output_span=30.0 * max(1.0, mem.tau_gamma))


def optimize_control(
    mem: MemoryParams,
    lineshape: Lineshape,
    constraint: PowerConstraint | None = None,
    config: OptimizerConfig | None = None,
    start: ControlParams | None = None,
    *,
    grid_factory: Callable[[MemoryParams, ControlParams, Lineshape], SimGrid] = search_grid,
    final_grid_factory: Callable[[MemoryParams, ControlParams, Lineshape], SimGrid] | None = None,
) -> OptimizationResult:
    """Maximize retrieved efficiency over (theta, delay, duration).

    The search runs on ``grid_factory`` grids; the reported efficiency is
    recomputed on ``final_grid_factory`` (the solver's default grid unless
    given).
    """
    constraint = PowerConstraint() if constraint is None else constraint
    config = OptimizerConfig() if config is None else config
    start = DEFAULT_START if start is None else start
    tg = mem.tau_gamma

    def project(x):
        c = constraint.project(ControlParams.from_array(x), tg)
        return c.as_array()

    def objective(x):
        ctrl = ControlParams.from_array(x)
        if mem.d == 0 or ctrl.theta == 0:
            return 0.0
        return run_memory(mem, ctrl, lineshape, grid_factory(mem, ctrl, lineshape)).efficiency

    x0 = np.clip(start.as_array(), CONTROL_BOX[:, 0], CONTROL_BOX[:, 1])
    if not np.allclose(x0, start.as_array()):
        raise InvalidStartError(f"start {start} outside the control box")
    res = maximize_with_restarts(objective, x0, config, CONTROL_BOX, project)
    ctrl = ControlParams.from_array(res.x)
    if mem.d == 0 or ctrl.theta == 0:
        eta = 0.0
    else:
        final = final_grid_factory or (lambda m, c, l: SimGrid.auto(m, c, l))
        eta = run_memory(mem, ctrl, lineshape, final(mem, ctrl, lineshape)).efficiency
    low = res.value < LOW_CONFIDENCE_EFFICIENCY
    if low:
        log.warning("optimization at %s found no efficiency above %g", mem, LOW_CONFIDENCE_EFFICIENCY)
    return OptimizationResult(mem, lineshape, constraint, ctrl, eta, res.n_evals, low, res.value)


def sweep(
    mems: Sequence[MemoryParams],
    lineshapes: Sequence[Lineshape],
    constraint: PowerConstraint | None = None,
    config: OptimizerConfig | None = None,
    start: ControlParams | None = None,
    **kwargs,
) -> list[OptimizationResult]:
    """Optimize every (memory point, lineshape) pair.

    Points are visited in the given order per lineshape, each warm-started
    from the previous point's optimum.
    """
    if not mems or not lineshapes:
        raise ValueError("sweep needs at least one memory point and one lineshape")
    results = []
    for ls in lineshapes:
        seed_ctrl = start
        for mem in mems:
            res = optimize_control(mem, ls, constraint, config, seed_ctrl, **kwargs)
            results.append(res)
            if not res.low_confidence:
                seed_ctrl = res.control
    return results
