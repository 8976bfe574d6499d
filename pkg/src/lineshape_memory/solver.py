"""Storage and backward retrieval in an inhomogeneously broadened Lambda ensemble.

Dimensionless units throughout: time in 1/gamma_i, frequency and Rabi
frequency in gamma_i, length in units of the medium length.  The equations
integrated are

    dA/dz       = -sqrt(d) * P_tot,            P_tot = sum_j w_j P_j
    dP_j/dtau   = -(gamma - i delta_j) P_j + sqrt(d) w_j A - i Omega/2 B_j
    dB_j/dtau   = -gamma_B B_j - i Omega/2 P_j

with per-class coupling ``w_j = sqrt(f(delta_j) * ddelta_j)`` so that the
discrete sums approximate the integrals over the normalized lineshape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .lineshape import FrequencyGrid, Lineshape, Kind, normalize, sample

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))

# classes whose spectral weight is below this fraction of the peak never
# couple measurably (their contribution to P_tot scales with the weight)
INERT_WEIGHT = 1e-14

# Ralston amplifies an undamped oscillation by (1 + x**4/4)**0.5 per step,
# x = frequency * dt; the detuning rotation is exact, so only the control
# coupling Omega/2 is bounded this way
RABI_STEP = 0.2

# the drive sqrt(d) w_j A enters the co-rotating frame with phase delta_j*t;
# the stage quadrature needs dt * max|delta_j| below this
DETUNING_STEP = 0.5

# the signal is sampled with at least this many points per tau_FWHM
POINTS_PER_PULSE = 40

# a uniform class grid of spacing ddelta is a frequency comb: it rephases
# (a spurious echo) 2 pi / ddelta after excitation; storage plus retrieval
# must end well before that
REVIVAL_MARGIN = 0.9


class InstabilityError(FloatingPointError):
    """The time march produced non-finite values."""


class DegenerateInputError(ValueError):
    """The input envelope carries no energy."""


DEPTH_CONVENTIONS = ("area", "peak")


@dataclass(frozen=True)
class MemoryParams:
    """Optical depth and pulse-duration--linewidth product tau_FWHM * gamma_i.

    ``depth`` picks what ``d`` means for a non-rectangular profile.  With
    "area" the coupling is sqrt(d) sqrt(f) for the unit-area f, so every
    profile holds the same number of atoms.  With "peak" the profile is
    rescaled so that its maximum matches the unit-area rectangle of the same
    half width (1/2), i.e. ``d`` fixes the peak absorption instead.  Both
    coincide for the rectangle.
    """

    d: float
    tau_gamma: float
    gamma: float = 0.0
    gamma_b: float = 0.0
    depth: str = "area"

    def __post_init__(self):
        if not self.d >= 0:
            raise ValueError(f"optical depth must be >= 0, got {self.d}")
        if not self.tau_gamma > 0:
            raise ValueError(f"tau_gamma must be > 0, got {self.tau_gamma}")
        if self.gamma < 0 or self.gamma_b < 0:
            raise ValueError("decay rates must be >= 0")
        if self.depth not in DEPTH_CONVENTIONS:
            raise ValueError(f"depth convention must be one of {DEPTH_CONVENTIONS}")


@dataclass(frozen=True)
class ControlParams:
    """Gaussian control pulse: area, delay and FWHM duration.

    ``delay`` and ``duration`` are in units of the signal tau_FWHM.
    """

    theta: float
    delay: float
    duration: float

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError(f"control duration must be > 0, got {self.duration}")
        if not self.theta >= 0:
            raise ValueError(f"pulse area must be >= 0, got {self.theta}")

    def as_array(self) -> np.ndarray:
        return np.array([self.theta, self.delay, self.duration])

    @classmethod
    def from_array(cls, x) -> "ControlParams":
        return cls(float(x[0]), float(x[1]), float(x[2]))

    def sigma(self, tau_gamma: float) -> float:
        """Gaussian sigma of the control in units of 1/gamma_i."""
        return self.duration * tau_gamma / FWHM_PER_SIGMA

    def peak_rabi(self, tau_gamma: float) -> float:
        """Omega_0 = theta / (2 sqrt(pi) sigma_ctrl), in units of gamma_i."""
        return self.theta / (2.0 * math.sqrt(math.pi) * self.sigma(tau_gamma))

    def mirrored(self) -> "ControlParams":
        return replace(self, delay=-self.delay)


def control_field(ctrl: ControlParams, tau, tau_gamma: float = 1.0):
    """Omega(tau) = Omega_0 exp(-[(tau - delay) / 2 sigma]^2), tau in 1/gamma_i."""
    t = np.asarray(tau, dtype=float)
    sigma = ctrl.sigma(tau_gamma)
    center = ctrl.delay * tau_gamma
    om = ctrl.peak_rabi(tau_gamma) * np.exp(-(((t - center) / (2.0 * sigma)) ** 2))
    return float(om) if om.ndim == 0 else om


def pulse_duration_from_bandwidth(bandwidth: float) -> float:
    """tau_FWHM = 2 pi * 2 ln 2 / (pi * BW)."""
    return 2.0 * math.pi * 2.0 * math.log(2.0) / (math.pi * bandwidth)


def bandwidth_from_pulse_duration(tau_fwhm: float) -> float:
    return 2.0 * math.pi * 2.0 * math.log(2.0) / (math.pi * tau_fwhm)


@dataclass(frozen=True)
class SimGrid:
    """Space, time and frequency discretization.

    Storage runs on the input clock from ``t_min`` to ``t_store``; retrieval
    runs on the output clock from ``t_out_min`` to ``t_out_max``.  Both share
    the step ``dt``.
    """

    nz: int
    dt: float
    t_min: float
    t_store: float
    t_out_min: float
    t_out_max: float
    freq: FrequencyGrid = field(default_factory=FrequencyGrid.uniform)

    def __post_init__(self):
        if self.nz < 1 or self.dt <= 0:
            raise ValueError("nz must be >= 1 and dt > 0")
        if self.t_store <= self.t_min or self.t_out_max <= self.t_out_min:
            raise ValueError("empty time window")

    @property
    def storage_times(self) -> np.ndarray:
        n = int(math.ceil((self.t_store - self.t_min) / self.dt - 1e-9))
        return self.t_min + self.dt * np.arange(n + 1)

    @property
    def output_times(self) -> np.ndarray:
        n = int(math.ceil((self.t_out_max - self.t_out_min) / self.dt - 1e-9))
        return self.t_out_min + self.dt * np.arange(n + 1)

    def check(self, mem: MemoryParams, ctrl: ControlParams, max_detuning: float) -> list[str]:
        """Names of resolution requirements this grid violates (empty if fine)."""
        problems = []
        if self.nz < 50:
            problems.append(f"nz={self.nz} < 50")
        if self.dt > mem.tau_gamma / POINTS_PER_PULSE * (1 + 1e-9):
            problems.append(f"dt={self.dt:g} gives fewer than {POINTS_PER_PULSE} points per tau_FWHM")
        if self.dt * max_detuning > 0.5:
            problems.append(f"dt*max|delta|={self.dt * max_detuning:g} > 0.5")
        if self.elapsed > REVIVAL_MARGIN * self.revival_time:
            problems.append(f"simulated time {self.elapsed:g} reaches the class-grid revival at {self.revival_time:g}")
        return problems

    @property
    def elapsed(self) -> float:
        """Storage plus retrieval duration, in 1/gamma_i."""
        return (self.t_store - self.t_min) + (self.t_out_max - self.t_out_min)

    @property
    def revival_time(self) -> float:
        """2 pi / (largest class spacing); infinite for irregular grids."""
        gaps = np.diff(self.freq.nodes)
        if not np.allclose(gaps, gaps[0], rtol=1e-6):
            return math.inf
        return 2.0 * math.pi / gaps[0]

    @classmethod
    def auto(
        cls,
        mem: MemoryParams,
        ctrl: ControlParams | None = None,
        lineshape: Lineshape | None = None,
        *,
        nz: int = 50,
        freq: FrequencyGrid | None = None,
        rabi_step: float = RABI_STEP,
        detuning_step: float = DETUNING_STEP,
        points_per_pulse: int = POINTS_PER_PULSE,
        input_start: float = -6.0,
        output_span: float | None = None,
    ) -> "SimGrid":
        """Grid sized from the memory parameters and, when given, the control.

        ``dt`` is tau_FWHM/points_per_pulse, halved until dt*Omega_0/2 is at
        most ``rabi_step`` and dt times the largest coupled detuning is at
        most ``detuning_step``.  ``input_start`` is in units of tau_FWHM.
        ``output_span`` (in 1/gamma_i) defaults to 70 * max(1, tau_gamma),
        shortened if needed so that storage plus retrieval stays below
        ``REVIVAL_MARGIN`` of the class-grid revival time.
        """
        tg = mem.tau_gamma
        freq = FrequencyGrid.uniform() if freq is None else freq
        detuning = active_max_detuning(lineshape, freq) if lineshape is not None else freq.span
        half_rabi = 0.0
        store_end = 4.0
        out_start = -5.0
        if ctrl is not None:
            half_rabi = 0.5 * ctrl.peak_rabi(tg)
            store_end = max(ctrl.delay + 2.0 * ctrl.duration, 4.0)
            out_start = min(out_start, (-ctrl.delay - 2.5 * ctrl.duration) * tg)
        dt = tg / points_per_pulse
        while dt * half_rabi > rabi_step or dt * detuning > detuning_step:
            dt *= 0.5
        span = 70.0 * max(1.0, tg) if output_span is None else output_span
        grid = cls(nz, dt, input_start * tg, store_end * tg, out_start, out_start + span, freq)
        room = REVIVAL_MARGIN * grid.revival_time - (grid.t_store - grid.t_min)
        if span > room:
            if room <= 0:
                raise ValueError(f"storage window alone exceeds the class-grid revival time {grid.revival_time:g}")
            grid = replace(grid, t_out_max=out_start + room)
        return grid


def active_max_detuning(lineshape: Lineshape, freq: FrequencyGrid) -> float:
    f = sample(lineshape, freq)
    active = f > INERT_WEIGHT * f.max()
    return float(np.max(np.abs(freq.nodes[active])))


def coupling_weights(lineshape: Lineshape, freq: FrequencyGrid,
                     depth: str = "area") -> tuple[np.ndarray, np.ndarray]:
    """Active detunings and their couplings sqrt(f_j * w_j) for a grid-normalized profile.

    With ``depth="peak"`` f is further scaled so that its maximum is 1/2.
    """
    f = sample(normalize(lineshape, freq), freq)
    if depth == "peak":
        f = f * (0.5 / f.max())
    active = f > INERT_WEIGHT * f.max()
    return freq.nodes[active].copy(), np.sqrt(f[active] * freq.weights[active])


@dataclass
class FieldState:
    """Atomic state after a march plus the recorded fields.

    ``p``/``b`` hold the per-class amplitudes on the active classes, shape
    (nz, n_active).  ``a`` is the field leaving the medium on ``times``.
    """

    times: np.ndarray
    a: np.ndarray
    p: np.ndarray
    b: np.ndarray
    deltas: np.ndarray
    weights: np.ndarray
    dz: float
    p_tot: np.ndarray | None = None
    b_tot: np.ndarray | None = None

    def excitation(self) -> float:
        """sum_z dz sum_j (|P_j|^2 + |B_j|^2)."""
        return self.dz * float(np.sum(np.abs(self.p) ** 2) + np.sum(np.abs(self.b) ** 2))

    def spin_norm(self) -> float:
        return self.dz * float(np.sum(np.abs(self.b) ** 2))

    def flipped(self) -> "FieldState":
        """Spatial inversion z -> L - z of the atomic arrays."""
        return replace(self, p=self.p[::-1].copy(), b=self.b[::-1].copy())


def gaussian_input(grid: SimGrid, tau_gamma: float, times=None) -> np.ndarray:
    """A_in(tau) = exp(-tau^2 / 4 sigma^2), sigma = tau_FWHM / (2 sqrt(2 ln 2)).

    |A_in|^2 then has FWHM tau_FWHM.
    """
    t = grid.storage_times if times is None else np.asarray(times, dtype=float)
    sigma = tau_gamma / FWHM_PER_SIGMA
    return np.exp(-(t**2) / (4.0 * sigma**2)).astype(complex)


def _midpoints(values: np.ndarray) -> np.ndarray:
    # linear interpolation at t_n + 2dt/3
    return values[:-1] / 3.0 + 2.0 * values[1:] / 3.0


def _march(state_p, state_b, deltas, weights, mem, dz, dt, a_nodes, om_nodes, record):
    rot = (1j * deltas - mem.gamma).astype(np.complex128)
    e1, ec, e1c = np.exp(rot * dt), np.exp(rot * (2.0 * dt / 3.0)), np.exp(rot * (dt / 3.0))
    a_nodes = np.ascontiguousarray(a_nodes, dtype=np.complex128)
    om_nodes = np.ascontiguousarray(om_nodes, dtype=float)
    a_mid = np.ascontiguousarray(_midpoints(a_nodes)) if a_nodes.size > 1 else a_nodes[:0]
    om_mid = np.ascontiguousarray(_midpoints(om_nodes)) if om_nodes.size > 1 else om_nodes[:0]
    out, ptot, btot = _kernels.march(
        state_p, state_b, np.ascontiguousarray(weights, dtype=float), e1, ec, e1c,
        math.sqrt(mem.d), dz, mem.gamma_b, dt, a_nodes, a_mid, om_nodes, om_mid, record,
    )
    if not (np.all(np.isfinite(out)) and np.all(np.isfinite(state_p)) and np.all(np.isfinite(state_b))):
        raise InstabilityError(
            f"non-finite field values at dt={dt:g}: step bounds dt*Omega0/2 <= {RABI_STEP} "
            f"and dt*max|delta| <= {DETUNING_STEP} are required"
        )
    return out, ptot, btot


def _check_control_resolution(grid: SimGrid, deltas: np.ndarray, peak: float) -> None:
    # Ralston gain per step is (1 + x^4/4)^(1/2); beyond x ~ 1 it is unusable
    x = grid.dt * 0.5 * peak
    if x > 1.0:
        raise InstabilityError(f"dt*Omega0/2 = {x:.3g} > 1 at dt={grid.dt:g}; refine dt")


def simulate_storage(
    mem: MemoryParams,
    ctrl: ControlParams,
    lineshape: Lineshape,
    grid: SimGrid,
    a_in: np.ndarray | None = None,
    *,
    record: bool = False,
) -> FieldState:
    """Forward storage: march from an empty medium over the input clock.

    ``a_in`` is sampled on ``grid.storage_times``; values between nodes are
    taken by linear interpolation.  Defaults to the Gaussian signal.
    """
    times = grid.storage_times
    if a_in is None:
        a_in = gaussian_input(grid, mem.tau_gamma)
    a_in = np.asarray(a_in, dtype=complex)
    if a_in.shape != times.shape:
        raise ValueError(f"input has {a_in.shape[0]} samples, grid has {times.size}")
    deltas, weights = coupling_weights(lineshape, grid.freq, mem.depth)
    _check_control_resolution(grid, deltas, ctrl.peak_rabi(mem.tau_gamma))
    p = np.zeros((grid.nz, deltas.size), dtype=complex)
    b = np.zeros_like(p)
    om = control_field(ctrl, times, mem.tau_gamma)
    out, ptot, btot = _march(p, b, deltas, weights, mem, 1.0 / grid.nz, grid.dt, a_in, om, record)
    return FieldState(times, out, p, b, deltas, weights, 1.0 / grid.nz,
                      ptot if record else None, btot if record else None)


def simulate_retrieval(
    state: FieldState,
    mem: MemoryParams,
    ctrl: ControlParams,
    grid: SimGrid,
    *,
    record: bool = False,
    keep_polarization: bool = False,
) -> FieldState:
    """Backward retrieval from a stored state.

    The atomic arrays are mirrored in z, the signal input is dark, and the
    control is the time-reversed storage pulse (delay mirrored) on the output
    clock.  Only the spin wave is handed over by default: the optical
    polarization left at the end of storage carries the forward signal's
    spatial phase and cannot radiate into the backward mode, while the spin
    wave is phase matched by the counter-propagating control.
    ``keep_polarization=True`` flips P along with B instead.  ``state``
    itself is left untouched.
    """
    flipped = state.flipped()
    if not keep_polarization:
        flipped.p[:] = 0.0
    times = grid.output_times
    om = control_field(ctrl.mirrored(), times, mem.tau_gamma)
    _check_control_resolution(grid, flipped.deltas, ctrl.peak_rabi(mem.tau_gamma))
    dark = np.zeros(times.size, dtype=complex)
    out, ptot, btot = _march(flipped.p, flipped.b, flipped.deltas, flipped.weights, mem,
                             flipped.dz, grid.dt, dark, om, record)
    return FieldState(times, out, flipped.p, flipped.b, flipped.deltas, flipped.weights, flipped.dz,
                      ptot if record else None, btot if record else None)


def energy(envelope, dt: float) -> float:
    return float(np.sum(np.abs(np.asarray(envelope)) ** 2) * dt)


def efficiency(a_in, a_out, dt_in: float = 1.0, dt_out: float | None = None) -> float:
    """int |A_out|^2 / int |A_in|^2 by rectangle-rule quadrature."""
    dt_out = dt_in if dt_out is None else dt_out
    e_in = energy(a_in, dt_in)
    if not e_in > 0:
        raise DegenerateInputError("input envelope has zero norm")
    return energy(a_out, dt_out) / e_in


@dataclass
class MemoryRun:
    """Everything a storage + retrieval simulation produces."""

    efficiency: float
    leakage: float
    stored_norm: float
    input_energy: float
    storage: FieldState
    retrieval: FieldState
    a_in: np.ndarray

    def summary(self) -> dict:
        return {
            "efficiency": self.efficiency,
            "leakage": self.leakage,
            "stored_norm": self.stored_norm,
        }


def run_memory(
    mem: MemoryParams,
    ctrl: ControlParams,
    lineshape: Lineshape,
    grid: SimGrid | None = None,
    a_in: np.ndarray | None = None,
    *,
    record: bool = False,
    keep_polarization: bool = False,
) -> MemoryRun:
    """Storage followed by backward retrieval; returns efficiencies and states."""
    if grid is None:
        grid = SimGrid.auto(mem, ctrl, lineshape)
    if a_in is None:
        a_in = gaussian_input(grid, mem.tau_gamma)
    e_in = energy(a_in, grid.dt)
    if not e_in > 0:
        raise DegenerateInputError("input envelope has zero norm")
    stored = simulate_storage(mem, ctrl, lineshape, grid, a_in, record=record)
    # the retrieval march works on its own copy of the stored arrays
    retrieved = simulate_retrieval(stored, mem, ctrl, grid, record=record,
                                   keep_polarization=keep_polarization)
    return MemoryRun(
        efficiency=energy(retrieved.a, grid.dt) / e_in,
        leakage=energy(stored.a, grid.dt) / e_in,
        stored_norm=stored.spin_norm() / e_in,
        input_energy=e_in,
        storage=stored,
        retrieval=retrieved,
        a_in=np.asarray(a_in),
    )


def memory_efficiency(mem: MemoryParams, ctrl: ControlParams, lineshape: Lineshape,
                      grid: SimGrid | None = None, a_in=None) -> float:
    return run_memory(mem, ctrl, lineshape, grid, a_in).efficiency
