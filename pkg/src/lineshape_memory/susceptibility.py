"""Linear susceptibility of an inhomogeneously broadened EIT medium.

Frequencies here are in units of the homogeneous coherence decay rate gamma
(the lineshape ``hwhm`` is gamma_i in those units).  Proportionality
constants are dropped; the sign is fixed so that Im(chi) > 0 is absorption
and the transparency window shows positive d Re(chi) / d delta (slow light).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lineshape import FrequencyGrid, Lineshape, normalize, sample


class SingularPointError(ZeroDivisionError):
    """chi_h evaluated on a true pole (gamma = 0, no control, on resonance)."""


class NoWindowError(ValueError):
    """The absorption profile has no transparency dip around the center."""


@dataclass(frozen=True)
class EitParams:
    gamma_i: float
    omega_c: float
    delta_cap: float = 0.0
    gamma: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if self.gamma_i < 0 or self.omega_c < 0:
            raise ValueError("gamma_i and omega_c must be >= 0")


def _chi_h(delta, delta_p, omega_c, delta_cap, gamma):
    """Vectorized chi_h; shapes broadcast.  Two-photon detuning is delta - Delta."""
    two_photon = np.asarray(delta, dtype=float) - delta_cap
    one_photon = np.asarray(delta, dtype=float) - delta_p
    # 4x / (W^2 + 2ix[gamma - 2iy]) divided through by 2x; W^2 / 2x may
    # overflow to inf, which correctly sends chi to 0
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        ratio = np.where(two_photon == 0, 0.0, omega_c**2 / (2.0 * two_photon))
        chi = 2.0 / (ratio + 1j * gamma + 2.0 * one_photon)
    if omega_c > 0:
        chi = np.where(two_photon == 0, 0j, chi)
    return np.conj(chi)


def chi_homogeneous(delta: float, delta_p: float, params: EitParams) -> complex:
    """4 delta / {Omega_c^2 + 2 i delta [gamma - 2i (delta - delta')]}, sign-fixed.

    Returns exactly 0 at two-photon resonance when the control is on.
    """
    if params.omega_c == 0 and params.gamma == 0 and delta == delta_p:
        raise SingularPointError("chi_h has a pole at delta = delta' without control or decay")
    return complex(_chi_h(delta, delta_p, params.omega_c, params.delta_cap, params.gamma))


def default_class_grid(params: EitParams, span: float = 10.0, spacing: float = 0.25) -> FrequencyGrid:
    """Classes over +-span*gamma_i spaced at ``spacing * gamma``.

    chi_h is a Lorentzian of half width gamma/2 in delta', so a spacing of
    gamma/4 already integrates it to ~1e-6 by the rectangle rule.
    """
    half = span * max(params.gamma_i, params.gamma)
    n = 2 * int(math.ceil(half / (spacing * params.gamma))) + 1
    return FrequencyGrid.uniform(n, half)


def chi_inhomogeneous(delta, lineshape: Lineshape, grid: FrequencyGrid, params: EitParams,
                      chunk: int = 256):
    """chi(delta) = sum_j f(delta_j) chi_h(delta, delta_j) w_j over the grid-normalized profile."""
    if params.gamma == 0 and params.omega_c == 0:
        raise SingularPointError("gamma = 0 and Omega_c = 0 leaves chi_h singular on the grid")
    x = np.atleast_1d(np.asarray(delta, dtype=float))
    fw = sample(normalize(lineshape, grid), grid) * grid.weights
    keep = fw > 0
    nodes, fw = grid.nodes[keep], fw[keep]
    out = np.empty(x.size, dtype=complex)
    for s in range(0, x.size, chunk):
        block = _chi_h(x[s:s + chunk, None], nodes[None, :], params.omega_c, params.delta_cap, params.gamma)
        out[s:s + chunk] = block @ fw
    return complex(out[0]) if np.ndim(delta) == 0 else out


def group_metric_values(detunings, re_chi) -> np.ndarray:
    """(d Re chi / d delta)^-1: central differences inside, one-sided at the ends.

    Points with a vanishing derivative (|.| < 1e-12) become signed infinities.
    """
    x = np.asarray(detunings, dtype=float)
    if x.size < 3:
        raise ValueError("need at least 3 detuning points")
    deriv = np.gradient(np.asarray(re_chi, dtype=float), x)
    with np.errstate(divide="ignore"):
        out = 1.0 / deriv
    flat = np.abs(deriv) < 1e-12
    out[flat] = np.copysign(np.inf, deriv[flat])
    return out


@dataclass(frozen=True)
class SusceptibilityCurve:
    detunings: np.ndarray
    chi: np.ndarray
    absorption: np.ndarray
    group_metric: np.ndarray

    @property
    def normalized_absorption(self) -> np.ndarray:
        """Im chi divided by this curve's own maximum."""
        return self.absorption / np.max(self.absorption)

    @classmethod
    def from_chi(cls, detunings, chi) -> "SusceptibilityCurve":
        detunings = np.asarray(detunings, dtype=float)
        chi = np.asarray(chi, dtype=complex)
        return cls(detunings, chi, chi.imag.copy(), group_metric_values(detunings, chi.real))


def compute_curve(lineshape: Lineshape, params: EitParams, detunings=None,
                  grid: FrequencyGrid | None = None, n_points: int = 4001,
                  span: float = 2.0) -> SusceptibilityCurve:
    """Susceptibility over ``n_points`` detunings in +-span*gamma_i (unless given)."""
    if detunings is None:
        detunings = np.linspace(-span * params.gamma_i, span * params.gamma_i, n_points)
    grid = default_class_grid(params) if grid is None else grid
    return SusceptibilityCurve.from_chi(detunings, chi_inhomogeneous(detunings, lineshape, grid, params))


def group_metric(curve: SusceptibilityCurve) -> np.ndarray:
    return group_metric_values(curve.detunings, curve.chi.real)


def group_velocity(curve: SusceptibilityCurve, carrier: float, scale: float = 1.0) -> np.ndarray:
    """v_g / c = 1 / [n + omega dn/domega] with n = sqrt(1 + scale * Re chi).

    ``carrier`` is the optical angular frequency in the detuning units and
    ``scale`` restores the proportionality constant dropped from chi.
    """
    n = np.sqrt(1.0 + scale * curve.chi.real + 0j)
    omega = carrier + curve.detunings
    dn = np.gradient(n, curve.detunings)
    return 1.0 / (n + omega * dn)


def _walk(values: np.ndarray, i: int, step: int, downhill: bool) -> int:
    n = values.size
    while 0 <= i + step < n:
        nxt = values[i + step]
        if (nxt < values[i]) if downhill else (nxt > values[i]):
            i += step
        elif nxt == values[i]:
            # plateau: look past it
            j = i + step
            while 0 <= j + step < n and values[j + step] == values[i]:
                j += step
            if 0 <= j + step < n and ((values[j + step] < values[i]) if downhill else (values[j + step] > values[i])):
                i = j + step
            else:
                return i
        else:
            return i
    return i


def _crossing(x, a, i, step, level):
    while 0 <= i + step < a.size and a[i + step] < level:
        i += step
    j = i + step
    if not 0 <= j < a.size:
        raise NoWindowError("half-depth level not reached inside the detuning range")
    return x[i] + (level - a[i]) / (a[j] - a[i]) * (x[j] - x[i])


def eit_metrics(curve: SusceptibilityCurve, center: float = 0.0) -> dict:
    """Visibility and FWHM of the transparency dip nearest ``center``.

    The dip bottom is found by walking downhill from ``center``; the flanking
    maxima by walking uphill on both sides.  Visibility uses the mean of the
    two maxima; the width is taken at half depth with linear interpolation.
    """
    x = curve.detunings
    a = curve.absorption
    i0 = int(np.argmin(np.abs(x - center)))
    i_min = _walk(a, i0, -1, True)
    i_min = _walk(a, i_min, +1, True)
    i_min = _walk(a, i_min, -1, True)
    if i_min in (0, a.size - 1):
        raise NoWindowError("absorption has no interior minimum near the center")
    i_left = _walk(a, i_min, -1, False)
    i_right = _walk(a, i_min, +1, False)
    if i_left == 0 and a[0] <= a[1] or i_right == a.size - 1 and a[-1] <= a[-2]:
        raise NoWindowError("no absorption maximum on one side of the dip")
    peak = 0.5 * (a[i_left] + a[i_right])
    depth = peak - a[i_min]
    if not depth > 1e-12 * max(abs(peak), 1e-300):
        raise NoWindowError("dip depth is zero")
    level = a[i_min] + 0.5 * depth
    lo = _crossing(x, a, i_min, -1, level)
    hi = _crossing(x, a, i_min, +1, level)
    return {"visibility": float(depth / peak), "fwhm": float(hi - lo),
            "bottom": float(x[i_min]), "left_peak": float(x[i_left]), "right_peak": float(x[i_right])}
