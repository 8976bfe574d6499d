"""Analytic atomic-frequency-comb efficiency with backward retrieval.

The comb keeps a fraction 1/F of the atoms, so its effective optical depth is
d_eff = (d / F) sqrt(pi / (4 ln 2)), and the finite tooth width costs a
dephasing factor exp(-pi^2 / (2 ln 2 F^2)).  The expression holds for
narrowband signals (tau_FWHM * gamma_i >> 1) and overestimates the
efficiency for tau_FWHM * gamma_i <~ 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

FINESSE_RANGE = (1.0, 100.0)
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class AfcParams:
    d: float
    finesse: float

    def __post_init__(self):
        if not self.d >= 0:
            raise ValueError(f"optical depth must be >= 0, got {self.d}")
        if not self.finesse >= 1:
            raise ValueError(f"finesse must be >= 1, got {self.finesse}")


def d_eff(params: AfcParams) -> float:
    return params.d / params.finesse * math.sqrt(math.pi / (4.0 * math.log(2.0)))


def eta_afc(params: AfcParams) -> float:
    """(1 - exp(-d_eff))^2 * exp(-pi^2 / (2 ln 2 F^2))."""
    absorbed = -math.expm1(-d_eff(params))
    dephasing = math.exp(-(math.pi**2) / (2.0 * math.log(2.0) * params.finesse**2))
    return absorbed**2 * dephasing


def golden_section_max(func, lo: float, hi: float, tol: float = 1e-3) -> float:
    """Argmax of a unimodal ``func`` on [lo, hi] to within ``tol``."""
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    e = a + _INV_PHI * (b - a)
    fc, fe = func(c), func(e)
    while b - a > tol:
        if fc >= fe:
            b, e, fe = e, c, fc
            c = b - _INV_PHI * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, e, fe
            e = a + _INV_PHI * (b - a)
            fe = func(e)
    return 0.5 * (a + b)


def optimize_finesse(d: float, tol: float = 1e-3) -> tuple[float, float]:
    """Finesse in [1, 100] maximizing :func:`eta_afc` at optical depth ``d``; returns (F, eta)."""
    if not d > 0:
        raise ValueError("optical depth must be > 0")
    best = golden_section_max(lambda f: eta_afc(AfcParams(d, f)), *FINESSE_RANGE, tol=tol)
    return best, eta_afc(AfcParams(d, best))


def afc_report(d: float, finesse: float | None = None) -> dict:
    """JSON-ready summary {d, finesse, d_eff, eta}; optimizes the finesse if not given."""
    if finesse is None:
        finesse, _ = optimize_finesse(d)
    p = AfcParams(d, finesse)
    return {"d": d, "finesse": finesse, "d_eff": d_eff(p), "eta": eta_afc(p)}
