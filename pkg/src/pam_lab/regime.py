"""Regime classification and critical times.

Criticality ``d - H = 1`` is a measure-zero condition, so inputs given as
Fractions are classified with exact arithmetic.  Float inputs fall back to a
1e-12 tolerance and the report says so.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

from .spectral import HurstParams

__all__ = ["Skorohod", "RegimeReport", "classify", "critical_time", "FLOAT_TOL"]

FLOAT_TOL = 1e-12


class Skorohod(str, Enum):
    SUBCRITICAL = "Subcritical"
    CRITICAL = "Critical"
    UNSUPPORTED = "Unsupported"


@dataclass(frozen=True)
class RegimeReport:
    params: HurstParams
    dStar: int
    hStar: float | Fraction
    hSum: float | Fraction
    skorohod: Skorohod
    stratonovich_ok: bool
    stratonovich_boundary: bool
    notes: tuple = field(default_factory=tuple)

    def as_dict(self) -> dict:
        return {
            "params": self.params.as_dict(),
            "d": self.params.d,
            "dStar": self.dStar,
            "hStar": _num(self.hStar),
            "hSum": _num(self.hSum),
            "skorohod": self.skorohod.value,
            "stratonovich_ok": self.stratonovich_ok,
            "stratonovich_boundary": self.stratonovich_boundary,
            "notes": list(self.notes),
        }


def _num(v):
    return str(v) if isinstance(v, Fraction) else float(v)


class _Cmp:
    """Comparisons that are exact for Fractions and tolerant for floats."""

    def __init__(self, exact: bool):
        self.exact = exact
        self.tol = 0 if exact else FLOAT_TOL

    def eq(self, a, b) -> bool:
        return a == b if self.exact else abs(a - b) <= self.tol

    def lt(self, a, b) -> bool:
        return a < b if self.exact else a < b - self.tol

    def le(self, a, b) -> bool:
        return a <= b if self.exact else a <= b + self.tol


def classify(params: HurstParams) -> RegimeReport:
    exact = params.exact
    cmp = _Cmp(exact)
    one = Fraction(1) if exact else 1.0
    d = params.d
    H, Hs, ds = params.h_sum, params.h_star, params.d_star
    h0 = params.h0 if exact else float(params.h0)
    notes = []
    if not exact:
        notes.append(f"float inputs: equalities decided with tolerance {FLOAT_TOL:g}")

    rough_term = ds - 2 * Hs
    if not h0 > Fraction(1, 2):
        sko = Skorohod.UNSUPPORTED
        notes.append("h0 <= 1/2: Skorohod moment formulas assume h0 > 1/2")
    elif cmp.eq(d - H, one) and cmp.lt(4 * (1 - h0) + rough_term, 2):
        sko = Skorohod.CRITICAL
    elif cmp.lt(d - H, one) and not cmp.eq(d - H, one) and cmp.lt(
        4 * (1 - h0) + 2 * (d - H) + rough_term, 4
    ):
        sko = Skorohod.SUBCRITICAL
    else:
        sko = Skorohod.UNSUPPORTED
        notes.append("outside the subcritical and critical conditions")

    level = 2 * h0 + H
    lower = d + Fraction(2, 3) if exact else d + 2.0 / 3.0
    strat = cmp.lt(lower, level) and cmp.le(level, d + 1)
    boundary = strat and cmp.eq(level, d + 1)
    return RegimeReport(params, ds, Hs, H, sko, strat, boundary, tuple(notes))


def critical_time(p, params: HurstParams, kappa: float) -> float:
    """``t0(p) = (kappa^4 (p - 1))^(-1 / (2 h0 - 1))``.

    Only defined in the critical regime.  For ``p < 2`` the value is an upper
    bound for the blowup time, not known to be sharp.
    """
    p = float(p)
    if not p > 1:
        raise ValueError("critical time needs p > 1")
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    rep = classify(params)
    if rep.skorohod is not Skorohod.CRITICAL:
        raise ValueError(f"critical time requires the critical regime, got {rep.skorohod.value}")
    expo = 1.0 / (2.0 * float(params.h0) - 1.0)
    return (kappa**4 * (p - 1.0)) ** (-expo)
