"""Renormalization constants for the mollified Stratonovich equation.

All integrals here have the form ``int F(lam, |xi|^2) N(lam, xi) dlam dxi``
with ``N = |lam|^(1-2h0) prod_j |xi_j|^(1-2h_j)``.  Integrating out the
direction of xi leaves a two-dimensional integral in ``(lam, y = |xi|^2)``:

    int_{R^d} f(|xi|^2) prod_j |xi_j|^(1-2h_j) dxi = S_d int_0^inf f(y) y^(d-H-1) dy,
    S_d = prod_j Gamma(1-h_j) / Gamma(d-H).

The heat-kernel factor ``1/(y/2 + i lam)`` is homogeneous of degree -1 in
``(lam, y)``, so we pass to ``lam = r w``, ``y = r (1 - w)`` with
``r = |lam| + |xi|^2`` and ``w`` in [0, 1].  The radial part then carries
the power ``r^(kappa - 1)`` with ``kappa = d + 1 - (2 h0 + H)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from . import _streams
from .montecarlo import beta_mean_quadrature
from .regime import classify
from .spectral import HurstParams, fbm_spectral_constant

__all__ = [
    "RenormReport",
    "squared_constant",
    "j_integral",
    "j_integral_sampled",
    "renorm_constant",
    "r_n_t",
    "gap_report",
    "level_mollifiers",
    "trend_slope",
]

EPSREL = 1e-11


@dataclass(frozen=True)
class RenormReport:
    n: int
    regime: str  # "StrictlyBelow" or "Boundary"
    cN: float
    jIntegral: float | None
    halfEBeta: float
    rN: float | None
    gap: float
    t: float

    def as_dict(self) -> dict:
        return {"n": self.n, "regime": self.regime, "cN": self.cN, "jIntegral": self.jIntegral,
                "halfEBeta": self.halfEBeta, "rN": self.rN, "gap": self.gap, "t": self.t}


def level_mollifiers(n: int) -> tuple[float, float]:
    """``(eps0, eps)`` matching the level-n heat-kernel mollifier: ``(2^-4n, 2^-2n)``."""
    return 2.0 ** (-4 * n), 2.0 ** (-2 * n)


def squared_constant(params: HurstParams) -> float:
    """``c^2 = prod_i 1/alpha_{h_i} = c0 prod_j c_j``."""
    out = fbm_spectral_constant(params.h0f)
    for h in params.hf:
        out *= fbm_spectral_constant(h)
    return out


def _exponents(params: HurstParams):
    h0 = params.h0f
    H = float(np.sum(params.hf))
    d = params.d
    return h0, H, d, d + 1.0 - (2.0 * h0 + H)


def _angular(params: HurstParams) -> float:
    _, H, d, _ = _exponents(params)
    return float(np.prod([math.gamma(1.0 - h) for h in params.hf])) / math.gamma(d - H)


def _regime(params: HurstParams) -> str:
    rep = classify(params)
    if not rep.stratonovich_ok:
        raise ValueError("requires d + 2/3 < 2 h0 + H <= d + 1")
    if params.h0f >= 1.0:
        raise ValueError("requires a time-dependent noise (h0 < 1)")
    return "Boundary" if rep.stratonovich_boundary else "StrictlyBelow"


def _quad(f, a, b, epsrel: float = EPSREL, limit: int = 400, **kw) -> float:
    opts = dict(epsabs=0.0, epsrel=epsrel, limit=limit, **kw)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            return integrate.quad(f, a, b, **opts)[0]
        except integrate.IntegrationWarning as exc:
            if "roundoff" not in str(exc):
                raise ArithmeticError(f"integral not converged: {exc}") from exc
    # a roundoff flag means the tolerance is below what doubles resolve; keep the value
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        return integrate.quad(f, a, b, **opts)[0]


def _radial_gauss(kappa: float, w: float, lower: float = 0.0) -> float:
    """``int_lower^inf r^(kappa-1) exp(-r^2 w^2 - r (1-w)) dr``."""
    scale = min(1.0 / max(w, 1e-300), 1.0 / max(1.0 - w, 1e-300))
    f = lambda r: math.exp(-r * r * w * w - r * (1.0 - w))
    if lower == 0.0:
        head = _quad(f, 0.0, scale, weight="alg", wvar=(kappa - 1.0, 0.0))
    elif lower < scale:
        head = _quad(lambda r: f(r) * r ** (kappa - 1.0), lower, scale)
    else:
        head, scale = 0.0, lower
    tail = _quad(lambda r: f(r) * r ** (kappa - 1.0), scale, np.inf)
    return head + tail


def _heat_re(w: float) -> float:
    # Re 1/(y/2 + i lam) at r = 1
    a = 0.5 * (1.0 - w)
    return a / (a * a + w * w)


def _wr_integral(params: HurstParams, lower: float) -> float:
    h0, H, d, kappa = _exponents(params)
    inner = lambda w: _heat_re(w) * _radial_gauss(kappa, w, lower)
    # the extra factor 2 accounts for lam < 0
    val = _quad(inner, 0.0, 1.0, weight="alg", wvar=(1.0 - 2.0 * h0, d - H - 1.0))
    return 2.0 * _angular(params) * val


def j_integral(params: HurstParams) -> float:
    """``J = int |F rho|^2 Re F p N dlam dxi`` with ``|F rho|^2 = exp(-lam^2 - |xi|^2)``."""
    if _regime(params) != "StrictlyBelow":
        raise ValueError("J is finite only when 2 h0 + H < d + 1")
    return _wr_integral(params, 0.0)


def j_integral_sampled(params: HurstParams, samples: int = 2**20, seed: int = 0) -> tuple[float, float]:
    """Independent estimate of J with its standard error.

    Sample ``lam = (|xi|^2 / 2) u``: the heat kernel then integrates against
    ``|u|^(1-2h0) / (1 + u^2)``, and ``u^2`` is BetaPrime(1 - h0, h0).  The
    remaining ``|xi|^2`` follows a Gamma(kappa) law under the Gaussian
    mollifier, and the Gaussian factor in ``lam`` is averaged over ``u``
    exactly with Tricomi's function.
    """
    if _regime(params) != "StrictlyBelow":
        raise ValueError("J is finite only when 2 h0 + H < d + 1")
    h0, H, d, kappa = _exponents(params)
    rng = _streams.substream(seed, _streams.AUX, 0)
    y = rng.standard_gamma(kappa, size=samples)
    s = (0.5 * y) ** 2
    cond = special.hyperu(1.0 - h0, 1.0 - h0, s) / math.gamma(h0)
    norm = 2.0 ** (2.0 * h0 - 1.0) * math.pi / math.sin(math.pi * h0) * _angular(params) * math.gamma(kappa)
    return norm * float(np.mean(cond)), norm * float(np.std(cond, ddof=1)) / math.sqrt(samples)


def renorm_constant(n: int, params: HurstParams) -> float:
    """``c^(n)``: geometric in n strictly below the boundary, a truncated
    integral over ``|lam| + |xi|^2 >= 2^-2n`` on it."""
    if n < 1:
        raise ValueError("level n must be at least 1")
    regime = _regime(params)
    c2 = squared_constant(params)
    if regime == "StrictlyBelow":
        kappa = _exponents(params)[3]
        return c2 * 2.0 ** (2 * n * kappa) * j_integral(params)
    return c2 * _wr_integral(params, 2.0 ** (-2 * n))


def _renorm_from_j(n: int, params: HurstParams, J: float) -> float:
    kappa = _exponents(params)[3]
    return squared_constant(params) * 2.0 ** (2 * n * kappa) * J


_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def _panel_quad(f, edges) -> float:
    """Composite Gauss-Legendre over consecutive panels, evaluated in one shot."""
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    nodes = (0.5 * (hi + lo))[:, None] + half[:, None] * _GL_X[None, :]
    return float(np.sum(half * (f(nodes) @ _GL_W)))


def _radial_remainder(kappa: float, w: float, t: float, eps: float) -> float:
    """``int_0^inf r^(kappa-2) M(r) Re[(1 - exp(-t r z)) / z^2] dr`` with
    ``z = (1-w)/2 + i w`` and ``M(r) = exp(-eps^2 r^2 w^2 - eps r (1-w))``.

    The head ``[0, r1]`` goes to an algebraic-weight rule.  Beyond ``r1`` the
    integrand oscillates with period ``2 pi / (t w)``; panels are geometric
    until they reach one period and then follow the period, up to the point
    where the mollifier drops below 1e-17.
    """
    z = complex(0.5 * (1.0 - w), w)
    iz2 = 1.0 / (z * z)
    r1 = 1.0 / (t * abs(z))

    def near(r):
        # (1 - e^{-t r z}) / r, smooth at r = 0
        m = math.exp(-(eps * r * w) ** 2 - eps * r * (1.0 - w))
        if r == 0.0:
            return (t * z * iz2).real
        return (m * (-np.expm1(-t * r * z)) / r * iz2).real

    head = _quad(near, 0.0, r1, weight="alg", wvar=(kappa - 1.0, 0.0))

    def far(r):
        m = np.exp(-(eps * r * w) ** 2 - eps * r * (1.0 - w))
        return r ** (kappa - 2.0) * m * ((1.0 - np.exp(-t * r * z)) * iz2).real

    # mollifier below exp(-39) beyond r_max
    a, b = eps * eps * w * w, eps * (1.0 - w)
    r_max = (-b + math.sqrt(b * b + 4.0 * a * 39.0)) / (2.0 * a) if a > 0 else 39.0 / b
    r_max = max(r_max, 2.0 * r1)
    period = 2.0 * math.pi / (t * w) if w > 0 else np.inf
    edges = [r1]
    while edges[-1] < r_max:
        edges.append(min(edges[-1] + min(edges[-1], 0.5 * period), r_max))
    return head + _panel_quad(far, np.asarray(edges))


def r_n_t(n: int, t: float, params: HurstParams) -> float:
    """``r^n_t = c^2 int |F rho_n|^2 N Re[(1 - e^{-t z}) / z^2]``, ``z = |xi|^2/2 + i lam``."""
    if _regime(params) != "StrictlyBelow":
        raise ValueError("r^n_t is defined strictly below the boundary")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return 0.0
    h0, H, d, kappa = _exponents(params)
    eps = level_mollifiers(n)[1]
    inner = lambda w: _radial_remainder(kappa, w, t, eps)
    val = _quad(inner, 0.0, 1.0, weight="alg", wvar=(1.0 - 2.0 * h0, d - H - 1.0), epsrel=1e-10)
    return squared_constant(params) * 2.0 * _angular(params) * val


def trend_slope(values) -> float:
    """Least-squares slope of ``values`` against their index."""
    v = np.asarray(values, dtype=float)
    x = np.arange(1, v.size + 1, dtype=float)
    return float(np.polyfit(x, v, 1)[0])


def gap_report(t: float, n_max: int, params: HurstParams, workers: int = 1) -> dict:
    """Per-level table of ``c^(n) t``, ``E[beta^n]/2`` and their gap.

    A growth trend is flagged when the fitted slope of the gap against n
    exceeds 5% of the mean gap.
    """
    regime = _regime(params)
    J = j_integral(params) if regime == "StrictlyBelow" else None

    def row(i):
        n = i + 1
        eps0, eps = level_mollifiers(n)
        half = 0.5 * beta_mean_quadrature(t, eps0, eps, params)
        if regime == "StrictlyBelow":
            cN = _renorm_from_j(n, params, J)
            rN = r_n_t(n, t, params)
        else:
            cN = renorm_constant(n, params)
            rN = None
        return RenormReport(n, regime, cN, J, half, rN, abs(cN * t - half), float(t))

    rows = _streams.map_blocks(row, n_max, workers)
    gaps = [r.gap for r in rows]
    slope = trend_slope(gaps) if len(gaps) >= 2 else 0.0
    mean_gap = float(np.mean(gaps))
    growth = slope > 0.05 * mean_gap
    return {"rows": rows, "gap_slope": slope, "mean_gap": mean_gap, "growth_trend": bool(growth),
            "bounded": not growth}
