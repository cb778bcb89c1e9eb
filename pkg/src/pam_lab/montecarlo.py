"""Brownian path ensembles and estimators for the functionals alpha and beta.

Everything goes through Fourier: for a spectral point ``(lam, xi)`` the path
enters only through the oscillatory integral

    osc(lam, xi) = int_0^T exp(i (lam s + xi . B_s)) ds,

and ``alpha^{12} = int Re[osc_1 conj(osc_2)] d(mu0 x mu)``.  The spectral
integral is estimated by importance sampling from the mollified measure.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import _streams
from .regime import Skorohod, classify
from .spectral import (
    HurstParams,
    MollifiedSpectralMeasure,
    fbm_spectral_constant,
    mollified_gamma0,
    mollified_space_factor,
    sample_spectral,
)

__all__ = [
    "BrownianPath",
    "PathEnsemble",
    "FunctionalEstimate",
    "HeavyTailWarning",
    "sample_ensemble",
    "osc_integral",
    "osc_matrix",
    "alpha_pair",
    "beta_mean_quadrature",
    "alpha_cross_mean_quadrature",
    "scaled_cross_mean_quadrature",
    "scaling_identity_check",
    "discrete_beta_mean",
    "kernel_gram",
    "kernel_beta_mean",
]

HEAVY_TAIL_RATIO = 50.0
_CHUNK = 512


class HeavyTailWarning(UserWarning):
    """Per-sample values are too spread out for the mean to be trusted."""


@dataclass(frozen=True)
class BrownianPath:
    horizon: float
    positions: np.ndarray  # (m + 1, d)

    @property
    def steps(self) -> int:
        return self.positions.shape[0] - 1


@dataclass(frozen=True)
class PathEnsemble:
    horizon: float
    steps: int
    count: int
    positions: np.ndarray  # (count, m + 1, d)
    seed: int
    stream_layout: str

    @property
    def d(self) -> int:
        return self.positions.shape[-1]

    def path(self, k: int) -> BrownianPath:
        return BrownianPath(self.horizon, self.positions[k])


@dataclass(frozen=True)
class FunctionalEstimate:
    mean: float
    stderr: float
    samples: int
    q95_abs: float

    @classmethod
    def from_values(cls, values) -> "FunctionalEstimate":
        v = np.asarray(values, dtype=float)
        if v.size < 2:
            raise ValueError("need at least two samples")
        return cls(
            mean=float(np.mean(v)),
            stderr=float(np.std(v, ddof=1) / math.sqrt(v.size)),
            samples=int(v.size),
            q95_abs=float(np.quantile(np.abs(v), 0.95)),
        )

    @property
    def heavy_tailed(self) -> bool:
        return self.q95_abs > HEAVY_TAIL_RATIO * abs(self.mean)


def path_increments(t: float, m: int, d: int, seed: int, key: tuple) -> np.ndarray:
    rng = _streams.substream(seed, *key)
    return rng.standard_normal((m, d)) * math.sqrt(t / m)


def sample_ensemble(t: float, m: int, count: int, d: int, seed: int,
                    key: tuple = (_streams.PATHS,), first: int = 0) -> PathEnsemble:
    """Discretized Brownian paths on a uniform grid of ``m`` steps.

    Path ``first + k`` is drawn from substream ``(seed, *key, first + k)``, so
    ensembles with different counts agree on their common prefix, and
    ensembles at different horizons share their standard normal draws.
    """
    if not t > 0:
        raise ValueError("horizon must be positive")
    if m < 2:
        raise ValueError("need at least two time steps")
    if count < 1 or d < 1:
        raise ValueError("count and dimension must be positive")
    pos = np.zeros((count, m + 1, d))
    for k in range(count):
        inc = path_increments(t, m, d, seed, key + (first + k,))
        np.cumsum(inc, axis=0, out=pos[k, 1:])
    layout = f"{_streams.STREAM_LAYOUT}; path k -> key {tuple(key)} + (k,)"
    return PathEnsemble(float(t), int(m), int(count), pos, int(seed), layout)


def _trapezoid_weights(t: float, m: int) -> np.ndarray:
    w = np.full(m + 1, t / m)
    w[0] = w[-1] = 0.5 * t / m
    return w


def osc_matrix(positions, t: float, lam, xi, method: str = "trapezoid") -> np.ndarray:
    """Oscillatory integrals for many paths and spectral points.

    ``positions`` has shape (P, m + 1, d), ``lam`` (K,), ``xi`` (K, d); the
    result has shape (P, K).  ``method="trapezoid"`` is the plain trapezoid
    rule; ``method="linear"`` integrates the piecewise-linear interpolant of
    the phase exactly, which stays accurate when ``lam t / m`` is not small.
    """
    positions = np.asarray(positions, dtype=float)
    if positions.ndim == 2:
        positions = positions[None]
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    xi = np.asarray(xi, dtype=float).reshape(lam.shape[0], -1)
    P, m1, d = positions.shape
    m = m1 - 1
    if xi.shape[1] != d:
        raise ValueError("spectral points and paths disagree on dimension")
    s = np.linspace(0.0, t, m1)
    h = t / m
    w = _trapezoid_weights(t, m)
    out = np.empty((P, lam.shape[0]), dtype=complex)
    for k0 in range(0, lam.shape[0], _CHUNK):
        sl = slice(k0, k0 + _CHUNK)
        time_phase = np.outer(lam[sl], s)  # (k, m+1)
        for p in range(P):
            phase = time_phase + xi[sl] @ positions[p].T
            if method == "trapezoid":
                out[p, sl] = np.exp(1j * phase) @ w
            elif method == "linear":
                mid = 0.5 * (phase[:, 1:] + phase[:, :-1])
                half = 0.5 * np.diff(phase, axis=1)
                out[p, sl] = h * np.sum(np.exp(1j * mid) * np.sinc(half / np.pi), axis=1)
            else:
                raise ValueError(f"unknown method {method!r}")
    return out


def osc_integral(path: BrownianPath, lam: float, xi, method: str = "trapezoid") -> complex:
    """``int_0^T exp(i (lam s + xi . B_s)) ds`` along one discretized path."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    return complex(osc_matrix(path.positions, path.horizon, [lam], xi[None, :], method)[0, 0])


def pair_values(osc_a, osc_b, weight: float, osc_a_flip=None, osc_b_flip=None) -> np.ndarray:
    """Per-sample contributions ``weight Re[osc_a conj(osc_b)]``, averaged
    with the lam-flipped antithetic partner when given."""
    vals = np.real(osc_a * np.conj(osc_b))
    if osc_a_flip is not None:
        vals = 0.5 * (vals + np.real(osc_a_flip * np.conj(osc_b_flip)))
    return weight * vals


def alpha_pair(path1: BrownianPath, path2: BrownianPath, params: HurstParams,
               eps0: float, epsS: float, K: int, rng: np.random.Generator,
               antithetic: bool = True, method: str = "trapezoid") -> FunctionalEstimate:
    """Importance-sampled estimate of the mollified cross functional.

    With ``path2 is path1`` this estimates ``beta`` of that path and every
    per-sample value is a nonnegative squared modulus.
    """
    if path1.horizon != path2.horizon or path1.steps != path2.steps:
        raise ValueError("paths must share horizon and grid")
    if K < 2:
        raise ValueError("need at least two spectral samples")
    m = MollifiedSpectralMeasure.from_params(params, eps0, epsS)
    sample = sample_spectral(m, rng, K)
    pos = np.stack([path1.positions, path2.positions])
    o = osc_matrix(pos, path1.horizon, sample.lam, sample.xi, method)
    flip = antithetic and not params.time_independent
    if flip:
        of = osc_matrix(pos, path1.horizon, -sample.lam, sample.xi, method)
        vals = pair_values(o[0], o[1], sample.weight, of[0], of[1])
    else:
        vals = pair_values(o[0], o[1], sample.weight)
    est = FunctionalEstimate.from_values(vals)
    if est.heavy_tailed:
        warnings.warn(
            f"q95/|mean| = {est.q95_abs / max(abs(est.mean), 1e-300):.3g} exceeds {HEAVY_TAIL_RATIO:g}",
            HeavyTailWarning,
            stacklevel=2,
        )
    return est


def discrete_beta_mean(lam, xi, t: float, m: int, method: str = "trapezoid") -> np.ndarray:
    """Exact Brownian expectation of ``|osc(lam, xi)|^2`` for the discretized rule.

    For the trapezoid rule this is ``sum_{i,k} w_i w_k cos(lam h (i-k))
    exp(-|xi|^2 h |i-k| / 2)``, a Toeplitz sum evaluated in O(m) per point.
    Used to centre beta estimates without discretization bias.
    """
    if method != "trapezoid":
        raise ValueError("closed-form discrete mean is only available for the trapezoid rule")
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    xi = np.asarray(xi, dtype=float).reshape(lam.shape[0], -1)
    w = _trapezoid_weights(t, m)
    lags = np.arange(m + 1)
    c = np.correlate(w, w, mode="full")[m:]  # c_l = sum_i w_i w_{i+l}
    h = t / m
    a = 0.5 * np.sum(xi**2, axis=1) * h
    out = np.empty(lam.shape[0])
    for k0 in range(0, lam.shape[0], _CHUNK):
        sl = slice(k0, k0 + _CHUNK)
        ker = np.cos(np.outer(lam[sl] * h, lags)) * np.exp(-np.outer(a[sl], lags))
        out[sl] = 2.0 * ker @ c - c[0]
    return out


def _space_kernel_1d(dx, h: float, eps: float) -> np.ndarray:
    if h == 0.5:
        return np.exp(-(dx**2) / (4.0 * eps)) / math.sqrt(4.0 * math.pi * eps)
    return mollified_gamma0(dx, h, eps)


def _time_kernel(t: float, m: int, h0: float, eps0: float) -> np.ndarray:
    lags = np.abs(np.subtract.outer(np.arange(m + 1), np.arange(m + 1))) * (t / m)
    return mollified_gamma0(lags, h0, eps0)


def kernel_gram(positions, t: float, params: HurstParams, eps0: float, epsS: float) -> np.ndarray:
    """Trapezoid double sums ``sum_ab w_a w_b gamma0(s_a - s_b) gamma(B^j_a - B^k_b)``.

    Entry (j, k) is the discretized cross functional of paths j and k, the
    diagonal is beta of each path.  Covariances are the closed-form mollified
    kernels, so no spectral sampling enters.
    """
    positions = np.asarray(positions, dtype=float)
    P, m1, d = positions.shape
    if d != params.d:
        raise ValueError("paths and params disagree on dimension")
    if epsS <= 0 or (eps0 <= 0 and not params.time_independent):
        raise ValueError("the kernel route needs positive mollification")
    m = m1 - 1
    w = _trapezoid_weights(t, m)
    T = None if params.time_independent else _time_kernel(t, m, params.h0f, eps0)
    out = np.empty((P, P))
    for j in range(P):
        for k in range(j, P):
            K = np.ones((m1, m1))
            for i, h in enumerate(params.hf):
                K *= _space_kernel_1d(np.subtract.outer(positions[j, :, i], positions[k, :, i]), h, epsS)
            if T is not None:
                K *= T
            out[j, k] = out[k, j] = w @ K @ w
    return out


def kernel_beta_mean(t: float, m: int, params: HurstParams, eps0: float, epsS: float) -> float:
    """Exact Brownian mean of the diagonal of ``kernel_gram``."""
    w = _trapezoid_weights(t, m)
    c = np.correlate(w, w, mode="full")[m:]
    lags = np.arange(m + 1) * (t / m)
    ker = mollified_space_factor(params, epsS + 0.5 * lags)
    if not params.time_independent:
        ker = ker * mollified_gamma0(lags, params.h0f, eps0)
    return float(2.0 * ker @ c - ker[0] * c[0])


# ---------------------------------------------------------------------------
# deterministic first moments


def _space_constant(params: HurstParams) -> float:
    return float(np.prod([fbm_spectral_constant(h) * math.gamma(1.0 - h) for h in params.hf]))


def _breakpoints(t: float, scales) -> list:
    pts = set()
    for sc in scales:
        if sc <= 0:
            continue
        x = sc
        while x < t:
            pts.add(x)
            x *= 4.0
    return sorted(pts)


def beta_mean_quadrature(t: float, eps0: float, epsS: float, params: HurstParams,
                         epsrel: float = 1e-10) -> float:
    """``E[beta_t]`` of the mollified noise by one-dimensional quadrature.

    Integrating the Brownian motion out first gives

        E[beta_t] = 2 int_0^t (t - v) gamma0^{eps0}(v) G(eps + v/2) dv,

    with ``G(s) = prod_j c_j Gamma(1-h_j) s^(h_j-1)``, the Gaussian integral of
    the spatial spectral measure.  Unmollified directions are allowed when the
    resulting singularity at ``v = 0`` stays integrable.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return 0.0
    if eps0 < 0 or epsS < 0:
        raise ValueError("mollification parameters must be nonnegative")
    h0 = params.h0f
    hs = params.hf
    cs = _space_constant(params)
    expo_space = float(np.sum(hs - 1.0))
    sing = 0.0
    if eps0 == 0 and h0 < 1:
        if h0 <= 0.5:
            raise ArithmeticError("non-integrable configuration: unmollified time covariance needs h0 > 1/2")
        sing += 2.0 * h0 - 2.0
    if epsS == 0:
        sing += expo_space
    if sing <= -1.0:
        raise ArithmeticError("non-integrable configuration")

    def time_factor(v):
        if h0 == 1.0:
            return 1.0
        if eps0 > 0:
            return float(mollified_gamma0(v, h0, eps0))
        return h0 * (2.0 * h0 - 1.0)  # |v|^(2h0-2) carried by the weight

    def space_factor(v):
        if epsS > 0:
            return cs * (epsS + 0.5 * v) ** expo_space
        return cs * 0.5**expo_space  # v^(H-d) carried by the weight

    def f(v):
        return 2.0 * (t - v) * time_factor(v) * space_factor(v)

    pts = _breakpoints(t, [math.sqrt(eps0) if eps0 > 0 else 0.0, 2.0 * epsS])
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            if sing != 0.0:
                val, err = integrate.quad(f, 0.0, t, weight="alg", wvar=(sing, 0.0),
                                          epsabs=0.0, epsrel=epsrel, limit=500)
            else:
                edges = [0.0] + pts + [t]
                val = 0.0
                for a, b in zip(edges[:-1], edges[1:]):
                    piece, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=epsrel, limit=500)
                    val += piece
        except integrate.IntegrationWarning as exc:
            raise ArithmeticError(f"non-integrable configuration: {exc}") from exc
    return val


def _check_critical(params: HurstParams):
    rep = classify(params)
    if rep.skorohod is not Skorohod.CRITICAL:
        raise ValueError(f"scaling identity needs the critical regime, got {rep.skorohod.value}")


def _cross_mean(T: float, params: HurstParams, time_scale: float, epsrel: float) -> float:
    """``int_{[0,T]^2} gamma0((s-r)/time_scale) E[gamma(B_s - B~_r)] ds dr`` for d - H = 1.

    With ``u = |s - r|`` and ``w = s + r`` the spatial factor is
    ``C (w/2)^(-1)`` and integrates in ``w`` over ``[u, 2T - u]`` to
    ``2 C log((2T - u)/u)``; the remaining ``u`` integral carries the
    singularities as algebraic and logarithmic weights.
    """
    h0 = params.h0f
    C = _space_constant(params)
    if h0 == 1.0:
        scale, expo = 1.0, 0.0
    else:
        scale = h0 * (2.0 * h0 - 1.0) * time_scale ** (2.0 - 2.0 * h0)
        expo = 2.0 * h0 - 2.0
    smooth, _ = integrate.quad(lambda u: math.log(2.0 * T - u), 0.0, T, weight="alg",
                               wvar=(expo, 0.0), epsabs=0.0, epsrel=epsrel, limit=500)
    logpart, _ = integrate.quad(lambda u: 1.0, 0.0, T, weight="alg-loga",
                                wvar=(expo, 0.0), epsabs=0.0, epsrel=epsrel, limit=500)
    return 2.0 * C * scale * (smooth - logpart)


def alpha_cross_mean_quadrature(t: float, params: HurstParams, epsrel: float = 1e-10) -> float:
    """``E[alpha_t^{12}]`` for two independent paths, unmollified, critical regime."""
    _check_critical(params)
    return _cross_mean(t, params, 1.0, epsrel)


def scaled_cross_mean_quadrature(b: float, params: HurstParams, epsrel: float = 1e-10) -> float:
    """``E[Z_b]``: horizon ``b`` with time covariance evaluated at ``(s - r)/b``."""
    _check_critical(params)
    return _cross_mean(b, params, b, epsrel)


def scaling_identity_check(t: float, b: float, params: HurstParams, tol: float = 1e-6) -> dict:
    """Compare ``E[alpha_t]`` with ``b^-1 t^(2 h0 - 1) E[Z_b]``."""
    if t <= 0 or b <= 0:
        raise ValueError("t and b must be positive")
    _check_critical(params)
    lhs = alpha_cross_mean_quadrature(t, params, epsrel=tol * 1e-2)
    rhs = t ** (2.0 * params.h0f - 1.0) / b * scaled_cross_mean_quadrature(b, params, epsrel=tol * 1e-2)
    disc = abs(lhs - rhs) / abs(lhs)
    return {"t": t, "b": b, "lhs": lhs, "rhs": rhs, "rel_discrepancy": disc,
            "tolerance": tol, "holds": disc < max(1e-3, 10 * tol)}

