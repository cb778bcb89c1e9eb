"""Feynman-Kac moment estimators, blowup scans and inequality checks.

For the constant initial condition the p-th moment of the mollified Skorohod
solution is ``E exp(sum_{j<k} alpha^{jk}_t)`` over p independent Brownian
motions.  Each ensemble of p paths shares one set of spectral samples, so
the pair sum is estimated from the Gram matrix of the oscillatory integrals:

    sum_{j<k} Re[o_j conj(o_k)] = (|sum_j o_j|^2 - sum_j |o_j|^2) / 2.

Ensemble ``e`` uses path substreams ``(PATHS, e, j)`` and spectral substream
``(SPECTRAL, e)``.  Path increments are standard normals scaled by
``sqrt(t/m)`` and spectral points are unit-rate gammas scaled by ``1/eps``,
so sweeps over t and eps reuse the same randomness.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _streams
from .montecarlo import (
    beta_mean_quadrature,
    discrete_beta_mean,
    kernel_beta_mean,
    kernel_gram,
    osc_matrix,
    sample_ensemble,
)
from .regime import Skorohod, classify
from .renorm import level_mollifiers, renorm_constant
from .spectral import (
    HurstParams,
    MollifiedSpectralMeasure,
    scale_spectral_draws,
    standard_spectral_draws,
)

__all__ = [
    "MCConfig",
    "MomentEstimate",
    "skorohod_moment",
    "stratonovich_moment",
    "blowup_scan",
    "hypercontractivity_check",
    "subadditivity_check",
    "TOP_SHARE_LIMIT",
]

TOP_SHARE_LIMIT = 0.5


@dataclass(frozen=True)
class MCConfig:
    paths: int = 1000  # ensembles of p paths
    spectral: int = 256  # spectral samples per ensemble
    steps: int = 128
    seed: int = 0
    workers: int = 1
    block: int = 50
    method: str = "trapezoid"  # or "linear", "kernel"

    def __post_init__(self):
        if self.method not in ("trapezoid", "linear", "kernel"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.paths < 2 or self.spectral < 2 or self.steps < 2:
            raise ValueError("paths, spectral and steps must each be at least 2")
        if self.block < 1 or self.workers < 1:
            raise ValueError("block and workers must be positive")


@dataclass(frozen=True)
class MomentEstimate:
    interpretation: str
    t: float
    p: int
    eps: tuple | None
    level_n: int | None
    value: float
    stderr: float
    samples: int
    stable: bool
    log_value: float
    top_share: float
    half_spectral_value: float | None = None
    notes: tuple = field(default_factory=tuple)

    def as_dict(self) -> dict:
        return {
            "interpretation": self.interpretation, "t": self.t, "p": self.p,
            "eps": list(self.eps) if self.eps is not None else None, "level_n": self.level_n,
            "value": self.value, "stderr": self.stderr, "samples": self.samples,
            "stable": self.stable, "log_value": self.log_value, "top_share": self.top_share,
            "half_spectral_value": self.half_spectral_value, "notes": list(self.notes),
        }


def _eps_pair(eps) -> tuple[float, float]:
    if np.ndim(eps) == 0:
        e = float(eps)
        return e, e
    e0, es = eps
    return float(e0), float(es)


def _check_skorohod(params: HurstParams, eps_list):
    h0 = params.h0f
    if not (h0 > 0.5):
        raise ValueError("Skorohod moments need h0 > 1/2")
    rep = classify(params)
    for e0, es in eps_list:
        if es <= 0 or (e0 <= 0 and not params.time_independent):
            if rep.skorohod is not Skorohod.SUBCRITICAL:
                raise ValueError(f"unmollified moments refused in the {rep.skorohod.value} regime")
            raise ValueError("the spectral sampler needs positive mollification")
    return rep


def _exp_stats(S: np.ndarray, shift: float = 0.0):
    """Mean of ``exp(S + shift)`` in a numerically safe way."""
    top = float(np.max(S))
    r = np.exp(S - top)
    total = float(np.sum(r))
    mean_r = total / r.size
    log_value = top + math.log(mean_r) + shift
    with np.errstate(over="ignore"):
        scale = math.exp(top + shift) if top + shift < 700 else math.inf
    value = scale * mean_r
    stderr = scale * float(np.std(r, ddof=1)) / math.sqrt(r.size)
    k = max(1, r.size // 100)
    top_share = float(np.sum(np.sort(r)[-k:])) / total
    return value, stderr, log_value, top_share


def _ensemble_sums(t: float, p: int, eps_list, params: HurstParams, cfg: MCConfig,
                   centre_beta: bool = False):
    """Per-ensemble pair sums (and optionally centred beta sums) for each eps.

    Returns arrays of shape (ensembles, len(eps_list)): full-K pair sum,
    half-K pair sum (None for the kernel route), and the sum over paths of
    ``beta_hat - E[beta_hat | spectral]``.
    """
    d = params.d
    K = cfg.spectral
    kernel = cfg.method == "kernel"
    flip = not params.time_independent
    measures = [MollifiedSpectralMeasure.from_params(params, e0, es) for e0, es in eps_list]
    if kernel and centre_beta:
        kmeans = [kernel_beta_mean(t, cfg.steps, params, e0, es) for e0, es in eps_list]
    blocks = _streams.block_ranges(cfg.paths, cfg.block)

    def run(i):
        lo, hi = blocks[i]
        n_e = hi - lo
        S = np.empty((n_e, len(eps_list)))
        S_half = np.empty_like(S)
        Y = np.zeros_like(S)
        for a, e in enumerate(range(lo, hi)):
            ens = sample_ensemble(t, cfg.steps, p, d, cfg.seed, key=(_streams.PATHS, e))
            if kernel:
                for b, (e0, es) in enumerate(eps_list):
                    G = kernel_gram(ens.positions, t, params, e0, es)
                    tr = float(np.trace(G))
                    S[a, b] = 0.5 * (float(G.sum()) - tr)
                    if centre_beta:
                        Y[a, b] = tr - p * kmeans[b]
                continue
            draws = standard_spectral_draws(params, _streams.substream(cfg.seed, _streams.SPECTRAL, e), K)
            for b, m in enumerate(measures):
                sp = scale_spectral_draws(m, draws)
                O = osc_matrix(ens.positions, t, sp.lam, sp.xi, cfg.method)
                sq = np.abs(O) ** 2
                pair = 0.5 * (np.abs(O.sum(axis=0)) ** 2 - sq.sum(axis=0))
                if flip:
                    Of = osc_matrix(ens.positions, t, -sp.lam, sp.xi, cfg.method)
                    sqf = np.abs(Of) ** 2
                    pair = 0.5 * (pair + 0.5 * (np.abs(Of.sum(axis=0)) ** 2 - sqf.sum(axis=0)))
                    sq = 0.5 * (sq + sqf)
                S[a, b] = sp.weight * float(np.mean(pair))
                S_half[a, b] = sp.weight * float(np.mean(pair[: K // 2]))
                if centre_beta:
                    dm = discrete_beta_mean(sp.lam, sp.xi, t, cfg.steps, cfg.method)
                    Y[a, b] = sp.weight * float(np.mean(sq.sum(axis=0) - p * dm))
        return S, S_half, Y

    parts = _streams.map_blocks(run, len(blocks), cfg.workers)
    S = np.concatenate([q[0] for q in parts])
    S_half = None if kernel else np.concatenate([q[1] for q in parts])
    return S, S_half, np.concatenate([q[2] for q in parts])


def _col(A, b):
    return None if A is None else A[:, b]


def _trivial(interp, t, p, eps, level_n, samples, note):
    return MomentEstimate(interp, float(t), int(p), eps, level_n, 1.0, 0.0, samples, True, 0.0, 0.0,
                          1.0, (note,))


def _estimate(interp, t, p, eps, level_n, S, S_half, shift=0.0, notes=()):
    value, se, logv, share = _exp_stats(S, shift)
    half = None if S_half is None else _exp_stats(S_half, shift)[0]
    stable = share <= TOP_SHARE_LIMIT and math.isfinite(value)
    notes = tuple(notes)
    if not stable:
        notes += (f"heavy tail: top 1% of samples carry {share:.0%} of the mean",)
    return MomentEstimate(interp, float(t), int(p), eps, level_n, value, se, int(S.size), bool(stable),
                          logv, share, half, notes)


def skorohod_moment(t: float, p: int, eps, params: HurstParams, cfg: MCConfig = MCConfig()) -> MomentEstimate:
    """``E[u_t^p]`` for the mollified Skorohod solution with ``u_0 = 1``.

    ``eps`` is a scalar (same mollifier in time and space) or a pair
    ``(eps_time, eps_space)``.
    """
    if p < 1 or int(p) != p:
        raise ValueError("p must be a positive integer")
    if t < 0:
        raise ValueError("t must be nonnegative")
    e = _eps_pair(eps)
    _check_skorohod(params, [e])
    if p == 1:
        return _trivial("Skorohod", t, p, e, None, cfg.paths, "p = 1: empty pair sum")
    if t == 0:
        return _trivial("Skorohod", t, p, e, None, cfg.paths, "t = 0")
    S, S_half, _ = _ensemble_sums(t, int(p), [e], params, cfg)
    return _estimate("Skorohod", t, p, e, None, S[:, 0], _col(S_half, 0))


def stratonovich_moment(t: float, p: int, n: int, params: HurstParams, cfg: MCConfig = MCConfig()) -> MomentEstimate:
    """``E[u^n_t^p]`` for the renormalized level-n Stratonovich approximation.

    The estimator is ``exp(p (E[beta^n]/2 - c^(n) t)) E[exp(sum_{j<k} alpha^{jk}
    + sum_j Y_j / 2)]`` where ``Y_j`` is the path's beta estimate minus its
    exact conditional mean given the spectral samples, so ``E[Y_j] = 0``
    holds for the discretized estimator too.
    """
    if p < 1 or int(p) != p:
        raise ValueError("p must be a positive integer")
    if t < 0:
        raise ValueError("t must be nonnegative")
    rep = classify(params)
    if not rep.stratonovich_ok:
        raise ValueError("renormalization constants need d + 2/3 < 2 h0 + H <= d + 1")
    if not 0.5 < params.h0f < 1.0:
        raise ValueError("Stratonovich moments need 1/2 < h0 < 1")
    e = level_mollifiers(n)
    if t == 0:
        return _trivial("Stratonovich", t, p, e, n, cfg.paths, "t = 0")
    c_n = renorm_constant(n, params)
    half_beta = 0.5 * beta_mean_quadrature(t, e[0], e[1], params)
    shift = p * (half_beta - c_n * t)
    S, S_half, Y = _ensemble_sums(t, int(p), [e], params, cfg, centre_beta=True)
    notes = (f"deterministic factor log = {shift!r}",)
    return _estimate("Stratonovich", t, p, e, n, S[:, 0] + 0.5 * Y[:, 0], _col(S_half + Y / 2 if S_half is not None else None, 0),
                     shift, notes)


# ---------------------------------------------------------------------------
# blowup scan


def _slope_fit(x, S: np.ndarray):
    """Least-squares slope of ``log mean exp(S[:, i])`` against x.

    The standard error uses per-ensemble influence values, so the strong
    positive correlation from common random numbers is accounted for.
    """
    x = np.asarray(x, dtype=float)
    xc = x - x.mean()
    coef = xc / float(np.sum(xc * xc))
    top = S.max(axis=0)
    r = np.exp(S - top)
    means = r.mean(axis=0)
    logs = top + np.log(means)
    slope = float(coef @ logs)
    influence = (r / means) @ coef
    se = float(np.std(influence, ddof=1) / math.sqrt(S.shape[0]))
    return slope, se


def blowup_scan(p: int, t_grid: Sequence[float], eps_grid: Sequence[float], params: HurstParams,
                cfg: MCConfig = MCConfig(), threshold: float = 0.1, kappa: float | None = None) -> dict:
    """Log-moment on a (t, eps) grid and a per-t divergence verdict.

    For each t the slope of ``log E[u_t^p]`` against ``log(1/eps)`` is fitted
    over the three smallest eps.  Verdicts:

    * ``diverging``: slope above ``threshold``.  Heavy tails do not block
      this verdict, since an undersampled tail biases the small-eps cells
      downward and so only flattens the slope.
    * ``stable``: every fitted cell passes its tail diagnostic and the slope
      is within ``3 se`` of zero or below.
    * ``undetermined``: anything else.
    """
    rep = classify(params)
    if rep.skorohod is not Skorohod.CRITICAL:
        raise ValueError("blowup scans are defined in the critical regime")
    if p < 1 or int(p) != p:
        raise ValueError("p must be a positive integer")
    eps_grid = sorted((float(e) for e in eps_grid), reverse=True)
    if len(eps_grid) < 3:
        raise ValueError("need at least three eps levels")
    eps_pairs = [(e, e) for e in eps_grid]
    _check_skorohod(params, eps_pairs)
    t0 = None
    if kappa is not None:
        from .regime import critical_time
        t0 = critical_time(max(p, 2), params, kappa)
    x = [math.log(1.0 / e) for e in eps_grid]
    cells, rows = [], []
    for t in t_grid:
        t = float(t)
        if p == 1 or t == 0:
            S = None
            ests = [_trivial("Skorohod", t, p, e, None, cfg.paths, "trivial") for e in eps_pairs]
        else:
            S, S_half, _ = _ensemble_sums(t, int(p), eps_pairs, params, cfg)
            ests = [_estimate("Skorohod", t, p, e, None, S[:, b], _col(S_half, b)) for b, e in enumerate(eps_pairs)]
        for eps, est in zip(eps_grid, ests):
            cells.append({"t": t, "eps": eps, "log_moment": est.log_value, "value": est.value,
                          "stderr": est.stderr, "stable": est.stable, "top_share": est.top_share})
        if S is None:
            slope, slope_se = 0.0, 0.0
        else:
            slope, slope_se = _slope_fit(x[-3:], S[:, -3:])
        tails_ok = all(est.stable for est in ests[-3:])
        if slope > threshold:
            verdict = "diverging"
        elif tails_ok and slope <= 3.0 * slope_se:
            verdict = "stable"
        else:
            verdict = "undetermined"
        if not tails_ok:
            warnings.warn(f"t={t}: heavy-tailed cells in the slope fit", RuntimeWarning, stacklevel=2)
        row = {"t": t, "slope": slope, "slope_se": slope_se, "verdict": verdict, "tails_ok": tails_ok}
        if t0 is not None:
            row["t_over_t0"] = t / t0
        rows.append(row)
    return {"p": int(p), "threshold": threshold, "t0": t0, "cells": cells, "rows": rows}


# ---------------------------------------------------------------------------
# inequality checks


def hypercontractivity_check(t: float, p: int, eps, params: HurstParams, cfg: MCConfig = MCConfig()) -> dict:
    """``E[u_t^p] <= E[u_{t'}^2]^(p/2)`` with ``t' = (p-1)^(1/(2h0-1)) t``.

    The right side uses the mollifier rescaled with time, ``(c^2 eps0, c eps)``
    for ``c = t'/t``, under which ``alpha_{t'}`` has the law of ``(p-1) alpha_t``.
    """
    if p < 2:
        raise ValueError("hypercontractivity needs p >= 2")
    rep = classify(params)
    if rep.skorohod is not Skorohod.CRITICAL:
        raise ValueError("the time-rescaling step needs the critical regime")
    e0, es = _eps_pair(eps)
    c = (p - 1.0) ** (1.0 / (2.0 * params.h0f - 1.0))
    lhs = skorohod_moment(t, p, (e0, es), params, cfg)
    rhs2 = skorohod_moment(c * t, 2, (c * c * e0, c * es), params, cfg)
    rhs = rhs2.value ** (p / 2.0)
    rhs_se = (p / 2.0) * rhs2.value ** (p / 2.0 - 1.0) * rhs2.stderr
    combined = math.sqrt(lhs.stderr**2 + rhs_se**2)
    return {"t": t, "p": p, "t_rescaled": c * t, "lhs": lhs.value, "lhs_se": lhs.stderr,
            "rhs": rhs, "rhs_se": rhs_se, "holds_within_CI": bool(lhs.value <= rhs + 3.0 * combined),
            "stable": bool(lhs.stable and rhs2.stable)}


def _elementary_symmetric(x: np.ndarray, n_max: int) -> np.ndarray:
    """``e_0..e_{n_max}`` of the entries of x."""
    e = np.zeros(n_max + 1)
    e[0] = 1.0
    for v in x:
        e[1:] = e[1:] + v * e[:-1]
    return e


def _intersection_moments(s: float, params: HurstParams, eps: float, n_max: int, cfg: MCConfig,
                          stream: int) -> np.ndarray:
    """Per path pair unbiased estimates of ``E[H_s^n]``, n = 0..n_max.

    Given the paths, ``H_s`` is the mean of i.i.d. terms
    ``X_k = W Re[o(xi_k) conj(o~(xi_k))]``, so ``e_n(X) / C(K, n)`` is an
    unbiased estimate of ``H_s^n`` that never multiplies a sample by itself.
    """
    d = params.d
    K = cfg.spectral
    if n_max > K:
        raise ValueError("need at least n_max spectral samples")
    m = MollifiedSpectralMeasure.from_params(params, 0.0, eps)
    binom = np.array([math.comb(K, n) for n in range(n_max + 1)], dtype=float)
    blocks = _streams.block_ranges(cfg.paths, cfg.block)

    def run(i):
        lo, hi = blocks[i]
        out = np.empty((hi - lo, n_max + 1))
        for a, e in enumerate(range(lo, hi)):
            ens = sample_ensemble(s, cfg.steps, 2, d, cfg.seed, key=(_streams.ENSEMBLE, stream, e))
            draws = standard_spectral_draws(params, _streams.substream(cfg.seed, _streams.SPECTRAL, stream, e), K)
            sp = scale_spectral_draws(m, draws)
            O = osc_matrix(ens.positions, s, sp.lam, sp.xi, cfg.method)
            X = sp.weight * np.real(O[0] * np.conj(O[1]))
            out[a] = _elementary_symmetric(X, n_max) / binom
        return out

    return np.concatenate(_streams.map_blocks(run, len(blocks), cfg.workers))


def subadditivity_check(t1: float, t2: float, theta: float, n_max: int, params: HurstParams,
                        eps: float, cfg: MCConfig = MCConfig()) -> dict:
    """Truncated series check of ``E exp(theta H_{t1+t2}/(t1+t2)) <= prod_i E exp(theta H_{ti}/ti)``.

    ``H_t`` pairs two independent paths through the mollified spatial
    measure (time-independent noise).
    """
    if not params.time_independent:
        raise ValueError("subadditivity is checked for time-independent noise (h0 = 1)")
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    if not 1 <= n_max <= 8:
        raise ValueError("n_max must lie in 1..8")
    if theta == 0:
        return {"lhs_series": 1.0, "lhs_se": 0.0, "rhs_product": 1.0, "rhs_se": 0.0,
                "holds_within_CI": True, "verdict": "holds", "terms": {}}
    coeffs = np.array([theta**n / math.factorial(n) for n in range(n_max + 1)])
    series, terms = {}, {}
    for idx, s in enumerate((t1, t2, t1 + t2)):
        mom = _intersection_moments(s, params, eps, n_max, cfg, idx)
        per = mom * (coeffs / s ** np.arange(n_max + 1))[None, :]
        vals = per.sum(axis=1)
        series[s if idx < 2 else "sum"] = (float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size)))
        terms[idx] = per.mean(axis=0)
    (m1, s1), (m2, s2) = series[t1] if t1 != t2 else series[t1], series[t2]
    lhs, lhs_se = series["sum"]
    rhs = m1 * m2
    rhs_se = math.sqrt((m2 * s1) ** 2 + (m1 * s2) ** 2)
    combined = math.sqrt(lhs_se**2 + rhs_se**2)
    truncation = any(abs(tm[-1]) > 0.01 * abs(tm.sum()) for tm in terms.values())
    holds = lhs <= rhs + 3.0 * combined
    verdict = "series truncation dominates" if truncation else ("holds" if holds else "violated")
    return {"lhs_series": lhs, "lhs_se": lhs_se, "rhs_product": rhs, "rhs_se": rhs_se,
            "holds_within_CI": bool(holds and not truncation), "verdict": verdict,
            "terms": {k: v.tolist() for k, v in terms.items()}}
