"""Gaussian trial functions, the Townes-soliton constant and blowup certificates.

A trial ``g`` is a unit-L2 family ``g(s, .)`` on R^d for s in [0, 1].  Its
squared density is a product of centred Gaussians, so ``F(g^2)`` is
Gaussian and every spectral integral against ``mu`` is a product of
one-dimensional Gamma integrals:

    int exp(-sigma^2 xi^2) c_h |xi|^(1-2h) dxi = c_h Gamma(1-h) sigma^(2h-2).

The quotient ``R(g) = numerator / gradient energy`` bounds ``kappa^4`` from below.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import integrate, optimize

from . import _streams
from .regime import Skorohod, classify
from .spectral import HurstParams, covariance_gamma, fbm_spectral_constant

__all__ = [
    "TrialKind",
    "TrialFunction",
    "CertificateReport",
    "gaussian_trial",
    "trial_norm",
    "trial_numerator",
    "trial_numerator_direct",
    "gradient_energy",
    "rayleigh_quotient",
    "gn_kappa_townes",
    "kappa_lower_bound",
    "blowup_certificate",
    "certificate_time",
    "fk_asymptotics",
]


class TrialKind(str, Enum):
    GAUSSIAN = "GaussianProduct"
    TIME_MODULATED = "TimeModulatedGaussian"


@dataclass(frozen=True)
class TrialFunction:
    """Gaussian trial with ``g^2(s, x) = prod_j N(0, sigma_j(s)^2)(x_j)``.

    For the time-modulated kind ``sigma_j(s) = sigma_j exp(tau s)``.
    """

    kind: TrialKind
    sigma: tuple
    tau: float = 0.0
    normalized: bool = True

    def __post_init__(self):
        sig = tuple(float(s) for s in self.sigma)
        if not sig or any(not s > 0 for s in sig):
            raise ValueError("widths must be positive")
        object.__setattr__(self, "sigma", sig)
        if self.kind is TrialKind.GAUSSIAN and self.tau != 0.0:
            raise ValueError("a time-constant trial has tau = 0")

    @property
    def d(self) -> int:
        return len(self.sigma)

    def widths(self, s):
        s = np.asarray(s, dtype=float)
        return np.multiply.outer(np.exp(self.tau * s), np.asarray(self.sigma))

    def as_dict(self) -> dict:
        return {"kind": self.kind.value, "sigma": list(self.sigma), "tau": self.tau}


def gaussian_trial(sigma, tau: float = 0.0) -> TrialFunction:
    kind = TrialKind.GAUSSIAN if tau == 0.0 else TrialKind.TIME_MODULATED
    return TrialFunction(kind, tuple(np.atleast_1d(sigma)), float(tau))


def trial_norm(trial: TrialFunction, s: float = 0.0) -> float:
    """``int g^2(s, x) dx``, computed from the Gaussian normalizing constants."""
    w = trial.widths(s)
    # each factor is (2 pi w^2)^(-1/2) times int exp(-x^2 / (2 w^2)) dx = sqrt(2 pi) w
    return float(np.prod((2.0 * math.pi * w**2) ** -0.5 * math.sqrt(2.0 * math.pi) * w))


def _space_gamma(params: HurstParams) -> np.ndarray:
    return np.array([fbm_spectral_constant(h) * math.gamma(1.0 - h) for h in params.hf])


def _spatial_overlap(params: HurstParams, w2):
    """``int F(g_s^2) conj F(g_r^2) dmu`` given ``w2 = (sigma_j(s)^2 + sigma_j(r)^2)/2``."""
    return np.prod(_space_gamma(params) * w2 ** (params.hf - 1.0), axis=-1)


def _check_dims(trial: TrialFunction, params: HurstParams):
    if trial.d != params.d:
        raise ValueError("trial and Hurst vector disagree on dimension")


def trial_numerator(trial: TrialFunction, params: HurstParams, epsrel: float = 1e-12) -> float:
    """``int |F~(g^2)|^2 d(mu0 x mu)`` over the unit time window.

    For a time-constant trial the time factor is
    ``int_{[0,1]^2} gamma0(s - r) ds dr = c0 alpha_{h0} = 1``.
    """
    _check_dims(trial, params)
    sig = np.asarray(trial.sigma)
    if trial.kind is TrialKind.GAUSSIAN:
        return float(_spatial_overlap(params, sig**2))
    tau = trial.tau
    h0 = params.h0f

    def inner(u):
        # int_0^{1-u} overlap(r, r + u) dr
        f = lambda r: float(_spatial_overlap(params, 0.5 * sig**2 * (np.exp(2 * tau * r) + np.exp(2 * tau * (r + u)))))
        return integrate.quad(f, 0.0, 1.0 - u, epsabs=0.0, epsrel=epsrel)[0]

    if params.time_independent:
        val, _ = integrate.quad(inner, 0.0, 1.0, epsabs=0.0, epsrel=epsrel)
        return 2.0 * val
    scale = h0 * (2.0 * h0 - 1.0)
    val, _ = integrate.quad(inner, 0.0, 1.0, weight="alg", wvar=(2.0 * h0 - 2.0, 0.0),
                            epsabs=0.0, epsrel=epsrel)
    return 2.0 * scale * val


def trial_numerator_direct(trial: TrialFunction, params: HurstParams, epsrel: float = 1e-10) -> float:
    """Physical-space numerator ``int gamma(x - y) g^2(x) g^2(y) dx dy`` for a
    time-constant trial, valid when every spatial index exceeds 1/2.

    Per coordinate ``X - Y ~ N(0, 2 sigma^2)``, so each factor is a
    one-dimensional integral of the pointwise covariance against a Gaussian.
    """
    _check_dims(trial, params)
    if trial.kind is not TrialKind.GAUSSIAN:
        raise ValueError("direct route implemented for time-constant trials")
    if np.any(params.hf <= 0.5):
        raise ValueError("pointwise covariance needs every h_j > 1/2")
    out = 1.0
    for h, s in zip(params.hf, trial.sigma):
        v = 2.0 * s * s
        dens = lambda z: 2.0 * math.exp(-z * z / (2.0 * v)) / math.sqrt(2.0 * math.pi * v)
        cut = 10.0 * math.sqrt(v)
        # the power singularity at the origin goes into the quadrature weight
        near = integrate.quad(lambda z: h * (2.0 * h - 1.0) * dens(z), 0.0, cut, weight="alg",
                              wvar=(2.0 * h - 2.0, 0.0), epsabs=0.0, epsrel=epsrel)[0]
        far = integrate.quad(lambda z: dens(z) * float(covariance_gamma([z], HurstParams(1, (h,)))),
                             cut, np.inf, epsabs=0.0, epsrel=epsrel)[0]
        out *= near + far
    return out


def gradient_energy(trial: TrialFunction) -> float:
    """``int_0^1 int |grad_x g|^2 dx ds = int_0^1 sum_j 1/(4 sigma_j(s)^2) ds``."""
    base = float(np.sum(0.25 / np.asarray(trial.sigma) ** 2))
    if trial.tau == 0.0:
        return base
    return base * (1.0 - math.exp(-2.0 * trial.tau)) / (2.0 * trial.tau)


def rayleigh_quotient(trial: TrialFunction, params: HurstParams) -> float:
    return trial_numerator(trial, params) / gradient_energy(trial)


# ---------------------------------------------------------------------------
# Townes soliton by shooting


def _radial_rhs(r, q, dq):
    return q - q**3 - dq / r


def _shoot(q0: float, h: float, r_max: float, record: bool = False):
    """RK4 for ``Q'' + Q'/r = Q - Q^3`` from a series start at ``r = h``.

    Returns +1 when the trajectory crosses zero (initial value too large),
    -1 when it turns back up before crossing (too small), 0 if neither
    happens on the domain, plus the recorded arrays.
    """
    a = q0 - q0**3
    r = h
    q = q0 + a * h * h / 4.0
    dq = a * h / 2.0
    rs, qs, dqs = ([0.0, r], [q0, q], [0.0, dq]) if record else (None, None, None)
    n = int(round(r_max / h))
    verdict = 0
    for _ in range(1, n):
        k1q, k1p = dq, _radial_rhs(r, q, dq)
        k2q = dq + 0.5 * h * k1p
        k2p = _radial_rhs(r + 0.5 * h, q + 0.5 * h * k1q, k2q)
        k3q = dq + 0.5 * h * k2p
        k3p = _radial_rhs(r + 0.5 * h, q + 0.5 * h * k2q, k3q)
        k4q = dq + h * k3p
        k4p = _radial_rhs(r + h, q + h * k3q, k4q)
        q += h * (k1q + 2 * k2q + 2 * k3q + k4q) / 6.0
        dq += h * (k1p + 2 * k2p + 2 * k3p + k4p) / 6.0
        r += h
        if record:
            rs.append(r)
            qs.append(q)
            dqs.append(dq)
        if q < 0.0:
            verdict = 1
            break
        if dq > 0.0:
            verdict = -1
            break
    return verdict, rs, qs, dqs


def _townes_profile(h: float, r_max: float, tol: float):
    lo, hi = 2.0, 3.0
    v_lo, v_hi = _shoot(lo, h, r_max)[0], _shoot(hi, h, r_max)[0]
    if not (v_lo == -1 and v_hi == 1):
        raise ArithmeticError(f"oracle failed: shooting not bracketed (Q0={lo}: {v_lo}, Q0={hi}: {v_hi})")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        v = _shoot(mid, h, r_max)[0]
        if v == 1:
            hi = mid
        elif v == -1:
            lo = mid
        else:
            break
    q0 = 0.5 * (lo + hi)
    _, rs, qs, dqs = _shoot(q0, h, r_max, record=True)
    return q0, np.array(rs), np.array(qs), np.array(dqs)


def _radial_mass(rs, qs) -> float:
    # trapezoid on the truncated profile; the tail beyond the stopping point is O(exp(-2 r))
    return 2.0 * math.pi * float(integrate.trapezoid(qs**2 * rs, rs))


def _ode_residual(rs, qs, dqs, h) -> float:
    # five-point derivative of Q' against the right-hand side, away from r = 0
    d2 = (-dqs[4:] + 8 * dqs[3:-1] - 8 * dqs[1:-3] + dqs[:-4]) / (12.0 * h)
    r, q, dq = rs[2:-2], qs[2:-2], dqs[2:-2]
    keep = r > 0.05
    res = d2[keep] + dq[keep] / r[keep] - q[keep] + q[keep] ** 3
    return float(np.max(np.abs(res)))


def gn_kappa_townes(h: float = 2e-3, r_max: float = 12.0, tol: float = 1e-12) -> dict:
    """Ground state of ``Delta Q - Q + Q^3 = 0`` in the plane and the resulting
    Gagliardo-Nirenberg constant ``kappa = (2 / ||Q||_2^2)^(1/4)``.

    The mass is recomputed at step ``h/2`` and the relative change reported.
    """
    q0, rs, qs, dqs = _townes_profile(h, r_max, tol)
    mass = _radial_mass(rs, qs)
    q0f, rsf, qsf, dqsf = _townes_profile(h / 2.0, r_max, tol)
    mass_fine = _radial_mass(rsf, qsf)
    kappa = (2.0 / mass_fine) ** 0.25
    return {
        "q0": q0f,
        "qMass": mass_fine,
        "kappa": kappa,
        "mass_coarse": mass,
        "refinement_rel_change": abs(mass_fine - mass) / mass_fine,
        "residual_sup": _ode_residual(rsf, qsf, dqsf, h / 2.0),
        "r_stop": float(rsf[-1]),
        "step": h / 2.0,
    }


# ---------------------------------------------------------------------------
# lower bounds on kappa and certificates


def _require_critical(params: HurstParams):
    rep = classify(params)
    if rep.skorohod is not Skorohod.CRITICAL:
        raise ValueError(f"requires the critical regime, got {rep.skorohod.value}")


@dataclass(frozen=True)
class KappaBound:
    kappa_lb: float
    R: float
    best_trial: TrialFunction
    converged: bool
    evaluations: int

    def as_dict(self) -> dict:
        return {"kappa_lb": self.kappa_lb, "R": self.R, "best_trial": self.best_trial.as_dict(),
                "converged": self.converged, "evaluations": self.evaluations}


def kappa_lower_bound(params: HurstParams, family: str = "gaussian", max_iter: int = 400,
                      xatol: float = 1e-10) -> KappaBound:
    """Maximize ``R(g)`` over Gaussian trials; returns ``R^(1/4) <= kappa``.

    In the critical regime ``R`` is invariant under a common rescaling of the
    widths, so the first width is pinned to 1 and the search runs over the
    log-ratios of the others (and over ``tau`` for the time-modulated family).
    """
    _require_critical(params)
    d = params.d
    modulated = family == "time-modulated"
    if family not in ("gaussian", "time-modulated"):
        raise ValueError(f"unknown trial family {family!r}")

    def build(x):
        sig = np.concatenate([[1.0], np.exp(x[: d - 1])])
        tau = float(x[d - 1]) if modulated else 0.0
        return gaussian_trial(sig, tau)

    def objective(x):
        return -rayleigh_quotient(build(x), params)

    x0 = np.zeros(d - 1 + (1 if modulated else 0))
    if x0.size == 0:
        tr = build(x0)
        R = rayleigh_quotient(tr, params)
        return KappaBound(R**0.25, R, tr, True, 1)
    res = optimize.minimize(objective, x0, method="Nelder-Mead",
                            options={"xatol": xatol, "fatol": 1e-14, "maxiter": max_iter})
    tr = build(res.x)
    R = -float(res.fun)
    return KappaBound(R**0.25, R, tr, bool(res.success), int(res.nfev))


@dataclass(frozen=True)
class CertificateReport:
    t: float
    p: float
    trial: TrialFunction
    numerator: float
    gradient_energy: float
    margin: float
    certified: bool
    t_cert: float = field(default=float("nan"))

    def as_dict(self) -> dict:
        return {"t": self.t, "p": self.p, "trial": self.trial.as_dict(), "numerator": self.numerator,
                "gradient_energy": self.gradient_energy, "margin": self.margin,
                "certified": self.certified, "t_cert": self.t_cert}


def certificate_time(trial: TrialFunction, p: float, params: HurstParams) -> float:
    """Zero-margin time ``((p - 1) R)^(-1/(2 h0 - 1))``."""
    R = rayleigh_quotient(trial, params)
    return ((p - 1.0) * R) ** (-1.0 / (2.0 * params.h0f - 1.0))


def blowup_certificate(t: float, p: float, trial: TrialFunction, params: HurstParams) -> CertificateReport:
    """Evaluate the variational margin with the optimal multiple of ``conj(F~ g^2)``.

    Maximizing ``theta N - theta^2 N / (2 t^(2h0-1) (p-1))`` over theta gives
    ``(p - 1) t^(2h0-1) N / 2``; a positive margin witnesses blowup of the
    p-th moment at time t.
    """
    if not p > 1:
        raise ValueError("certificate needs p > 1")
    if t < 0:
        raise ValueError("t must be nonnegative")
    _require_critical(params)
    _check_dims(trial, params)
    num = trial_numerator(trial, params)
    grad = gradient_energy(trial)
    margin = 0.5 * (p - 1.0) * t ** (2.0 * params.h0f - 1.0) * num - 0.5 * grad
    t_cert = ((p - 1.0) * num / grad) ** (-1.0 / (2.0 * params.h0f - 1.0))
    return CertificateReport(float(t), float(p), trial, num, grad, margin, margin > 0, t_cert)


# ---------------------------------------------------------------------------
# Feynman-Kac asymptotics for a finite trigonometric potential


def _potential(atoms, s, x):
    """``f(s, x) = sum_k w_k cos(lam_k s + xi_k . x)``; x has shape (..., d)."""
    out = 0.0
    for w, lam, xi in atoms:
        out = out + w * np.cos(lam * s + x @ np.asarray(xi, dtype=float))
    return out


def _normalize_atoms(atoms, d):
    norm = []
    for w, lam, xi in atoms:
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        if xi.shape != (d,):
            raise ValueError("atom frequency has the wrong dimension")
        norm.append((float(w), float(lam), xi))
    return norm


def _gaussian_lb(atoms, theta, sigma):
    sig = np.asarray(sigma)
    gain = 0.0
    for w, lam, xi in atoms:
        time_avg = 1.0 if lam == 0 else math.sin(lam) / lam
        gain += w * time_avg * math.exp(-0.5 * float(np.sum(sig**2 * xi**2)))
    return theta * gain - 0.5 * float(np.sum(0.25 / sig**2))


def fk_asymptotics(atoms, theta: float, b_list, d: int, paths: int = 2000, steps_per_unit: int = 32,
                   seed: int = 0, workers: int = 1) -> dict:
    """Monte Carlo ``(1/b) log E exp(theta int_0^b f(s/b, B_s) ds)`` next to the
    best Gaussian-trial value of ``theta int f g^2 - 1/2 int |grad g|^2``.

    ``atoms`` is a list of ``(w, lam, xi)`` defining a real trigonometric
    potential.  No convergence in b is claimed.
    """
    atoms = _normalize_atoms(atoms, d)
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    curve = {}
    for b in b_list:
        b = float(b)
        if theta == 0:
            curve[b] = {"value": 0.0, "stderr": 0.0, "stable": True}
            continue
        m = max(2, int(math.ceil(steps_per_unit * b)))
        s = np.linspace(0.0, b, m + 1)
        w = np.full(m + 1, b / m)
        w[0] = w[-1] = 0.5 * b / m

        def block(i, b=b, m=m, s=s, w=w):
            lo, hi = _streams.block_ranges(paths, 256)[i]
            rng_vals = []
            for k in range(lo, hi):
                rng = _streams.substream(seed, _streams.AUX, k)
                pos = np.zeros((m + 1, d))
                np.cumsum(rng.standard_normal((m, d)) * math.sqrt(b / m), axis=0, out=pos[1:])
                rng_vals.append(theta * float(_potential(atoms, s / b, pos) @ w))
            return np.array(rng_vals)

        n_blocks = len(_streams.block_ranges(paths, 256))
        expo = np.concatenate(_streams.map_blocks(block, n_blocks, workers))
        top = float(np.max(expo))
        ratios = np.exp(expo - top)
        mean = float(np.mean(ratios))
        se = float(np.std(ratios, ddof=1) / math.sqrt(ratios.size))
        value = (top + math.log(mean)) / b
        curve[b] = {"value": value, "stderr": se / mean / b,
                    "stable": bool(np.sort(ratios)[-max(1, ratios.size // 100):].sum() <= 0.5 * ratios.sum())}

    # Gaussian-trial lower bound, optimized over log widths
    if theta == 0:
        lb, best = 0.0, None
    else:
        # flat directions (zero frequencies) would let the widths run off to infinity
        obj = lambda x: -_gaussian_lb(atoms, theta, np.exp(np.clip(x, -30.0, 30.0)))
        starts = [np.full(d, v) for v in (-1.0, 0.0, 1.0, 2.0)]
        best_res = min((optimize.minimize(obj, x0, method="Nelder-Mead",
                                          options={"xatol": 1e-9, "fatol": 1e-13, "maxiter": 4000})
                        for x0 in starts), key=lambda r: r.fun)
        lb, best = -float(best_res.fun), np.exp(np.clip(best_res.x, -30.0, 30.0)).tolist()
    return {"mc_curve": curve, "variational_lb": lb, "best_sigma": best}
