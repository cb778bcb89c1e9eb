"""Spectral measures of fractional Gaussian noise.

The noise has covariance ``gamma0(t - s) * prod_j gamma_j(x_j - y_j)`` with
Fourier representation through the measures

    mu0(dl) = c0 |l|^(1 - 2 h0) dl,     mu(dxi) = prod_j c_j |xi_j|^(1 - 2 h_j) dxi_j

and ``c_h = Gamma(2h + 1) sin(pi h) / (2 pi) = 1 / alpha_h``.  Mollification
multiplies the density by ``exp(-eps_time l^2 - eps_space |xi|^2)``.

``h0 == 1`` encodes a time-independent noise: ``gamma0 == 1`` and ``mu0`` is
the unit point mass at the origin.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Sequence

import numpy as np
from scipy import integrate, special

__all__ = [
    "HurstParams",
    "MollifiedSpectralMeasure",
    "SpectralSample",
    "alpha_h",
    "fbm_spectral_constant",
    "spectral_mass",
    "sample_spectral",
    "covariance_gamma",
    "covariance_gamma0",
    "mollified_gamma0",
    "mollified_space_factor",
    "to_number",
]


def to_number(value) -> float | Fraction:
    """Parse ``value`` into a Fraction when it is exactly rational, else a float.

    Strings such as ``"1/2"`` or ``"0.75"`` become Fractions; Python floats are
    kept as floats (their rational value is not what the user typed).
    """
    if isinstance(value, bool):
        raise TypeError("booleans are not Hurst indices")
    if isinstance(value, Rational):
        return Fraction(value)
    if isinstance(value, str):
        text = value.strip()
        try:
            return Fraction(text)
        except ValueError as exc:
            raise ValueError(f"cannot parse number {value!r}") from exc
    return float(value)


@dataclass(frozen=True)
class HurstParams:
    """Hurst indices ``(h0, h_1, ..., h_d)`` of the driving noise.

    ``h0`` lies in (0, 1], the value 1 meaning a time-independent noise.
    Each spatial index lies in (0, 1).  Entries may be Fractions, which makes
    regime boundaries decidable exactly.
    """

    h0: float | Fraction
    h: tuple = field(default_factory=tuple)

    def __post_init__(self):
        h0 = to_number(self.h0)
        h = tuple(to_number(v) for v in self.h)
        if not 0 < h0 <= 1:
            raise ValueError(f"h0 must lie in (0, 1], got {h0}")
        if not h:
            raise ValueError("at least one spatial Hurst index is required")
        for j, hj in enumerate(h, start=1):
            if not 0 < hj < 1:
                raise ValueError(f"h_{j} must lie in (0, 1), got {hj}")
        object.__setattr__(self, "h0", h0)
        object.__setattr__(self, "h", h)

    @property
    def d(self) -> int:
        return len(self.h)

    @property
    def exact(self) -> bool:
        """True when every index is a Fraction."""
        return isinstance(self.h0, Fraction) and all(isinstance(v, Fraction) for v in self.h)

    @property
    def h_sum(self):
        return sum(self.h, Fraction(0) if self.exact else 0.0)

    @property
    def d_star(self) -> int:
        return sum(1 for v in self.h if v < Fraction(1, 2))

    @property
    def h_star(self):
        zero = Fraction(0) if self.exact else 0.0
        return sum((v for v in self.h if v < Fraction(1, 2)), zero)

    @property
    def time_independent(self) -> bool:
        return self.h0 == 1

    @property
    def h0f(self) -> float:
        return float(self.h0)

    @property
    def hf(self) -> np.ndarray:
        return np.array([float(v) for v in self.h])

    def permuted(self, order: Sequence[int]) -> "HurstParams":
        return HurstParams(self.h0, tuple(self.h[i] for i in order))

    def as_dict(self) -> dict:
        return {"h0": _fmt(self.h0), "h": [_fmt(v) for v in self.h]}


def _fmt(v):
    if isinstance(v, Fraction):
        return str(v)
    return repr(float(v))


def _check_h(h: float) -> float:
    h = float(h)
    if not 0.0 < h < 1.0:
        raise ValueError(f"Hurst index must lie in (0, 1), got {h}")
    return h


def _one_minus_cos_over_sq(x):
    # (1 - cos x) / x^2, smooth at 0
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    xs = np.where(small, 1.0, x)
    out = (1.0 - np.cos(xs)) / xs**2
    x2 = x * x
    series = 0.5 - x2 / 24.0 + x2 * x2 / 720.0
    return np.where(small, series, out)


def alpha_h(h: float, epsrel: float = 1e-12) -> float:
    """Quadrature value of ``int |e^{i x} - 1|^2 / |x|^(2h + 1) dx``.

    The integrand equals ``2 (1 - cos x) |x|^(-2h - 1)``.  On (0, 1] it is
    integrated against the algebraic weight ``x^(1 - 2h)``; on [1, inf) the
    ``x^(-2h - 1)`` part is exact (``1 / 2h``) and the cosine part goes to a
    Fourier-weight rule.
    """
    h = _check_h(h)
    near, _ = integrate.quad(
        _one_minus_cos_over_sq, 0.0, 1.0, weight="alg", wvar=(1.0 - 2.0 * h, 0.0),
        epsabs=0.0, epsrel=epsrel, limit=200,
    )
    with warnings.catch_warnings():
        # QAWF flags slow cycle convergence for h near 0; the result is still accurate
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        osc, _ = integrate.quad(
            lambda x: x ** (-2.0 * h - 1.0), 1.0, np.inf, weight="cos", wvar=1.0,
            epsabs=1e-15, limlst=200,
        )
    far = 1.0 / (2.0 * h) - osc
    return 4.0 * (near + far)


def fbm_spectral_constant(h: float) -> float:
    """``c_h = Gamma(2h + 1) sin(pi h) / (2 pi)``, the reciprocal of alpha_h."""
    h = _check_h(h)
    return math.gamma(2.0 * h + 1.0) * math.sin(math.pi * h) / (2.0 * math.pi)


@dataclass(frozen=True)
class MollifiedSpectralMeasure:
    """``mu0^{eps_time} (x) mu^{eps_space}`` with explicit constants."""

    params: HurstParams
    eps_time: float
    eps_space: float
    c0: float
    cH: tuple

    @classmethod
    def from_params(cls, params: HurstParams, eps_time: float, eps_space: float):
        if eps_time < 0 or eps_space < 0:
            raise ValueError("mollification parameters must be nonnegative")
        c0 = 1.0 if params.time_independent else fbm_spectral_constant(params.h0f)
        cH = tuple(fbm_spectral_constant(float(v)) for v in params.h)
        return cls(params, float(eps_time), float(eps_space), c0, cH)

    def time_density(self, lam):
        if self.params.time_independent:
            raise ValueError("time-independent noise: mu0 is a point mass")
        lam = np.abs(np.asarray(lam, dtype=float))
        return self.c0 * lam ** (1.0 - 2.0 * self.params.h0f) * np.exp(-self.eps_time * lam**2)

    def space_density(self, xi):
        xi = np.atleast_2d(np.abs(np.asarray(xi, dtype=float)))
        hs = self.params.hf
        dens = np.prod(np.asarray(self.cH) * xi ** (1.0 - 2.0 * hs), axis=-1)
        return dens * np.exp(-self.eps_space * np.sum(xi**2, axis=-1))

    def density(self, lam, xi):
        return self.time_density(lam) * self.space_density(xi)


@dataclass
class SpectralSample:
    """Draws from the self-normalized mollified measure.

    ``lam`` has shape (K,), ``xi`` shape (K, d); ``weight`` is the total mass,
    so ``weight * mean(f(lam, xi))`` estimates ``int f d(mu0 x mu)``.
    """

    lam: np.ndarray
    xi: np.ndarray
    weight: float

    def __len__(self):
        return self.lam.shape[0]


def _one_dim_mass(c: float, h: float, eps: float) -> float:
    # 2 int_0^inf r^(1-2h) e^(-eps r^2) dr = Gamma(1-h) eps^(h-1)
    return c * math.gamma(1.0 - h) * eps ** (h - 1.0)


def spectral_mass(m: MollifiedSpectralMeasure) -> float:
    """Total mass ``c0 Gamma(1-h0) eps0^(h0-1) prod_j c_j Gamma(1-h_j) eps^(h_j-1)``."""
    if m.eps_space <= 0 or (m.eps_time <= 0 and not m.params.time_independent):
        raise ValueError("spectral mass is infinite without mollification")
    mass = 1.0 if m.params.time_independent else _one_dim_mass(m.c0, m.params.h0f, m.eps_time)
    for c, h in zip(m.cH, m.params.hf):
        mass *= _one_dim_mass(c, h, m.eps_space)
    return mass


def standard_spectral_draws(params: HurstParams, rng: np.random.Generator, size: int):
    """Unit-rate gamma variates and random signs, before scaling by 1/eps.

    Kept separate so sweeps over eps reuse one set of draws.
    """
    d = params.d
    if params.time_independent:
        g0 = np.zeros(size)
    else:
        g0 = rng.standard_gamma(1.0 - params.h0f, size=size)
    gs = rng.standard_gamma(1.0 - params.hf, size=(size, d))
    signs = rng.integers(0, 2, size=(size, d + 1)) * 2 - 1
    return g0, gs, signs


def scale_spectral_draws(m: MollifiedSpectralMeasure, draws) -> SpectralSample:
    g0, gs, signs = draws
    if m.params.time_independent:
        lam = np.zeros_like(g0)
    else:
        lam = signs[:, 0] * np.sqrt(g0 / m.eps_time)
    xi = signs[:, 1:] * np.sqrt(gs / m.eps_space)
    return SpectralSample(lam=lam, xi=xi, weight=spectral_mass(m))


def sample_spectral(m: MollifiedSpectralMeasure, rng: np.random.Generator, size: int = 1) -> SpectralSample:
    """Draw ``size`` points with ``lam^2 ~ Gamma(1 - h0, rate eps_time)`` and
    ``xi_j^2 ~ Gamma(1 - h_j, rate eps_space)``, independent symmetric signs."""
    spectral_mass(m)  # validates mollification
    return scale_spectral_draws(m, standard_spectral_draws(m.params, rng, size))


def covariance_gamma0(u, h0: float):
    """Pointwise time covariance ``h0 (2 h0 - 1) |u|^(2 h0 - 2)``; identically 1 when h0 = 1."""
    h0 = float(h0)
    u = np.asarray(u, dtype=float)
    if h0 == 1.0:
        return np.ones_like(u)
    if not 0.5 < h0 < 1.0:
        raise ValueError("pointwise gamma0 requires h0 > 1/2; use the spectral form")
    if np.any(u == 0):
        raise ValueError("gamma0 is singular at u = 0")
    return h0 * (2.0 * h0 - 1.0) * np.abs(u) ** (2.0 * h0 - 2.0)


def covariance_gamma(x, params: HurstParams):
    """Pointwise space covariance ``prod_j h_j (2 h_j - 1) |x_j|^(2 h_j - 2)``.

    Only defined when every h_j > 1/2; rougher directions have a
    distributional covariance that must be handled through the spectral
    measure.
    """
    hs = params.hf
    if np.any(hs <= 0.5):
        raise ValueError("pointwise covariance needs all h_j > 1/2; use the spectral representation")
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.d:
        raise ValueError(f"expected {params.d} coordinates, got shape {x.shape}")
    if np.any(x == 0):
        raise ValueError("covariance is singular when a coordinate vanishes")
    return np.prod(hs * (2.0 * hs - 1.0) * np.abs(x) ** (2.0 * hs - 2.0), axis=-1)


def mollified_gamma0(v, h0: float, eps0: float):
    """Time covariance of the mollified noise, ``int cos(l v) mu0^{eps0}(dl)``.

    Closed form ``c0 Gamma(1-h0) eps0^(h0-1) 1F1(1-h0; 1/2; -v^2 / (4 eps0))``.
    """
    h0 = float(h0)
    v = np.asarray(v, dtype=float)
    if h0 == 1.0:
        return np.ones_like(v)
    if eps0 <= 0:
        return covariance_gamma0(v, h0)
    c0 = fbm_spectral_constant(h0)
    return c0 * math.gamma(1.0 - h0) * eps0 ** (h0 - 1.0) * special.hyp1f1(1.0 - h0, 0.5, -(v**2) / (4.0 * eps0))


def mollified_space_factor(params: HurstParams, s):
    """``int exp(-s |xi|^2) mu(dxi) = prod_j c_j Gamma(1-h_j) s^(h_j-1)`` for s > 0."""
    s = np.asarray(s, dtype=float)
    out = np.ones_like(s)
    for h in params.hf:
        out = out * fbm_spectral_constant(h) * math.gamma(1.0 - h) * s ** (h - 1.0)
    return out
