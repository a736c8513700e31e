"""FSO channel: Beer-Lambert attenuation, turbulence fading, pointing loss.

Received power is ``P_R = h_l * h_a * h_p * R * P_T``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import integrate, special


class FadingModel(str, enum.Enum):
    LOGNORMAL = "lognormal"
    GAMMAGAMMA = "gammagamma"
    NONE = "none"  # h_a == 1, for deterministic checks


def kim_attenuation_coeff(visibility: float, wavelength: float = 1550e-9) -> float:
    """Kim-model extinction coefficient in 1/m from visibility (m) and wavelength (m)."""
    if not visibility > 0:
        raise ValueError(f"visibility must be positive, got {visibility}")
    v_km = visibility / 1000.0
    if v_km > 50:
        q = 1.6
    elif v_km > 6:
        q = 1.3
    elif v_km > 1:
        q = 0.16 * v_km + 0.34
    elif v_km > 0.5:
        q = v_km - 0.5
    else:
        q = 0.0
    per_km = 3.91 / v_km * (wavelength / 550e-9) ** (-q)
    return per_km / 1000.0


@dataclass(frozen=True)
class AttenuationParams:
    """Either ``attenuation_coeff`` (1/m) or ``visibility`` (m) must be given."""

    link_distance: float
    attenuation_coeff: Optional[float] = None
    visibility: Optional[float] = None
    wavelength: float = 1550e-9

    def __post_init__(self):
        if not self.link_distance >= 0:
            raise ValueError(f"link_distance must be >= 0, got {self.link_distance}")
        if self.attenuation_coeff is None:
            if self.visibility is None:
                raise ValueError("need attenuation_coeff or visibility")
            object.__setattr__(self, "attenuation_coeff", kim_attenuation_coeff(self.visibility, self.wavelength))
        if not self.attenuation_coeff >= 0:
            raise ValueError(f"attenuation_coeff must be >= 0, got {self.attenuation_coeff}")


def attenuation_gain(p: AttenuationParams) -> float:
    return math.exp(-p.attenuation_coeff * p.link_distance)


@dataclass(frozen=True)
class FadingParams:
    model: FadingModel
    log_amp_std: float = 0.3
    alpha: float = 8.05
    beta: float = 1.03

    def __post_init__(self):
        object.__setattr__(self, "model", FadingModel(self.model))
        if self.model is FadingModel.LOGNORMAL and not self.log_amp_std > 0:
            raise ValueError("log_amp_std must be > 0")
        if self.model is FadingModel.GAMMAGAMMA and not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be > 0")


def _check_positive(h) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if np.any(~(h > 0)):
        raise ValueError("fading gain must be positive")
    return h


def _gg_log_pdf(alpha: float, beta: float, h: np.ndarray) -> np.ndarray:
    ab = alpha * beta
    x = 2 * np.sqrt(ab * h)
    # kve(v, x) = K_v(x) e^x keeps the Bessel term finite for large x
    with np.errstate(divide="ignore", invalid="ignore"):
        log_k = np.where(
            x < 1e8,
            np.log(special.kve(alpha - beta, np.minimum(x, 1e8))) - x,
            0.5 * np.log(np.pi / (2 * x)) - x,
        )
    return (
        math.log(2.0)
        + 0.5 * (alpha + beta) * math.log(ab)
        - special.gammaln(alpha)
        - special.gammaln(beta)
        + (0.5 * (alpha + beta) - 1) * np.log(h)
        + log_k
    )


def fading_pdf(p: FadingParams, h_a):
    """Density of the fading gain; ``h_a`` must be positive (scalar or array)."""
    h = _check_positive(h_a)
    if p.model is FadingModel.NONE:
        raise ValueError("the 'none' fading model is a point mass and has no density")
    if p.model is FadingModel.LOGNORMAL:
        s = p.log_amp_std
        out = np.exp(-((np.log(h) + 2 * s**2) ** 2) / (8 * s**2)) / (2 * h * math.sqrt(2 * math.pi * s**2))
    else:
        out = np.exp(_gg_log_pdf(p.alpha, p.beta, h))
    return out if out.ndim else float(out)


# beyond a*b*c = 1e12 the survival is below exp(-2e6); the CDF is exactly 1.0
_GG_CDF_CAP = 1e12


def _gg_cdf(alpha: float, beta: float, c: np.ndarray, block: int = 2048) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.size <= block:
        return _gg_cdf_block(alpha, beta, c)
    flat = c.ravel()
    out = np.concatenate([_gg_cdf_block(alpha, beta, flat[i : i + block]) for i in range(0, flat.size, block)])
    return out.reshape(c.shape)


def _gg_cdf_block(alpha: float, beta: float, c: np.ndarray) -> np.ndarray:
    # h_a = X Y with X ~ Gamma(a, 1/a), Y ~ Gamma(b, 1/b). Conditioning on
    # t = a X gives F(c) = E_t[P(b, a b c / t)], integrated by the trapezoid
    # rule in u = ln t, which converges geometrically for this integrand.
    a, b = max(alpha, beta), min(alpha, beta)
    c = np.asarray(c, dtype=float)
    saturated = c > _GG_CDF_CAP / (a * b)
    c = np.where(saturated, 0.0, c)
    pos = c[c > 0]
    if pos.size == 0:
        return np.where(saturated, 1.0, 0.0)
    log_abc = np.log(a * b * pos)
    u_lo = min(log_abc.min(), math.log(a)) - 40.0 / a - 5.0
    u_hi = math.log(a + 60.0 + 12.0 * math.sqrt(a) + 10.0 * math.sqrt(a * b * pos.max()))
    # both factors of the integrand are at least ~1/sqrt(a) wide in u
    step = 0.2 / math.sqrt(max(a, 1.0))
    u = np.arange(u_lo, u_hi + step, step)
    weight = np.exp(a * u - np.exp(u) - special.gammaln(a)) * step
    with np.errstate(over="ignore"):
        arg = a * b * np.maximum(c, 0.0)[..., None] * np.exp(-u)
    lower = special.gammainc(b, arg) @ weight
    upper = special.gammaincc(b, arg) @ weight
    return np.where(saturated, 1.0, np.where(lower < 0.5, lower, 1.0 - upper))


def fading_cdf(p: FadingParams, h_a):
    """``Prob[fading gain < h_a]``; accepts zero and ``inf`` as limits."""
    h = np.asarray(h_a, dtype=float)
    if np.any(h < 0):
        raise ValueError("fading threshold must be >= 0")
    with np.errstate(divide="ignore"):
        if p.model is FadingModel.NONE:
            out = (h > 1.0).astype(float)
        elif p.model is FadingModel.LOGNORMAL:
            s = p.log_amp_std
            out = special.ndtr((np.log(h) + 2 * s**2) / (2 * s))
        else:
            out = _gg_cdf(p.alpha, p.beta, np.where(np.isfinite(h), h, 0.0))
            out = np.where(np.isinf(h), 1.0, np.where(h == 0, 0.0, out))
    return out if out.ndim else float(out)


def fading_cdf_quad(p: FadingParams, h_a: float, rel_tol: float = 1e-10) -> float:
    """``Prob[fading gain < h_a]`` by adaptive quadrature of :func:`fading_pdf`.

    Integrates in ``u = ln h`` and switches to the upper tail above the
    median so neither branch suffers cancellation.
    """
    if h_a <= 0:
        return 0.0
    if math.isinf(h_a):
        return 1.0
    if p.model is FadingModel.NONE:
        return float(h_a > 1.0)

    def integrand(u):
        if u > 40.0:  # both densities are 0 to double precision here
            return 0.0
        h = math.exp(u)
        return fading_pdf(p, h) * h if h > 0 else 0.0

    log_c = math.log(h_a)
    # the lower tail decays like h^min(alpha, beta) (GG) or faster (LN)
    span = 40.0 if p.model is FadingModel.LOGNORMAL else 40.0 / min(1.0, p.alpha, p.beta)
    lower, _ = integrate.quad(integrand, log_c - span, log_c, epsabs=0, epsrel=rel_tol, limit=200)
    if lower < 0.5:
        return lower
    upper, _ = integrate.quad(integrand, log_c, np.inf, epsabs=0, epsrel=rel_tol, limit=200)
    return 1.0 - upper


def fading_sample(p: FadingParams, rng: np.random.Generator, size=None):
    if p.model is FadingModel.NONE:
        return np.ones(size) if size is not None else 1.0
    if p.model is FadingModel.LOGNORMAL:
        s = p.log_amp_std
        return np.exp(rng.normal(-2 * s**2, 2 * s, size))
    return rng.gamma(p.alpha, 1 / p.alpha, size) * rng.gamma(p.beta, 1 / p.beta, size)


@dataclass(frozen=True)
class PointingParams:
    """Beam geometry and angular error budget.

    ``center_gain`` (A_0) is taken as given when set; otherwise it follows from
    ``receiver_radius`` for a Gaussian beam on a circular aperture.
    """

    beam_divergence: float
    link_distance: float
    jitter_std: float
    estimation_std: float
    center_gain: Optional[float] = None
    receiver_radius: Optional[float] = None

    def __post_init__(self):
        if not (self.beam_divergence > 0 and self.link_distance > 0):
            raise ValueError("beam_divergence and link_distance must be > 0")
        if not (self.jitter_std >= 0 and self.estimation_std >= 0):
            raise ValueError("angular error stds must be >= 0")
        if self.center_gain is None and self.receiver_radius is None:
            raise ValueError("need center_gain or receiver_radius")
        if self.center_gain is not None and not 0 < self.center_gain <= 1:
            raise ValueError(f"center_gain must be in (0, 1], got {self.center_gain}")
        if self.receiver_radius is not None and not self.receiver_radius > 0:
            raise ValueError("receiver_radius must be > 0")

    @property
    def beamwidth(self) -> float:
        return self.link_distance * self.beam_divergence

    @property
    def displacement_std(self) -> float:
        return self.link_distance * math.hypot(self.estimation_std, self.jitter_std)

    @property
    def a0(self) -> float:
        if self.center_gain is not None:
            return self.center_gain
        return aperture_center_gain(self.receiver_radius, self.beamwidth)

    def with_divergence(self, beam_divergence: float) -> "PointingParams":
        return replace(self, beam_divergence=beam_divergence)


def aperture_center_gain(receiver_radius: float, beamwidth: float) -> float:
    """Fraction of a Gaussian beam collected by a centered circular aperture, ``erf(v)^2``."""
    v = math.sqrt(math.pi / 2) * receiver_radius / beamwidth
    return math.erf(v) ** 2


def displacement_sample(p: PointingParams, rng: np.random.Generator, size=None):
    sigma = p.displacement_std
    if not sigma > 0:
        raise ValueError("displacement std must be > 0")
    return rng.rayleigh(sigma, size)


def pointing_gain(p: PointingParams, r):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("displacement must be >= 0")
    out = p.a0 * np.exp(-2 * r**2 / p.beamwidth**2)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class LinkBudget:
    tx_power: float = 1.0
    threshold_power: float = 1e-6
    responsivity: float = 0.5

    def __post_init__(self):
        if not (self.tx_power > 0 and self.threshold_power > 0 and self.responsivity > 0):
            raise ValueError("link budget terms must be positive")


def received_power(budget: LinkBudget, h_l, h_a, h_p):
    if np.any(np.asarray(h_l) < 0) or np.any(np.asarray(h_a) < 0) or np.any(np.asarray(h_p) < 0):
        raise ValueError("channel gains must be >= 0")
    return h_l * h_a * h_p * budget.responsivity * budget.tx_power
