"""Coarse-pointing outage probability ``Prob[P_R < P_th]``.

Two independent routes are provided: Monte Carlo over displacement and fading,
and nested quadrature ``P_out = int f_dis(r) F(r) dr`` where ``F(r)`` is the
fading CDF at the threshold implied by displacement ``r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np
from scipy import integrate

from . import _rng
from .optical_channel import (
    AttenuationParams,
    FadingParams,
    LinkBudget,
    PointingParams,
    attenuation_gain,
    displacement_sample,
    fading_cdf,
    fading_sample,
    pointing_gain,
)


@dataclass(frozen=True)
class Channel:
    attenuation: AttenuationParams
    fading: FadingParams
    pointing: PointingParams
    budget: LinkBudget

    def with_divergence(self, beam_divergence: float) -> "Channel":
        return replace(self, pointing=self.pointing.with_divergence(beam_divergence))

    def with_estimation_std(self, estimation_std: float) -> "Channel":
        return replace(self, pointing=replace(self.pointing, estimation_std=estimation_std))

    def fading_threshold(self, r):
        """Smallest fading gain that closes the link at displacement ``r``."""
        b, p = self.budget, self.pointing
        center = b.threshold_power / (attenuation_gain(self.attenuation) * p.a0 * b.responsivity * b.tx_power)
        with np.errstate(over="ignore"):
            return center * np.exp(2 * np.square(r) / p.beamwidth**2)


@dataclass(frozen=True)
class MonteCarlo:
    trials: int
    seed: int

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass(frozen=True)
class Quadrature:
    rel_tol: float = 1e-8

    def __post_init__(self):
        if not 0 < self.rel_tol < 1:
            raise ValueError("rel_tol must be in (0, 1)")


Method = Union[MonteCarlo, Quadrature]


@dataclass(frozen=True)
class OutageResult:
    probability: float
    stderr: float
    method: str


def conditional_outage(channel: Channel, r):
    """Outage probability ``F(r)`` at a fixed beam displacement ``r``."""
    return fading_cdf(channel.fading, channel.fading_threshold(r))


def _monte_carlo(channel: Channel, method: MonteCarlo, key: Sequence[int]) -> OutageResult:
    b = channel.budget
    h_l = attenuation_gain(channel.attenuation)

    def count(rng, n):
        r = displacement_sample(channel.pointing, rng, n)
        h_a = fading_sample(channel.fading, rng, n)
        power = h_l * h_a * pointing_gain(channel.pointing, r) * b.responsivity * b.tx_power
        return int(np.count_nonzero(power < b.threshold_power))

    failures = sum(_rng.map_chunks(count, method.trials, method.seed, key=key))
    p = failures / method.trials
    return OutageResult(p, math.sqrt(p * (1 - p) / method.trials), "montecarlo")


def _quadrature(channel: Channel, method: Quadrature) -> OutageResult:
    sigma = channel.pointing.displacement_std
    # substitute v = r^2 / (2 sigma^2): f_dis(r) dr = e^-v dv
    v_max = math.log(10.0 / method.rel_tol)

    def integrand(v):
        return float(conditional_outage(channel, sigma * math.sqrt(2 * v))) * math.exp(-v)

    if sigma == 0:
        return OutageResult(float(conditional_outage(channel, 0.0)), 0.0, "quadrature")
    body, _ = integrate.quad(integrand, 0.0, v_max, epsabs=0, epsrel=method.rel_tol, limit=400)
    # the tail beyond r_max holds at most rel_tol/10 of Rayleigh mass, which
    # is not negligible next to deep outages, so it is integrated as well
    tail, _ = integrate.quad(integrand, v_max, np.inf, epsabs=0, epsrel=method.rel_tol, limit=200)
    return OutageResult(min(1.0, body + tail), 0.0, "quadrature")


def outage_probability(channel: Channel, method: Method, key: Sequence[int] = ()) -> OutageResult:
    """Outage probability by Monte Carlo or quadrature.

    ``key`` extends the Monte Carlo seed so sweep points draw from distinct,
    reproducible streams. Quadrature splits the displacement integral at
    ``r_max = sigma_d sqrt(2 ln(10 / rel_tol))``.
    """
    if isinstance(method, MonteCarlo):
        return _monte_carlo(channel, method, key)
    return _quadrature(channel, method)


@dataclass(frozen=True)
class OutageCurve:
    divergence_grid: tuple
    outage: tuple
    stderr: tuple
    method: str

    @property
    def argmin_index(self) -> int:
        return int(np.argmin(self.outage))

    @property
    def argmin_divergence(self) -> float:
        return self.divergence_grid[self.argmin_index]

    @property
    def min_outage(self) -> float:
        return self.outage[self.argmin_index]

    @property
    def interior_minimum(self) -> bool:
        return 0 < self.argmin_index < len(self.outage) - 1

    def rows(self):
        for theta, p, se in zip(self.divergence_grid, self.outage, self.stderr):
            yield {"theta_div_rad": theta, "p_out": p, "stderr": se, "method": self.method}


def divergence_sweep(channel: Channel, grid: Sequence[float], method: Method, key: Sequence[int] = ()) -> OutageCurve:
    """Outage against beam divergence; the divergence in ``channel`` is ignored.

    When the pointing block derives A_0 from a receiver radius, A_0 follows
    the beamwidth at every grid point.
    """
    grid = [float(g) for g in grid]
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("divergence grid must be nonempty and increasing")
    results = [
        outage_probability(channel.with_divergence(theta), method, key=(*key, i)) for i, theta in enumerate(grid)
    ]
    return OutageCurve(
        divergence_grid=tuple(grid),
        outage=tuple(r.probability for r in results),
        stderr=tuple(r.stderr for r in results),
        method=results[0].method,
    )


@dataclass(frozen=True)
class DistanceRow:
    distance_m: float
    min_outage_proposed: float
    argmin_proposed: float
    min_outage_gps: float
    argmin_gps: float

    @property
    def reduction_factor(self) -> float:
        if self.min_outage_proposed == 0:
            return math.inf
        return self.min_outage_gps / self.min_outage_proposed


def channel_at_distance(channel: Channel, distance: float) -> Channel:
    return replace(
        channel,
        attenuation=replace(channel.attenuation, link_distance=distance),
        pointing=replace(channel.pointing, link_distance=distance),
    )


def distance_sweep(
    channel: Channel,
    distances: Sequence[float],
    grid: Sequence[float],
    method: Method,
    proposed_std,
    gps_std,
) -> list[DistanceRow]:
    """Minimum outage for both angle-error sources at every distance.

    ``proposed_std`` and ``gps_std`` map a distance in meters to an angular
    estimation std in radians.
    """
    distances = [float(d) for d in distances]
    if any(d <= 0 for d in distances) or any(b <= a for a, b in zip(distances, distances[1:])):
        raise ValueError("distances must be positive and increasing")
    rows = []
    for i, d in enumerate(distances):
        base = channel_at_distance(channel, d)
        prop = divergence_sweep(base.with_estimation_std(proposed_std(d)), grid, method, key=(i, 0))
        gps = divergence_sweep(base.with_estimation_std(gps_std(d)), grid, method, key=(i, 1))
        rows.append(DistanceRow(d, prop.min_outage, prop.argmin_divergence, gps.min_outage, gps.argmin_divergence))
    return rows
