import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import integrate, stats

from coarsepoint.optical_channel import LinkBudget, attenuation_gain, fading_cdf_quad
from coarsepoint.outage import (
    MonteCarlo,
    Quadrature,
    channel_at_distance,
    conditional_outage,
    distance_sweep,
    divergence_sweep,
    outage_probability,
)
from conftest import make_channel

GRID = np.geomspace(2e-4, 0.1, 61)


def test_lognormal_conditional_matches_analytic_and_quadrature():
    ch = make_channel(model="lognormal")
    for r in (0.0, 1.0, 3.0, 6.0):
        c = ch.fading_threshold(r)
        phi = stats.norm.cdf((math.log(c) + 2 * 0.09) / 0.6)
        assert conditional_outage(ch, r) == pytest.approx(phi, rel=1e-12)
        assert conditional_outage(ch, r) == pytest.approx(fading_cdf_quad(ch.fading, c), rel=1e-8)


def test_threshold_definition():
    ch = make_channel()
    p = ch.pointing
    r = 2.0
    hp = p.a0 * math.exp(-2 * r**2 / p.beamwidth**2)
    c = 1e-6 / (attenuation_gain(ch.attenuation) * hp * 0.5 * 1.0)
    assert ch.fading_threshold(r) == pytest.approx(c, rel=1e-12)


@pytest.mark.parametrize("model", ["lognormal", "gammagamma"])
def test_conditional_outage_monotone(model):
    ch = make_channel(model=model)
    f = conditional_outage(ch, np.linspace(0, 40, 200))
    assert np.all(np.diff(f) >= 0)
    assert conditional_outage(ch, 0.0) <= conditional_outage(ch, ch.pointing.beamwidth)


def test_conditional_outage_rises_with_threshold():
    vals = [conditional_outage(make_channel(budget=LinkBudget(1.0, pth, 0.5)), 1.0) for pth in np.geomspace(1e-8, 1, 9)]
    assert np.all(np.diff(vals) >= 0)
    assert vals[-1] == pytest.approx(1.0, abs=1e-9)


def _oracle_outage(ch):
    # independent route: integrate over r directly with the Rayleigh density
    s = ch.pointing.displacement_std
    f = lambda r: float(conditional_outage(ch, r)) * r / s**2 * math.exp(-r * r / (2 * s * s))
    edges = s * np.array([0, 1, 2, 3, 4, 6, 9, 14, 40])
    return sum(integrate.quad(f, a, b, epsabs=0, epsrel=1e-11, limit=200)[0] for a, b in zip(edges[:-1], edges[1:]))


@pytest.mark.parametrize("model", ["lognormal", "gammagamma"])
def test_quadrature_matches_direct_integral(model):
    for theta in (3e-3, 1e-2, 3e-2):
        ch = make_channel(model=model, theta=theta)
        assert outage_probability(ch, Quadrature(1e-9)).probability == pytest.approx(_oracle_outage(ch), rel=1e-7)


def test_monte_carlo_matches_quadrature():
    ch = make_channel(model="gammagamma", distance=1000.0, theta=0.01)
    mc = outage_probability(ch, MonteCarlo(400_000, 3))
    q = outage_probability(ch, Quadrature()).probability
    assert mc.method == "montecarlo"
    assert abs(mc.probability - q) < 3 * mc.stderr


def test_monte_carlo_reproducible_and_keyed():
    ch = make_channel(model="lognormal", theta=3e-3)
    a = outage_probability(ch, MonteCarlo(50_000, 7))
    b = outage_probability(ch, MonteCarlo(50_000, 7))
    c = outage_probability(ch, MonteCarlo(50_000, 7), key=(1,))
    assert a == b
    assert a != c


def test_limits():
    ch = make_channel(model="gammagamma")
    falling = [outage_probability(replace(ch, budget=LinkBudget(pt, 1e-6, 0.5)), Quadrature()).probability
               for pt in (1.0, 1e3, 1e6, 1e9)]
    assert all(b < a for a, b in zip(falling, falling[1:]))
    assert falling[-1] < 1e-9
    assert outage_probability(replace(ch, budget=LinkBudget(1.0, 1e3, 0.5)), Quadrature()).probability == pytest.approx(1.0)


def test_monotone_in_power_threshold_and_jitter():
    ch = make_channel(model="lognormal", theta=5e-3)
    q = Quadrature()
    p_tx = [outage_probability(replace(ch, budget=LinkBudget(pt, 1e-6, 0.5)), q).probability for pt in (0.1, 0.3, 1, 3)]
    p_th = [outage_probability(replace(ch, budget=LinkBudget(1, pth, 0.5)), q).probability for pth in (1e-7, 1e-6, 1e-5)]
    p_jit = [
        outage_probability(replace(ch, pointing=replace(ch.pointing, jitter_std=j)), q).probability
        for j in (1e-3, 2e-3, 4e-3)
    ]
    assert np.all(np.diff(p_tx) <= 0)
    assert np.all(np.diff(p_th) >= 0)
    assert np.all(np.diff(p_jit) >= 0)


def test_zero_displacement_quadrature():
    ch = make_channel(sigma_est=0.0, jitter=0.0)
    assert outage_probability(ch, Quadrature()).probability == pytest.approx(float(conditional_outage(ch, 0.0)))


def test_divergence_sweep_u_shape_and_ordering():
    base = make_channel(distance=1000.0, visibility=10e3)
    gps = divergence_sweep(base.with_estimation_std(5e-3), GRID, Quadrature())
    prop = divergence_sweep(base.with_estimation_std(2e-4), GRID, Quadrature())
    for c in (gps, prop):
        assert c.interior_minimum
        assert all(0 <= p <= 1 for p in c.outage)
        assert c.min_outage == min(c.outage)
        assert c.divergence_grid[c.argmin_index] == c.argmin_divergence
    assert prop.argmin_divergence <= gps.argmin_divergence
    assert prop.min_outage < gps.min_outage
    # at the GPS-only optimum the smaller estimation error still wins
    at = base.with_divergence(gps.argmin_divergence)
    assert outage_probability(at.with_estimation_std(2e-4), Quadrature()).probability < gps.min_outage


def test_divergence_sweep_rows_and_validation():
    curve = divergence_sweep(make_channel(), [1e-3, 1e-2], Quadrature())
    rows = list(curve.rows())
    assert list(rows[0]) == ["theta_div_rad", "p_out", "stderr", "method"]
    with pytest.raises(ValueError):
        divergence_sweep(make_channel(), [1e-2, 1e-3], Quadrature())
    with pytest.raises(ValueError):
        divergence_sweep(make_channel(), [], Quadrature())


def test_distance_invariance_without_attenuation():
    base = make_channel(distance=1000.0, model="gammagamma", center_gain=0.01)
    base = replace(base, attenuation=replace(base.attenuation, attenuation_coeff=0.0))
    p1 = outage_probability(base, Quadrature()).probability
    p2 = outage_probability(channel_at_distance(base, 2000.0), Quadrature()).probability
    p4 = outage_probability(channel_at_distance(base, 4000.0), Quadrature()).probability
    assert p2 == pytest.approx(p1, rel=1e-8)
    assert p4 == pytest.approx(p1, rel=1e-8)


def test_distance_sweep_reduction_shrinks():
    base = make_channel(visibility=3e3)
    rows = distance_sweep(
        base, [1000.0, 2000.0, 4000.0], GRID, Quadrature(1e-7),
        proposed_std=lambda d: 0.2e-3 * d / 1000.0, gps_std=lambda d: 5.0 / d,
    )
    factors = [r.reduction_factor for r in rows]
    assert factors[0] > 10
    assert all(b <= a for a, b in zip(factors, factors[1:]))
    with pytest.raises(ValueError):
        distance_sweep(base, [2000.0, 1000.0], GRID, Quadrature(), lambda d: 1e-3, lambda d: 1e-3)


def test_method_validation():
    with pytest.raises(ValueError):
        MonteCarlo(0, 1)
    with pytest.raises(ValueError):
        Quadrature(0.0)
