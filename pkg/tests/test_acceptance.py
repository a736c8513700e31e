"""Acceptance checks with their runtime budgets.

Each test prints one PASS/FAIL line (visible with ``-v`` or ``-s``) and then
asserts the outcome, so a failure is reported both ways.
"""

import csv
import json
import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate

from coarsepoint.config import load_config
from coarsepoint.estimator import RfBudget, estimation_std_sweep, grid_search_oracle, map_estimate
from coarsepoint.experiments import _policy_channel, main
from coarsepoint.lens_array import (
    ArrayShape,
    LensArrayConfig,
    SignalParams,
    amplitude_matrix,
    amplitude_matrix_derivative,
    select_antennas,
    simulate_observation,
)
from coarsepoint.optical_channel import FadingParams, fading_cdf, fading_pdf, fading_sample
from coarsepoint.outage import MonteCarlo, Quadrature, outage_probability
from coarsepoint.policy import (
    AcquisitionScenario,
    Policy,
    mean_time_re,
    policy_report,
    scenario_estimation_std,
    simulate_algorithm1,
)
from conftest import make_channel

ROOT = Path(__file__).resolve().parents[1]
DEFAULT = ROOT / "configs" / "default.yaml"


@pytest.fixture
def report(capsys):
    """Yield a callback that prints a verdict line and enforces the time budget."""
    start = time.perf_counter()

    def done(name: str, ok: bool, budget: float, detail: str = ""):
        elapsed = time.perf_counter() - start
        in_time = elapsed < budget
        verdict = "PASS" if ok and in_time else "FAIL"
        with capsys.disabled():
            print(f"\n[{verdict}] {name}: {detail} ({elapsed:.1f} s, budget {budget:g} s)")
        assert ok, detail
        assert in_time, f"took {elapsed:.1f} s, budget {budget:g} s"

    return done


def _run_cli(args, out):
    assert main([*args, "--output-dir", str(out)]) == 0
    return out


def test_derivative_matches_finite_differences(report):
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(3, 40))
        cfg = LensArrayConfig(
            n, rng.uniform(0.1, 0.6), rng.uniform(0.005, 0.03), rng.uniform(0.003, 0.02), rng.uniform(0.1, 0.5),
            ArrayShape.ARC if rng.random() < 0.5 else ArrayShape.LINEAR,
        )
        phi = rng.uniform(-0.8, 0.8)
        h = 1e-6
        fd = (amplitude_matrix(cfg, phi + h) - amplitude_matrix(cfg, phi - h)) / (2 * h)
        exact = amplitude_matrix_derivative(cfg, phi)
        scale = np.max(np.abs(exact))
        worst = max(worst, float(np.max(np.abs(fd - exact)) / scale))
    report("derivative vs central differences", worst < 1e-5, 1.0, f"max rel err {worst:.2e}")


def test_closed_form_matches_linearized_grid(report):
    cfg = LensArrayConfig(17, 0.3, 0.019, 0.0107, 0.25)
    rng = np.random.default_rng(202)
    worst = 0.0
    for i in range(100):
        prior = rng.uniform(-0.4, 0.4)
        k = int(rng.integers(2, 18))
        sig = SignalParams(rng.uniform(0.5, 5.0), rng.uniform(-3, 3), rng.uniform(0.02, 0.5),
                           prior + rng.normal(0, 1e-3))
        obs = simulate_observation(cfg, sig, select_antennas(cfg, prior, k), prior, rng.uniform(5e-4, 5e-3),
                                   rng_seed=i)
        est = map_estimate(cfg, obs)
        half = abs(est.correction) + 2e-4
        grid = grid_search_oracle(cfg, obs, half, int(round(2 * half / 1e-6)) + 1, linearized=True)
        worst = max(worst, abs(grid - est.angle))
    report("closed form vs linearized grid search", worst <= 1e-6, 30.0, f"max |diff| {worst:.2e} rad")


def test_estimator_beats_gps_over_distance(report):
    cfg = LensArrayConfig(17, 0.3, 0.019, 0.0107, 0.25)
    rf = RfBudget(300.0, 1000.0, 1.0)
    distances = np.arange(500.0, 10_001.0, 500.0)
    rows = estimation_std_sweep(cfg, distances, 5.0, 10_000, [17, 4], 7, rf)
    bad = []
    for r in rows:
        gps = 5.0 / r.distance_m
        slack = 3 * gps / math.sqrt(2 * r.trials)
        if r.std_proposed_rad > gps + slack:
            bad.append((r.distance_m, r.chain_count))
    at_1km = {r.chain_count: r.std_proposed_rad for r in rows if r.distance_m == 1000.0}
    ratio = at_1km[4] / at_1km[17]
    worst = max(r.std_proposed_rad * r.distance_m / 5.0 for r in rows)
    ok = not bad and ratio <= 2.0
    report("estimator std below GPS, 4 chains near full array", ok, 120.0,
           f"worst proposed/GPS {worst:.3f}, violations {bad}, 4/17 chain ratio at 1 km {ratio:.3f}")


def _ks_bound(samples: np.ndarray, p: FadingParams, points: int = 20_001) -> float:
    # Both CDFs are monotone, so between grid nodes g_i < g_j the gap is at most
    # max(Fn(g_j-) - F(g_i), F(g_j) - Fn(g_i)); the bound is exact up to node spacing.
    x = np.sort(samples)
    g = np.unique(np.quantile(x, np.linspace(0, 1, points)))
    cdf = np.asarray(fading_cdf(p, g))
    n = x.size
    left = np.searchsorted(x, g, side="left") / n
    right = np.searchsorted(x, g, side="right") / n
    gaps = np.concatenate([np.abs(right - cdf), np.abs(left - cdf), left[1:] - cdf[:-1], cdf[1:] - right[:-1]])
    return float(np.max(np.concatenate([gaps, [cdf[0], 1 - cdf[-1]]])))


def test_fading_normalization_and_samplers(report):
    details, ok = [], True
    rng = np.random.default_rng(303)
    for model in ("lognormal", "gammagamma"):
        p = FadingParams(model, log_amp_std=0.3, alpha=8.05, beta=1.03)
        total, _ = integrate.quad(lambda u: fading_pdf(p, math.exp(u)) * math.exp(u), -60, 40,
                                  points=[-2, 0, 2], epsabs=0, epsrel=1e-12, limit=400)
        ks = _ks_bound(fading_sample(p, rng, 1_000_000), p)
        ok &= abs(total - 1) < 1e-6 and ks < 0.005
        details.append(f"{model}: integral-1 {total - 1:+.1e}, KS {ks:.4f}")
    report("fading densities and samplers", ok, 60.0, "; ".join(details))


def test_monte_carlo_matches_quadrature(report):
    rng = np.random.default_rng(404)
    details, ok = [], True
    for i in range(5):
        ch = make_channel(
            distance=rng.uniform(500, 5000), visibility=rng.uniform(2000, 20_000),
            model=["lognormal", "gammagamma"][i % 2], theta=rng.uniform(2e-3, 3e-2),
            sigma_est=rng.uniform(0, 3e-3), jitter=rng.uniform(5e-4, 3e-3),
        )
        q = outage_probability(ch, Quadrature(1e-9)).probability
        mc = outage_probability(ch, MonteCarlo(1_000_000, 500 + i))
        z = abs(mc.probability - q) / mc.stderr if mc.stderr > 0 else math.inf * (mc.probability != q)
        ok &= z <= 3
        details.append(f"{q:.3e}/{mc.probability:.3e} ({z:.2f} SE)")
    report("Monte Carlo vs quadrature outage", ok, 120.0, ", ".join(details))


def test_outage_structure_at_1km(report, tmp_path):
    out = _run_cli(["outage-sweep", str(DEFAULT), "--distance", "1km"], tmp_path / "fig")
    manifest = json.loads((out / "manifest_outage_sweep.json").read_text())
    rows = [r for r in _csv(out / "outage_curves.csv")]
    curves = {}
    for r in rows:
        curves.setdefault(r["sigma_est_source"], []).append((float(r["theta_div_rad"]), float(r["p_out"])))
    checks = {}
    for src, pts in curves.items():
        p = np.array([v for _, v in pts])
        i = int(np.argmin(p))
        checks[src] = (0 < i < p.size - 1 and p[0] > p[i] and p[-1] > p[i], pts[i][0], p[i])
    (u_prop, th_prop, min_prop), (u_gps, th_gps, min_gps) = checks["proposed"], checks["gps"]
    factor = min_gps / min_prop
    ok = (u_prop and u_gps and min_prop < min_gps and th_prop <= th_gps and factor >= 100
          and manifest["rf_budget"]["gain_ref"] == 300.0
          and manifest["assumptions"]["receiver_radius_m"] == 0.1)
    report("outage U-shapes and reduction at 1 km", ok, 180.0,
           f"argmin {th_prop:.2e} vs {th_gps:.2e} rad, minima {min_prop:.2e} vs {min_gps:.2e}, factor {factor:.0f}")


def test_reduction_narrows_with_distance(report, tmp_path):
    out = _run_cli(["outage-sweep", str(DEFAULT), "--distance", "1,2,4,8km"], tmp_path / "dist")
    factors = [float(r["reduction_factor"]) for r in _csv(out / "outage_distance.csv")]
    ok = len(factors) == 4 and all(b <= a for a, b in zip(factors, factors[1:]))
    report("reduction factor nonincreasing in distance", ok, 180.0, ", ".join(f"{f:.3g}" for f in factors))


def test_reestimate_never_slower_without_rotation(report):
    rng = np.random.default_rng(808)
    worst, ok = -math.inf, True
    for i in range(20):
        ch = make_channel(
            distance=rng.uniform(500, 5000), model=["lognormal", "gammagamma"][i % 2],
            theta=rng.uniform(2e-3, 3e-2), sigma_est=rng.uniform(0, 5e-3), visibility=rng.uniform(2000, 20_000),
        )
        rep = policy_report(ch, rng.uniform(1e-3, 0.5), 0.0, [0.0], 20_000, i)
        ok &= rep.mean_time_re <= rep.mean_time_single
        worst = max(worst, rep.mean_time_re / rep.mean_time_single)
    flat = make_channel(distance=3000.0, theta=0.02, sigma_est=0.0, jitter=0.0)
    rep = policy_report(flat, 0.05, 0.0, [0.0], 1000, 0)
    equal = math.isclose(rep.mean_time_re, rep.mean_time_single, rel_tol=1e-12)
    report("re-estimation mean <= single-estimation mean at t_rot = 0", ok and equal, 60.0,
           f"max ratio {worst:.4f}, constant-F ratio {rep.mean_time_re / rep.mean_time_single:.15f}")


def test_policy_regimes(report):
    sc = load_config(DEFAULT).with_overrides(run={"trials": 100_000})
    ch, _ = _policy_channel(sc)
    t_rot = 0.02
    lines, ok = [], True
    for t0, faster in ((1e-3, Policy.SINGLE_ESTIMATE), (0.2, Policy.RE_ESTIMATE)):
        cycle = t0 + t_rot
        # whole re-estimation cycles from the second attempt on
        grid = np.arange(2, 21) * cycle * (1 + 1e-9)
        rep = policy_report(ch, t0, t_rot, grid, sc.trials, sc.seed)
        re, single = (np.array(t.p_not_connected) for t in rep.tails)
        lo, hi = (single, re) if faster is Policy.SINGLE_ESTIMATE else (re, single)
        tail_ok = bool(np.all(lo <= hi))
        mean_ok = rep.recommended is faster
        ok &= tail_ok and mean_ok
        lines.append(
            f"t0 {t0 * 1e3:g} ms: means re {rep.mean_time_re:.4g} / single {rep.mean_time_single:.4g} s "
            f"({'ok' if mean_ok else 'wrong order'}), tail {'ok' if tail_ok else 'crosses'}"
        )
    report("policy regimes at 2 km, t_rot 20 ms", ok, 120.0, "; ".join(lines))


def test_end_to_end_acquisition(report):
    ch = make_channel(distance=2000.0, visibility=3000.0)
    sc = AcquisitionScenario(
        array=LensArrayConfig(17, 0.3, 0.019, 0.0107, 0.25), rf=RfBudget(300.0, 1000.0, 1.0), chain_count=4,
        gps_position_std=5.0, channel=ch, t0=1e-3, t_rot=0.02, beam_divergence=8e-3,
    )
    trials = 10_000
    sigma = scenario_estimation_std(sc, True, 11)
    sc = replace(sc, estimation_std=sigma)
    p = outage_probability(ch.with_divergence(8e-3).with_estimation_std(sigma), Quadrature()).probability
    run = simulate_algorithm1(sc, Policy.RE_ESTIMATE, trials, 11)
    z_first = abs(run.first_attempt_failure_rate - p) / math.sqrt(p * (1 - p) / trials)
    expected = mean_time_re(p, sc.t0, sc.t_rot)
    z_mean = abs(run.times.mean() - expected) / (run.times.std(ddof=1) / math.sqrt(trials))
    report("acquisition simulation vs outage and mean formula", z_first <= 3 and z_mean <= 3, 120.0,
           f"first-attempt {run.first_attempt_failure_rate:.4f} vs {p:.4f} ({z_first:.2f} SE), "
           f"mean {run.times.mean():.5f} vs {expected:.5f} s ({z_mean:.2f} SE)")


def test_cli_reruns_are_byte_identical(report, tmp_path):
    commands = [
        ["estimator-sweep", str(DEFAULT), "--trials", "2000"],
        ["outage-sweep", str(DEFAULT), "--distance", "1,2km", "--fading-model", "lognormal,gammagamma",
         "--trials", "2000"],
        ["policy", str(DEFAULT), "--trials", "5000"],
        ["acquire", str(DEFAULT), "--trials", "2000"],
    ]
    mismatched = []
    for i, cmd in enumerate(commands):
        a = _run_cli(cmd, tmp_path / f"a{i}")
        b = _run_cli(cmd, tmp_path / f"b{i}")
        files = sorted(p.name for p in a.iterdir() if p.suffix in (".csv", ".svg"))
        assert files
        mismatched += [f"{cmd[0]}/{f}" for f in files if (a / f).read_bytes() != (b / f).read_bytes()]
    report("CLI reruns byte-identical", not mismatched, 600.0, f"mismatches {mismatched or 'none'}")


def _csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
