"""Link-acquisition time under the re-estimation and single-estimation policies.

Re-estimation repeats the whole estimate-rotate-transmit cycle after every
failure, so each attempt costs ``t0 + t_rot`` and fails independently with
the outage probability. Single-estimation rotates once and then waits one
coherence interval ``t0`` per attempt with the displacement ``r`` frozen, so
it fails with ``F(r)`` every time.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _rng
from .estimator import RfBudget, estimation_errors, estimation_std_sweep
from .lens_array import LensArrayConfig
from .optical_channel import attenuation_gain, fading_sample, pointing_gain
from .outage import Channel, Quadrature, conditional_outage, divergence_sweep, outage_probability


class Policy(str, enum.Enum):
    RE_ESTIMATE = "reestimate"
    SINGLE_ESTIMATE = "singleestimate"


@dataclass(frozen=True)
class CoherenceParams:
    """Inputs of ``t0 = rho0 / v_perp`` with ``rho0 = (2.91 k^2 Cn2 L)^(-3/5)``.

    ``optical_wavenumber`` and ``path_length`` are the optical ``k = 2 pi / lambda``
    and propagation path, not the RF chain count or lens diameter.
    """

    optical_wavenumber: float
    structure_constant: float
    path_length: float
    transverse_wind: float

    def __post_init__(self):
        for name in ("optical_wavenumber", "structure_constant", "path_length", "transverse_wind"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")

    @classmethod
    def from_wavelength(cls, wavelength: float, structure_constant: float, path_length: float, transverse_wind: float):
        return cls(2 * math.pi / wavelength, structure_constant, path_length, transverse_wind)


def correlation_length(p: CoherenceParams) -> float:
    return (2.91 * p.optical_wavenumber**2 * p.structure_constant * p.path_length) ** (-3 / 5)


def coherence_time(p: CoherenceParams) -> float:
    return correlation_length(p) / p.transverse_wind


def mean_time_re(p_out: float, t0: float, t_rot: float) -> float:
    """Mean acquisition time of the re-estimation policy; ``inf`` if ``p_out == 1``."""
    if not 0 <= p_out <= 1:
        raise ValueError(f"p_out must be a probability, got {p_out}")
    if p_out == 1:
        return math.inf
    return (t0 + t_rot) / (1 - p_out)


# F(r) this close to 1 makes t0 / (1 - F) numerically meaningless
_NEAR_ONE = 1e-12


@dataclass(frozen=True)
class SingleEstimateMean:
    mean: float
    stderr: float
    flagged_fraction: float
    divergent: bool
    mean_outage: float


def _displacements(channel: Channel, rng: np.random.Generator, n: int) -> np.ndarray:
    sigma = channel.pointing.displacement_std
    return rng.rayleigh(sigma, n) if sigma > 0 else np.zeros(n)


def sample_conditional_outage(channel: Channel, trials: int, seed: int, key: Sequence[int] = ()) -> np.ndarray:
    """``F(r)`` on ``trials`` Rayleigh displacement draws."""
    parts = _rng.map_chunks(
        lambda rng, n: conditional_outage(channel, _displacements(channel, rng, n)), trials, seed, key=key
    )
    return np.concatenate([np.atleast_1d(p) for p in parts])


def mean_time_single(
    channel: Channel,
    t0: float,
    t_rot: float,
    trials: int,
    seed: int,
    divergence_cap: float = 1e-6,
) -> SingleEstimateMean:
    """Monte Carlo of ``E_r[t0 / (1 - F(r))] + t_rot``.

    Draws with ``F(r) > 1 - 1e-12`` are flagged; when their share exceeds
    ``divergence_cap`` the mean is reported as ``inf`` with ``divergent=True``.
    """
    return _single_mean(sample_conditional_outage(channel, trials, seed), t0, t_rot, divergence_cap)


def _single_mean(f: np.ndarray, t0: float, t_rot: float, divergence_cap: float = 1e-6) -> SingleEstimateMean:
    flagged = f > 1 - _NEAR_ONE
    share = float(np.mean(flagged))
    if share > divergence_cap:
        return SingleEstimateMean(math.inf, math.inf, share, True, float(np.mean(f)))
    waits = t0 / (1 - f[~flagged])
    return SingleEstimateMean(
        float(np.mean(waits) + t_rot),
        float(np.std(waits, ddof=1) / math.sqrt(waits.size)) if waits.size > 1 else 0.0,
        share,
        False,
        float(np.mean(f)),
    )


@dataclass(frozen=True)
class TailCurve:
    policy: Policy
    t: tuple
    p_not_connected: tuple
    stderr: tuple

    def rows(self):
        for t, p, se in zip(self.t, self.p_not_connected, self.stderr):
            yield {"policy": self.policy.value, "t_seconds": t, "p_not_connected": p, "stderr": se}


def reestimate_tail_closed_form(p_out: float, t0: float, t_rot: float, t_grid) -> np.ndarray:
    """``P[t_acq > t] = P_out ** floor(t / (t0 + t_rot))``."""
    attempts = np.floor(np.asarray(t_grid, dtype=float) / (t0 + t_rot))
    return np.power(p_out, attempts)


def _single_attempts(t_grid, t0: float, t_rot: float) -> np.ndarray:
    # attempts completed by time t: t_acq = t_rot + m t0
    t = np.asarray(t_grid, dtype=float)
    return np.where(t < t_rot, 0.0, np.floor((t - t_rot) / t0))


def _single_tail(f: np.ndarray, t0: float, t_rot: float, t_grid) -> TailCurve:
    t_grid = np.asarray(t_grid, dtype=float)
    m = _single_attempts(t_grid, t0, t_rot)
    p, se = np.empty(m.size), np.zeros(m.size)
    for i, k in enumerate(m):
        powers = f**k
        p[i] = powers.mean()
        if f.size > 1:
            se[i] = powers.std(ddof=1) / math.sqrt(f.size)
    return TailCurve(Policy.SINGLE_ESTIMATE, tuple(t_grid), tuple(p), tuple(se))


def _reestimate_tail(p_out: float, t0: float, t_rot: float, t_grid) -> TailCurve:
    p = reestimate_tail_closed_form(p_out, t0, t_rot, t_grid)
    return TailCurve(Policy.RE_ESTIMATE, tuple(np.asarray(t_grid, dtype=float)), tuple(p), tuple(np.zeros_like(p)))


def acquisition_tail(
    channel: Channel,
    policy: Policy,
    t0: float,
    t_rot: float,
    t_grid: Sequence[float],
    trials: int,
    seed: int,
    simulate: bool = False,
) -> TailCurve:
    """``P[t_acq > t]`` on ``t_grid``.

    Single-estimation averages ``F(r) ** m`` over Monte Carlo displacements.
    Re-estimation uses the closed geometric form with quadrature ``P_out``, or,
    with ``simulate=True``, explicit attempt-by-attempt draws of displacement
    and fading.
    """
    policy = Policy(policy)
    t_grid = np.asarray(t_grid, dtype=float)
    if policy is Policy.SINGLE_ESTIMATE:
        return _single_tail(sample_conditional_outage(channel, trials, seed), t0, t_rot, t_grid)
    if not simulate:
        return _reestimate_tail(outage_probability(channel, Quadrature()).probability, t0, t_rot, t_grid)
    cycle = t0 + t_rot
    max_attempts = int(np.floor(t_grid.max() / cycle)) + 1
    b, h_l = channel.budget, attenuation_gain(channel.attenuation)

    def run(rng, n):
        attempts = np.full(n, max_attempts + 1)
        pending = np.arange(n)
        for m in range(1, max_attempts + 1):
            if pending.size == 0:
                break
            r = _displacements(channel, rng, pending.size)
            power = h_l * fading_sample(channel.fading, rng, pending.size) * pointing_gain(channel.pointing, r)
            ok = power * b.responsivity * b.tx_power >= b.threshold_power
            attempts[pending[ok]] = m
            pending = pending[~ok]
        return attempts

    attempts = np.concatenate(_rng.map_chunks(run, trials, seed))
    t_acq = attempts * cycle
    p = np.mean(t_acq[:, None] > t_grid[None, :], axis=0)
    return TailCurve(policy, tuple(t_grid), tuple(p), tuple(np.sqrt(p * (1 - p) / trials)))


@dataclass(frozen=True)
class PolicyReport:
    """Means and tails of both policies on one shared set of displacement draws.

    ``p_out`` is the conditional Monte Carlo estimate ``mean F(r)`` over the
    same draws that feed the single-estimation mean, so the two means are
    compared on a common sample and the ``t_rot = 0`` ordering holds exactly.
    """

    coherence_time: float
    rotate_time: float
    p_out: float
    p_out_stderr: float
    mean_time_re: float
    mean_time_single: float
    mean_time_single_stderr: float
    single_divergent: bool
    tails: tuple

    @property
    def recommended(self) -> Policy:
        if self.mean_time_re <= self.mean_time_single:
            return Policy.RE_ESTIMATE
        return Policy.SINGLE_ESTIMATE

    def summary(self) -> dict:
        return {
            "t0_seconds": self.coherence_time,
            "t_rot_seconds": self.rotate_time,
            "p_out": self.p_out,
            "mean_time_re": self.mean_time_re,
            "mean_time_single": self.mean_time_single,
            "mean_time_single_stderr": self.mean_time_single_stderr,
            "single_divergent": self.single_divergent,
            "recommended": self.recommended.value,
        }


def policy_report(
    channel: Channel, t0: float, t_rot: float, t_grid: Sequence[float], trials: int, seed: int
) -> PolicyReport:
    """Both mean times, both tail curves and the faster policy."""
    f = sample_conditional_outage(channel, trials, seed)
    p_out = float(np.mean(f))
    p_se = float(np.std(f, ddof=1) / math.sqrt(f.size)) if f.size > 1 else 0.0
    single = _single_mean(f, t0, t_rot)
    tails = (
        _reestimate_tail(p_out, t0, t_rot, t_grid),
        _single_tail(f, t0, t_rot, t_grid),
    )
    return PolicyReport(
        coherence_time=t0,
        rotate_time=t_rot,
        p_out=p_out,
        p_out_stderr=p_se,
        mean_time_re=mean_time_re(p_out, t0, t_rot),
        mean_time_single=single.mean,
        mean_time_single_stderr=single.stderr,
        single_divergent=single.divergent,
        tails=tails,
    )


@dataclass(frozen=True)
class AcquisitionScenario:
    """Everything an end-to-end acquisition run needs for one link.

    ``beam_divergence=None`` selects the outage-minimizing divergence on
    ``divergence_grid`` (the "FSO channel is known" branch); otherwise the
    divergence of ``channel`` is used as is.
    """

    array: LensArrayConfig
    rf: RfBudget
    chain_count: int
    gps_position_std: float
    channel: Channel
    t0: float
    t_rot: float
    prior_angle: float = 0.0
    beam_divergence: Optional[float] = None
    divergence_grid: tuple = field(default_factory=lambda: tuple(np.geomspace(2e-4, 0.1, 61)))
    estimation_std: Optional[float] = None


@dataclass(frozen=True)
class AcquisitionRun:
    times: np.ndarray
    attempts: np.ndarray
    censored: np.ndarray
    first_attempt_failed: np.ndarray
    beam_divergence: float

    @property
    def first_attempt_failure_rate(self) -> float:
        return float(np.mean(self.first_attempt_failed))


def _pointing_errors(sc: AcquisitionScenario, use_estimator: bool, rng: np.random.Generator, n: int) -> np.ndarray:
    """Two-axis angular pointing error (estimate error plus jitter), shape ``(n, 2)``."""
    d = sc.channel.pointing.link_distance
    prior_std = sc.gps_position_std / d
    axes = []
    for _ in range(2):
        if use_estimator:
            _, est = estimation_errors(
                sc.array, sc.rf.gain_at(d), sc.rf.noise_std, sc.prior_angle, prior_std, [sc.chain_count], n, rng,
                sc.rf.phase,
            )
            err = est[sc.chain_count]
        else:
            err = rng.normal(0.0, prior_std, n)
        axes.append(err + rng.normal(0.0, sc.channel.pointing.jitter_std, n))
    return np.stack(axes, axis=1)


def scenario_estimation_std(sc: AcquisitionScenario, use_estimator: bool, seed: int, trials: int = 20_000) -> float:
    """Per-axis angular error std of the chosen angle source at the link distance."""
    d = sc.channel.pointing.link_distance
    if not use_estimator:
        return sc.gps_position_std / d
    row = estimation_std_sweep(
        sc.array, [d], sc.gps_position_std, trials, [sc.chain_count], seed, sc.rf, prior_mean=sc.prior_angle
    )[0]
    return row.std_proposed_rad


def resolve_divergence(sc: AcquisitionScenario, estimation_std: float) -> float:
    if sc.beam_divergence is not None:
        return sc.beam_divergence
    ch = sc.channel.with_estimation_std(estimation_std)
    return divergence_sweep(ch, sc.divergence_grid, Quadrature(1e-6)).argmin_divergence


def simulate_algorithm1(
    sc: AcquisitionScenario,
    policy: Policy,
    trials: int,
    seed: int,
    use_estimator: bool = True,
    max_attempts: int = 10_000,
) -> AcquisitionRun:
    """End-to-end acquisition: estimate, point, transmit, repeat per policy.

    Each estimate draws a fresh GPS fix and RF snapshot on both angular axes,
    and each pointing adds fresh mechanical jitter. Fading is redrawn every
    attempt. Trials that have not connected after ``max_attempts`` are
    returned with ``censored=True`` and their elapsed time.
    """
    policy = Policy(policy)
    ch = sc.channel
    d = ch.pointing.link_distance
    sigma_est = sc.estimation_std
    if sigma_est is None:
        sigma_est = scenario_estimation_std(sc, use_estimator, seed)
    theta = resolve_divergence(sc, sigma_est)
    ch = ch.with_divergence(theta)
    b, h_l = ch.budget, attenuation_gain(ch.attenuation)

    def attempt_ok(rng, r):
        power = h_l * fading_sample(ch.fading, rng, r.size) * pointing_gain(ch.pointing, r)
        return power * b.responsivity * b.tx_power >= b.threshold_power

    def run(rng, n):
        attempts = np.full(n, max_attempts)
        done = np.zeros(n, dtype=bool)
        first_failed = np.zeros(n, dtype=bool)
        r = d * np.hypot(*_pointing_errors(sc, use_estimator, rng, n).T)
        pending = np.arange(n)
        for m in range(1, max_attempts + 1):
            if m > 1 and policy is Policy.RE_ESTIMATE:
                r_now = d * np.hypot(*_pointing_errors(sc, use_estimator, rng, pending.size).T)
            else:
                r_now = r[pending]
            ok = attempt_ok(rng, r_now)
            if m == 1:
                first_failed[pending[~ok]] = True
            attempts[pending[ok]] = m
            done[pending[ok]] = True
            pending = pending[~ok]
            if pending.size == 0:
                break
        return attempts, ~done, first_failed

    parts = _rng.map_chunks(run, trials, seed, chunk=1 << 14)
    attempts = np.concatenate([p[0] for p in parts])
    censored = np.concatenate([p[1] for p in parts])
    first_failed = np.concatenate([p[2] for p in parts])
    if policy is Policy.RE_ESTIMATE:
        times = attempts * (sc.t0 + sc.t_rot)
    else:
        times = sc.t_rot + attempts * sc.t0
    return AcquisitionRun(times.astype(float), attempts, censored, first_failed, theta)
