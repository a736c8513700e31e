"""Command-line front end.

Every command reads a strict YAML scenario, writes CSV tables, SVG plots drawn
from those CSVs, and a JSON run manifest into the output directory. Reruns
with the same config, flags and seed reproduce the CSVs byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import __version__, svgplot
from .config import ConfigError, Scenario, load_config
from .estimator import SweepRow, estimation_std_sweep
from .outage import DistanceRow, divergence_sweep
from .policy import AcquisitionScenario, Policy, policy_report, simulate_algorithm1

OUTAGE_FIELDS = ("fading_model", "sigma_est_source", "distance_m", "sigma_est_rad", "theta_div_rad", "p_out", "stderr", "method")
DISTANCE_FIELDS = (
    "fading_model", "distance_m", "min_outage_proposed", "argmin_proposed", "min_outage_gps", "argmin_gps",
    "reduction_factor",
)
TAIL_FIELDS = ("policy", "t_seconds", "p_not_connected", "stderr")
HISTOGRAM_FIELDS = ("angle_source", "policy", "attempts", "t_seconds", "count", "censored")
ESTIMATOR_FIELDS = SweepRow.CSV_FIELDS + ("std_gps_rad",)


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, fields: Sequence[str], rows: Iterable[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow([_cell(row[f]) for f in fields])


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "m": 1.0, "km": 1e3}


def parse_quantity(text: str, kind: str) -> float:
    """``'200ms'`` -> 0.2, ``'2km'`` -> 2000.0. Bare numbers are seconds or kilometres."""
    m = re.fullmatch(r"\s*([-+0-9.eE]+)\s*([a-z]*)\s*", text)
    allowed = ("s", "ms", "us") if kind == "time" else ("m", "km")
    if not m or (m.group(2) and m.group(2) not in allowed):
        raise ValueError(f"cannot parse {kind} '{text}' (units: {', '.join(allowed)})")
    value = float(m.group(1))
    unit = m.group(2) or ("s" if kind == "time" else "km")
    return value * _UNITS[unit]


def parse_distances(text: str) -> list[float]:
    text = text.strip()
    suffix = ""
    m = re.fullmatch(r"(.*?)(km|m)", text)
    if m and "," in text and not re.search(r"(km|m)\s*,", text):
        text, suffix = m.group(1), m.group(2)
    out = [parse_quantity(part + suffix, "distance") for part in text.split(",") if part.strip()]
    if not out or any(d <= 0 for d in out) or any(b <= a for a, b in zip(out, out[1:])):
        raise ValueError("distances must be positive and increasing")
    return out


@dataclass
class RunManifest:
    command: str
    config_path: str
    config_hash: str
    config: dict
    seed: int
    trials: int
    tool_version: str
    flags: dict
    rf_budget: dict
    assumptions: dict
    outputs: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def write(self, out_dir: Path) -> Path:
        path = out_dir / f"manifest_{self.command.replace('-', '_')}.json"
        self.outputs["manifest"] = path.name
        payload = {k: getattr(self, k) for k in self.__dataclass_fields__}
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _rf_echo(sc: Scenario) -> dict:
    rf = sc.rf
    snr = rf.gain_ref / rf.noise_std
    return {
        "gain_ref": rf.gain_ref,
        "distance_ref_m": rf.distance_ref,
        "noise_std": rf.noise_std,
        "phase": rf.phase,
        "chain_count": sc.chain_count,
        "amplitude_snr_ref_db": 20 * math.log10(snr),
        "model": "g(D) = gain_ref * distance_ref / D",
    }


def _assumptions(sc: Scenario) -> dict:
    """Scenario values chosen by convention rather than taken from measurements."""
    opt, arr = sc.raw["optical"], sc.raw["array"]
    return {
        "receiver_radius_m": opt["receiver_radius"],
        "optical_wavelength_m": opt["wavelength"],
        "rf_budget": "free-space amplitude scaling from gain_ref at distance_ref",
        "lens_array": {k: arr[k] for k in ("n_antennas", "lens_diameter", "antenna_spacing", "focal_length")},
    }


def _manifest(sc: Scenario, command: str, config_path: str, flags: dict) -> RunManifest:
    return RunManifest(
        command=command,
        config_path=config_path,
        config_hash=sc.config_hash,
        config=sc.raw,
        seed=sc.seed,
        trials=sc.trials,
        tool_version=__version__,
        flags=flags,
        rf_budget=_rf_echo(sc),
        assumptions=_assumptions(sc),
    )


def proposed_std(sc: Scenario, distances: Sequence[float], chain_count: Optional[int] = None) -> dict[float, float]:
    """Per-axis angular error of the estimator at each distance."""
    k = chain_count or sc.chain_count
    rows = estimation_std_sweep(
        sc.array, distances, sc.gps_position_std, sc.trials, [k], sc.seed, sc.rf,
        prior_mean=sc.prior_angle, workers=sc.workers,
    )
    return {r.distance_m: r.std_proposed_rad for r in rows}


# -- estimator-sweep ---------------------------------------------------------


def cmd_estimator_sweep(sc: Scenario, out: Path, manifest: RunManifest) -> None:
    distances = sc.raw["sweeps"]["estimator_distances"]
    rows = estimation_std_sweep(
        sc.array, distances, sc.gps_position_std, sc.trials, sc.chain_counts, sc.seed, sc.rf,
        prior_mean=sc.prior_angle, workers=sc.workers,
    )
    csv_path = out / "estimator_sweep.csv"
    write_csv(csv_path, ESTIMATOR_FIELDS, ({**r.csv_row(), "std_gps_rad": r.std_gps_rad} for r in rows))
    svg_path = out / "estimator_sweep.svg"
    plot_estimator_csv(csv_path, svg_path)
    manifest.outputs.update(csv=csv_path.name, plot=svg_path.name)
    worst = max(r.std_proposed_rad / r.std_gps_rad for r in rows)
    manifest.summary = {"max_ratio_proposed_to_gps": worst}
    print(f"wrote {csv_path} ({len(rows)} rows); worst proposed/GPS std ratio {worst:.3f}")


def plot_estimator_csv(csv_path: Path, svg_path: Path) -> None:
    rows = read_csv(csv_path)
    series: dict[str, tuple[list, list]] = {}
    for r in rows:
        xs, ys = series.setdefault(f"{r['chain_count']} chains", ([], []))
        xs.append(float(r["distance_m"]) / 1e3)
        ys.append(float(r["std_proposed_m"]))
    first = rows[0]["chain_count"] if rows else None
    gps = [r for r in rows if r["chain_count"] == first]
    series["GPS only"] = ([float(r["distance_m"]) / 1e3 for r in gps], [float(r["std_gps_m"]) for r in gps])
    svgplot.line_plot(series, svg_path, "Position error std", "distance (km)", "std (m)", logy=True)


# -- outage-sweep ------------------------------------------------------------


def _sigma_sources(spec: str) -> list[str]:
    out = []
    for part in spec.split(","):
        part = part.strip()
        if part in ("gps", "proposed"):
            out.append(part)
        else:
            value = float(part)
            if not value >= 0:
                raise ValueError("numeric --sigma-est must be >= 0 (radians)")
            out.append(repr(value))
    if not out:
        raise ValueError("empty --sigma-est")
    return list(dict.fromkeys(out))


def cmd_outage_sweep(sc: Scenario, out: Path, manifest: RunManifest, distances, models, sources) -> None:
    grid = sc.divergence_grid
    method = sc.outage_method()
    prop = proposed_std(sc, distances) if "proposed" in sources else {}
    curve_rows, dist_rows = [], []
    for mi, model in enumerate(models):
        for di, d in enumerate(distances):
            minima = {}
            for si, src in enumerate(sources):
                if src == "gps":
                    sigma = sc.gps_position_std / d
                elif src == "proposed":
                    sigma = prop[d]
                else:
                    sigma = float(src)
                ch = sc.channel(d, sigma, model)
                curve = divergence_sweep(ch, grid, method, key=(mi, di, si))
                minima[src] = curve
                for row in curve.rows():
                    curve_rows.append(
                        {"fading_model": model, "sigma_est_source": src, "distance_m": d, "sigma_est_rad": sigma, **row}
                    )
            if "gps" in minima and "proposed" in minima:
                p, g = minima["proposed"], minima["gps"]
                r = DistanceRow(d, p.min_outage, p.argmin_divergence, g.min_outage, g.argmin_divergence)
                dist_rows.append({"fading_model": model, **r.__dict__, "reduction_factor": r.reduction_factor})
    curves_csv = out / "outage_curves.csv"
    write_csv(curves_csv, OUTAGE_FIELDS, curve_rows)
    curves_svg = out / "outage_curves.svg"
    svgplot.plot_csv(
        curves_csv, curves_svg, "theta_div_rad", "p_out", ("fading_model", "sigma_est_source", "distance_m"),
        "Outage probability", "beam divergence (rad)", "P_out", logx=True, logy=True,
    )
    manifest.outputs.update(curves_csv=curves_csv.name, curves_plot=curves_svg.name)
    if dist_rows:
        dist_csv = out / "outage_distance.csv"
        write_csv(dist_csv, DISTANCE_FIELDS, dist_rows)
        dist_svg = out / "outage_distance.svg"
        plot_distance_csv(dist_csv, dist_svg)
        manifest.outputs.update(distance_csv=dist_csv.name, distance_plot=dist_svg.name)
        manifest.summary = {
            f"{r['fading_model']}@{r['distance_m']:g}m": {
                "min_outage_proposed": r["min_outage_proposed"],
                "min_outage_gps": r["min_outage_gps"],
                "reduction_factor": r["reduction_factor"],
            }
            for r in dist_rows
        }
        for r in dist_rows:
            print(
                f"{r['fading_model']:>10} {r['distance_m'] / 1e3:6.2f} km  min P_out proposed {r['min_outage_proposed']:.3e}"
                f"  GPS {r['min_outage_gps']:.3e}  reduction x{r['reduction_factor']:.3g}"
            )
    print(f"wrote {curves_csv} ({len(curve_rows)} rows)")


def plot_distance_csv(csv_path: Path, svg_path: Path) -> None:
    series: dict[str, tuple[list, list]] = {}
    for r in read_csv(csv_path):
        for src in ("proposed", "gps"):
            xs, ys = series.setdefault(f"{r['fading_model']} {src}", ([], []))
            xs.append(float(r["distance_m"]) / 1e3)
            ys.append(float(r[f"min_outage_{src}"]))
    svgplot.line_plot(series, svg_path, "Minimum outage probability", "distance (km)", "min P_out", logy=True)


# -- policy ------------------------------------------------------------------


def _policy_channel(sc: Scenario):
    d = sc.raw["policy"]["link_distance"]
    sigma = proposed_std(sc, [d])[d]
    ch = sc.channel(d, sigma)
    theta = sc.raw["policy"]["beam_divergence"]
    if theta is None:
        theta = divergence_sweep(ch, sc.divergence_grid, sc.outage_method()).argmin_divergence
    return ch.with_divergence(theta), sigma


def cmd_policy(sc: Scenario, out: Path, manifest: RunManifest, t0: float, t_rot: float) -> None:
    ch, sigma = _policy_channel(sc)
    horizon = sc.raw["policy"]["horizon_attempts"] * (t0 + t_rot)
    t_grid = np.linspace(0.0, horizon, 20 * sc.raw["policy"]["horizon_attempts"] + 1)
    rep = policy_report(ch, t0, t_rot, t_grid, sc.trials, sc.seed)
    tail_csv = out / "policy_tail.csv"
    write_csv(tail_csv, TAIL_FIELDS, (row for tail in rep.tails for row in tail.rows()))
    tail_svg = out / "policy_tail.svg"
    svgplot.plot_csv(
        tail_csv, tail_svg, "t_seconds", "p_not_connected", ("policy",), "Link not yet connected",
        "t (s)", "P[t_acq > t]", logy=True, steps=True,
    )
    summary = {
        **rep.summary(),
        "link_distance_m": ch.pointing.link_distance,
        "beam_divergence_rad": ch.pointing.beam_divergence,
        "estimation_std_rad": sigma,
    }
    summary_path = out / "policy_summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    manifest.outputs.update(tail_csv=tail_csv.name, tail_plot=tail_svg.name, summary=summary_path.name)
    manifest.summary = summary
    print(
        f"t0 = {t0:g} s, t_rot = {t_rot:g} s: mean re-estimate {rep.mean_time_re:.6g} s, "
        f"mean single-estimate {rep.mean_time_single:.6g} s -> recommend {rep.recommended.value}"
    )


# -- acquire -----------------------------------------------------------------


def cmd_acquire(sc: Scenario, out: Path, manifest: RunManifest, mode: str) -> None:
    d = sc.raw["policy"]["link_distance"]
    t0, t_rot = sc.t0, sc.t_rot
    ch = sc.channel(d)
    rows, summary = [], {}
    for use_estimator, source in ((True, "proposed"), (False, "gps")):
        sigma = proposed_std(sc, [d])[d] if use_estimator else sc.gps_position_std / d
        scen = AcquisitionScenario(
            array=sc.array, rf=sc.rf, chain_count=sc.chain_count, gps_position_std=sc.gps_position_std,
            channel=ch, t0=t0, t_rot=t_rot, prior_angle=sc.prior_angle,
            beam_divergence=sc.raw["policy"]["beam_divergence"], divergence_grid=tuple(sc.divergence_grid),
            estimation_std=sigma,
        )
        policy = Policy(mode) if mode != "auto" else _auto_policy(sc, scen, sigma)
        run = simulate_algorithm1(scen, policy, sc.trials, sc.seed, use_estimator=use_estimator)
        for attempts in np.unique(run.attempts):
            sel = run.attempts == attempts
            for cens in (False, True):
                n = int(np.count_nonzero(sel & (run.censored == cens)))
                if n:
                    rows.append({
                        "angle_source": source, "policy": policy.value, "attempts": int(attempts),
                        "t_seconds": float(run.times[sel][0]), "count": n, "censored": cens,
                    })
        summary[source] = {
            "policy": policy.value,
            "beam_divergence_rad": run.beam_divergence,
            "estimation_std_rad": sigma,
            "first_attempt_failure_rate": run.first_attempt_failure_rate,
            "mean_time_s": float(np.mean(run.times)),
            "censored": int(np.count_nonzero(run.censored)),
        }
    hist_csv = out / "acquire_histogram.csv"
    write_csv(hist_csv, HISTOGRAM_FIELDS, rows)
    hist_svg = out / "acquire_tail.svg"
    plot_histogram_csv(hist_csv, hist_svg)
    manifest.outputs.update(histogram_csv=hist_csv.name, tail_plot=hist_svg.name)
    manifest.summary = summary
    for src, s in summary.items():
        print(f"{src:>9}: {s['policy']}, mean t_acq {s['mean_time_s']:.6g} s, first-attempt failure {s['first_attempt_failure_rate']:.4g}")


def _auto_policy(sc: Scenario, scen: AcquisitionScenario, sigma: float) -> Policy:
    ch = scen.channel.with_estimation_std(sigma)
    theta = scen.beam_divergence or divergence_sweep(ch, scen.divergence_grid, sc.outage_method()).argmin_divergence
    return policy_report(ch.with_divergence(theta), scen.t0, scen.t_rot, [0.0], sc.trials, sc.seed).recommended


def plot_histogram_csv(csv_path: Path, svg_path: Path) -> None:
    """Empirical ``P[t_acq > t]`` per angle source from the histogram counts."""
    groups: dict[str, list[tuple[float, int]]] = {}
    for r in read_csv(csv_path):
        groups.setdefault(f"{r['angle_source']} {r['policy']}", []).append((float(r["t_seconds"]), int(r["count"])))
    series = {}
    for name, pts in groups.items():
        total = sum(c for _, c in pts)
        merged: dict[float, int] = {}
        for t, c in pts:
            merged[t] = merged.get(t, 0) + c
        ts = sorted(merged)
        left, xs, ys = total, [0.0], [1.0]
        for t in ts:
            left -= merged[t]
            xs.append(t)
            ys.append(left / total)
        series[name] = (xs, ys)
    svgplot.line_plot(series, svg_path, "Acquisition time", "t (s)", "P[t_acq > t]", logy=True, steps=True)


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coarsepoint", description="Coarse-pointing acquisition experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="YAML scenario file")
        sp.add_argument("--trials", type=int, help="Monte Carlo trials (overrides run.trials)")
        sp.add_argument("--seed", type=int, help="master seed (overrides run.seed)")
        sp.add_argument("--output-dir", help="output directory (overrides run.output_dir)")
        sp.add_argument("--workers", type=int, help="worker threads for Monte Carlo chunks")

    common(sub.add_parser("estimator-sweep", help="angle-estimation std against distance"))
    sp = sub.add_parser("outage-sweep", help="outage against beam divergence")
    common(sp)
    sp.add_argument("--distance", help="comma list, e.g. '1,2,4,8km' (bare numbers are km)")
    sp.add_argument("--fading-model", help="comma list of lognormal, gammagamma, none")
    sp.add_argument("--sigma-est", default="proposed,gps", help="comma list of gps, proposed or a value in radians")
    sp = sub.add_parser("policy", help="acquisition-time tails of both policies")
    common(sp)
    sp.add_argument("--t0", help="coherence time, e.g. 1ms (default from config)")
    sp.add_argument("--trot", help="rotation time, e.g. 20ms (default from config)")
    sp = sub.add_parser("acquire", help="end-to-end acquisition simulation")
    common(sp)
    sp.add_argument("--policy", choices=("auto", "reestimate", "singleestimate"), help="override policy.mode")
    sp = sub.add_parser("validate-config", help="parse and echo a scenario file")
    sp.add_argument("config")
    return p


def _apply_overrides(sc: Scenario, args) -> Scenario:
    run = {}
    for name in ("trials", "seed", "workers"):
        v = getattr(args, name, None)
        if v is not None:
            if v < (0 if name == "seed" else 1):
                raise ValueError(f"--{name} must be {'>= 0' if name == 'seed' else '>= 1'}")
            run[name] = v
    if getattr(args, "output_dir", None):
        run["output_dir"] = args.output_dir
    return sc.with_overrides(run=run)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = load_config(args.config)
        if args.command == "validate-config":
            print(json.dumps(sc.raw, indent=2, sort_keys=True))
            print(f"ok: {args.config} (hash {sc.config_hash})")
            return 0
        sc = _apply_overrides(sc, args)
        flags = {k: v for k, v in sorted(vars(args).items()) if k not in ("config", "command") and v is not None}
        out = sc.output_dir
        out.mkdir(parents=True, exist_ok=True)
        manifest = _manifest(sc, args.command, args.config, flags)
        if args.command == "estimator-sweep":
            cmd_estimator_sweep(sc, out, manifest)
        elif args.command == "outage-sweep":
            distances = parse_distances(args.distance) if args.distance else sc.raw["sweeps"]["outage_distances"]
            models = [m.strip() for m in args.fading_model.split(",")] if args.fading_model else [sc.fading().model.value]
            for m in models:
                if m not in ("lognormal", "gammagamma", "none"):
                    raise ValueError(f"unknown fading model '{m}'")
            cmd_outage_sweep(sc, out, manifest, distances, list(dict.fromkeys(models)), _sigma_sources(args.sigma_est))
        elif args.command == "policy":
            t0 = parse_quantity(args.t0, "time") if args.t0 else sc.t0
            t_rot = parse_quantity(args.trot, "time") if args.trot else sc.t_rot
            if not t0 > 0 or t_rot < 0:
                raise ValueError("need t0 > 0 and t_rot >= 0")
            cmd_policy(sc, out, manifest, t0, t_rot)
        elif args.command == "acquire":
            cmd_acquire(sc, out, manifest, args.policy or sc.raw["policy"]["mode"])
        path = manifest.write(out)
        print(f"manifest: {path}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
