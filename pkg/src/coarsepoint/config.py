"""Strict YAML scenario files.

Every section and key is declared in :data:`SCHEMA`; unknown keys, missing
required keys and ill-typed values raise :class:`ConfigError` with the file
line and dotted key path.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np
import yaml

from .estimator import RfBudget
from .lens_array import ArrayShape, LensArrayConfig
from .optical_channel import AttenuationParams, FadingModel, FadingParams, LinkBudget, PointingParams
from .outage import Channel, MonteCarlo, Quadrature
from .policy import CoherenceParams, coherence_time


class ConfigError(ValueError):
    pass


_REQUIRED = object()


def _real(node_value: Any) -> float:
    if isinstance(node_value, bool) or not isinstance(node_value, (int, float)):
        raise TypeError("expected a number")
    x = float(node_value)
    if not math.isfinite(x):
        raise TypeError("expected a finite number")
    return x


def _positive(v):
    x = _real(v)
    if not x > 0:
        raise TypeError("expected a positive number")
    return x


def _nonneg(v):
    x = _real(v)
    if not x >= 0:
        raise TypeError("expected a number >= 0")
    return x


def _count(v):
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise TypeError("expected a positive integer")
    return v


def _seed(v):
    if isinstance(v, bool) or not isinstance(v, int) or v < 0:
        raise TypeError("expected a non-negative integer")
    return v


def _text(v):
    if not isinstance(v, str) or not v:
        raise TypeError("expected a non-empty string")
    return v


def _choice(*options: str) -> Callable[[Any], str]:
    def check(v):
        if v not in options:
            raise TypeError(f"expected one of {', '.join(options)}")
        return v

    return check


def _optional(conv):
    def check(v):
        return None if v is None else conv(v)

    return check


def _positive_list(v):
    if not isinstance(v, list) or not v:
        raise TypeError("expected a non-empty list")
    out = [_positive(x) for x in v]
    if any(b <= a for a, b in zip(out, out[1:])):
        raise TypeError("expected an increasing list")
    return out


def _count_list(v):
    if not isinstance(v, list) or not v:
        raise TypeError("expected a non-empty list")
    return [_count(x) for x in v]


SCHEMA: dict[str, dict[str, tuple]] = {
    "array": {
        "n_antennas": (_count, _REQUIRED),
        "lens_diameter": (_positive, _REQUIRED),
        "antenna_spacing": (_positive, _REQUIRED),
        "wavelength": (_positive, _REQUIRED),
        "focal_length": (_positive, _REQUIRED),
        "shape": (_choice("arc", "linear"), "arc"),
    },
    "rf": {
        "gain_ref": (_positive, _REQUIRED),
        "distance_ref": (_positive, _REQUIRED),
        "noise_std": (_positive, _REQUIRED),
        "phase": (_real, 0.0),
        "chain_count": (_count, _REQUIRED),
    },
    "prior": {
        "gps_position_std": (_positive, _REQUIRED),
        "prior_angle": (_real, 0.0),
    },
    "optical": {
        "visibility": (_positive, _REQUIRED),
        "wavelength": (_positive, 1550e-9),
        "fading_model": (_choice("lognormal", "gammagamma", "none"), "lognormal"),
        "log_amp_std": (_positive, 0.3),
        "alpha": (_positive, 8.05),
        "beta": (_positive, 1.03),
        "jitter_std": (_nonneg, _REQUIRED),
        "receiver_radius": (_positive, _REQUIRED),
        "tx_power": (_positive, 1.0),
        "threshold_power": (_positive, 1e-6),
        "responsivity": (_positive, 0.5),
        "outage_method": (_choice("quadrature", "montecarlo"), "quadrature"),
    },
    "policy": {
        "link_distance": (_positive, 2000.0),
        "t0": (_optional(_positive), None),
        "structure_constant": (_optional(_positive), None),
        "transverse_wind": (_optional(_positive), None),
        "t_rot": (_nonneg, 0.02),
        "mode": (_choice("auto", "reestimate", "singleestimate"), "auto"),
        "horizon_attempts": (_count, 20),
        "beam_divergence": (_optional(_positive), None),
    },
    "sweeps": {
        "estimator_distances": (_positive_list, [500.0 * k for k in range(1, 21)]),
        "chain_counts": (_count_list, None),
        "outage_distances": (_positive_list, [1000.0]),
        "divergence_min": (_positive, 2e-4),
        "divergence_max": (_positive, 0.1),
        "divergence_points": (_count, 61),
    },
    "run": {
        "trials": (_count, 10_000),
        "seed": (_seed, 0),
        "output_dir": (_text, "out"),
        "workers": (_count, 1),
    },
}

REQUIRED_SECTIONS = ("array", "rf", "prior", "optical")


def _line(node) -> int:
    return node.start_mark.line + 1


def _plain(node):
    """Convert a composed YAML node to Python values."""
    if isinstance(node, yaml.MappingNode):
        return {k.value: _plain(v) for k, v in node.value}
    if isinstance(node, yaml.SequenceNode):
        return [_plain(v) for v in node.value]
    return yaml.constructor.SafeConstructor().construct_object(node, deep=True)


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Validate YAML text against :data:`SCHEMA` and return the resolved nested dict."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark else source
        raise ConfigError(f"{where}: invalid YAML ({getattr(exc, 'problem', exc)})") from None
    if root is None:
        raise ConfigError(f"{source}: empty config")
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError(f"{source}:{_line(root)}: top level must be a mapping")

    sections = {}
    for key_node, value_node in root.value:
        name = key_node.value
        if name not in SCHEMA:
            raise ConfigError(f"{source}:{_line(key_node)}: unknown section '{name}'")
        if name in sections:
            raise ConfigError(f"{source}:{_line(key_node)}: duplicate section '{name}'")
        if not isinstance(value_node, yaml.MappingNode):
            raise ConfigError(f"{source}:{_line(value_node)}: section '{name}' must be a mapping")
        sections[name] = (key_node, value_node)

    out = {}
    for name, fields in SCHEMA.items():
        if name not in sections:
            if name in REQUIRED_SECTIONS:
                raise ConfigError(f"{source}: missing required section '{name}'")
            out[name] = {k: (None if d is _REQUIRED else d) for k, (_, d) in fields.items()}
            continue
        sec_key, sec_node = sections[name]
        given = {}
        for key_node, value_node in sec_node.value:
            key = key_node.value
            path = f"{name}.{key}"
            if key not in fields:
                raise ConfigError(f"{source}:{_line(key_node)}: unknown key '{path}'")
            if key in given:
                raise ConfigError(f"{source}:{_line(key_node)}: duplicate key '{path}'")
            conv = fields[key][0]
            try:
                given[key] = conv(_plain(value_node))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{source}:{_line(value_node)}: bad value for '{path}': {exc}") from None
        for key, (_, default) in fields.items():
            if key not in given:
                if default is _REQUIRED:
                    raise ConfigError(f"{source}:{_line(sec_key)}: missing required key '{name}.{key}'")
                given[key] = default
        out[name] = given
    _cross_check(out, source)
    return out


def _cross_check(cfg: dict, source: str) -> None:
    pol = cfg["policy"]
    has_t0 = pol["t0"] is not None
    has_turb = pol["structure_constant"] is not None or pol["transverse_wind"] is not None
    if has_t0 == has_turb:
        raise ConfigError(f"{source}: set either 'policy.t0' or both 'policy.structure_constant' and 'policy.transverse_wind'")
    if has_turb and (pol["structure_constant"] is None or pol["transverse_wind"] is None):
        raise ConfigError(f"{source}: 'policy.structure_constant' and 'policy.transverse_wind' go together")
    sw = cfg["sweeps"]
    if not sw["divergence_min"] < sw["divergence_max"]:
        raise ConfigError(f"{source}: 'sweeps.divergence_min' must be below 'sweeps.divergence_max'")
    if sw["divergence_points"] < 3:
        raise ConfigError(f"{source}: 'sweeps.divergence_points' must be >= 3")
    n = cfg["array"]["n_antennas"]
    counts = [cfg["rf"]["chain_count"]] + (sw["chain_counts"] or [])
    if any(k > n for k in counts):
        raise ConfigError(f"{source}: chain counts must not exceed 'array.n_antennas' ({n})")
    try:
        Scenario(cfg).array
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> "Scenario":
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    return Scenario(parse_config_text(data.decode("utf-8"), str(path)), content_hash(data))


def content_hash(data: bytes) -> str:
    """Git blob hash of the raw config bytes."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


@dataclass(frozen=True)
class Scenario:
    """Resolved config with typed accessors for the library objects."""

    raw: dict
    config_hash: str = ""

    @property
    def array(self) -> LensArrayConfig:
        a = self.raw["array"]
        return LensArrayConfig(
            n_antennas=a["n_antennas"],
            lens_diameter=a["lens_diameter"],
            antenna_spacing=a["antenna_spacing"],
            wavelength=a["wavelength"],
            focal_length=a["focal_length"],
            shape=ArrayShape(a["shape"]),
        )

    @property
    def rf(self) -> RfBudget:
        r = self.raw["rf"]
        return RfBudget(r["gain_ref"], r["distance_ref"], r["noise_std"], r["phase"])

    @property
    def chain_count(self) -> int:
        return self.raw["rf"]["chain_count"]

    @property
    def chain_counts(self) -> list[int]:
        counts = self.raw["sweeps"]["chain_counts"]
        if counts is None:
            counts = [self.raw["array"]["n_antennas"], self.chain_count]
        return list(dict.fromkeys(counts))

    @property
    def gps_position_std(self) -> float:
        return self.raw["prior"]["gps_position_std"]

    @property
    def prior_angle(self) -> float:
        return self.raw["prior"]["prior_angle"]

    @property
    def seed(self) -> int:
        return self.raw["run"]["seed"]

    @property
    def trials(self) -> int:
        return self.raw["run"]["trials"]

    @property
    def workers(self) -> int:
        return self.raw["run"]["workers"]

    @property
    def output_dir(self) -> Path:
        return Path(self.raw["run"]["output_dir"])

    @property
    def divergence_grid(self) -> np.ndarray:
        s = self.raw["sweeps"]
        return np.geomspace(s["divergence_min"], s["divergence_max"], s["divergence_points"])

    def fading(self, model: Optional[str] = None) -> FadingParams:
        o = self.raw["optical"]
        return FadingParams(FadingModel(model or o["fading_model"]), o["log_amp_std"], o["alpha"], o["beta"])

    def channel(self, distance: float, estimation_std: float = 0.0, model: Optional[str] = None,
                beam_divergence: float = 0.01) -> Channel:
        o = self.raw["optical"]
        return Channel(
            attenuation=AttenuationParams(distance, visibility=o["visibility"], wavelength=o["wavelength"]),
            fading=self.fading(model),
            pointing=PointingParams(
                beam_divergence=beam_divergence,
                link_distance=distance,
                jitter_std=o["jitter_std"],
                estimation_std=estimation_std,
                receiver_radius=o["receiver_radius"],
            ),
            budget=LinkBudget(o["tx_power"], o["threshold_power"], o["responsivity"]),
        )

    def outage_method(self, trials: Optional[int] = None):
        if self.raw["optical"]["outage_method"] == "montecarlo":
            return MonteCarlo(trials or self.trials, self.seed)
        return Quadrature(1e-7)

    @property
    def t_rot(self) -> float:
        return self.raw["policy"]["t_rot"]

    @property
    def t0(self) -> float:
        p = self.raw["policy"]
        if p["t0"] is not None:
            return p["t0"]
        params = CoherenceParams.from_wavelength(
            self.raw["optical"]["wavelength"], p["structure_constant"], p["link_distance"], p["transverse_wind"]
        )
        return coherence_time(params)

    def with_overrides(self, **sections) -> "Scenario":
        raw = {k: dict(v) for k, v in self.raw.items()}
        for section, values in sections.items():
            raw[section].update({k: v for k, v in values.items() if v is not None})
        return Scenario(raw, self.config_hash)
