"""RF lens antenna array: amplitude profile, steering vector, antenna selection.

Antenna indices run from ``-(N-1)/2`` to ``(N-1)/2`` in unit steps, so they
are half-integers for even ``N``. Array position ``i`` (0-based) holds index
``i - (N-1)/2``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class ArrayShape(str, enum.Enum):
    LINEAR = "linear"
    ARC = "arc"


@dataclass(frozen=True)
class LensArrayConfig:
    n_antennas: int
    lens_diameter: float
    antenna_spacing: float
    wavelength: float
    focal_length: float
    shape: ArrayShape = ArrayShape.ARC

    def __post_init__(self):
        object.__setattr__(self, "shape", ArrayShape(self.shape))
        if int(self.n_antennas) != self.n_antennas or self.n_antennas < 1:
            raise ValueError(f"n_antennas must be a positive integer, got {self.n_antennas}")
        for name in ("lens_diameter", "antenna_spacing", "wavelength", "focal_length"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value}")

    @property
    def indices(self) -> np.ndarray:
        """Antenna indices n, shape (N,)."""
        return np.arange(self.n_antennas) - (self.n_antennas - 1) / 2

    @property
    def distances(self) -> np.ndarray:
        """Lens-center to antenna distance z for every antenna."""
        if self.shape is ArrayShape.ARC:
            return np.full(self.n_antennas, self.focal_length)
        return np.hypot(self.antenna_spacing * self.indices, self.focal_length)


@dataclass(frozen=True)
class SignalParams:
    gain: float
    phase: float
    noise_std: float
    aoa: float

    def __post_init__(self):
        if not self.gain > 0:
            raise ValueError(f"gain must be > 0, got {self.gain}")
        if not self.noise_std >= 0:
            raise ValueError(f"noise_std must be >= 0, got {self.noise_std}")
        _check_angle(self.aoa)


@dataclass(frozen=True)
class AntennaSelection:
    """Inclusive window ``[lo_index, hi_index]`` of antenna indices."""

    lo_index: float
    hi_index: float
    chain_count: int

    def __post_init__(self):
        if self.hi_index < self.lo_index or self.hi_index - self.lo_index + 1 != self.chain_count:
            raise ValueError(f"inconsistent selection {self}")

    def positions(self, cfg: LensArrayConfig) -> slice:
        """Slice into per-antenna arrays of ``cfg``."""
        start = int(round(self.lo_index + (cfg.n_antennas - 1) / 2))
        if start < 0 or start + self.chain_count > cfg.n_antennas:
            raise ValueError(f"selection {self} outside array of {cfg.n_antennas} antennas")
        return slice(start, start + self.chain_count)


def _check_angle(aoa: float) -> None:
    if not math.isfinite(aoa):
        raise ValueError(f"angle must be finite, got {aoa}")
    if not -math.pi / 2 < aoa < math.pi / 2:
        raise ValueError(f"angle must lie in (-pi/2, pi/2), got {aoa}")


def _sinc(x: np.ndarray) -> np.ndarray:
    # unnormalized sin(x)/x; np.sinc is the normalized variant
    return np.sinc(x / np.pi)


def _focus_offset(cfg: LensArrayConfig, aoa: float) -> np.ndarray:
    z = cfg.distances
    return (cfg.lens_diameter / cfg.wavelength) * (cfg.antenna_spacing * cfg.indices / z - math.sin(aoa))


def amplitude_profile(cfg: LensArrayConfig, aoa: float) -> np.ndarray:
    """Diagonal of the amplitude matrix, ``(L/sqrt(z)) * sinc[(L/lam)(dn/z - sin aoa)]``."""
    _check_angle(aoa)
    return cfg.lens_diameter / np.sqrt(cfg.distances) * _sinc(_focus_offset(cfg, aoa))


def amplitude_profile_derivative(cfg: LensArrayConfig, aoa: float) -> np.ndarray:
    """Derivative of :func:`amplitude_profile` with respect to the angle of arrival.

    Evaluated as ``(L^2 cos aoa / (lam sqrt(z))) * (sin x - x cos x) / x^2``.
    Near ``x = 0`` the ratio is replaced by its series ``x/3 - x^3/30`` to avoid
    cancellation.
    """
    _check_angle(aoa)
    x = _focus_offset(cfg, aoa)
    small = np.abs(x) < 1e-3
    xs = np.where(small, 1.0, x)
    ratio = np.where(small, x / 3 - x**3 / 30, (np.sin(xs) - xs * np.cos(xs)) / xs**2)
    return cfg.lens_diameter**2 * math.cos(aoa) / (cfg.wavelength * np.sqrt(cfg.distances)) * ratio


def amplitude_profiles(cfg: LensArrayConfig, angles) -> np.ndarray:
    """Amplitude profiles for many angles at once, shape ``(len(angles), N)``."""
    angles = np.asarray(angles, dtype=float)
    if not np.all(np.abs(angles) < math.pi / 2):
        raise ValueError("angles must lie in (-pi/2, pi/2)")
    z = cfg.distances
    x = (cfg.lens_diameter / cfg.wavelength) * (
        cfg.antenna_spacing * cfg.indices / z - np.sin(angles)[:, None]
    )
    return cfg.lens_diameter / np.sqrt(z) * _sinc(x)


def amplitude_matrix(cfg: LensArrayConfig, aoa: float) -> np.ndarray:
    return np.diag(amplitude_profile(cfg, aoa))


def amplitude_matrix_derivative(cfg: LensArrayConfig, aoa: float) -> np.ndarray:
    return np.diag(amplitude_profile_derivative(cfg, aoa))


def steering_vector(cfg: LensArrayConfig) -> np.ndarray:
    """Per-antenna propagation phase from lens to feed, unit-power source symbol."""
    return np.exp(-2j * np.pi * cfg.distances / cfg.wavelength)


def _round_half_away(x: float) -> float:
    return math.copysign(math.floor(abs(x) + 0.5), x)


def select_antennas(cfg: LensArrayConfig, aoa_prior: float, chain_count: int) -> AntennaSelection:
    """Pick the ``chain_count`` antennas nearest the focal spot predicted by ``aoa_prior``.

    The window is computed with ``z = f`` for both array shapes and then slid
    back inside the array if it overhangs an edge. The parity offsets are the
    ones that land ``lo_index`` on the array's own index lattice (integers for
    odd ``N``, half-integers for even ``N``).
    """
    _check_angle(aoa_prior)
    n, k = cfg.n_antennas, int(chain_count)
    if not 1 <= k <= n:
        raise ValueError(f"chain_count must be in [1, {n}], got {chain_count}")
    parity = (-1) ** (n + 1)
    center = cfg.focal_length / cfg.antenna_spacing * math.sin(aoa_prior)
    lo = _round_half_away(center - k / 2 + (1 + parity) / 4) + (1 - parity) / 4
    half = (n - 1) / 2
    lo = min(max(lo, -half), half - (k - 1))
    return AntennaSelection(lo_index=lo, hi_index=lo + k - 1, chain_count=k)


def noiseless_signal(cfg: LensArrayConfig, sig: SignalParams, sel: AntennaSelection) -> np.ndarray:
    window = sel.positions(cfg)
    amp = amplitude_profile(cfg, sig.aoa)[window]
    return sig.gain * amp * steering_vector(cfg)[window] * np.exp(1j * sig.phase)


def complex_noise(rng: np.random.Generator, std: float, size) -> np.ndarray:
    """Circular complex Gaussian noise with ``E|n|^2 = std^2``."""
    scale = std / math.sqrt(2)
    return rng.normal(0.0, scale, size) + 1j * rng.normal(0.0, scale, size)


@dataclass(frozen=True)
class GpsPrior:
    """Gaussian prior on the angle of arrival derived from a GPS fix.

    ``angle_std`` may be ``inf`` to disable the prior.
    """

    mean_angle: float
    angle_std: float

    def __post_init__(self):
        _check_angle(self.mean_angle)
        if not self.angle_std > 0:
            raise ValueError(f"angle_std must be > 0, got {self.angle_std}")


@dataclass(frozen=True)
class RfObservation:
    samples: np.ndarray
    selection: AntennaSelection
    signal: SignalParams
    prior: GpsPrior

    def __post_init__(self):
        if np.shape(self.samples) != (self.selection.chain_count,):
            raise ValueError(
                f"expected {self.selection.chain_count} samples, got shape {np.shape(self.samples)}"
            )


def simulate_observation(
    cfg: LensArrayConfig,
    sig: SignalParams,
    sel: AntennaSelection,
    aoa_prior: float,
    prior_std: float,
    rng_seed=None,
) -> RfObservation:
    """Draw one snapshot ``y = g A(aoa) s e^{jb} + n`` on the selected antennas.

    ``rng_seed`` is anything accepted by :func:`numpy.random.default_rng`.
    """
    rng = np.random.default_rng(rng_seed)
    clean = noiseless_signal(cfg, sig, sel)
    y = clean + complex_noise(rng, sig.noise_std, clean.shape)
    return RfObservation(samples=y, selection=sel, signal=sig, prior=GpsPrior(aoa_prior, prior_std))
