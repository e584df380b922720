"""Propagation and link-utility maths for the uplink OFDMA scenario.

Everything here is a pure function of its arguments (sampling ops take the
caller's RNG), so the module is safe to use from any thread. Internal units
are SI: Hz, W, m. dB/dBm appear only at conversion boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SubChannel",
    "LinkGeometry",
    "ChannelState",
    "dbm_to_watts",
    "watts_to_dbm",
    "db_to_linear",
    "linear_to_db",
    "pathloss_db",
    "sample_shadowing",
    "sample_rayleigh_power",
    "compose_gain",
    "snr",
    "ee_utility",
]


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * np.log10(watts) + 30.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(linear: float) -> float:
    return 10.0 * np.log10(linear)


@dataclass(frozen=True)
class SubChannel:
    """One OFDMA sub-channel: a block of equal-spacing subcarriers.

    5G NR style mixed numerology: sub-channels may use different subcarrier
    spacings, so their bandwidths differ even with a common subcarrier count.
    """

    index: int
    carrier_freq_ghz: float = 3.5
    subcarrier_spacing_hz: float = 15e3
    subcarriers: int = 12

    def __post_init__(self):
        if self.carrier_freq_ghz <= 0:
            raise ValueError("carrier frequency must be positive")
        if self.subcarrier_spacing_hz <= 0 or self.subcarriers <= 0:
            raise ValueError("spacing and subcarrier count must be positive")

    @property
    def bandwidth_hz(self) -> float:
        return self.subcarriers * self.subcarrier_spacing_hz


@dataclass(frozen=True)
class LinkGeometry:
    """UE and BS positions in metres; distance is the 3D Euclidean norm."""

    ue_position: tuple[float, float, float]
    bs_position: tuple[float, float, float]

    @property
    def d3d(self) -> float:
        dx = self.ue_position[0] - self.bs_position[0]
        dy = self.ue_position[1] - self.bs_position[1]
        dz = self.ue_position[2] - self.bs_position[2]
        return float(np.sqrt(dx * dx + dy * dy + dz * dz))


@dataclass(frozen=True)
class ChannelState:
    """Per-link channel: pathloss (dB), shadowing and fast fading (linear).

    The composed gain is derived, so ``gain == 10**(-pl/10) * shadowing *
    fading`` holds by construction.
    """

    pathloss_db: float
    shadowing: float
    fast_fading: float

    def __post_init__(self):
        if self.shadowing <= 0:
            raise ValueError("shadowing factor must be positive")
        if self.fast_fading < 0:
            raise ValueError("fast fading power cannot be negative")

    @property
    def gain(self) -> float:
        return compose_gain(self.pathloss_db, self.shadowing, self.fast_fading)


def pathloss_db(freq_ghz, d3d_m):
    """Urban macro pathloss, 38.901-style: 32.4 + 20 log10(f) + 30 log10(d).

    ``freq_ghz`` in GHz, ``d3d_m`` the 3D distance in metres. Accepts arrays.
    """
    freq_ghz = np.asarray(freq_ghz, dtype=float)
    d3d_m = np.asarray(d3d_m, dtype=float)
    if np.any(freq_ghz <= 0):
        raise ValueError("carrier frequency must be positive")
    if np.any(d3d_m <= 0):
        raise ValueError("distance must be positive")
    out = 32.4 + 20.0 * np.log10(freq_ghz) + 30.0 * np.log10(d3d_m)
    return out if out.ndim else float(out)


def sample_shadowing(rng: np.random.Generator, sigma_db: float, size=None):
    """Log-normal shadowing factor: 10**(X/10), X ~ Normal(0, sigma_db^2)."""
    if sigma_db < 0:
        raise ValueError("shadowing sigma must be non-negative")
    x = rng.normal(0.0, sigma_db, size=size)
    return 10.0 ** (x / 10.0)


def sample_rayleigh_power(rng: np.random.Generator, size=None):
    """Rayleigh fading power: |h|^2 of a unit-variance complex Gaussian.

    Equivalent to Exponential(mean 1); sampled directly as such.
    """
    return rng.exponential(1.0, size=size)


def compose_gain(pl_db, shadowing, fading):
    """Overall channel gain: 10**(-PL/10) * shadowing * fading (all linear)."""
    return 10.0 ** (-np.asarray(pl_db, dtype=float) / 10.0) * shadowing * fading


def snr(gain, tx_power_w, noise_power_w):
    """Assigned-link SNR: gain * p / noise, all linear (W)."""
    if np.any(np.asarray(noise_power_w) <= 0):
        raise ValueError("noise power must be positive")
    if np.any(np.asarray(tx_power_w) < 0) or np.any(np.asarray(gain) < 0):
        raise ValueError("gain and transmit power cannot be negative")
    return gain * tx_power_w / noise_power_w


def ee_utility(bw_hz, tx_power_w, snr_linear, exclusive=True):
    """Uplink energy efficiency of one link, in bits per joule.

    (BW/p) * log2(1 + snr) when the sub-channel is held exclusively, else 0:
    a collided OFDMA sub-channel carries no data.
    """
    if not exclusive:
        return 0.0
    if np.any(np.asarray(tx_power_w) <= 0):
        raise ValueError("transmit power must be positive for an active link")
    return bw_hz / tx_power_w * np.log2(1.0 + snr_linear)
