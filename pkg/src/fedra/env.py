"""Multi-agent uplink environment: joint channel/power choices to global reward.

One learning agent per UE. Fast fading is redrawn every step; UE positions,
pathloss and shadowing are redrawn once per epoch (the 1 ms / 100 ms
two-timescale schedule). The reward is shared: positive only when every UE
holds a collision-free sub-channel and clears the SNR floor, in which case
it is the scaled sum of per-link energy efficiencies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import radio
from .radio import SubChannel


class ConfigError(ValueError):
    """Raised when a scenario configuration violates its invariants."""


def _default_sub_channels() -> tuple[SubChannel, ...]:
    spacings = (15e3, 30e3, 60e3, 120e3)
    return tuple(
        SubChannel(index=n, carrier_freq_ghz=3.5, subcarrier_spacing_hz=s, subcarriers=12)
        for n, s in enumerate(spacings)
    )


@dataclass(frozen=True)
class NetworkConfig:
    """Static scenario parameters for the single-cell OFDMA uplink."""

    num_ues: int = 4
    sub_channels: tuple[SubChannel, ...] = field(default_factory=_default_sub_channels)
    power_levels_dbm: tuple[float, ...] = (0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0, 21.0, 24.0)
    noise_dbm: float = -100.0
    gamma_min: float = 1.0
    area_m: float = 100.0
    speed_max: float = 5.0
    reward_scale: float = 1e-9
    steps_per_epoch: int = 100
    bs_height_m: float = 25.0
    ue_height_m: float = 1.5
    shadowing_sigma_db: float = 8.0
    epoch_duration_s: float = 0.1
    # affine observation normalization: (gain_db + offset) / scale, clipped
    obs_gain_offset_db: float = 110.0
    obs_gain_scale_db: float = 20.0
    obs_clip: float = 5.0

    def __post_init__(self):
        if self.num_ues < 1:
            raise ConfigError("need at least one UE")
        if self.num_ues > self.num_channels:
            raise ConfigError(
                f"{self.num_ues} UEs on {self.num_channels} sub-channels: "
                "no collision-free joint assignment exists"
            )
        p = self.power_levels_dbm
        if len(p) < 1 or any(b <= a for a, b in zip(p, p[1:])):
            raise ConfigError("power levels must be strictly increasing")
        if radio.dbm_to_watts(self.noise_dbm) <= 0:
            raise ConfigError("noise power must be positive")
        if self.area_m <= 0 or self.speed_max < 0:
            raise ConfigError("area must be positive and speed non-negative")
        if self.steps_per_epoch < 1:
            raise ConfigError("steps_per_epoch must be at least 1")
        if self.reward_scale <= 0:
            raise ConfigError("reward scale must be positive")

    @property
    def num_channels(self) -> int:
        return len(self.sub_channels)

    @property
    def num_power_levels(self) -> int:
        return len(self.power_levels_dbm)

    @property
    def num_actions(self) -> int:
        return self.num_channels * self.num_power_levels

    @property
    def obs_dim(self) -> int:
        return self.num_channels + 2

    @property
    def noise_w(self) -> float:
        return radio.dbm_to_watts(self.noise_dbm)

    @property
    def powers_w(self) -> np.ndarray:
        return np.array([radio.dbm_to_watts(p) for p in self.power_levels_dbm])

    @property
    def bandwidths_hz(self) -> np.ndarray:
        return np.array([ch.bandwidth_hz for ch in self.sub_channels])


@dataclass(frozen=True)
class Action:
    """Flat index over the (sub-channel, power level) grid.

    Encoding: ``flat_index = channel * num_power_levels + power_idx``, so each
    action selects exactly one sub-channel by construction.
    """

    flat_index: int

    @staticmethod
    def encode(channel: int, power_idx: int, num_power_levels: int) -> "Action":
        if not (0 <= power_idx < num_power_levels):
            raise ValueError("power index out of range")
        return Action(channel * num_power_levels + power_idx)

    def decode(self, num_power_levels: int) -> tuple[int, int]:
        return self.flat_index // num_power_levels, self.flat_index % num_power_levels


@dataclass(frozen=True)
class Observation:
    """Per-UE observation: normalized per-channel gains plus fingerprints.

    The fingerprints (training-epoch fraction and exploration rate) stand in
    for the other agents' policies, keeping the multi-agent learning problem
    closer to stationary.
    """

    gains_norm: np.ndarray
    epoch_frac: float
    epsilon: float

    def as_array(self, dtype=np.float32) -> np.ndarray:
        return np.concatenate(
            [self.gains_norm, [self.epoch_frac, self.epsilon]]
        ).astype(dtype)


@dataclass(frozen=True)
class StepOutcome:
    reward: float
    next_observations: list[Observation]
    per_ue_success: np.ndarray
    per_ue_ee: np.ndarray
    per_ue_snr: np.ndarray
    collision_mask: np.ndarray


class SuccessTracker:
    """Lifetime per-UE counters of collision-free channel picks."""

    def __init__(self, num_ues: int):
        self.success_counts = np.zeros(num_ues, dtype=np.int64)
        self.total_steps = 0

    def update(self, per_ue_success: np.ndarray) -> None:
        self.success_counts += per_ue_success.astype(np.int64)
        self.total_steps += 1

    def rates(self) -> np.ndarray:
        # zero steps: rate 0 by convention (startup); fed has a uniform fallback
        if self.total_steps == 0:
            return np.zeros_like(self.success_counts, dtype=float)
        return self.success_counts / self.total_steps


def evaluate_assignment(gains: np.ndarray, channels: np.ndarray, power_idx: np.ndarray,
                        cfg: NetworkConfig):
    """Score one joint action against fixed channel gains.

    Returns (reward, per_ue_ee, per_ue_success, per_ue_snr, collision_mask).
    Success per UE is collision-freedom on its chosen channel; the reward is
    additionally gated on every UE clearing the SNR floor.
    """
    ues = np.arange(cfg.num_ues)
    occupancy = np.bincount(channels, minlength=cfg.num_channels)
    exclusive = occupancy[channels] == 1
    collision_mask = occupancy > 1

    powers = cfg.powers_w[power_idx]
    snrs = gains[ues, channels] * powers / cfg.noise_w
    bw = cfg.bandwidths_hz[channels]
    ee = np.where(exclusive, bw / powers * np.log2(1.0 + snrs), 0.0)

    if bool(exclusive.all()) and bool((snrs > cfg.gamma_min).all()):
        reward = cfg.reward_scale * float(ee.sum())
    else:
        reward = 0.0
    return reward, ee, exclusive, snrs, collision_mask


class ResourceAllocationEnv:
    """Single-cell scenario state plus the two-timescale update schedule."""

    def __init__(self, cfg: NetworkConfig):
        self.cfg = cfg
        self._rng: np.random.Generator | None = None
        self.tracker = SuccessTracker(cfg.num_ues)

    # -- lifecycle ---------------------------------------------------------

    def reset(self, seed: int, epoch_frac: float = 0.0, epsilon: float = 1.0):
        """Place UEs uniformly in the square and draw a fresh channel state."""
        cfg = self.cfg
        self._rng = np.random.default_rng(seed)
        self.positions = self._rng.uniform(0.0, cfg.area_m, size=(cfg.num_ues, 2))
        self.bs_xy = np.array([cfg.area_m / 2.0, cfg.area_m / 2.0])
        self.tracker = SuccessTracker(cfg.num_ues)
        self._resample_large_scale()
        self._resample_fading()
        return self.observations(epoch_frac, epsilon)

    def _require_reset(self) -> np.random.Generator:
        if self._rng is None:
            raise RuntimeError("environment not initialized; call reset() first")
        return self._rng

    # -- channel state -----------------------------------------------------

    def _distances(self) -> np.ndarray:
        dxy = self.positions - self.bs_xy
        dz = self.cfg.bs_height_m - self.cfg.ue_height_m
        return np.sqrt((dxy ** 2).sum(axis=1) + dz * dz)

    def _resample_large_scale(self) -> None:
        cfg = self.cfg
        d3d = self._distances()
        freqs = np.array([ch.carrier_freq_ghz for ch in cfg.sub_channels])
        self.pathloss = radio.pathloss_db(freqs[None, :], d3d[:, None])
        self.shadowing = radio.sample_shadowing(
            self._rng, cfg.shadowing_sigma_db, size=(cfg.num_ues, cfg.num_channels)
        )
        self._large_scale = 10.0 ** (-self.pathloss / 10.0) * self.shadowing

    def _resample_fading(self) -> None:
        cfg = self.cfg
        self.fading = radio.sample_rayleigh_power(
            self._rng, size=(cfg.num_ues, cfg.num_channels)
        )
        self.gains = self._large_scale * self.fading

    # -- MDP interface -----------------------------------------------------

    def observations(self, epoch_frac: float, epsilon: float) -> list[Observation]:
        cfg = self.cfg
        # 1e-30 floor keeps a zero fading draw out of the log
        gains_db = 10.0 * np.log10(self.gains + 1e-30)
        norm = (gains_db + cfg.obs_gain_offset_db) / cfg.obs_gain_scale_db
        norm = np.clip(norm, -cfg.obs_clip, cfg.obs_clip)
        return [
            Observation(norm[i].copy(), float(epoch_frac), float(epsilon))
            for i in range(cfg.num_ues)
        ]

    def step(self, joint_action: list[Action], epoch_frac: float, epsilon: float) -> StepOutcome:
        """Apply one joint action, update success counters, advance fast fading."""
        self._require_reset()
        cfg = self.cfg
        if len(joint_action) != cfg.num_ues:
            raise ValueError(f"expected one action per UE ({cfg.num_ues}), got {len(joint_action)}")
        channels = np.empty(cfg.num_ues, dtype=np.int64)
        power_idx = np.empty(cfg.num_ues, dtype=np.int64)
        for i, a in enumerate(joint_action):
            if not (0 <= a.flat_index < cfg.num_actions):
                raise ValueError(f"action {a.flat_index} outside 0..{cfg.num_actions - 1}")
            channels[i], power_idx[i] = a.decode(cfg.num_power_levels)

        reward, ee, success, snrs, collision_mask = evaluate_assignment(
            self.gains, channels, power_idx, cfg
        )
        self.tracker.update(success)
        self._resample_fading()
        return StepOutcome(
            reward=reward,
            next_observations=self.observations(epoch_frac, epsilon),
            per_ue_success=success,
            per_ue_ee=ee,
            per_ue_snr=snrs,
            collision_mask=collision_mask,
        )

    def advance_epoch(self) -> None:
        """Move every UE for one epoch and redraw pathloss and shadowing."""
        rng = self._require_reset()
        cfg = self.cfg
        speeds = rng.uniform(0.0, cfg.speed_max, size=cfg.num_ues)
        angles = rng.uniform(0.0, 2.0 * np.pi, size=cfg.num_ues)
        delta = (speeds * cfg.epoch_duration_s)[:, None] * np.stack(
            [np.cos(angles), np.sin(angles)], axis=1
        )
        self.positions = _reflect(self.positions + delta, cfg.area_m)
        self._resample_large_scale()
        self._resample_fading()

    def success_rates(self) -> np.ndarray:
        return self.tracker.rates()


def _reflect(pos: np.ndarray, bound: float) -> np.ndarray:
    """Fold positions back into [0, bound] by mirror reflection at the walls."""
    period = 2.0 * bound
    folded = np.mod(pos, period)
    return np.where(folded > bound, period - folded, folded)
