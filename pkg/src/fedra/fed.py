"""Federated fusion of local Q-network weights.

Two weighting rules from the training framework: replay-memory size and
channel-assignment success rate, plus a uniform fallback. Fusion happens at
a barrier: all agents stop, weights are collected, averaged and broadcast
back, overwriting both the evaluation and the target network so no stale
target survives the fusion.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class DegenerateCoefficientsError(ValueError):
    """All averaging coefficients are zero; no weighted mean exists."""


@dataclass(frozen=True)
class AveragingEvent:
    """Audit record of one fusion: who contributed how much, and checksums."""

    event_index: int
    rule: str
    coefficients: tuple[float, ...]
    checksums_before: tuple[str, ...]
    checksum_after: str

    def to_record(self) -> dict:
        return {
            "event_index": self.event_index,
            "rule": self.rule,
            "coefficients": list(self.coefficients),
            "checksums_before": list(self.checksums_before),
            "checksum_after": self.checksum_after,
        }


def _weighted_mean(models: Sequence[np.ndarray], coeffs: np.ndarray) -> np.ndarray:
    stack = np.stack([np.asarray(m) for m in models])
    if stack.ndim != 2:
        raise ValueError("models must be flat weight vectors")
    alphas = coeffs.astype(np.float64) / coeffs.sum(dtype=np.float64)
    fused = alphas @ stack.astype(np.float64)
    # convex combination: clamp ulp-level rounding back into the coordinate hull
    fused = np.clip(fused, stack.min(axis=0), stack.max(axis=0))
    return fused.astype(stack.dtype)


def average_by_memory(models: Sequence[np.ndarray], memory_sizes: Sequence[int]) -> np.ndarray:
    """Replay-size-weighted mean: sum(|RM_i| * W_i) / sum(|RM_i|)."""
    sizes = np.asarray(memory_sizes, dtype=np.float64)
    if len(models) != len(sizes):
        raise ValueError("one memory size per model required")
    if np.any(sizes < 0):
        raise ValueError("memory sizes cannot be negative")
    if sizes.sum() == 0:
        raise DegenerateCoefficientsError("all replay memories are empty")
    return _weighted_mean(models, sizes)


def average_by_success(models: Sequence[np.ndarray], etas: Sequence[float]) -> np.ndarray:
    """Success-rate-weighted mean; all-zero rates fall back to uniform."""
    etas = np.asarray(etas, dtype=np.float64)
    if len(models) != len(etas):
        raise ValueError("one success rate per model required")
    if np.any((etas < 0) | (etas > 1)):
        raise ValueError("success rates must lie in [0, 1]")
    if etas.sum() == 0:
        return _weighted_mean(models, np.ones_like(etas))
    return _weighted_mean(models, etas)


def _checksum(flat: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(flat).tobytes()).hexdigest()[:16]


def run_averaging_round(agents: Sequence, rule: str, tracker=None,
                        event_index: int = 1) -> AveragingEvent:
    """Fuse all agents' evaluation weights and broadcast the result.

    ``rule`` is one of "memory", "success" or "uniform". The fused model
    overwrites each agent's evaluation AND target weights. An all-zero
    memory rule falls back to uniform coefficients.
    """
    flats = [a.get_flat_weights() for a in agents]
    lengths = {f.size for f in flats}
    if len(lengths) != 1:
        raise ValueError(f"agents hold models of different sizes: {sorted(lengths)}")

    if rule == "memory":
        coeffs = np.array([len(a.memory) for a in agents], dtype=np.float64)
        if coeffs.sum() == 0:
            coeffs = np.ones(len(agents))
    elif rule == "success":
        if tracker is None:
            raise ValueError("success rule needs the environment's success tracker")
        coeffs = np.asarray(tracker.rates(), dtype=np.float64)
        if coeffs.sum() == 0:
            coeffs = np.ones(len(agents))
    elif rule == "uniform":
        coeffs = np.ones(len(agents))
    else:
        raise ValueError(f"unknown averaging rule {rule!r}")

    fused = _weighted_mean(flats, coeffs)
    before = tuple(_checksum(f) for f in flats)
    for a in agents:
        a.set_flat_weights(fused, include_target=True)
    normalized = coeffs / coeffs.sum()
    return AveragingEvent(
        event_index=event_index,
        rule=rule,
        coefficients=tuple(float(c) for c in normalized),
        checksums_before=before,
        checksum_after=_checksum(fused),
    )
