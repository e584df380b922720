"""Centralized baselines: best-power utilities, exact assignment, comm costs.

The centralized reference decouples power from assignment: energy
efficiency is separable across UEs once channels are exclusive, so the best
power per (UE, channel) cell can be picked independently and the channel
assignment reduces to a linear sum assignment problem. The Hungarian solver
runs on integer-scaled utilities (x1000, floored) so optimality comparisons
and tie-breaking are exact; ties resolve to the lexicographically smallest
channel tuple.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations
from typing import Sequence

import numpy as np

from .env import NetworkConfig

UTILITY_SCALE = 1000
BRUTE_FORCE_MAX_UES = 8


@dataclass(frozen=True)
class UtilityMatrix:
    """Best-over-power EE per (UE, channel), with feasibility under the SNR floor."""

    u_star: np.ndarray
    best_power_idx: np.ndarray
    feasible: np.ndarray


def build_utility_matrix(gains: np.ndarray, cfg: NetworkConfig) -> UtilityMatrix:
    """Scan every power level per (UE, channel) cell; keep the best feasible EE.

    A cell with no power level clearing gamma_min is infeasible and scores 0,
    mirroring the zero reward a violating assignment would earn.
    """
    gains = np.asarray(gains, dtype=float)
    if gains.shape != (cfg.num_ues, cfg.num_channels):
        raise ValueError(f"gains must be {cfg.num_ues}x{cfg.num_channels}, got {gains.shape}")
    powers = cfg.powers_w
    snrs = gains[:, :, None] * powers[None, None, :] / cfg.noise_w
    ee = cfg.bandwidths_hz[None, :, None] / powers[None, None, :] * np.log2(1.0 + snrs)
    ok = snrs > cfg.gamma_min
    ee = np.where(ok, ee, -np.inf)
    feasible = ok.any(axis=2)
    best_idx = np.where(feasible, np.argmax(ee, axis=2), -1)
    u_star = np.where(feasible, np.max(ee, axis=2), 0.0)
    return UtilityMatrix(u_star=u_star, best_power_idx=best_idx, feasible=feasible)


def _scaled(u_star: np.ndarray) -> list[list[int]]:
    return [[math.floor(v * UTILITY_SCALE) for v in row] for row in np.asarray(u_star, dtype=float)]


def _augmented_scores(scaled: list[list[int]]) -> list[list[int]]:
    """Fold a lexicographic tie-break into the integer scores.

    Adding ``-n * N**(I-1-i)`` on top of scores scaled by N**I makes the
    optimum unique: equal-total assignments are ordered by their channel
    tuple read as a base-N number, so every exact solver lands on the
    lexicographically smallest optimal assignment.
    """
    n_rows, n_cols = len(scaled), len(scaled[0])
    big = n_cols ** n_rows
    return [
        [scaled[i][n] * big - n * n_cols ** (n_rows - 1 - i) for n in range(n_cols)]
        for i in range(n_rows)
    ]


def _lsap_min(cost: list[list[int]]) -> list[int]:
    """Exact O(I^2 N) shortest-augmenting-path assignment on integer costs."""
    n_rows, n_cols = len(cost), len(cost[0])
    inf = float("inf")
    u = [0] * (n_rows + 1)
    v = [0] * (n_cols + 1)
    match = [0] * (n_cols + 1)  # match[j] = 1-based row on column j, 0 = free
    way = [0] * (n_cols + 1)
    for i in range(1, n_rows + 1):
        match[0] = i
        j0 = 0
        minv = [inf] * (n_cols + 1)
        used = [False] * (n_cols + 1)
        while True:
            used[j0] = True
            i0 = match[j0]
            delta = inf
            j1 = 0
            for j in range(1, n_cols + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1][j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n_cols + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    assignment = [-1] * n_rows
    for j in range(1, n_cols + 1):
        if match[j] != 0:
            assignment[match[j] - 1] = j - 1
    return assignment


def assign_hungarian(u_star: np.ndarray) -> tuple[list[int], float]:
    """Best one-to-one UE -> channel map and its total EE.

    Utilities are integer-scaled internally; ties break to the
    lexicographically smallest channel tuple.
    """
    u_star = np.asarray(u_star, dtype=float)
    n_rows, n_cols = u_star.shape
    if n_rows > n_cols:
        raise ValueError("more UEs than channels: no one-to-one assignment exists")
    scores = _augmented_scores(_scaled(u_star))
    cost = [[-s for s in row] for row in scores]
    assignment = _lsap_min(cost)
    total = float(sum(u_star[i, n] for i, n in enumerate(assignment)))
    return assignment, total


def assign_brute_force(u_star: np.ndarray) -> tuple[list[int], float]:
    """Exhaustive assignment search; the verification oracle for the solver."""
    u_star = np.asarray(u_star, dtype=float)
    n_rows, n_cols = u_star.shape
    if n_rows > BRUTE_FORCE_MAX_UES:
        raise ValueError(f"brute force capped at {BRUTE_FORCE_MAX_UES} UEs")
    if n_rows > n_cols:
        raise ValueError("more UEs than channels: no one-to-one assignment exists")
    scaled = _scaled(u_star)
    best_perm = None
    best_total = None
    # lexicographic enumeration + strict improvement = lex-smallest optimum
    for perm in permutations(range(n_cols), n_rows):
        total = sum(scaled[i][n] for i, n in enumerate(perm))
        if best_total is None or total > best_total:
            best_total = total
            best_perm = perm
    assignment = list(best_perm)
    total = float(sum(u_star[i, n] for i, n in enumerate(assignment)))
    return assignment, total


def scaled_total(u_star: np.ndarray, assignment: Sequence[int]) -> int:
    """Integer-scaled total EE of an assignment; exact for equality checks."""
    scaled = _scaled(u_star)
    return sum(scaled[i][n] for i, n in enumerate(assignment))


def comm_cost_crl(epochs: int, steps_per_epoch: int, obs_dims: Sequence[int]) -> int:
    """Scalars a centralized learner uploads: every observation, every step."""
    if epochs < 1 or steps_per_epoch < 1:
        raise ValueError("epochs and steps per epoch must be positive")
    if len(obs_dims) == 0 or any(d < 1 for d in obs_dims):
        raise ValueError("observation dimensions must be positive")
    return epochs * steps_per_epoch * sum(int(d) for d in obs_dims)


def comm_cost_frl(averaging_times: int, model_sizes: Sequence[int]) -> int:
    """Scalars the federated scheme uploads: each model plus its coefficient,
    once per averaging event."""
    if averaging_times < 0:
        raise ValueError("averaging count cannot be negative")
    if any(s < 1 for s in model_sizes):
        raise ValueError("model sizes must be positive")
    return averaging_times * sum(int(s) + 1 for s in model_sizes)
