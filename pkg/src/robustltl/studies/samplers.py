"""Truck disturbance samplers for the two driving scenarios."""
from __future__ import annotations

from typing import Optional

import numpy as np

from ..scenario import Multisample
from .config import KMH, CaseConfig

TRUCK_POSE0 = (44.0, 1.75, 0.0)
TRUCK_SPEED_TURNING = 22.0 * KMH
LATERAL_SPEED = 3.75 * KMH
OVERTAKE_Y1 = (13.5, 17.5)
MIDDLE_LANE = -1.75


def omega_bounds(N: int) -> tuple:
    """Per-step heading increment range before the running-sum cap."""
    return (np.pi - 0.66) / (2 * (N + 1)), (np.pi + 0.66) / (2 * (N + 1))


def _rng(config: CaseConfig, rng: Optional[np.random.Generator]) -> np.random.Generator:
    return rng if rng is not None else np.random.default_rng(config.seed)


def sample_turning(config: CaseConfig, count: int, rng: Optional[np.random.Generator] = None) -> Multisample:
    """Unicycle truck turning left across the car's lane; ``w_k = (y1, y2, theta)``.

    The truck faces ``-x1`` initially, so its world heading is ``pi + theta``.
    Each step integrates the exact constant-rate arc.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = _rng(config, rng)
    N, Ts, v = config.N, config.Ts, TRUCK_SPEED_TURNING
    lo, hi = omega_bounds(N)
    W = np.empty((count, N + 1, 3))
    W[:, 0] = TRUCK_POSE0
    total = np.zeros(count)
    for k in range(N):
        cap = np.minimum(hi, np.pi / 2 - total)
        u = rng.random(count)
        om = np.where(cap > lo, lo + u * (cap - lo), np.maximum(cap, 0.0))
        # the cap guarantees the accumulated turn never exceeds a right angle
        om = np.minimum(om, np.pi / 2 - total)
        psi0 = np.pi + W[:, k, 2]
        psi1 = psi0 + om
        rate = om / Ts
        small = np.abs(rate) < 1e-12
        safe = np.where(small, 1.0, rate)
        dy1 = np.where(small, v * Ts * np.cos(psi0), v / safe * (np.sin(psi1) - np.sin(psi0)))
        dy2 = np.where(small, v * Ts * np.sin(psi0), -v / safe * (np.cos(psi1) - np.cos(psi0)))
        W[:, k + 1, 0] = W[:, k, 0] + dy1
        W[:, k + 1, 1] = W[:, k, 1] + dy2
        W[:, k + 1, 2] = W[:, k, 2] + om
        total += om
    return Multisample(W.reshape(count, -1), N, 3, f"turning(seed={config.seed})")


def sample_overtaking(config: CaseConfig, count: int, rng: Optional[np.random.Generator] = None) -> Multisample:
    """Single-integrator truck in a frame co-moving with it; ``w_k = (y1, y2)``.

    The lateral direction is fixed by the initial offset: at or left of the
    middle-lane centre the truck drifts left, otherwise right.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = _rng(config, rng)
    N, Ts = config.N, config.Ts
    y1 = rng.uniform(*OVERTAKE_Y1, size=count)
    y2 = Ts * rng.uniform(-LATERAL_SPEED, LATERAL_SPEED, size=count) + MIDDLE_LANE
    left = y2 >= MIDDLE_LANE
    speed = rng.uniform(0.0, LATERAL_SPEED, size=(count, N))
    vl = np.where(left[:, None], speed, -speed)
    W = np.empty((count, N + 1, 2))
    W[:, :, 0] = y1[:, None]
    W[:, 0, 1] = y2
    W[:, 1:, 1] = y2[:, None] + Ts * np.cumsum(vl, axis=1)
    return Multisample(W.reshape(count, -1), N, 2, f"overtaking(seed={config.seed})")


def moves_left(W, N: int) -> np.ndarray:
    """Branch label of overtaking samples: lateral position increases after the first step."""
    W = np.asarray(W, dtype=float).reshape(-1, N + 1, 2)
    return W[:, 1, 1] > W[:, 0, 1]
