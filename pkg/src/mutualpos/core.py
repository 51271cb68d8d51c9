"""Ground-truth geometry, measurement generation and shared domain types."""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

TARGET_ID = 0


class Position2D(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class UavTruth:
    id: int
    true_pos: Position2D
    sigma_p_sq: float
    sigma_d_sq: float

    def __post_init__(self):
        if self.sigma_p_sq < 0 or self.sigma_d_sq < 0:
            raise ValueError("variances must be non-negative")


@dataclass(frozen=True)
class Beacon:
    """What u_0 receives from a reference UAV.

    The target's own self-measurement is carried as a beacon with
    ``source_id == 0`` and ``meas_dist == 0``.
    """

    source_id: int
    rep_x: float
    rep_y: float
    rep_sigma_p_sq: float
    meas_dist: float
    rep_sigma_d_sq: float

    @property
    def rep_pos(self) -> Position2D:
        return Position2D(self.rep_x, self.rep_y)


# Generators play the role of RngStream; rng_stream() is the only constructor
# the rest of the package uses.
RngStream = np.random.Generator


def label_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def rng_stream(seed: int, label: str, *index: int) -> RngStream:
    """Deterministic stream keyed by (master seed, purpose label, indices).

    Streams for different labels or indices are statistically independent, so
    Monte-Carlo trials can run in any order.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, label_key(label), *(int(i) for i in index)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def euclidean_distance(a, b) -> float:
    return math.hypot(b[0] - a[0], b[1] - a[1])


def measure_self_position(truth: UavTruth, rng: RngStream) -> Position2D:
    # per-coordinate variance is sigma_p^2 / 2
    scale = math.sqrt(truth.sigma_p_sq / 2.0)
    dx, dy = rng.normal(0.0, 1.0, 2) * scale
    return Position2D(truth.true_pos.x + float(dx), truth.true_pos.y + float(dy))


def measure_distance(source: UavTruth, to_pos: Position2D, rng: RngStream) -> float:
    d = euclidean_distance(source.true_pos, to_pos)
    noise = float(rng.normal(0.0, 1.0)) * math.sqrt(source.sigma_d_sq)
    return max(0.0, d + noise)


def make_beacon(truth: UavTruth, target_pos: Position2D, rng: RngStream) -> Beacon:
    """Self-measurement plus range to the target, packed as the broadcast beacon."""
    rep = measure_self_position(truth, rng)
    dist = measure_distance(truth, target_pos, rng)
    return Beacon(truth.id, rep.x, rep.y, truth.sigma_p_sq, dist, truth.sigma_d_sq)


def self_beacon(truth: UavTruth, rng: RngStream) -> Beacon:
    rep = measure_self_position(truth, rng)
    return Beacon(TARGET_ID, rep.x, rep.y, truth.sigma_p_sq, 0.0, 0.0)
