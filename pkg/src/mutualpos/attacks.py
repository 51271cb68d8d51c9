"""Beacon attack injection: deterioration, variance, bias and manipulation."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from .core import TARGET_ID, Beacon, RngStream


class AttackMode(str, enum.Enum):
    DETERIORATION = "deterioration"
    VARIANCE = "variance"
    BIAS = "bias"
    MANIPULATION = "manipulation"

    @property
    def is_noise(self) -> bool:
        return self in (AttackMode.DETERIORATION, AttackMode.VARIANCE)


@dataclass(frozen=True)
class VarianceVector:
    """Added noise variances (m^2) for position and distance."""

    sigma_dp_sq: float
    sigma_dd_sq: float

    def __post_init__(self):
        if self.sigma_dp_sq < 0 or self.sigma_dd_sq < 0:
            raise ValueError("attack variances must be non-negative")


@dataclass(frozen=True)
class BiasVector:
    """Constant offset (m) added to the reported position."""

    nu_x: float
    nu_y: float


AttackVector = VarianceVector | BiasVector

DEFAULT_VARIANCE_AV = VarianceVector(50.0, 50.0)
DEFAULT_BIAS_AV = BiasVector(5.0, 5.0)


def default_av(mode: AttackMode) -> AttackVector:
    return DEFAULT_VARIANCE_AV if AttackMode(mode).is_noise else DEFAULT_BIAS_AV


@dataclass(frozen=True)
class AttackConfig:
    mode: AttackMode
    av: AttackVector | None = None
    num_compromised: int = 3
    penetration: float = 0.5
    coordinated: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mode", AttackMode(self.mode))
        if self.av is None:
            object.__setattr__(self, "av", default_av(self.mode))
        _check_av(self.mode, self.av)
        if self.num_compromised < 0:
            raise ValueError("num_compromised must be >= 0")
        if not 0.0 <= self.penetration <= 1.0:
            raise ValueError("penetration must be in [0, 1]")


def _check_av(mode: AttackMode, av) -> None:
    expected = VarianceVector if mode.is_noise else BiasVector
    if not isinstance(av, expected):
        raise ValueError(f"{mode.value} attack needs a {expected.__name__}, got {type(av).__name__}")


def select_compromised(num_uavs: int, config: AttackConfig, rng: RngStream) -> frozenset[int]:
    """Uniform random J-subset of the reference ids 1..I."""
    if config.num_compromised > num_uavs:
        raise ValueError(f"cannot compromise {config.num_compromised} of {num_uavs} UAVs")
    ids = rng.choice(num_uavs, size=config.num_compromised, replace=False) + 1
    return frozenset(int(i) for i in ids)


def draw_attack_mask(compromised, config: AttackConfig, rng: RngStream) -> frozenset[int]:
    ids = sorted(compromised)
    if config.coordinated:
        return frozenset(ids) if rng.random() < config.penetration else frozenset()
    draws = rng.random(len(ids))
    return frozenset(i for i, u in zip(ids, draws) if u < config.penetration)


def apply_attack(beacon: Beacon, mode: AttackMode, av, rng: RngStream | None = None) -> Beacon:
    mode = AttackMode(mode)
    _check_av(mode, av)
    if beacon.source_id == TARGET_ID:
        raise ValueError("the target's own measurement cannot be attacked")

    if mode.is_noise:
        if rng is None:
            raise ValueError(f"{mode.value} attack needs an rng")
        sp = math.sqrt(av.sigma_dp_sq / 2.0)
        nx, ny, nd = rng.normal(0.0, 1.0, 3)
        attacked = replace(
            beacon,
            rep_x=beacon.rep_x + sp * float(nx),
            rep_y=beacon.rep_y + sp * float(ny),
            meas_dist=max(0.0, beacon.meas_dist + math.sqrt(av.sigma_dd_sq) * float(nd)),
        )
        if mode is AttackMode.DETERIORATION:
            attacked = replace(attacked,
                               rep_sigma_p_sq=beacon.rep_sigma_p_sq + av.sigma_dp_sq,
                               rep_sigma_d_sq=beacon.rep_sigma_d_sq + av.sigma_dd_sq)
        return attacked

    biased = replace(beacon, rep_x=beacon.rep_x + av.nu_x, rep_y=beacon.rep_y + av.nu_y)
    if mode is AttackMode.MANIPULATION:
        biased = replace(biased, rep_sigma_p_sq=0.0, rep_sigma_d_sq=0.0)
    return biased
