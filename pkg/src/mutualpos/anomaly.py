"""Recursive data anomaly detection (RDAD).

The upper stage advances the position estimate one RGD step at a time.  Before
each of those steps the lower stage restarts from the target's own
self-measurement, refines a reference position with single RGD steps and
rejects, one per lower iteration, the beacon whose corrected residual is
least likely under its converted error model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import erf

from .core import TARGET_ID, Beacon, Position2D
from .error_model import ConvertedError, ErrorSurface, convert_for_solver
from .estimators import Problem, RgdParams, StepState, _advance, _step

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class RdadParams:
    confidence: float = 0.99
    upper_iters: int = 15
    lower_iters: int = 5
    sigma_min: float = math.sqrt(0.1)
    rgd: RgdParams = RgdParams()

    def __post_init__(self):
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must be in (0, 1)")
        if self.upper_iters < 1 or self.lower_iters < 1:
            raise ValueError("upper_iters and lower_iters must be >= 1")
        if not self.sigma_min > 0:
            raise ValueError("sigma_min must be > 0")


@dataclass(frozen=True)
class ConfidenceScore:
    uav_id: int
    theta: float
    xi: float


@dataclass
class RdadResult:
    estimate: Position2D
    accepted_ids: set
    rejected_ids: list
    objective_trace: list[float]
    estimate_trace: list[Position2D] = field(default_factory=list)
    degenerate: bool = False
    converged: bool = False


def folded_normal_cdf(theta, sigma):
    """P(|N(0, sigma^2)| <= theta)."""
    return erf(np.asarray(theta) / (np.asarray(sigma) * SQRT2))


def confidence(beacon: Beacon, ref_estimate, converted: ConvertedError,
               sigma_min: float) -> ConfidenceScore:
    if not sigma_min > 0:
        raise ValueError("sigma_min must be > 0")
    sigma_eff = max(converted.sigma_circ, sigma_min)
    D = math.hypot(beacon.rep_x - ref_estimate[0], beacon.rep_y - ref_estimate[1])
    theta = abs(D - beacon.meas_dist + converted.mu_circ)
    return ConfidenceScore(beacon.source_id, theta, float(folded_normal_cdf(theta, sigma_eff)))


def _scores(x: float, y: float, p: Problem, sigma_min: float) -> np.ndarray:
    D = np.hypot(p.px - x, p.py - y)
    theta = np.abs(D - p.offset)
    return folded_normal_cdf(theta, np.maximum(p.sigma, sigma_min))


def rdad_solve(beacons: Sequence[Beacon], surface: ErrorSurface,
               params: RdadParams = RdadParams()) -> RdadResult:
    anchor = next((b for b in beacons if b.source_id == TARGET_ID), None)
    if anchor is None:
        raise ValueError("beacons must include the target's self-measurement (id 0)")
    converted = [convert_for_solver(b, surface) for b in beacons]
    full = Problem(beacons, converted)
    return _rdad(full, anchor.rep_pos, params)


def rdad_on_converted(beacons: Sequence[Beacon], converted: Sequence[ConvertedError],
                      params: RdadParams = RdadParams()) -> RdadResult:
    anchor = next((b for b in beacons if b.source_id == TARGET_ID), None)
    if anchor is None:
        raise ValueError("beacons must include the target's self-measurement (id 0)")
    return _rdad(Problem(beacons, converted), anchor.rep_pos, params)


def _rdad(full: Problem, anchor: Position2D, params: RdadParams) -> RdadResult:
    rgd = params.rgd
    active = np.ones(full.ids.size, dtype=bool)
    is_target = full.ids == TARGET_ID
    rejected: list[int] = []
    x, y = anchor
    state = StepState.initial(rgd)
    trace: list[float] = []
    positions: list[Position2D] = []
    degenerate = converged = False

    for _ in range(params.upper_iters):
        p = full.subset(active)
        rx, ry = anchor
        for _ in range(params.lower_iters):
            # a K = 1 call of RGD starts from the configured step length
            rx, ry, _u = _step(rx, ry, p, rgd.alpha, rgd.momentum)
            cand = active & ~is_target
            if not cand.any():
                break
            xi = np.full(full.ids.size, -1.0)
            xi[cand] = _scores(rx, ry, full.subset(cand), params.sigma_min)
            # lexicographic argmax: highest xi, then lowest id
            order = np.lexsort((full.ids, -xi))
            j = order[0]
            if xi[j] > params.confidence:
                active[j] = False
                rejected.append(int(full.ids[j]))
                p = full.subset(active)
            else:
                break
        if not (active & ~is_target).any():
            degenerate = True
            x, y = anchor
            break
        x, y, u, state, converged = _advance(x, y, p, rgd, state)
        trace.append(u)
        positions.append(Position2D(x, y))
        if converged:
            break

    accepted = {int(i) for i in full.ids[active & ~is_target]}
    return RdadResult(Position2D(x, y), accepted, rejected, trace, positions,
                      degenerate, converged)
