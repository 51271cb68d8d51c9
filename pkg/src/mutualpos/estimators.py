"""LSE / WLSE objectives and the robust gradient descent (RGD) solver."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import TARGET_ID, Beacon, Position2D
from .error_model import ConvertedError, ErrorSurface, convert_for_solver

D_FLOOR = 1e-9
SIGMA_FLOOR = 1e-9


@dataclass(frozen=True)
class RgdParams:
    epsilon: float = 1e-6
    max_iters: int = 15
    alpha: float = 0.9
    gamma: float = 0.9
    momentum: float = 1e-5

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must be in (0, 1)")
        if self.momentum < 0:
            raise ValueError("momentum must be >= 0")


@dataclass(frozen=True)
class StepState:
    """Step length and the previous objective value (+inf before any step)."""

    alpha: float
    last_u: float = math.inf

    @classmethod
    def initial(cls, params: RgdParams) -> StepState:
        return cls(params.alpha, math.inf)


@dataclass
class RgdResult:
    estimate: Position2D
    objective_trace: list[float]
    iterations_used: int
    step_state: StepState
    estimate_trace: list[Position2D] = field(default_factory=list)
    converged: bool = False


@dataclass(frozen=True)
class WeightedResidualSet:
    D: np.ndarray
    sign: np.ndarray
    mu_circ: np.ndarray
    sigma_circ: np.ndarray
    sigma_max: float


class Problem:
    """Beacon data flattened into arrays for the descent kernel."""

    __slots__ = ("ids", "px", "py", "offset", "sigma")

    def __init__(self, beacons: Sequence[Beacon], converted: Sequence[ConvertedError]):
        if len(beacons) == 0:
            raise ValueError("empty beacon set")
        if len(converted) != len(beacons):
            raise ValueError("converted errors must align with beacons")
        self.ids = np.array([b.source_id for b in beacons])
        self.px = np.array([b.rep_x for b in beacons], dtype=float)
        self.py = np.array([b.rep_y for b in beacons], dtype=float)
        # residual = D - d~ + mu  =  D - offset
        self.offset = np.array([b.meas_dist - c.mu_circ for b, c in zip(beacons, converted)])
        self.sigma = np.maximum(
            np.array([c.sigma_circ for c in converted], dtype=float), SIGMA_FLOOR)

    def subset(self, mask: np.ndarray) -> Problem:
        out = object.__new__(Problem)
        for name in Problem.__slots__:
            setattr(out, name, getattr(self, name)[mask])
        return out


def _objective(x: float, y: float, p: Problem) -> float:
    D = np.hypot(p.px - x, p.py - y)
    w = p.sigma.max() / p.sigma
    return float(np.sum(np.abs(D - p.offset) * w) / p.px.size)


def _step(x: float, y: float, p: Problem, alpha: float, momentum: float):
    """One RGD update; returns the new estimate and the objective there."""
    dx = p.px - x
    dy = p.py - y
    D = np.maximum(np.hypot(dx, dy), D_FLOOR)
    s = np.sign(D - p.offset)
    w = p.sigma.max() / p.sigma
    g = s * w / D
    n = p.px.size
    nx = x + (momentum * x + alpha / n * float(np.sum(g * dx)))
    ny = y + (momentum * y + alpha / n * float(np.sum(g * dy)))
    return nx, ny, _objective(nx, ny, p)


def _converged(last_u: float, u: float, epsilon: float) -> bool:
    if math.isinf(last_u):
        return False
    if last_u == 0.0:
        return True
    return (last_u - u) / last_u <= epsilon


def _advance(x: float, y: float, p: Problem, params: RgdParams, state: StepState):
    """Step plus the over-descent / convergence bookkeeping.

    Returns (x, y, u, new_state, converged).
    """
    nx, ny, u = _step(x, y, p, state.alpha, params.momentum)
    if u > state.last_u:
        return nx, ny, u, StepState(state.alpha * params.gamma, u), False
    return nx, ny, u, StepState(state.alpha, u), _converged(state.last_u, u, params.epsilon)


def _descend(init, p: Problem, params: RgdParams, state: StepState | None = None) -> RgdResult:
    x, y = float(init[0]), float(init[1])
    state = state or StepState.initial(params)
    trace, positions = [], []
    converged = False
    for _ in range(params.max_iters):
        x, y, u, state, converged = _advance(x, y, p, params, state)
        trace.append(u)
        positions.append(Position2D(x, y))
        if converged:
            break
    return RgdResult(Position2D(x, y), trace, len(trace), state, positions, converged)


def objective(estimate, beacons: Sequence[Beacon], converted: Sequence[ConvertedError]) -> float:
    """Normalised weighted absolute residual U at ``estimate``."""
    return _objective(float(estimate[0]), float(estimate[1]), Problem(beacons, converted))


def residual_set(estimate, beacons, converted) -> WeightedResidualSet:
    p = Problem(beacons, converted)
    D = np.hypot(p.px - estimate[0], p.py - estimate[1])
    return WeightedResidualSet(D, np.sign(D - p.offset),
                               np.array([c.mu_circ for c in converted]),
                               p.sigma, float(p.sigma.max()))


def rgd_step(estimate, beacons: Sequence[Beacon], converted: Sequence[ConvertedError],
             params: RgdParams, step_state: StepState | None = None):
    """Single RGD iteration.

    Returns ``(new_estimate, U_k, new_step_state)``; the step length in the new
    state is discounted by gamma when U_k exceeds the previous objective.
    """
    p = Problem(beacons, converted)
    x, y, u, state, _ = _advance(float(estimate[0]), float(estimate[1]), p, params,
                                 step_state or StepState.initial(params))
    return Position2D(x, y), u, state


def wlse_solve(init, beacons: Sequence[Beacon], converted: Sequence[ConvertedError],
               params: RgdParams) -> RgdResult:
    """RGD on already-converted errors."""
    return _descend(init, Problem(beacons, converted), params)


def _self_position(beacons: Sequence[Beacon]):
    for b in beacons:
        if b.source_id == TARGET_ID:
            return b.rep_pos
    return None


def _resolve_init(init, beacons):
    if init is not None:
        return init
    init = _self_position(beacons)
    if init is None:
        raise ValueError("no init given and no self-measurement beacon present")
    return init


def rgd_solve(init, beacons: Sequence[Beacon], surface: ErrorSurface,
              params: RgdParams = RgdParams()) -> RgdResult:
    """Robust gradient descent.

    ``beacons`` should contain the target's own self-measurement (source id 0);
    it acts as an anchor with zero distance.  ``init=None`` starts from it.
    Error conversion is done once, since its inputs do not change during descent.
    """
    if len(beacons) == 0:
        raise ValueError("empty beacon set")
    init = _resolve_init(init, beacons)
    converted = [convert_for_solver(b, surface) for b in beacons]
    return wlse_solve(init, beacons, converted, params)


def lse_solve(init, beacons: Sequence[Beacon], params: RgdParams = RgdParams()) -> RgdResult:
    """Unweighted baseline: zero mean correction and equal error scales."""
    if len(beacons) == 0:
        raise ValueError("empty beacon set")
    init = _resolve_init(init, beacons)
    converted = [ConvertedError(0.0, 1.0)] * len(beacons)
    return wlse_solve(init, beacons, converted, params)


def with_max_iters(params: RgdParams, k: int) -> RgdParams:
    return replace(params, max_iters=k)
