"""Monte-Carlo scenarios, trial execution and result aggregation."""
from __future__ import annotations

import csv
import enum
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .anomaly import RdadParams, _rdad
from .attacks import AttackConfig, apply_attack, draw_attack_mask, select_compromised
from .core import (TARGET_ID, Beacon, Position2D, UavTruth, euclidean_distance,
                   make_beacon, rng_stream, self_beacon)
from .error_model import ConvertedError, ErrorSurface, convert_for_solver, default_surface
from .estimators import Problem, RgdParams, _descend


class Estimator(str, enum.Enum):
    LSE = "lse"
    RGD = "rgd"
    RDAD = "rdad"


@dataclass(frozen=True)
class SimConfig:
    map_size: tuple[float, float] = (30.0, 30.0)
    num_uavs: int = 10
    sigma_p_sq_range: tuple[float, float] = (0.1, 2.1)
    sigma_d_sq_range: tuple[float, float] = (0.1, 0.9)
    trials: int = 1000
    attack: AttackConfig | None = None
    estimator: Estimator = Estimator.RGD
    rgd: RgdParams = RgdParams()
    rdad: RdadParams = RdadParams()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "estimator", Estimator(self.estimator))
        for name in ("sigma_p_sq_range", "sigma_d_sq_range"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ValueError(f"{name} must satisfy 0 <= lo <= hi")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.num_uavs < 1:
            raise ValueError("num_uavs must be >= 1")
        if min(self.map_size) <= 0:
            raise ValueError("map_size must be positive")
        if self.attack is not None and self.attack.num_compromised > self.num_uavs - 1:
            raise ValueError("more compromised UAVs than reference UAVs")

    @property
    def iteration_cap(self) -> int:
        if self.estimator is Estimator.RDAD:
            return self.rdad.upper_iters
        return self.rgd.max_iters


@dataclass
class TrialRecord:
    trial_index: int
    truths: list[UavTruth]
    beacons: list[Beacon]
    attacked_ids: frozenset
    estimate_trace: list[Position2D]
    error_trace: list[float]
    accepted_ids: set
    rejected_ids: list
    iterations_used: int
    degenerate: bool = False

    @property
    def final_error(self) -> float:
        return self.error_trace[-1]

    @property
    def raw_error(self) -> float:
        """Error of the target's own self-measurement."""
        return self.error_trace[0]


@dataclass
class PreparedTrial:
    """Scenario and attack draws for one trial, shared across estimator settings."""

    trial_index: int
    truths: list[UavTruth]
    beacons: list[Beacon]
    attacked_ids: frozenset
    problem: Problem


def generate_scenario(config: SimConfig, trial_index: int):
    """Truths and clean beacons (self-measurement first) for one trial."""
    rng = rng_stream(config.seed, "scenario", trial_index)
    n = config.num_uavs
    w, h = config.map_size
    xy = rng.uniform(0.0, 1.0, (n, 2)) * (w, h)
    sp = rng.uniform(*config.sigma_p_sq_range, n)
    sd = rng.uniform(*config.sigma_d_sq_range, n)
    truths = [UavTruth(i, Position2D(float(xy[i, 0]), float(xy[i, 1])), float(sp[i]), float(sd[i]))
              for i in range(n)]
    target = truths[TARGET_ID].true_pos
    meas = rng_stream(config.seed, "measure", trial_index)
    beacons = [self_beacon(truths[TARGET_ID], meas)]
    beacons += [make_beacon(t, target, meas) for t in truths[1:]]
    return truths, beacons


def attack_beacons(config: SimConfig, trial_index: int, beacons: list[Beacon]):
    """Apply the configured attack to one trial's snapshot.

    Returns ``(beacons, attacked_ids)``.
    """
    atk = config.attack
    if atk is None or atk.num_compromised == 0:
        return list(beacons), frozenset()
    compromised = select_compromised(config.num_uavs - 1, atk,
                                     rng_stream(config.seed, "attack-select", trial_index))
    mask = draw_attack_mask(compromised, atk, rng_stream(config.seed, "attack-mask", trial_index))
    out = []
    for b in beacons:
        if b.source_id in mask:
            # per-UAV stream so a beacon's attack noise does not depend on the mask of others
            b = apply_attack(b, atk.mode, atk.av,
                             rng_stream(config.seed, "attack-noise", trial_index, b.source_id))
        out.append(b)
    return out, mask


def prepare_trial(config: SimConfig, trial_index: int, surface: ErrorSurface) -> PreparedTrial:
    truths, clean = generate_scenario(config, trial_index)
    beacons, attacked = attack_beacons(config, trial_index, clean)
    if config.estimator is Estimator.LSE:
        converted = [ConvertedError(0.0, 1.0)] * len(beacons)
    else:
        converted = [convert_for_solver(b, surface) for b in beacons]
    return PreparedTrial(trial_index, truths, beacons, attacked, Problem(beacons, converted))


def _pad(values: list[float], length: int) -> list[float]:
    return values + [values[-1]] * (length - len(values))


def solve_prepared(prep: PreparedTrial, config: SimConfig) -> TrialRecord:
    target = prep.truths[TARGET_ID].true_pos
    anchor = prep.beacons[0].rep_pos
    non_target = {b.source_id for b in prep.beacons if b.source_id != TARGET_ID}
    if config.estimator is Estimator.RDAD:
        res = _rdad(prep.problem, anchor, config.rdad)
        positions, accepted, rejected = res.estimate_trace, res.accepted_ids, res.rejected_ids
        degenerate = res.degenerate
        if not positions:
            positions = [res.estimate]
    else:
        res = _descend(anchor, prep.problem, config.rgd)
        positions, accepted, rejected = res.estimate_trace, non_target, []
        degenerate = False
    errors = [euclidean_distance(p, target) for p in [anchor, *positions]]
    return TrialRecord(prep.trial_index, prep.truths, prep.beacons, prep.attacked_ids,
                       positions, _pad(errors, config.iteration_cap + 1), set(accepted),
                       list(rejected), len(positions), degenerate)


def run_trial(config: SimConfig, trial_index: int, surface: ErrorSurface | None = None) -> TrialRecord:
    surface = surface or default_surface()
    return solve_prepared(prepare_trial(config, trial_index, surface), config)


def _run_chunk(args):
    config, indices, surface = args
    return [run_trial(config, t, surface) for t in indices]


def _chunks(n: int, parts: int) -> list[range]:
    step = math.ceil(n / parts)
    return [range(i, min(n, i + step)) for i in range(0, n, step)]


def run_mc(config: SimConfig, surface: ErrorSurface | None = None, threads: int = 1) -> list[TrialRecord]:
    """Run ``config.trials`` trials; results are independent of ``threads``."""
    surface = surface or default_surface()
    if threads <= 1 or config.trials < 2:
        return [run_trial(config, t, surface) for t in range(config.trials)]
    jobs = [(config, r, surface) for r in _chunks(config.trials, threads * 4)]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return [rec for chunk in pool.map(_run_chunk, jobs) for rec in chunk]


@dataclass
class ConvergenceCurve:
    iterations: list[int]
    mean_error: list[float]
    rmse: list[float]
    p10: list[float]
    p50: list[float]
    p90: list[float]

    @property
    def final_mean(self) -> float:
        return self.mean_error[-1]

    @property
    def final_percentiles(self) -> tuple[float, float, float]:
        return self.p10[-1], self.p50[-1], self.p90[-1]


def aggregate_convergence(records: Sequence[TrialRecord]) -> ConvergenceCurve:
    if not records:
        raise ValueError("no records to aggregate")
    lengths = {len(r.error_trace) for r in records}
    if len(lengths) != 1:
        raise ValueError("error traces must share one padded length")
    ordered = sorted(records, key=lambda r: r.trial_index)
    E = np.array([r.error_trace for r in ordered])
    p10, p50, p90 = np.percentile(E, [10, 50, 90], axis=0)
    return ConvergenceCurve(list(range(E.shape[1])), E.mean(axis=0).tolist(),
                            np.sqrt((E ** 2).mean(axis=0)).tolist(),
                            p10.tolist(), p50.tolist(), p90.tolist())


@dataclass(frozen=True)
class DetectionStats:
    """False-alarm and misdetection rates; ``None`` marks an empty class."""

    r_fa: float | None
    r_md: float | None
    benign_rejected: int
    benign_total: int
    malicious_accepted: int
    malicious_total: int

    @classmethod
    def from_counts(cls, benign_rejected, benign_total, malicious_accepted, malicious_total):
        r_fa = benign_rejected / benign_total if benign_total else None
        r_md = malicious_accepted / malicious_total if malicious_total else None
        return cls(r_fa, r_md, benign_rejected, benign_total, malicious_accepted, malicious_total)

    def blind_guess_z(self) -> float:
        """One-sided z statistic for ``r_md < 1 - r_fa``."""
        if self.r_fa is None or self.r_md is None:
            return float("nan")
        var = (self.r_fa * (1 - self.r_fa) / self.benign_total
               + self.r_md * (1 - self.r_md) / self.malicious_total)
        gap = 1.0 - self.r_fa - self.r_md
        if var == 0.0:
            return math.copysign(math.inf, gap) if gap else 0.0
        return gap / math.sqrt(var)

    def dominates_blind_guess(self, z: float = 1.645) -> bool:
        return self.blind_guess_z() > z


def detection_stats(records: Iterable[TrialRecord]) -> DetectionStats:
    br = bt = ma = mt = 0
    for r in records:
        for b in r.beacons:
            i = b.source_id
            if i == TARGET_ID:
                continue
            if i in r.attacked_ids:
                mt += 1
                ma += i in r.accepted_ids
            else:
                bt += 1
                br += i not in r.accepted_ids
    return DetectionStats.from_counts(br, bt, ma, mt)


@dataclass(frozen=True)
class RocPoint:
    xi: float
    stats: DetectionStats
    mean_error: float
    rmse: float

    @property
    def r_fa(self):
        return self.stats.r_fa

    @property
    def r_md(self):
        return self.stats.r_md


@dataclass
class RocCurve:
    points: list[RocPoint]
    near_blind_margin: float = 0.1

    @property
    def near_blind(self) -> bool:
        """True when no point sits clearly below the blind-guess line."""
        gaps = [1.0 - p.r_fa - p.r_md for p in self.points
                if p.r_fa is not None and p.r_md is not None]
        return all(g < self.near_blind_margin for g in gaps)


def prepare_all(config: SimConfig, surface: ErrorSurface) -> list[PreparedTrial]:
    return [prepare_trial(config, t, surface) for t in range(config.trials)]


def _roc_chunk(args):
    config, indices, surface, xi_grid = args
    out = []
    for t in indices:
        prep = prepare_trial(config, t, surface)
        out.append([solve_prepared(prep, replace(config, rdad=replace(config.rdad, confidence=xi)))
                    for xi in xi_grid])
    return out


def roc_sweep(config: SimConfig, xi_grid: Sequence[float], surface: ErrorSurface | None = None,
              threads: int = 1) -> RocCurve:
    """RDAD detection statistics over a grid of confidence levels.

    Every confidence level sees the same scenarios and attack draws.
    """
    if len(xi_grid) == 0:
        raise ValueError("empty confidence grid")
    if any(not 0 < xi < 1 for xi in xi_grid):
        raise ValueError("confidence levels must lie in (0, 1)")
    surface = surface or default_surface()
    config = replace(config, estimator=Estimator.RDAD)
    xi_grid = sorted(float(x) for x in xi_grid)
    if threads <= 1:
        rows = _roc_chunk((config, range(config.trials), surface, xi_grid))
    else:
        jobs = [(config, r, surface, xi_grid) for r in _chunks(config.trials, threads * 4)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = [row for chunk in pool.map(_roc_chunk, jobs) for row in chunk]
    points = []
    for k, xi in enumerate(xi_grid):
        recs = [row[k] for row in rows]
        curve = aggregate_convergence(recs)
        points.append(RocPoint(xi, detection_stats(recs), curve.final_mean, curve.rmse[-1]))
    return RocCurve(points)


def _fmt(v) -> str:
    if v is None:
        return "nan"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def curve_rows(curve: ConvergenceCurve) -> list[dict]:
    return [
        {"iteration": k, "mean_error": m, "p10": a, "p50": b, "p90": c, "rmse": r}
        for k, m, a, b, c, r in zip(curve.iterations, curve.mean_error, curve.p10,
                                    curve.p50, curve.p90, curve.rmse)
    ]


def roc_rows(roc: RocCurve) -> list[dict]:
    return [
        {"xi": p.xi, "r_fa": p.r_fa, "r_md": p.r_md, "mean_error": p.mean_error,
         "rmse": p.rmse, "benign_rejected": p.stats.benign_rejected,
         "benign_total": p.stats.benign_total,
         "malicious_accepted": p.stats.malicious_accepted,
         "malicious_total": p.stats.malicious_total}
        for p in roc.points
    ]


def to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(rows[0].keys())
    for row in rows:
        writer.writerow(_fmt(v) for v in row.values())
    return buf.getvalue()
