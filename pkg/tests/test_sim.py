import math
from dataclasses import replace

import numpy as np
import pytest

from mutualpos.attacks import AttackConfig, AttackMode
from mutualpos.core import Position2D
from mutualpos.sim import (DetectionStats, Estimator, RocCurve, RocPoint, SimConfig, TrialRecord,
                           aggregate_convergence, curve_rows, detection_stats, generate_scenario,
                           roc_rows, roc_sweep, run_mc, run_trial, to_csv)


def record(index, errors, attacked=frozenset(), accepted=None, ids=()):
    from mutualpos.core import Beacon
    beacons = [Beacon(0, 0, 0, 1, 0, 0)] + [Beacon(i, 0, 0, 1, 1, 1) for i in ids]
    return TrialRecord(index, [], beacons, frozenset(attacked), [], list(errors),
                       set(ids) if accepted is None else set(accepted), [], len(errors) - 1)


def test_config_validation():
    for bad in ({"trials": 0}, {"num_uavs": 0}, {"sigma_p_sq_range": (2, 1)},
                {"map_size": (0, 30)},
                {"num_uavs": 3, "attack": AttackConfig(AttackMode.BIAS)}):
        with pytest.raises(ValueError):
            SimConfig(**bad)


def test_scenario_shape_and_determinism():
    cfg = SimConfig()
    truths, beacons = generate_scenario(cfg, 4)
    assert len(truths) == len(beacons) == 10
    assert [b.source_id for b in beacons] == list(range(10))
    for t in truths:
        assert 0 <= t.true_pos.x <= 30 and 0 <= t.true_pos.y <= 30
        assert 0.1 <= t.sigma_p_sq <= 2.1 and 0.1 <= t.sigma_d_sq <= 0.9
    assert beacons[0].meas_dist == 0.0
    assert generate_scenario(cfg, 4) == (truths, beacons)
    assert generate_scenario(cfg, 5) != (truths, beacons)
    assert generate_scenario(replace(cfg, seed=1), 4) != (truths, beacons)


def test_aggregate_examples():
    c = aggregate_convergence([record(0, [3.0, 2.0, 1.0])])
    assert c.mean_error == [3.0, 2.0, 1.0]
    assert c.p50 == [3.0, 2.0, 1.0]
    c = aggregate_convergence([record(0, [1.0, 1.0]), record(1, [3.0, 3.0])])
    assert c.mean_error == [2.0, 2.0]
    assert c.rmse == pytest.approx([math.sqrt(5)] * 2)
    with pytest.raises(ValueError):
        aggregate_convergence([])
    with pytest.raises(ValueError):
        aggregate_convergence([record(0, [1.0]), record(1, [1.0, 2.0])])


def test_aggregate_is_order_free():
    recs = [record(i, [float(i), float(i) / 2]) for i in range(5)]
    assert aggregate_convergence(recs) == aggregate_convergence(recs[::-1])


def test_detection_stats_examples():
    recs = [record(0, [0.0], attacked={1}, accepted={2, 3}, ids=(1, 2, 3)),
            record(1, [0.0], attacked={1}, accepted={1, 3}, ids=(1, 2, 3))]
    s = detection_stats(recs)
    assert (s.benign_rejected, s.benign_total) == (1, 4)
    assert (s.malicious_accepted, s.malicious_total) == (1, 2)
    assert (s.r_fa, s.r_md) == (0.25, 0.5)
    clean = detection_stats([record(0, [0.0], ids=(1, 2))])
    assert clean.r_md is None and clean.r_fa == 0.0
    assert math.isnan(clean.blind_guess_z())
    assert not clean.dominates_blind_guess()


def test_blind_guesser_sits_on_the_line():
    rng = np.random.default_rng(0)
    ids = tuple(range(1, 10))
    recs = []
    for t in range(2000):
        attacked = {1, 2, 3} if rng.random() < 0.5 else set()
        accepted = {i for i in ids if rng.random() >= 0.3}
        recs.append(record(t, [0.0], attacked, accepted, ids))
    s = detection_stats(recs)
    assert s.r_fa == pytest.approx(0.3, abs=0.02)
    assert s.r_md == pytest.approx(0.7, abs=0.03)
    assert abs(s.blind_guess_z()) < 3
    assert not s.dominates_blind_guess()


def test_z_statistic_edge_cases():
    assert DetectionStats.from_counts(0, 10, 0, 10).blind_guess_z() == math.inf
    assert DetectionStats.from_counts(10, 10, 10, 10).blind_guess_z() == -math.inf


def test_near_blind_flag():
    def pt(fa, md):
        return RocPoint(0.5, DetectionStats(fa, md, 0, 1, 0, 1), 0.0, 0.0)
    assert RocCurve([pt(0.5, 0.45), pt(0.2, 0.75)]).near_blind
    assert not RocCurve([pt(0.5, 0.45), pt(0.05, 0.2)]).near_blind


def test_padding_keeps_final_error(surface):
    cfg = SimConfig(trials=30)
    for est in Estimator:
        c = replace(cfg, estimator=est)
        for t in range(30):
            r = run_trial(c, t, surface)
            assert len(r.error_trace) == c.iteration_cap + 1
            assert 1 <= r.iterations_used <= c.iteration_cap
            assert r.final_error == r.error_trace[r.iterations_used]
            truth = r.truths[0].true_pos
            est_pos = r.estimate_trace[-1]
            assert r.final_error == math.hypot(est_pos.x - truth.x, est_pos.y - truth.y)


def test_rdad_counts_are_conserved(surface):
    cfg = SimConfig(trials=40, estimator=Estimator.RDAD,
                    attack=AttackConfig(AttackMode.BIAS, coordinated=False))
    for r in run_mc(cfg, surface):
        refs = {b.source_id for b in r.beacons} - {0}
        assert r.accepted_ids | set(r.rejected_ids) == refs
        assert not r.accepted_ids & set(r.rejected_ids)
        assert r.attacked_ids <= refs


def test_common_random_numbers_across_estimators(surface):
    cfg = SimConfig(trials=10, attack=AttackConfig(AttackMode.MANIPULATION))
    runs = {e: run_mc(replace(cfg, estimator=e), surface) for e in Estimator}
    for k in range(10):
        ref = runs[Estimator.RGD][k]
        for e in Estimator:
            r = runs[e][k]
            assert r.beacons == ref.beacons
            assert r.attacked_ids == ref.attacked_ids
            assert r.raw_error == ref.raw_error


def test_attack_free_curve_drops_then_plateaus(surface):
    # the descent minimises the weighted residual, not the position error, so
    # the mean error settles into a narrow band rather than decreasing forever
    curve = aggregate_convergence(run_mc(SimConfig(trials=300), surface))
    head = curve.mean_error[:4]
    assert all(b < a for a, b in zip(head, head[1:]))
    tail = curve.mean_error[4:]
    assert max(tail) - min(tail) < 0.03
    assert curve.final_mean < 0.7 * curve.mean_error[0]


def test_thread_count_does_not_change_results(surface):
    cfg = SimConfig(trials=24, estimator=Estimator.RDAD,
                    attack=AttackConfig(AttackMode.VARIANCE))
    one = run_mc(cfg, surface, threads=1)
    two = run_mc(cfg, surface, threads=2)
    assert [r.error_trace for r in one] == [r.error_trace for r in two]
    assert [r.rejected_ids for r in one] == [r.rejected_ids for r in two]
    a = roc_sweep(cfg, [0.9, 0.5], surface, threads=1)
    b = roc_sweep(cfg, [0.5, 0.9], surface, threads=2)
    assert roc_rows(a) == roc_rows(b)


def test_roc_sweep_validation(surface):
    cfg = SimConfig(trials=2)
    for grid in ([], [0.0], [1.0], [0.5, 1.2]):
        with pytest.raises(ValueError):
            roc_sweep(cfg, grid, surface)


def test_roc_threshold_trade_off(surface):
    cfg = SimConfig(trials=300, attack=AttackConfig(AttackMode.BIAS))
    roc = roc_sweep(cfg, [0.5, 0.9, 0.999], surface)
    fa = [p.r_fa for p in roc.points]
    md = [p.r_md for p in roc.points]
    assert fa == sorted(fa, reverse=True)
    assert md == sorted(md)


def test_csv_rendering():
    text = to_csv([{"a": 1, "b": None, "c": 0.1}])
    assert text == "a,b,c\n1,nan,0.1\n"
    c = aggregate_convergence([record(0, [3.0, 2.0])])
    rows = curve_rows(c)
    assert [r["iteration"] for r in rows] == [0, 1]
    assert list(rows[0]) == ["iteration", "mean_error", "p10", "p50", "p90", "rmse"]


def test_position_type_round_trip():
    assert Position2D(1.0, 2.0) == (1.0, 2.0)
