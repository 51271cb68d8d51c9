import numpy as np
import pytest

from mutualpos.attacks import (AttackConfig, AttackMode, BiasVector, VarianceVector,
                               apply_attack, default_av, draw_attack_mask, select_compromised)
from mutualpos.core import Beacon, rng_stream

B = Beacon(2, 3.0, 4.0, 1.0, 5.0, 0.5)


def test_defaults_per_mode():
    assert default_av(AttackMode.DETERIORATION) == VarianceVector(50.0, 50.0)
    assert default_av("variance") == VarianceVector(50.0, 50.0)
    assert default_av(AttackMode.BIAS) == BiasVector(5.0, 5.0)
    cfg = AttackConfig("manipulation")
    assert cfg.av == BiasVector(5.0, 5.0)
    assert (cfg.num_compromised, cfg.penetration, cfg.coordinated) == (3, 0.5, True)


def test_config_validation():
    with pytest.raises(ValueError):
        AttackConfig(AttackMode.BIAS, VarianceVector(1, 1))
    with pytest.raises(ValueError):
        AttackConfig(AttackMode.BIAS, penetration=1.5)
    with pytest.raises(ValueError):
        AttackConfig(AttackMode.BIAS, num_compromised=-1)
    with pytest.raises(ValueError):
        VarianceVector(-1, 0)


def test_manipulation_example():
    out = apply_attack(B, AttackMode.MANIPULATION, BiasVector(5, 5))
    assert out == Beacon(2, 8.0, 9.0, 0.0, 5.0, 0.0)


def test_bias_keeps_variances():
    out = apply_attack(B, AttackMode.BIAS, BiasVector(5, -2))
    assert out == Beacon(2, 8.0, 2.0, 1.0, 5.0, 0.5)


def test_zero_deterioration_is_identity():
    out = apply_attack(B, AttackMode.DETERIORATION, VarianceVector(0, 0), np.random.default_rng(0))
    assert out == B


def test_deterioration_inflates_reported_variance():
    out = apply_attack(B, AttackMode.DETERIORATION, VarianceVector(50, 50), np.random.default_rng(0))
    assert out.rep_sigma_p_sq == 51.0
    assert out.rep_sigma_d_sq == 50.5


def test_variance_attack_hides_noise():
    rng = np.random.default_rng(5)
    outs = [apply_attack(B, AttackMode.VARIANCE, VarianceVector(50, 50), rng) for _ in range(20000)]
    assert all(o.rep_sigma_p_sq == 1.0 and o.rep_sigma_d_sq == 0.5 for o in outs)
    dx = np.array([o.rep_x - B.rep_x for o in outs])
    dy = np.array([o.rep_y - B.rep_y for o in outs])
    assert dx.var() == pytest.approx(25.0, rel=0.05)
    assert dy.var() == pytest.approx(25.0, rel=0.05)
    assert all(o.meas_dist >= 0 for o in outs)


def test_noise_modes_share_displacement():
    a = apply_attack(B, AttackMode.DETERIORATION, VarianceVector(8, 3), np.random.default_rng(9))
    b = apply_attack(B, AttackMode.VARIANCE, VarianceVector(8, 3), np.random.default_rng(9))
    assert (a.rep_x, a.rep_y, a.meas_dist) == (b.rep_x, b.rep_y, b.meas_dist)


def test_bad_inputs():
    with pytest.raises(ValueError):
        apply_attack(B, AttackMode.BIAS, VarianceVector(1, 1))
    with pytest.raises(ValueError):
        apply_attack(B, AttackMode.VARIANCE, BiasVector(1, 1), np.random.default_rng(0))
    with pytest.raises(ValueError):
        apply_attack(B, AttackMode.VARIANCE, VarianceVector(1, 1))
    with pytest.raises(ValueError):
        apply_attack(Beacon(0, 0, 0, 1, 0, 0), AttackMode.BIAS, BiasVector(1, 1))


def test_select_compromised():
    cfg = AttackConfig(AttackMode.BIAS, num_compromised=0)
    assert select_compromised(9, cfg, np.random.default_rng(0)) == frozenset()
    cfg = AttackConfig(AttackMode.BIAS, num_compromised=9)
    assert select_compromised(9, cfg, np.random.default_rng(0)) == frozenset(range(1, 10))
    cfg = AttackConfig(AttackMode.BIAS)
    a = select_compromised(9, cfg, rng_stream(3, "attack-select", 1))
    b = select_compromised(9, cfg, rng_stream(3, "attack-select", 1))
    assert a == b and len(a) == 3 and a <= set(range(1, 10))
    with pytest.raises(ValueError):
        select_compromised(2, cfg, np.random.default_rng(0))


def test_selection_is_uniform():
    cfg = AttackConfig(AttackMode.BIAS)
    rng = np.random.default_rng(1)
    counts = np.zeros(10)
    for _ in range(9000):
        for i in select_compromised(9, cfg, rng):
            counts[i] += 1
    assert counts[0] == 0
    np.testing.assert_allclose(counts[1:] / 9000, 1 / 3, atol=0.02)


def test_mask_extremes():
    ids = frozenset({1, 4, 7})
    rng = np.random.default_rng(0)
    for coordinated in (True, False):
        never = AttackConfig(AttackMode.BIAS, penetration=0.0, coordinated=coordinated)
        always = AttackConfig(AttackMode.BIAS, penetration=1.0, coordinated=coordinated)
        assert draw_attack_mask(ids, never, rng) == frozenset()
        assert draw_attack_mask(ids, always, rng) == ids


def test_coordinated_mask_is_all_or_nothing():
    ids = frozenset({1, 4, 7})
    cfg = AttackConfig(AttackMode.BIAS)
    rng = np.random.default_rng(2)
    masks = [draw_attack_mask(ids, cfg, rng) for _ in range(10000)]
    assert all(m in (frozenset(), ids) for m in masks)
    assert np.mean([bool(m) for m in masks]) == pytest.approx(0.5, abs=0.02)


def test_uncoordinated_mask_is_independent():
    ids = frozenset({1, 4, 7})
    cfg = AttackConfig(AttackMode.BIAS, coordinated=False)
    rng = np.random.default_rng(3)
    sizes = np.array([len(draw_attack_mask(ids, cfg, rng)) for _ in range(10000)])
    # Binomial(3, 0.5)
    np.testing.assert_allclose(np.bincount(sizes, minlength=4) / 10000,
                               [0.125, 0.375, 0.375, 0.125], atol=0.02)
