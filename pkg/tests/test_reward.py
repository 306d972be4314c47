import numpy as np
import pytest

from hvacrl.reward import (
    RewardConfig,
    complaint_magnitude,
    compute_reward,
    flatten_energy,
    temp_deviation,
)


def reward_direct(e_all, complaints, lambda_e, lambda_m, clip_level, flatten_enabled=True):
    """Independent transcription of the reward formulas, kept separate from
    the implementation on purpose."""
    if flatten_enabled and e_all > clip_level:
        e_flat = (e_all - clip_level) * 0.1 + clip_level
    else:
        e_flat = e_all
    total_complaints = 0.0
    for c in complaints:
        total_complaints += c
    return -(lambda_e * e_flat + lambda_m * total_complaints)


def test_temp_deviation_unoccupied_is_zero():
    assert temp_deviation(17.0, None) == 0.0


def test_temp_deviation_exact_match():
    assert temp_deviation(21.0, 21.0) == 0.0


def test_temp_deviation_hand_value():
    assert temp_deviation(23.5, 21.0) == pytest.approx(2.5)
    assert temp_deviation(18.5, 21.0) == pytest.approx(2.5)


def test_complaint_magnitude_band_edge():
    assert complaint_magnitude(1.0) == 0.0


def test_complaint_magnitude_perfect_comfort():
    assert complaint_magnitude(0.0) == 0.0


def test_complaint_magnitude_keeps_full_deviation():
    # Discontinuous at 1: jumps from 0 straight to the full magnitude.
    assert complaint_magnitude(2.5) == 2.5
    assert complaint_magnitude(1.0 + 1e-9) > 1.0


def test_complaint_magnitude_rejects_negative():
    with pytest.raises(ValueError):
        complaint_magnitude(-0.1)


def test_flatten_below_clip_is_identity():
    cfg = RewardConfig(clip_level=150.0)
    assert flatten_energy(100.0, cfg) == 100.0


def test_flatten_at_clip_boundary():
    cfg = RewardConfig(clip_level=150.0)
    assert flatten_energy(150.0, cfg) == 150.0


def test_flatten_above_clip():
    cfg = RewardConfig(clip_level=150.0)
    assert flatten_energy(250.0, cfg) == pytest.approx(160.0)


def test_flatten_disabled_is_identity():
    cfg = RewardConfig(clip_level=150.0, flatten_enabled=False)
    assert flatten_energy(400.0, cfg) == 400.0


def test_flatten_slope_above_clip_is_exactly_one_tenth():
    cfg = RewardConfig(clip_level=150.0)
    e = 200.0
    h = 16.0
    slope = (flatten_energy(e + h, cfg) - flatten_energy(e, cfg)) / h
    assert slope == pytest.approx(0.1, abs=1e-12)


def test_flatten_continuous_and_monotone():
    cfg = RewardConfig(clip_level=150.0)
    xs = np.linspace(0.0, 400.0, 4001)
    ys = np.array([flatten_energy(float(x), cfg) for x in xs])
    assert np.all(np.diff(ys) > 0)
    # no jump at the clip point
    assert flatten_energy(150.0 + 1e-9, cfg) == pytest.approx(150.0, abs=1e-8)


def test_reward_zero_of_both_terms():
    cfg = RewardConfig(lambda_e=0.008, lambda_m=0.06)
    assert compute_reward(0.0, [0.0] * 5, cfg) == 0.0


def test_reward_hand_value_low_ratio():
    cfg = RewardConfig(lambda_e=0.008, lambda_m=0.06, clip_level=150.0)
    # flattened energy 100, complaint sum 5 -> -(0.8 + 0.3)
    assert compute_reward(100.0, [5.0], cfg) == pytest.approx(-1.1)


def test_reward_hand_value_high_ratio():
    cfg = RewardConfig(lambda_e=0.004, lambda_m=0.12, clip_level=150.0)
    assert cfg.ratio == pytest.approx(30.0)
    assert compute_reward(150.0, [0.0, 0.0], cfg) == pytest.approx(-0.6)


def test_reward_monotone_in_energy_and_complaints():
    cfg = RewardConfig(lambda_e=0.006, lambda_m=0.1)
    rng = np.random.default_rng(5)
    for _ in range(200):
        e = float(rng.uniform(0, 300))
        comps = list(rng.uniform(0, 4, size=5))
        base = compute_reward(e, comps, cfg)
        assert compute_reward(e + rng.uniform(0.1, 50), comps, cfg) < base
        bumped = list(comps)
        bumped[int(rng.integers(0, 5))] += rng.uniform(0.1, 3)
        assert compute_reward(e, bumped, cfg) < base


def test_reward_never_positive():
    cfg = RewardConfig()
    rng = np.random.default_rng(17)
    for _ in range(500):
        e = float(rng.uniform(0, 500))
        comps = list(rng.uniform(0, 10, size=5))
        assert compute_reward(e, comps, cfg) <= 0.0


def test_reward_matches_direct_transcription():
    # 1000 random tuples against the independent transcription, 1e-12 abs.
    rng = np.random.default_rng(123)
    for _ in range(1000):
        e = float(rng.uniform(0, 400))
        comps = list(rng.uniform(0, 6, size=int(rng.integers(1, 8))))
        lam_e = float(rng.uniform(0.004, 0.008))
        lam_m = float(rng.uniform(0.06, 0.12))
        clip = float(rng.uniform(50, 250))
        flatten = bool(rng.integers(0, 2))
        cfg = RewardConfig(lambda_e=lam_e, lambda_m=lam_m, clip_level=clip,
                           flatten_enabled=flatten)
        expected = reward_direct(e, comps, lam_e, lam_m, clip, flatten)
        assert compute_reward(e, comps, cfg) == pytest.approx(expected, abs=1e-12)


def test_reward_range_with_paper_weights():
    # With the published weight pairs, typical magnitudes stay in [-1.2, 0].
    # The high-energy-weight pair hits -1.2 already at 112 kWh, so "typical"
    # energy readings are capped lower for it.
    rng = np.random.default_rng(99)
    for lam_e, lam_m, e_max in [(0.008, 0.06, 110.0), (0.004, 0.12, 150.0)]:
        cfg = RewardConfig(lambda_e=lam_e, lambda_m=lam_m, clip_level=150.0)
        for _ in range(300):
            e = float(rng.uniform(0, e_max))
            comps = list(rng.uniform(0, 1.0, size=5))  # sum <= 5
            r = compute_reward(e, comps, cfg)
            assert -1.2 <= r <= 0.0


def test_config_validation():
    with pytest.raises(ValueError):
        RewardConfig(lambda_e=0.0)
    with pytest.raises(ValueError):
        RewardConfig(lambda_m=-1.0)
    with pytest.raises(ValueError):
        RewardConfig(clip_level=0.0)
