import json
import math

import pytest

import fedhyp


GAMMA = 0.25


def test_mobius_identity_and_inverse():
    x = [0.3, -0.1, 0.2]
    zero = [0.0, 0.0, 0.0]
    assert fedhyp.mobius_add(zero, x, GAMMA) == pytest.approx(x)
    neg = [-v for v in x]
    assert fedhyp.mobius_add(neg, x, GAMMA) == pytest.approx(zero, abs=1e-12)


def test_distance_symmetry_and_scalar_mul():
    x, y = [0.2, 0.1], [-0.3, 0.25]
    assert fedhyp.distance(x, y, GAMMA) == pytest.approx(
        fedhyp.distance(y, x, GAMMA)
    )
    assert fedhyp.distance(x, x, GAMMA) == 0.0
    two_x = fedhyp.mobius_scalar_mul(2.0, x, GAMMA)
    assert fedhyp.distance([0.0, 0.0], two_x, GAMMA) == pytest.approx(
        2.0 * fedhyp.distance([0.0, 0.0], x, GAMMA)
    )


def test_exp_map_variants_and_ball_membership():
    f = [0.4, -0.2, 0.1, 0.3]
    for variant in ("paper", "std"):
        h = fedhyp.euclid_to_hyp(f, GAMMA, variant)
        assert fedhyp.in_ball(h, GAMMA)
    with pytest.raises(ValueError):
        fedhyp.exp_map([0.0], [0.1], GAMMA, "bogus")


def test_midpoint_of_symmetric_pair_is_origin():
    pts = [[0.3, 0.0], [-0.3, 0.0]]
    mid = fedhyp.hyperbolic_midpoint(pts, None, GAMMA)
    assert mid == pytest.approx([0.0, 0.0], abs=1e-12)
    skew = fedhyp.hyperbolic_midpoint(pts, [3.0, 1.0], GAMMA)
    assert skew[0] > 0.0


def test_confusion_and_miou():
    preds = [0, 1, 1, 2, 2, 2]
    labels = [0, 1, 0, 2, 2, 1]
    conf = fedhyp.confusion(preds, labels, 3)
    assert sum(sum(row) for row in conf) == len(preds)
    assert conf[0][0] == 1 and conf[0][1] == 1
    score = fedhyp.miou(conf)
    assert score is not None and 0.0 < score < 1.0
    perfect = fedhyp.confusion([0, 1, 2], [0, 1, 2], 3)
    assert fedhyp.miou(perfect) == 1.0


def test_config_round_trip_and_validation():
    cfg = json.loads(fedhyp.default_config())
    assert cfg["rounds"] == 100 and cfg["lambda_cl"] == 140.0
    echo = json.loads(fedhyp.normalize_config(json.dumps({"seed": 9})))
    assert echo["seed"] == 9
    with pytest.raises(ValueError):
        fedhyp.normalize_config(json.dumps({"no_such_key": 1}))
    ablated = json.loads(
        fedhyp.apply_ablations(fedhyp.default_config(), "no-queue,euclidean")
    )
    assert ablated["queue_agg"] is False and ablated["hyperbolic"] is False


def test_short_simulation_runs_and_is_deterministic():
    cfg = json.dumps({"rounds": 2, "eval_per_domain": 3, "seed": 11})
    r1 = fedhyp.run_simulation(cfg)
    r2 = fedhyp.run_simulation(cfg)
    assert r1["round_combined"] == r2["round_combined"]
    assert r1["final"]["combined"] == r2["final"]["combined"]
    # one record for pretraining (round 0) plus one per adaptation round
    assert len(r1["round_combined"]) == 3
    assert 0.0 <= r1["final"]["combined"] <= 1.0
    assert math.isfinite(r1["gamma"]) and r1["gamma"] > 0.0
    assert len(r1["final"]["per_weather"]) == 4
