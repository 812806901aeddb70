"""Metric functions vs independent brute-force implementations."""

import math

import numpy as np
import pytest

from adtg import numkit as nk
from adtg.evalkit import accuracy, accuracy_excl_null, loglik_pair, miou

NULL = 0


# ---------------------------------------------------------------------------
# brute-force oracles (kept deliberately naive)


def brute_accuracy(pred, gt):
    hits = 0
    for i in range(len(gt)):
        if pred[i] == gt[i]:
            hits += 1
    return hits / len(gt)


def brute_accuracy_excl_null(pred, gt):
    pairs = [(p, g) for p, g in zip(pred, gt) if g != NULL]
    if not pairs:
        return math.nan
    return brute_accuracy([p for p, _ in pairs], [g for _, g in pairs])


def brute_loglik(steps):
    pred_vals, gt_vals = [], []
    for candidates, log_probs, gt in steps:
        if gt not in candidates:
            continue
        best = None
        for lp in log_probs:
            if best is None or lp > best:
                best = lp
        pred_vals.append(best)
        gt_vals.append(log_probs[list(candidates).index(gt)])
    return sum(pred_vals) / len(pred_vals), sum(gt_vals) / len(gt_vals)


def brute_miou(pred, gt):
    ps, gs = set(pred), set(gt)
    if not ps and not gs:
        return 1.0
    inter = sum(1 for x in ps if x in gs)
    union = len(ps) + len(gs) - inter
    return inter / union


# ---------------------------------------------------------------------------
# fixed cases


def test_accuracy_fixed_cases():
    assert accuracy([1, 2, 2], [1, 2, 3]) == pytest.approx(2 / 3)
    assert accuracy([1, 2], [1, 2]) == 1.0
    assert accuracy([1, 2], [3, 4]) == 0.0


def test_accuracy_length_mismatch():
    with pytest.raises(nk.UsageError):
        accuracy([1], [1, 2])
    with pytest.raises(nk.UsageError):
        accuracy_excl_null([1], [1, 2])


def test_accuracy_excl_null_fixed_cases():
    assert accuracy_excl_null([1, 1, 3], [NULL, 1, 2]) == pytest.approx(1 / 2)
    assert math.isnan(accuracy_excl_null([1, 2], [NULL, NULL]))


def test_miou_fixed_cases():
    assert miou([1, 2, 3], [2, 3, 4]) == pytest.approx(0.5)
    assert miou([1, 2], [2, 1]) == 1.0
    assert miou([1, 1, 2], [1, 2]) == 1.0  # duplicates collapse
    assert miou([], []) == 1.0
    assert miou([1], []) == 0.0


def test_loglik_fixed_cases():
    # perfectly confident correct model: both means near zero
    steps = [((1, 2), np.array([0.0, -50.0]), 1)] * 3
    res = loglik_pair(steps)
    assert res.pred_mean == pytest.approx(0.0, abs=1e-12)
    assert res.gt_mean == pytest.approx(0.0, abs=1e-12)

    # uniform over N candidates
    n = 5
    steps = [(tuple(range(n)), np.full(n, -math.log(n)), 2)]
    res = loglik_pair(steps)
    assert res.pred_mean == pytest.approx(-math.log(n), abs=1e-12)
    assert res.gt_mean == pytest.approx(-math.log(n), abs=1e-12)


def test_loglik_skips_missing_gt():
    steps = [
        ((1, 2), np.array([-0.1, -2.0]), 1),
        ((1, 2), np.array([-0.5, -1.0]), 3),  # gt not a candidate
    ]
    res = loglik_pair(steps)
    assert res.scored == 1
    assert res.skipped == 1


def test_loglik_empty_raises():
    with pytest.raises(nk.UsageError):
        loglik_pair([((1,), np.array([0.0]), 2)])


# ---------------------------------------------------------------------------
# 1000 random instances vs oracles


def test_accuracy_matches_oracle_1000():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 30))
        pred = rng.integers(0, 5, size=n).tolist()
        gt = rng.integers(0, 5, size=n).tolist()
        assert accuracy(pred, gt) == brute_accuracy(pred, gt)


def test_accuracy_excl_null_matches_oracle_1000():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        n = int(rng.integers(1, 30))
        pred = rng.integers(0, 5, size=n).tolist()
        gt = rng.integers(0, 5, size=n).tolist()
        got = accuracy_excl_null(pred, gt)
        want = brute_accuracy_excl_null(pred, gt)
        assert (math.isnan(got) and math.isnan(want)) or got == want


def test_accuracy_excl_null_equals_filtered_accuracy():
    rng = np.random.default_rng(2)
    for _ in range(200):
        n = int(rng.integers(1, 30))
        pred = rng.integers(0, 4, size=n).tolist()
        gt = rng.integers(0, 4, size=n).tolist()
        filtered = [(p, g) for p, g in zip(pred, gt) if g != NULL]
        if not filtered:
            assert math.isnan(accuracy_excl_null(pred, gt))
            continue
        fp, fg = zip(*filtered)
        assert accuracy_excl_null(pred, gt) == accuracy(list(fp), list(fg))


def test_miou_matches_oracle_1000():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        pred = rng.integers(0, 8, size=rng.integers(0, 12)).tolist()
        gt = rng.integers(0, 8, size=rng.integers(0, 12)).tolist()
        assert miou(pred, gt) == brute_miou(pred, gt)


def test_loglik_matches_oracle_1000():
    rng = np.random.default_rng(4)
    steps = []
    for _ in range(1000):
        n = int(rng.integers(1, 7))
        logits = rng.normal(size=n)
        log_probs = logits - np.log(np.exp(logits).sum())
        candidates = tuple(rng.choice(20, size=n, replace=False).tolist())
        gt = int(rng.choice(list(candidates) + [99]))
        steps.append((candidates, log_probs, gt))
    got = loglik_pair(steps)
    want_pred, want_gt = brute_loglik(steps)
    assert got.pred_mean == pytest.approx(want_pred, abs=1e-12)
    assert got.gt_mean == pytest.approx(want_gt, abs=1e-12)
    # prediction mean is never below ground-truth mean (argmax is the mode)
    assert got.pred_mean >= got.gt_mean - 1e-12
