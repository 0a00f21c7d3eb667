import numpy as np
import pytest

from rydsim.readout import (
    DEFAULT_IMAGING,
    DEFAULT_THRESHOLDS,
    AtomState,
    ImagingParams,
    OutcomeClass,
    Thresholds,
    calibrate_thresholds,
    classify,
    classify_batch,
    confusion_matrix,
    simulate_counts,
    simulate_counts_batch,
)


def test_classification_precedence():
    th = Thresholds(t1=6, t2=14)
    assert classify(20, 0, th).class_ is OutcomeClass.ONE     # bright stage 1 wins
    assert classify(2, 30, th).class_ is OutcomeClass.ZERO
    assert classify(2, 3, th).class_ is OutcomeClass.LOSS
    assert classify(20, 30, th).class_ is OutcomeClass.ONE
    # thresholds are exclusive
    assert classify(6, 14, th).class_ is OutcomeClass.LOSS
    assert classify(7, 14, th).class_ is OutcomeClass.ONE


def test_params_validation():
    with pytest.raises(ValueError):
        ImagingParams(-1.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        ImagingParams(1.0, 1.0, 1.0, 1.0, depump_prob=1.5)
    with pytest.raises(ValueError):
        Thresholds(t1=-1, t2=0)


def test_counts_batch_scalar_consistency():
    rng1 = np.random.default_rng(11)
    rng2 = np.random.default_rng(11)
    c1, c2, s = simulate_counts(AtomState.ONE, DEFAULT_IMAGING, rng1)
    b1, b2, bs = simulate_counts_batch([int(AtomState.ONE)], DEFAULT_IMAGING, rng2)
    assert (c1, c2, s) == (int(b1[0]), int(b2[0]), bool(bs[0]))


def test_lost_atom_sees_background_only():
    rng = np.random.default_rng(1)
    states = np.full(20000, int(AtomState.LOST))
    c1, c2, surv = simulate_counts_batch(states, DEFAULT_IMAGING, rng)
    assert not surv.any()
    assert abs(c1.mean() - DEFAULT_IMAGING.lambda_dark1) < 0.05
    assert abs(c2.mean() - DEFAULT_IMAGING.lambda_bg2) < 0.05


def test_cluster_topology():
    # One: high stage-1; Zero: low stage-1, high stage-2; Loss: both low
    rng = np.random.default_rng(2)
    means = {}
    for st in AtomState:
        c1, c2, _ = simulate_counts_batch(np.full(5000, int(st)),
                                          DEFAULT_IMAGING, rng)
        means[st] = (c1.mean(), c2.mean())
    assert means[AtomState.ONE][0] > means[AtomState.ZERO][0] + 10
    assert means[AtomState.ZERO][1] > means[AtomState.LOST][1] + 10
    assert means[AtomState.LOST][0] < 5 and means[AtomState.LOST][1] < 5


def brute_force_thresholds(labeled, max1, max2):
    best = None
    for t1 in range(max1 + 1):
        for t2 in range(max2 + 1):
            th = Thresholds(t1, t2)
            err = sum(int(classify(c1, c2, th).class_) != int(st)
                      for st, c1, c2 in labeled)
            key = (-err, t1, t2)
            if best is None or key > best[0]:
                best = (key, th)
    return best[1]


def test_calibration_matches_exhaustive_oracle():
    rng = np.random.default_rng(3)
    small = ImagingParams(12.0, 1.0, 10.0, 1.0, depump_prob=0.2,
                          loss_prob_stage1=0.01)
    labeled = []
    for st in AtomState:
        c1, c2, _ = simulate_counts_batch(np.full(1200, int(st)), small, rng)
        labeled.extend(zip([int(st)] * 1200, c1.tolist(), c2.tolist()))
    got = calibrate_thresholds(labeled)
    ref = brute_force_thresholds(labeled, int(max(x for _, x, _ in labeled)),
                                 int(max(x for _, _, x in labeled)))
    assert (got.t1, got.t2) == (ref.t1, ref.t2)


def test_calibration_requires_enough_samples():
    labeled = [(int(AtomState.ZERO), 1, 20)] * 1000 \
        + [(int(AtomState.ONE), 20, 20)] * 1000 \
        + [(int(AtomState.LOST), 1, 1)] * 999
    with pytest.raises(ValueError):
        calibrate_thresholds(labeled)


def test_confusion_matrix_defaults():
    rng = np.random.default_rng(4)
    mat = confusion_matrix(DEFAULT_IMAGING, DEFAULT_THRESHOLDS, 20000, rng)
    assert np.allclose(mat.sum(axis=1), 1.0, atol=1e-12)
    assert np.mean(np.diag(mat)) >= 0.985
    with pytest.raises(ValueError):
        confusion_matrix(DEFAULT_IMAGING, DEFAULT_THRESHOLDS, 100, rng)


def test_held_out_fidelity_and_survival_anchors():
    rng = np.random.default_rng(20240817)
    n = 10000
    correct = 0
    survived = 0
    for st in (AtomState.ZERO, AtomState.ONE):
        c1, c2, surv = simulate_counts_batch(np.full(n, int(st)),
                                             DEFAULT_IMAGING, rng)
        cls = classify_batch(c1, c2, DEFAULT_THRESHOLDS)
        correct += int(np.sum(cls == int(st)))
        survived += int(surv.sum())
    fidelity = correct / (2 * n)
    survival = survived / (2 * n)
    assert abs(fidelity - 0.989) <= 0.003
    assert abs(survival - 0.997) <= 0.0015
