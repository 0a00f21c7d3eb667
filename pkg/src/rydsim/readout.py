"""Two-stage imaging count statistics and threshold classification.

Stage 1 is state-selective (bright for |1>, dark for |0> and empty traps);
stage 2 detects atom presence regardless of qubit state.  Counts are Poisson;
mid-exposure depumping of a bright atom truncates its stage-1 scattering
window at a uniformly random fraction, producing the bridge between the
bright and dark clusters.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = [
    "AtomState",
    "OutcomeClass",
    "ImagingParams",
    "Thresholds",
    "Outcome",
    "simulate_counts",
    "simulate_counts_batch",
    "classify",
    "classify_batch",
    "calibrate_thresholds",
    "confusion_matrix",
    "DEFAULT_IMAGING",
    "DEFAULT_THRESHOLDS",
]


class AtomState(enum.IntEnum):
    """True pre-measurement condition of one atom."""

    ZERO = 0
    ONE = 1
    LOST = 2


class OutcomeClass(enum.IntEnum):
    """Assigned measurement class."""

    ZERO = 0
    ONE = 1
    LOSS = 2


@dataclass(frozen=True)
class ImagingParams:
    """Mean photon counts and error channels of the two imaging stages."""

    lambda_bright1: float
    lambda_dark1: float
    lambda_present2: float
    lambda_bg2: float
    depump_prob: float = 0.0
    loss_prob_stage1: float = 0.0
    pgc_detuning_offset: float = 0.0   # +/- mu_B gF B / hbar bookkeeping, metadata

    def __post_init__(self):
        means = (self.lambda_bright1, self.lambda_dark1,
                 self.lambda_present2, self.lambda_bg2)
        if any(m < 0 for m in means):
            raise ValueError("photon count means must be >= 0")
        for p in (self.depump_prob, self.loss_prob_stage1):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")


@dataclass(frozen=True)
class Thresholds:
    t1: int
    t2: int

    def __post_init__(self):
        if self.t1 < 0 or self.t2 < 0:
            raise ValueError("thresholds must be >= 0")


@dataclass(frozen=True)
class Outcome:
    class_: OutcomeClass
    c1: int
    c2: int


def simulate_counts_batch(states, p: ImagingParams, rng):
    """Vectorized two-stage count simulation.

    states: int array of AtomState values.  Returns (c1, c2, survived).
    """
    s = np.asarray(states, dtype=np.int64)
    n = s.size
    c1 = rng.poisson(p.lambda_dark1, size=n)
    one = s == AtomState.ONE
    if one.any():
        mean1 = np.full(one.sum(), float(p.lambda_bright1))
        if p.depump_prob > 0:
            depump = rng.random(one.sum()) < p.depump_prob
            mean1[depump] *= rng.random(int(depump.sum()))
        c1[one] = rng.poisson(mean1)
    survived = s != AtomState.LOST
    if p.loss_prob_stage1 > 0:
        lost1 = rng.random(n) < p.loss_prob_stage1
        survived &= ~lost1
    c2 = np.where(survived,
                  rng.poisson(p.lambda_present2, size=n),
                  rng.poisson(p.lambda_bg2, size=n))
    return c1, c2, survived


def simulate_counts(true_state: AtomState, p: ImagingParams, rng):
    """Single-atom draw: (c1, c2, survived)."""
    c1, c2, surv = simulate_counts_batch([int(true_state)], p, rng)
    return int(c1[0]), int(c2[0]), bool(surv[0])


def classify_batch(c1, c2, th: Thresholds):
    """Vectorized classification: stage 1 bright -> One, else stage 2 present
    -> Zero, else Loss."""
    c1 = np.asarray(c1)
    c2 = np.asarray(c2)
    out = np.full(c1.shape, int(OutcomeClass.LOSS), dtype=np.int8)
    out[c2 > th.t2] = int(OutcomeClass.ZERO)
    out[c1 > th.t1] = int(OutcomeClass.ONE)
    return out


def classify(c1: int, c2: int, th: Thresholds) -> Outcome:
    cls = OutcomeClass(int(classify_batch([c1], [c2], th)[0]))
    return Outcome(class_=cls, c1=int(c1), c2=int(c2))


def _expected_class(state):
    return {AtomState.ZERO: OutcomeClass.ZERO,
            AtomState.ONE: OutcomeClass.ONE,
            AtomState.LOST: OutcomeClass.LOSS}[AtomState(int(state))]


def calibrate_thresholds(labeled) -> Thresholds:
    """Exhaustive integer-threshold scan minimizing training misclassifications.

    labeled: iterable of (true_state, c1, c2) covering all three classes with
    at least 1000 samples each.  Ties break toward larger t1, then larger t2.
    """
    states = np.array([int(s) for s, _, _ in labeled])
    c1 = np.array([x for _, x, _ in labeled])
    c2 = np.array([x for _, _, x in labeled])
    for st in AtomState:
        if (states == st).sum() < 1000:
            raise ValueError(f"need >= 1000 labeled samples of class {st.name}")

    m1 = int(c1.max()) + 1
    m2 = int(c2.max()) + 1
    # cum[c](i, j) = #(c1 <= i and c2 <= j) for class c
    def cum2(mask):
        h, _, _ = np.histogram2d(c1[mask], c2[mask],
                                 bins=[np.arange(m1 + 1) - 0.5, np.arange(m2 + 1) - 0.5])
        return h.cumsum(axis=0).cumsum(axis=1)

    one = states == AtomState.ONE
    zero = states == AtomState.ZERO
    lost = states == AtomState.LOST
    cum_one = cum2(one)      # misclassified One iff c1 <= t1
    cum_zero = cum2(zero)
    cum_lost = cum2(lost)

    t1g = np.arange(m1)[:, None]
    err_one = cum_one[:, -1][:, None] + np.zeros((1, m2))
    # Zero correct iff c1 <= t1 and c2 > t2
    n_zero_le_t1 = cum_zero[:, -1][:, None]
    err_zero = zero.sum() - (n_zero_le_t1 - cum_zero)
    # Lost correct iff c1 <= t1 and c2 <= t2
    err_lost = lost.sum() - cum_lost
    total = err_one + err_zero + err_lost

    best = total.min()
    i, j = np.nonzero(total == best)
    k = np.lexsort((j, i))[-1]   # largest t1, then largest t2
    return Thresholds(t1=int(i[k]), t2=int(j[k]))


def confusion_matrix(params: ImagingParams, th: Thresholds, n_samples: int, rng):
    """Row-normalized 3x3 matrix (rows: true Zero/One/Lost, cols: assigned)."""
    if n_samples < 1000:
        raise ValueError("n_samples must be >= 1000")
    mat = np.zeros((3, 3))
    for st in AtomState:
        states = np.full(n_samples, int(st))
        c1, c2, _ = simulate_counts_batch(states, params, rng)
        cls = classify_batch(c1, c2, th)
        for oc in OutcomeClass:
            mat[int(st), int(oc)] = np.mean(cls == int(oc))
    return mat


# Calibrated so that the default pipeline reproduces a state-resolved
# readout fidelity of ~98.9% and measured survival of ~99.7% on held-out
# draws (see tests/test_readout.py).  Config values, not physics claims;
# the depump bridge carries nearly all of the classification error budget.
DEFAULT_IMAGING = ImagingParams(
    lambda_bright1=45.0,
    lambda_dark1=1.5,
    lambda_present2=40.0,
    lambda_bg2=1.5,
    depump_prob=0.113,
    loss_prob_stage1=0.003,
)

DEFAULT_THRESHOLDS = Thresholds(t1=6, t2=14)
