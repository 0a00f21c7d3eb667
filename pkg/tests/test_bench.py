import math

import numpy as np
import pytest

from rydsim import czgate, motional, readout
from rydsim.bench import (
    CZ_MATRIX,
    DEFAULT_NOISE,
    PAULI_Y,
    X_ECHO,
    NoiseModel,
    RoundPolicy,
    ShotRecord,
    build_sequence,
    fidelity_from_decay,
    fit_decay,
    ideal_return_probability,
    post_select_loss,
    rotation_from_su2,
    run_rb,
    run_rounds,
    sample_haar_rotation,
)
from rydsim.readout import OutcomeClass


def test_echo_identity_exact():
    got = CZ_MATRIX @ np.kron(X_ECHO, X_ECHO) @ CZ_MATRIX
    assert np.array_equal(got, -np.kron(PAULI_Y, PAULI_Y))


def test_sequences_return_to_initial_state():
    rng = np.random.default_rng(1)
    for n in (0, 2, 8, 40):
        for _ in range(5):
            seq = build_sequence(n, rng)
            assert len(seq.rotations) == n // 2
            assert abs(ideal_return_probability(seq) - 1.0) < 1e-10


def test_sequence_validation():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        build_sequence(3, rng)
    with pytest.raises(ValueError):
        build_sequence(-2, rng)


def test_euler_decomposition_round_trip():
    rng = np.random.default_rng(2)
    for _ in range(100):
        r = sample_haar_rotation(rng)
        rebuilt = rotation_from_su2(r.matrix).matrix
        d = rebuilt.conj().T @ r.matrix
        d = d / (d[0, 0] / abs(d[0, 0]))     # discard global phase
        assert np.max(np.abs(d - np.eye(2))) < 1e-12


def test_haar_moments():
    rng = np.random.default_rng(3)
    vals = np.array([abs(sample_haar_rotation(rng).matrix[0, 0]) ** 2
                     for _ in range(40000)])
    # E|u00|^2 = 1/2 and E|u00|^4 = 1/3 for Haar SU(2)
    assert abs(vals.mean() - 0.5) < 0.01
    assert abs((vals ** 2).mean() - 1.0 / 3.0) < 0.01


def test_fit_decay_exact_recovery():
    p_true, a_true, asym = 0.9923, 0.71, 0.25
    pts = [(n, asym + a_true * p_true ** n, 1e-4) for n in (2, 6, 12, 20, 40)]
    p, perr = fit_decay(pts, asymptote=asym)
    assert abs(p - p_true) < 1e-9
    assert perr > 0


def test_fit_decay_coverage():
    # binomial noise at 2000 shots: p recovered within 3 std_err >= 95% of runs
    rng = np.random.default_rng(7)
    p_true, a_true = 0.996, 0.74
    shots = 2000
    hits = 0
    reps = 200
    for _ in range(reps):
        pts = []
        for n in (2, 6, 12, 20, 30, 40):
            mean = 0.25 + a_true * p_true ** n
            k = rng.binomial(shots, mean)
            se = math.sqrt((k + 1) * (shots - k + 1)
                           / ((shots + 2) ** 2 * (shots + 3)))
            pts.append((n, k / shots, se))
        p, perr = fit_decay(pts, asymptote=0.25)
        if abs(p - p_true) <= 3 * perr:
            hits += 1
    assert hits / reps >= 0.95


def test_fit_decay_validation():
    with pytest.raises(ValueError):
        fit_decay([(2, 0.9, 0.01), (6, 0.8, 0.01)], asymptote=0.0)
    with pytest.raises(ValueError):
        fit_decay([(2, 0.9, 0.0), (6, 0.8, 0.01), (10, 0.7, 0.01)], asymptote=0.0)


def test_fidelity_from_decay_conventions():
    assert fidelity_from_decay(1.0, "corrected") == 1.0
    assert abs(fidelity_from_decay(0.996, "corrected") - 0.997) < 1e-12
    assert fidelity_from_decay(0.996, "raw") == 0.996
    with pytest.raises(ValueError):
        fidelity_from_decay(1.2, "raw")
    with pytest.raises(ValueError):
        fidelity_from_decay(0.9, "other")


def _record(a, b):
    return ShotRecord(0, 2, 0, 0, a, b, 0, 0, 0, 0)


def test_post_select_loss():
    lost = _record(OutcomeClass.LOSS, OutcomeClass.ZERO)
    kept = _record(OutcomeClass.ZERO, OutcomeClass.ONE)
    assert post_select_loss([lost, lost]) == []
    mixed = [lost, kept, lost, kept]
    assert post_select_loss(mixed) == [kept, kept]


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(loss_prob_gate=-0.1)
    with pytest.raises(ValueError):
        NoiseModel(doppler_sigma=-1.0)


def test_ideal_rb_is_exactly_flat():
    res, _ = run_rb([2, 10, 40], 4, 100, None, None, NoiseModel(),
                    ideal_gate=True, seed=5)
    for p in res.points:
        assert p.return_prob == 1.0
        assert p.n_kept_after_postselect == p.n_shots
    assert res.p_raw == 1.0 and res.f_corrected == 1.0


def test_depolarizing_injection_recovery():
    f_star = 0.995
    q = (4.0 / 3.0) * (1.0 - f_star)
    res, _ = run_rb([2, 6, 12, 20, 30, 40], 16, 1000, None, None,
                    NoiseModel(depol2_prob_gate=q), ideal_gate=True, seed=8)
    assert abs(res.f_corrected - f_star) < 0.0005


def test_loss_only_erasure_conversion():
    loss = 0.01
    res, _ = run_rb([2, 6, 12, 20, 30], 8, 800, None, None,
                    NoiseModel(loss_prob_gate=loss), ideal_gate=True, seed=9)
    assert abs(res.p_corrected - 1.0) <= 2 * max(res.p_corrected_err, 1e-6)
    assert abs(res.p_raw - (1 - loss) ** 2) <= 3 * res.p_raw_err
    for p in res.points:
        assert p.n_kept_after_postselect <= p.n_shots


def test_worker_count_does_not_change_results():
    noise = NoiseModel(loss_prob_gate=0.01, depol2_prob_gate=0.01,
                       single_qubit_error=0.002, prep_error=0.01)
    r1, rec1 = run_rb([2, 6, 12], 3, 150, None, None, noise, ideal_gate=True,
                      seed=13, workers=1, collect_shots=True)
    r4, rec4 = run_rb([2, 6, 12], 3, 150, None, None, noise, ideal_gate=True,
                      seed=13, workers=4, collect_shots=True)
    assert r1 == r4
    assert rec1 == rec4


def test_rb_input_validation():
    with pytest.raises(ValueError):
        run_rb([2, 5], 2, 10, None, None, NoiseModel(), ideal_gate=True)
    with pytest.raises(ValueError):
        run_rb([6, 2], 2, 10, None, None, NoiseModel(), ideal_gate=True)
    with pytest.raises(ValueError):
        run_rb([2, 6], 2, 10, None, None, NoiseModel())   # no model/profile


def test_record_counts_and_readout_path():
    res, recs = run_rb([2, 4, 8], 2, 50, czgate.DEFAULT_MODEL, czgate.DEFAULT_PULSE,
                       DEFAULT_NOISE, imaging=readout.DEFAULT_IMAGING,
                       thresholds=readout.DEFAULT_THRESHOLDS, seed=3,
                       gate_steps=80, collect_shots=True)
    assert len(recs) == 3 * 2 * 50
    assert all(r.c1a >= 0 and r.c2b >= 0 for r in recs)
    assert {r.n_cz for r in recs} == {2, 4, 8}


def test_policy_validation_and_single_round():
    with pytest.raises(ValueError):
        RoundPolicy(kind="freeze")
    out = run_rounds(1, RoundPolicy(kind="none"), 0.0,
                     motional.default_modes(1.0), motional.DEFAULT_RSC,
                     czgate.DEFAULT_MODEL, czgate.DEFAULT_PULSE, NoiseModel(),
                     motional.DEFAULT_K_EFF, motional.DEFAULT_ATOM_MASS,
                     [2, 6, 10], 2, 100, seed=1, gate_steps=80)
    assert len(out) == 1
    assert out[0].round_index == 1 and not out[0].reinitialized


def test_local_gm_policy_floors_nbar():
    out = run_rounds(2, RoundPolicy(kind="local_gm", nbar_floor_gm=4.0), 10.0,
                     motional.default_modes(1.0), motional.DEFAULT_RSC,
                     czgate.DEFAULT_MODEL, czgate.DEFAULT_PULSE, NoiseModel(),
                     motional.DEFAULT_K_EFF, motional.DEFAULT_ATOM_MASS,
                     [2, 6, 10], 2, 100, seed=2, gate_steps=80)
    # round 1 keeps nbar=1 (below the floor); round 2 is capped at the floor
    assert abs(out[0].nbar_radial - 1.0) < 1e-6
    assert abs(out[1].nbar_radial - 4.0) < 1e-6
