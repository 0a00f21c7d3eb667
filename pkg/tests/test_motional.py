import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.constants import hbar

from rydsim.motional import (
    DEFAULT_ATOM_MASS,
    DEFAULT_K_EFF,
    DEFAULT_PROBE_RABI,
    DEFAULT_PROBE_TIME,
    DEFAULT_RSC,
    MotionalMode,
    RscConfig,
    SidebandSpectrum,
    ThermometryError,
    default_modes,
    doppler_sigma,
    fit_mean_phonon,
    mean_phonon,
    rsc_cycle,
    rsc_for_mode,
    sideband_rabi,
    sideband_spectrum,
    thermal_distribution,
    thermal_mode,
)

W_R = 2 * math.pi * 100e3


def test_thermal_distribution_moments():
    for nbar in (0.0, 0.5, 2.0):
        p = thermal_distribution(nbar, 200)
        assert abs(p.sum() - 1.0) < 1e-12
        assert abs(mean_phonon(p) - nbar) < 1e-6


def test_thermal_distribution_truncation_guard():
    with pytest.raises(ValueError):
        thermal_distribution(5.0, 10)    # tail (5/6)^11 ~ 0.13
    thermal_distribution(5.0, 150)


def test_mode_validation():
    with pytest.raises(ValueError):
        MotionalMode(W_R, 0.6, thermal_distribution(1.0, 40))
    with pytest.raises(ValueError):
        MotionalMode(W_R, 0.16, [0.5, 0.4])   # does not sum to 1
    with pytest.raises(ValueError):
        thermal_mode(W_R, 0.16, 1.0, label="diagonal")


def test_sideband_rabi_couplings():
    m = thermal_mode(W_R, 0.16, 1.0)
    om = 2 * math.pi * 50e3
    assert sideband_rabi(0, -1, m, om) == 0.0
    assert abs(sideband_rabi(4, -1, m, om) - 0.16 * om * 2.0) < 1e-9
    assert abs(sideband_rabi(3, 1, m, om) - 0.16 * om * 2.0) < 1e-9
    assert abs(sideband_rabi(2, 0, m, om) - om * (1 - 0.16 ** 2 * 2)) < 1e-9
    with pytest.raises(ValueError):
        sideband_rabi(1, 2, m, om)


def rsc_transition_matrix(mode, cfg):
    """Independent dense Markov matrix for one cooling cycle (oracle)."""
    n_max = mode.dist.size - 1
    t = np.zeros((n_max + 1, n_max + 1))
    for n in range(n_max + 1):
        tr = math.sin(mode.lamb_dicke * cfg.carrier_rabi * math.sqrt(n)
                      * cfg.pulse_time / 2.0) ** 2
        if n > 0:
            t[n - 1, n] += tr
        t[n, n] += 1.0 - tr
    h = np.zeros_like(t)
    for n in range(n_max + 1):
        up = min(n + 1, n_max)
        h[up, n] += cfg.pump_heating
        h[n, n] += 1.0 - cfg.pump_heating
    return h @ t


def test_rsc_cycle_matches_markov_oracle():
    mode = thermal_mode(W_R, 0.16, 5.0)
    cfg = DEFAULT_RSC
    t = rsc_transition_matrix(mode, cfg)
    p = np.array(mode.dist)
    m = mode
    for _ in range(30):
        p = t @ p
        m = rsc_cycle(m, cfg)
    p = p / p.sum()
    assert np.max(np.abs(m.dist - p)) < 1e-10


def test_rsc_converges_from_nbar_5():
    for m in default_modes(5.0):
        cfg = rsc_for_mode(DEFAULT_RSC, m)
        for _ in range(DEFAULT_RSC.cycles):
            m = rsc_cycle(m, cfg)
        assert m.nbar <= 1.0


def test_rsc_for_mode_preserves_pulse_area():
    radial, axial = default_modes(1.0)
    ca = rsc_for_mode(DEFAULT_RSC, axial)
    area_r = radial.lamb_dicke * DEFAULT_RSC.carrier_rabi * DEFAULT_RSC.pulse_time
    area_a = axial.lamb_dicke * ca.carrier_rabi * ca.pulse_time
    assert abs(area_r - area_a) < 1e-12


def test_rsc_config_validation():
    with pytest.raises(ValueError):
        RscConfig(carrier_rabi=0.0, pulse_time=1e-5, pump_heating=0.1)
    with pytest.raises(ValueError):
        RscConfig(carrier_rabi=1e5, pulse_time=1e-5, pump_heating=-0.1)


def test_spectrum_grid_must_cover_sidebands():
    modes = default_modes(1.0)
    with pytest.raises(ValueError):
        sideband_spectrum(modes, DEFAULT_PROBE_RABI, DEFAULT_PROBE_TIME,
                          np.linspace(-W_R, W_R, 101))


def test_ground_state_has_no_red_sideband():
    m = thermal_mode(W_R, 0.16, 0.0)
    grid = np.linspace(-1.6 * W_R, 1.6 * W_R, 801)
    spec = sideband_spectrum([m], DEFAULT_PROBE_RABI, DEFAULT_PROBE_TIME, grid)
    red = spec.transfer[np.abs(spec.detunings + W_R) <= 0.15 * W_R]
    blue = spec.transfer[np.abs(spec.detunings - W_R) <= 0.15 * W_R]
    # residual red response is only the carrier tail, far below the blue peak
    assert red.max() < 5e-3 * blue.max()
    with pytest.raises(ThermometryError):
        fit_mean_phonon(SidebandSpectrum(spec.detunings,
                                         spec.transfer[::-1]), W_R)


def test_thermometry_round_trip():
    for nbar in (0.3, 1.0, 3.0):
        for m in default_modes(nbar):
            grid = np.linspace(-1.6 * m.trap_freq, 1.6 * m.trap_freq, 1281)
            spec = sideband_spectrum([m], DEFAULT_PROBE_RABI,
                                     DEFAULT_PROBE_TIME, grid)
            est, ratio = fit_mean_phonon(spec, m.trap_freq)
            assert abs(est - nbar) / nbar < 0.15
            assert 0.0 < ratio < 1.0


def test_doppler_sigma_formula():
    modes = default_modes(1.0)
    var = sum((hbar * m.trap_freq / (2 * DEFAULT_ATOM_MASS)) * 3.0
              for m in modes)
    expect = DEFAULT_K_EFF * math.sqrt(var)
    assert abs(doppler_sigma(modes, DEFAULT_K_EFF, DEFAULT_ATOM_MASS)
               - expect) < 1e-9 * expect
    # projection weights enter squared
    half = doppler_sigma(modes, DEFAULT_K_EFF, DEFAULT_ATOM_MASS,
                         direction_cosines=[1.0, 0.0])
    assert half < doppler_sigma(modes, DEFAULT_K_EFF, DEFAULT_ATOM_MASS)
    with pytest.raises(ValueError):
        doppler_sigma([], DEFAULT_K_EFF, DEFAULT_ATOM_MASS)


def test_rsc_cycle_conserves_probability():
    m = thermal_mode(W_R, 0.16, 3.0)
    out = rsc_cycle(m, DEFAULT_RSC)
    assert abs(out.dist.sum() - 1.0) < 1e-12
    assert out.nbar < m.nbar
