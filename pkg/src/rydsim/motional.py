"""Harmonic-trap phonon ladders: thermal states, Raman sideband cooling as a
Markov chain on the phonon distribution, sideband spectrum synthesis, and
peak-ratio thermometry.

All sideband couplings are first order in the Lamb-Dicke parameter:
carrier Omega_c (1 - eta^2 n), red sideband eta Omega_c sqrt(n), blue
sideband eta Omega_c sqrt(n+1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.constants import hbar

__all__ = [
    "MotionalMode",
    "RscConfig",
    "SidebandSpectrum",
    "ThermometryError",
    "thermal_distribution",
    "thermal_mode",
    "mean_phonon",
    "sideband_rabi",
    "rsc_cycle",
    "sideband_spectrum",
    "fit_mean_phonon",
    "doppler_sigma",
    "rsc_for_mode",
    "default_modes",
    "DEFAULT_RSC",
    "DEFAULT_PROBE_RABI",
    "DEFAULT_PROBE_TIME",
    "DEFAULT_RADIAL_FREQ",
    "DEFAULT_AXIAL_FREQ",
    "DEFAULT_ETA_RADIAL",
    "DEFAULT_ETA_AXIAL",
    "DEFAULT_K_EFF",
    "DEFAULT_ATOM_MASS",
]

RADIAL = "radial"
AXIAL = "axial"


class ThermometryError(ValueError):
    """Sideband peak ratio >= 1: not a thermal distribution (or too noisy)."""


@dataclass(frozen=True)
class MotionalMode:
    """One harmonic trap axis with its phonon-number distribution."""

    trap_freq: float          # rad/s
    lamb_dicke: float
    dist: np.ndarray          # probability over n = 0..n_max
    label: str = RADIAL

    def __post_init__(self):
        if not 0.0 < self.lamb_dicke < 0.5:
            raise ValueError("lamb_dicke must be in (0, 0.5)")
        if self.label not in (RADIAL, AXIAL):
            raise ValueError("label must be 'radial' or 'axial'")
        d = np.array(self.dist, dtype=float)
        if d.ndim != 1 or d.size == 0 or np.any(d < 0):
            raise ValueError("dist must be a nonnegative probability vector")
        if abs(d.sum() - 1.0) > 1e-12:
            raise ValueError("dist must sum to 1 within 1e-12")
        d.setflags(write=False)
        object.__setattr__(self, "dist", d)

    @property
    def nbar(self) -> float:
        return mean_phonon(self.dist)


@dataclass(frozen=True)
class RscConfig:
    """One red-sideband + repump cooling cycle.

    pump_heating is the mean phonon gain per optical-pumping event
    (recoil scale ~ eta_pump^2), applied as a single-quantum kick.
    """

    carrier_rabi: float       # rad/s
    pulse_time: float         # s
    pump_heating: float
    cycles: int = 30

    def __post_init__(self):
        if self.carrier_rabi <= 0 or self.pulse_time <= 0:
            raise ValueError("carrier_rabi and pulse_time must be positive")
        if self.pump_heating < 0 or self.cycles <= 0:
            raise ValueError("pump_heating must be >= 0 and cycles positive")


@dataclass(frozen=True)
class SidebandSpectrum:
    detunings: np.ndarray     # rad/s
    transfer: np.ndarray      # probability in [0, 1]

    def __post_init__(self):
        d = np.array(self.detunings, float)
        t = np.array(self.transfer, float)
        if d.shape != t.shape:
            raise ValueError("detunings and transfer lengths differ")
        if np.any((t < 0) | (t > 1)):
            raise ValueError("transfer values must lie in [0, 1]")
        d.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "detunings", d)
        object.__setattr__(self, "transfer", t)


def thermal_distribution(nbar: float, n_max: int) -> np.ndarray:
    """Truncated thermal distribution p(n) = nbar^n / (1+nbar)^(n+1), renormalized.

    Raises if the truncated tail exceeds 1e-9.
    """
    if nbar < 0:
        raise ValueError("nbar must be >= 0")
    if nbar == 0:
        p = np.zeros(n_max + 1)
        p[0] = 1.0
        return p
    r = nbar / (1.0 + nbar)
    tail = r ** (n_max + 1)
    if tail >= 1e-9:
        raise ValueError(f"truncation n_max={n_max} leaves tail {tail:.2e} >= 1e-9")
    n = np.arange(n_max + 1)
    p = (1.0 / (1.0 + nbar)) * r ** n
    return p / p.sum()


def thermal_mode(trap_freq, lamb_dicke, nbar, label=RADIAL, n_max=None) -> MotionalMode:
    """Convenience constructor for a thermal MotionalMode."""
    if n_max is None:
        # tail (nbar/(1+nbar))^(n_max+1) < 1e-10 with margin
        if nbar > 0:
            r = nbar / (1.0 + nbar)
            n_max = max(15, int(math.ceil(-23.5 / math.log(r))))
        else:
            n_max = 15
    return MotionalMode(trap_freq, lamb_dicke, thermal_distribution(nbar, n_max), label)


def mean_phonon(dist) -> float:
    d = np.asarray(dist, float)
    return float(np.dot(np.arange(d.size), d))


def sideband_rabi(n: int, delta_n: int, mode: MotionalMode, carrier_rabi: float) -> float:
    """First-order Lamb-Dicke coupling for the |n> -> |n + delta_n> line."""
    if n < 0:
        raise ValueError("n must be >= 0")
    eta = mode.lamb_dicke
    if delta_n == 0:
        return carrier_rabi * (1.0 - eta ** 2 * n)
    if delta_n == -1:
        return 0.0 if n == 0 else eta * carrier_rabi * math.sqrt(n)
    if delta_n == 1:
        return eta * carrier_rabi * math.sqrt(n + 1)
    raise ValueError("delta_n must be -1, 0, or +1")


def rsc_cycle(mode: MotionalMode, cfg: RscConfig, rng=None) -> MotionalMode:
    """One red-sideband transfer step followed by the optical-pumping kick.

    The phonon distribution is updated deterministically (Markov chain on the
    ladder); `rng` is accepted for interface symmetry with the stochastic
    operations but unused.  Repumping re-initializes the internal qubit state,
    which the benchmarking driver consumes as a reset flag.
    """
    p = np.array(mode.dist)
    n = np.arange(p.size)
    omega_red = mode.lamb_dicke * cfg.carrier_rabi * np.sqrt(n)
    t = np.sin(omega_red * cfg.pulse_time / 2.0) ** 2   # transfer |n> -> |n-1>
    moved = p * t
    p = p - moved
    p[:-1] += moved[1:]
    if cfg.pump_heating > 0:
        h = cfg.pump_heating
        up = p * h
        p = p - up
        p[1:] += up[:-1]
        p[-1] += up[-1]   # truncation cap: keep mass at the top bin
    p = np.clip(p, 0.0, None)
    p /= p.sum()
    return replace(mode, dist=p)


def sideband_spectrum(modes, probe_rabi: float, probe_time: float,
                      detunings) -> SidebandSpectrum:
    """Two-level Rabi transfer summed over modes, lines, and phonon levels.

    transfer(delta) = sum_n p(n) * L * sin^2(sqrt(Omega_nm^2 + (delta - dn*w)^2) * tau / 2)
    with L = Omega_nm^2 / (Omega_nm^2 + (delta - dn*w)^2); the carrier line is
    counted once (for the first mode only).
    """
    delta = np.asarray(detunings, float)
    wmax = max(m.trap_freq for m in modes)
    if delta.min() > -1.5 * wmax or delta.max() < 1.5 * wmax:
        raise ValueError("detuning grid must cover +/- 1.5 * max trap frequency")
    total = np.zeros_like(delta)
    for i, mode in enumerate(modes):
        lines = (-1, 0, 1) if i == 0 else (-1, 1)
        for dn in lines:
            center = dn * mode.trap_freq
            for n, pn in enumerate(mode.dist):
                if pn == 0.0:
                    continue
                om = sideband_rabi(n, dn, mode, probe_rabi)
                if om == 0.0:
                    continue
                g2 = om ** 2 + (delta - center) ** 2
                total += pn * (om ** 2 / g2) * np.sin(np.sqrt(g2) * probe_time / 2.0) ** 2
    return SidebandSpectrum(delta, np.clip(total, 0.0, 1.0))


def fit_mean_phonon(spec: SidebandSpectrum, trap_freq: float) -> tuple:
    """Peak-ratio thermometry for one mode: nbar = r / (1 - r).

    r is the ratio of the red-sideband peak (max transfer within +/-15% of
    -trap_freq) to the blue peak (same window around +trap_freq).  Returns
    (nbar, r); raises ThermometryError when r >= 1.
    """
    d, t = spec.detunings, spec.transfer
    win = 0.15 * trap_freq
    red_mask = np.abs(d + trap_freq) <= win
    blue_mask = np.abs(d - trap_freq) <= win
    if not red_mask.any() or not blue_mask.any():
        raise ValueError("spectrum does not cover both sideband windows")
    peak_red = float(t[red_mask].max())
    peak_blue = float(t[blue_mask].max())
    if peak_blue <= 0:
        raise ThermometryError("blue sideband peak is zero")
    r = peak_red / peak_blue
    if r >= 1.0:
        raise ThermometryError(f"red/blue peak ratio {r:.3f} >= 1 is unphysical for a thermal state")
    return r / (1.0 - r), r


def doppler_sigma(modes, k_eff: float, atom_mass: float,
                  direction_cosines=None) -> float:
    """Per-shot Doppler detuning width sigma_delta = k_eff * sigma_v.

    Each mode contributes cos^2 * (hbar w / 2 m)(2 nbar + 1) to the velocity
    variance along the effective wavevector.
    """
    modes = list(modes)
    if not modes:
        raise ValueError("modes must be nonempty")
    if direction_cosines is None:
        direction_cosines = [1.0] * len(modes)
    var = 0.0
    for mode, cosv in zip(modes, direction_cosines):
        var += cosv ** 2 * (hbar * mode.trap_freq / (2.0 * atom_mass)) * (2.0 * mode.nbar + 1.0)
    return float(k_eff * math.sqrt(var))


# Default cooling cycle for the default radial mode (eta = 0.16): pulse area
# eta * Omega_c * tau / 2 = 0.5 rad, far from any sin^2 dark level below
# n ~ 40, with a recoil-scale repump kick.  The steady state lands at
# nbar ~ 0.85 and a 5.0 thermal state reaches nbar <= 1 within 30 cycles
# (see tests/test_motional.py).  For a mode with a different Lamb-Dicke
# parameter, scale pulse_time to keep the same area (`rsc_for_mode`).
DEFAULT_RSC = RscConfig(
    carrier_rabi=2 * math.pi * 50e3,
    pulse_time=1.0 / (0.16 * 2 * math.pi * 50e3),
    pump_heating=0.14,
    cycles=30,
)

# Default weak thermometry probe: keeps the sideband peak ratio in the
# linear regime where r = nbar / (nbar + 1).
DEFAULT_PROBE_RABI = 2 * math.pi * 1e3
DEFAULT_PROBE_TIME = 400e-6


# Default trap geometry for an 87Rb tweezer: the radial Lamb-Dicke parameter
# is configured directly and the axial one follows from eta ~ 1/sqrt(omega).
# The two-photon drive at 420 nm + 1013 nm is co-aligned with the radial axis.
DEFAULT_RADIAL_FREQ = 2 * math.pi * 100e3
DEFAULT_AXIAL_FREQ = 2 * math.pi * 20e3
DEFAULT_ETA_RADIAL = 0.16
DEFAULT_ETA_AXIAL = DEFAULT_ETA_RADIAL * math.sqrt(DEFAULT_RADIAL_FREQ / DEFAULT_AXIAL_FREQ)
DEFAULT_K_EFF = 2 * math.pi * (1.0 / 420e-9 + 1.0 / 1013e-9)
DEFAULT_ATOM_MASS = 86.909180527 * 1.66053906892e-27   # 87Rb, kg


def default_modes(nbar: float = 1.0) -> list:
    """The two default motional modes, both thermal at the given nbar."""
    return [
        thermal_mode(DEFAULT_RADIAL_FREQ, DEFAULT_ETA_RADIAL, nbar, RADIAL),
        thermal_mode(DEFAULT_AXIAL_FREQ, DEFAULT_ETA_AXIAL, nbar, AXIAL),
    ]


def rsc_for_mode(cfg: RscConfig, mode: MotionalMode,
                 reference_eta: float = 0.16) -> RscConfig:
    """Rescale the sideband pulse time so the pulse area configured for the
    reference Lamb-Dicke parameter is preserved on `mode`."""
    return replace(cfg, pulse_time=cfg.pulse_time * reference_eta / mode.lamb_dicke)
