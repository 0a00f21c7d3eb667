"""Run configuration: a single INI-style file with key = value sections.

Every key has a shipped default, so an empty file is a valid config.  All
values are validated (naming the offending section/key) before any
simulation starts.  A RunManifest records checksums of everything a command
wrote.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import os
from dataclasses import dataclass, field

from . import bench, czgate, motional, readout

__all__ = ["ConfigError", "RunConfig", "RunManifest", "load_config", "loads"]


class ConfigError(ValueError):
    """Invalid or unreadable run configuration."""


@dataclass(frozen=True)
class RunConfig:
    seed: int
    workers: int
    model: czgate.BlockadeModel
    profile: czgate.PulseProfile
    noise: bench.NoiseModel
    imaging: readout.ImagingParams | None
    thresholds: readout.Thresholds
    modes: tuple                 # MotionalMode pair at the initial nbar
    k_eff: float
    atom_mass: float
    rsc: motional.RscConfig
    rb_n_cz_list: tuple
    rb_randomizations: int
    rb_shots_per_point: int
    rb_gate_steps: int
    rounds_n: int
    rounds_policies: tuple       # RoundPolicy instances
    rounds_heating: float
    rounds_randomizations: int
    rounds_shots_per_point: int
    sideband_probe_rabi: float
    sideband_probe_time: float
    sideband_points: int
    readout_trials: int
    readout_calib_samples: int
    optimize_budget: int
    optimize_steps: int
    raw_text: str = ""


_SCHEMA = {
    "run": {"seed": int, "workers": int},
    "blockade": {"omega": float, "delta_int": float, "blockade_v": float,
                 "gamma_rydberg": float, "bbr_fraction": float,
                 "rydberg_label": str},
    "pulse": {"amp": float, "mod_freq_cycles": float, "phase0": float,
              "detuning_slope": float, "duration": float, "local_phase": float},
    "noise": {"doppler_sigma": str, "loss_prob_gate": float,
              "recycle_prob_gate": float, "scatter_prob_gate": float,
              "prep_error": float, "single_qubit_error": float,
              "depol2_prob_gate": float},
    "imaging": {"enabled": bool, "lambda_bright1": float, "lambda_dark1": float,
                "lambda_present2": float, "lambda_bg2": float,
                "depump_prob": float, "loss_prob_stage1": float,
                "t1": int, "t2": int},
    "motional": {"radial_freq": float, "radial_eta": float, "axial_freq": float,
                 "axial_eta": float, "nbar_initial": float, "k_eff": float,
                 "atom_mass": float},
    "rsc": {"carrier_rabi": float, "pulse_time": float, "pump_heating": float,
            "cycles": int},
    "rb": {"n_cz_list": str, "randomizations": int, "shots_per_point": int,
           "gate_steps": int},
    "rounds": {"n_rounds": int, "policy": str, "heating_per_round": float,
               "nbar_floor_gm": float, "randomizations": int,
               "shots_per_point": int},
    "sideband": {"probe_rabi": float, "probe_time": float, "points": int},
    "readout": {"n_trials": int, "calib_samples": int},
    "optimize": {"budget": int, "steps": int},
}


def _get(parser, section, key, conv, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        if conv is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if conv is float and raw.strip().lower() in ("inf", "infinity"):
            return math.inf
        return conv(raw)
    except ValueError:
        raise ConfigError(
            f"invalid value {raw!r} for [{section}] {key}") from None


def load_config(path: str) -> RunConfig:
    """Parse and validate a run configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from None
    return loads(text)


def loads(text: str) -> RunConfig:
    """Parse and validate configuration text (empty text = all defaults)."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"cannot parse config: {e}") from None

    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key in parser.options(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")

    def get(section, key, default):
        return _get(parser, section, key, _SCHEMA[section][key], default)

    def build(section, factory, **kwargs):
        try:
            return factory(**kwargs)
        except ValueError as e:
            raise ConfigError(f"invalid [{section}] settings: {e}") from None

    seed = get("run", "seed", 0)
    if not 0 <= seed < 2 ** 63:
        raise ConfigError("[run] seed must be a nonnegative 63-bit integer")
    workers = get("run", "workers", 1)
    if workers < 1:
        raise ConfigError("[run] workers must be >= 1")

    dm = czgate.DEFAULT_MODEL
    model = build("blockade", czgate.BlockadeModel,
                  omega=get("blockade", "omega", dm.omega),
                  delta_int=get("blockade", "delta_int", dm.delta_int),
                  blockade_v=get("blockade", "blockade_v", dm.blockade_v),
                  gamma_rydberg=get("blockade", "gamma_rydberg", dm.gamma_rydberg),
                  bbr_fraction=get("blockade", "bbr_fraction", dm.bbr_fraction),
                  rydberg_label=get("blockade", "rydberg_label", dm.rydberg_label))

    dp = czgate.DEFAULT_PULSE
    profile = build("pulse", czgate.PulseProfile,
                    amp=get("pulse", "amp", dp.amp),
                    mod_freq_cycles=get("pulse", "mod_freq_cycles", dp.mod_freq_cycles),
                    phase0=get("pulse", "phase0", dp.phase0),
                    detuning_slope=get("pulse", "detuning_slope", dp.detuning_slope),
                    duration=get("pulse", "duration", dp.duration),
                    local_phase=get("pulse", "local_phase", dp.local_phase))

    k_eff = get("motional", "k_eff", motional.DEFAULT_K_EFF)
    atom_mass = get("motional", "atom_mass", motional.DEFAULT_ATOM_MASS)
    nbar0 = get("motional", "nbar_initial", 1.0)
    modes = build("motional", lambda: (
        motional.thermal_mode(get("motional", "radial_freq", motional.DEFAULT_RADIAL_FREQ),
                              get("motional", "radial_eta", motional.DEFAULT_ETA_RADIAL),
                              nbar0, motional.RADIAL),
        motional.thermal_mode(get("motional", "axial_freq", motional.DEFAULT_AXIAL_FREQ),
                              get("motional", "axial_eta", motional.DEFAULT_ETA_AXIAL),
                              nbar0, motional.AXIAL)))
    if k_eff <= 0 or atom_mass <= 0:
        raise ConfigError("[motional] k_eff and atom_mass must be positive")

    dn = bench.DEFAULT_NOISE
    sigma_raw = get("noise", "doppler_sigma", "auto")
    if sigma_raw == "auto":
        sigma = motional.doppler_sigma(modes, k_eff, atom_mass)
    else:
        try:
            sigma = float(sigma_raw)
        except ValueError:
            raise ConfigError(
                f"invalid value {sigma_raw!r} for [noise] doppler_sigma") from None
    noise = build("noise", bench.NoiseModel,
                  doppler_sigma=sigma,
                  loss_prob_gate=get("noise", "loss_prob_gate", dn.loss_prob_gate),
                  recycle_prob_gate=get("noise", "recycle_prob_gate", dn.recycle_prob_gate),
                  scatter_prob_gate=get("noise", "scatter_prob_gate", dn.scatter_prob_gate),
                  prep_error=get("noise", "prep_error", dn.prep_error),
                  single_qubit_error=get("noise", "single_qubit_error", dn.single_qubit_error),
                  depol2_prob_gate=get("noise", "depol2_prob_gate", dn.depol2_prob_gate))

    di = readout.DEFAULT_IMAGING
    imaging = build("imaging", readout.ImagingParams,
                    lambda_bright1=get("imaging", "lambda_bright1", di.lambda_bright1),
                    lambda_dark1=get("imaging", "lambda_dark1", di.lambda_dark1),
                    lambda_present2=get("imaging", "lambda_present2", di.lambda_present2),
                    lambda_bg2=get("imaging", "lambda_bg2", di.lambda_bg2),
                    depump_prob=get("imaging", "depump_prob", di.depump_prob),
                    loss_prob_stage1=get("imaging", "loss_prob_stage1", di.loss_prob_stage1))
    if not get("imaging", "enabled", True):
        imaging = None
    dt = readout.DEFAULT_THRESHOLDS
    thresholds = build("imaging", readout.Thresholds,
                       t1=get("imaging", "t1", dt.t1),
                       t2=get("imaging", "t2", dt.t2))

    dr = motional.DEFAULT_RSC
    rsc = build("rsc", motional.RscConfig,
                carrier_rabi=get("rsc", "carrier_rabi", dr.carrier_rabi),
                pulse_time=get("rsc", "pulse_time", dr.pulse_time),
                pump_heating=get("rsc", "pump_heating", dr.pump_heating),
                cycles=get("rsc", "cycles", dr.cycles))

    raw_list = get("rb", "n_cz_list", ",".join(str(n) for n in bench.DEFAULT_N_CZ_LIST))
    try:
        n_cz_list = tuple(int(tok) for tok in raw_list.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"invalid value {raw_list!r} for [rb] n_cz_list") from None
    if not n_cz_list or any(n < 0 or n % 2 for n in n_cz_list) \
            or list(n_cz_list) != sorted(n_cz_list):
        raise ConfigError("[rb] n_cz_list must be ascending even integers")
    rb_rand = get("rb", "randomizations", bench.DEFAULT_RANDOMIZATIONS)
    rb_shots = get("rb", "shots_per_point", bench.DEFAULT_SHOTS_PER_POINT)
    rb_steps = get("rb", "gate_steps", 150)
    if rb_rand < 1 or rb_shots < 1 or rb_steps < 10:
        raise ConfigError("[rb] randomizations/shots_per_point must be >= 1, gate_steps >= 10")

    policy_raw = get("rounds", "policy", "none,local_gm,rsc")
    floor = get("rounds", "nbar_floor_gm", 4.0)
    try:
        policies = tuple(bench.RoundPolicy(kind=tok.strip(), nbar_floor_gm=floor)
                         for tok in policy_raw.split(",") if tok.strip())
    except ValueError as e:
        raise ConfigError(f"invalid [rounds] policy: {e}") from None
    if not policies:
        raise ConfigError("[rounds] policy must name at least one policy")
    rounds_n = get("rounds", "n_rounds", 5)
    if rounds_n < 1:
        raise ConfigError("[rounds] n_rounds must be >= 1")
    heating = get("rounds", "heating_per_round", bench.DEFAULT_HEATING_PER_ROUND)
    if heating < 0:
        raise ConfigError("[rounds] heating_per_round must be >= 0")
    rounds_rand = get("rounds", "randomizations", 16)
    rounds_shots = get("rounds", "shots_per_point", 1000)
    if rounds_rand < 1 or rounds_shots < 1:
        raise ConfigError("[rounds] randomizations/shots_per_point must be >= 1")

    probe_rabi = get("sideband", "probe_rabi", motional.DEFAULT_PROBE_RABI)
    probe_time = get("sideband", "probe_time", motional.DEFAULT_PROBE_TIME)
    sb_points = get("sideband", "points", 1281)
    if probe_rabi <= 0 or probe_time <= 0 or sb_points < 11:
        raise ConfigError("[sideband] probe_rabi/probe_time must be positive, points >= 11")

    ro_trials = get("readout", "n_trials", 10000)
    ro_calib = get("readout", "calib_samples", 20000)
    if ro_trials < 1000 or ro_calib < 1000:
        raise ConfigError("[readout] n_trials and calib_samples must be >= 1000")

    budget = get("optimize", "budget", 400)
    steps = get("optimize", "steps", 300)
    if budget < 10 or steps < 10:
        raise ConfigError("[optimize] budget and steps must be >= 10")

    return RunConfig(
        seed=seed, workers=workers, model=model, profile=profile, noise=noise,
        imaging=imaging, thresholds=thresholds, modes=modes, k_eff=k_eff,
        atom_mass=atom_mass, rsc=rsc, rb_n_cz_list=n_cz_list,
        rb_randomizations=rb_rand, rb_shots_per_point=rb_shots,
        rb_gate_steps=rb_steps, rounds_n=rounds_n, rounds_policies=policies,
        rounds_heating=heating, rounds_randomizations=rounds_rand,
        rounds_shots_per_point=rounds_shots, sideband_probe_rabi=probe_rabi,
        sideband_probe_time=probe_time, sideband_points=sb_points,
        readout_trials=ro_trials, readout_calib_samples=ro_calib,
        optimize_budget=budget, optimize_steps=steps, raw_text=text,
    )


@dataclass
class RunManifest:
    """Checksums and provenance for one command's output directory."""

    config_sha256: str
    tool_version: str
    files: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0

    def add_file(self, path):
        with open(path, "rb") as fh:
            digest = hashlib.sha256(fh.read()).hexdigest()
        self.files[os.path.basename(str(path))] = digest

    def write(self, path):
        payload = {
            "config_sha256": self.config_sha256,
            "tool_version": self.tool_version,
            "files": dict(sorted(self.files.items())),
            "wall_clock_s": round(self.wall_clock_s, 3),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def config_sha256(cfg: RunConfig) -> str:
    return hashlib.sha256(cfg.raw_text.encode("utf-8")).hexdigest()
