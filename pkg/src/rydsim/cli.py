"""Command-line entry point: deterministic run orchestration and artifact
emission (CSV, JSON, SVG, and a manifest with per-file checksums).

Exit codes: 0 success, 1 config/IO error, 2 scientific non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__, bench, czgate, motional, readout
from .bench import FitError
from .config import ConfigError, RunConfig, RunManifest, config_sha256, load_config, loads
from .motional import ThermometryError
from .svgplot import LinePlot

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NONCONVERGED = 2


class NonConvergence(RuntimeError):
    pass


def _write_json(path: Path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def cmd_optimize_pulse(cfg: RunConfig, out: Path) -> list:
    opt = czgate.optimize_pulse(cfg.model, cfg.profile,
                                budget=cfg.optimize_budget,
                                steps=cfg.optimize_steps)
    _write_json(out / "profile.json", {
        "profile": asdict(opt.profile),
        "fidelity": opt.fidelity,
        "converged": opt.converged,
        "n_evaluations": opt.n_evaluations,
    })
    _write_csv(out / "convergence.csv", ["evaluation", "best_fidelity"],
               [(i, f"{1.0 - obj:.12f}") for i, obj in opt.history])
    print(f"optimized pulse fidelity: {opt.fidelity:.10f} "
          f"({opt.n_evaluations} evaluations)")
    if opt.fidelity < 0.999:
        raise NonConvergence(
            f"pulse optimization stalled at fidelity {opt.fidelity:.6f} < 0.999")
    return ["profile.json", "convergence.csv"]


def _fit_curve(n_grid, p, amp, asymptote):
    return [asymptote + amp * p ** n for n in n_grid]


def _fit_amplitude(points, p, asymptote):
    # closed-form weighted amplitude, mirroring the decay fit
    x = np.array([pt[0] for pt in points], float)
    y = np.array([pt[1] for pt in points]) - asymptote
    w = 1.0 / np.array([pt[2] for pt in points]) ** 2
    basis = p ** x
    return float(np.sum(w * basis * y) / np.sum(w * basis * basis))


def cmd_rb(cfg: RunConfig, out: Path) -> list:
    result, records = bench.run_rb(
        cfg.rb_n_cz_list, cfg.rb_randomizations, cfg.rb_shots_per_point,
        cfg.model, cfg.profile, cfg.noise, imaging=cfg.imaging,
        thresholds=cfg.thresholds, seed=cfg.seed, gate_steps=cfg.rb_gate_steps,
        workers=cfg.workers, collect_shots=True)
    _write_json(out / "rb_result.json", {
        "points": [asdict(p) for p in result.points],
        "p_raw": result.p_raw, "p_raw_err": result.p_raw_err,
        "f_raw": result.f_raw,
        "p_corrected": result.p_corrected,
        "p_corrected_err": result.p_corrected_err,
        "f_corrected": result.f_corrected,
    })
    _write_csv(out / "shots.csv",
               ["round", "n_cz", "randomization", "shot",
                "atomA_class", "atomB_class", "c1A", "c2A", "c1B", "c2B"],
               [(r.round_index, r.n_cz, r.randomization, r.shot,
                 int(r.a_class), int(r.b_class), r.c1a, r.c2a, r.c1b, r.c2b)
                for r in records])

    plot = LinePlot("Echoed benchmarking decay", "number of CZ gates",
                    "return probability")
    xs = [p.n_cz for p in result.points]
    plot.add_series("raw", xs, [p.return_prob for p in result.points], line=False)
    plot.add_series("post-selected", xs,
                    [p.ps_return_prob for p in result.points], line=False)
    grid = np.linspace(min(xs), max(xs), 100)
    a_raw = _fit_amplitude([(p.n_cz, p.return_prob, p.std_err)
                            for p in result.points], result.p_raw, 0.0)
    a_cor = _fit_amplitude([(p.n_cz, p.ps_return_prob, p.ps_std_err)
                            for p in result.points], result.p_corrected, 0.25)
    plot.add_series("raw fit", grid, _fit_curve(grid, result.p_raw, a_raw, 0.0),
                    markers=False)
    plot.add_series("corrected fit", grid,
                    _fit_curve(grid, result.p_corrected, a_cor, 0.25), markers=False)
    plot.add_note(f"p_raw = {result.p_raw:.6f}  f_raw = {result.f_raw:.6f}")
    plot.add_note(f"p_corrected = {result.p_corrected:.6f}  "
                  f"f_corrected = {result.f_corrected:.6f}")
    plot.write(out / "decay.svg")
    print(f"f_raw = {result.f_raw:.6f}  f_corrected = {result.f_corrected:.6f}")
    return ["rb_result.json", "shots.csv", "decay.svg"]


def cmd_rounds(cfg: RunConfig, out: Path) -> list:
    payload = {}
    plot = LinePlot("Fidelity sustainability over rounds", "round",
                    "corrected fidelity")
    for policy in cfg.rounds_policies:
        summaries = bench.run_rounds(
            cfg.rounds_n, policy, cfg.rounds_heating, cfg.modes, cfg.rsc,
            cfg.model, cfg.profile, cfg.noise, cfg.k_eff, cfg.atom_mass,
            cfg.rb_n_cz_list, cfg.rounds_randomizations,
            cfg.rounds_shots_per_point, imaging=cfg.imaging,
            thresholds=cfg.thresholds, seed=cfg.seed,
            gate_steps=cfg.rb_gate_steps, workers=cfg.workers)
        payload[policy.kind] = [asdict(s) for s in summaries]
        plot.add_series(policy.kind, [s.round_index for s in summaries],
                        [s.f_corrected for s in summaries])
        fs = ", ".join(f"{s.f_corrected:.5f}" for s in summaries)
        print(f"{policy.kind}: {fs}")
    _write_json(out / "rounds.json", payload)
    plot.write(out / "rounds.svg")
    return ["rounds.json", "rounds.svg"]


def cmd_sideband(cfg: RunConfig, out: Path) -> list:
    wmax = max(m.trap_freq for m in cfg.modes)
    grid = np.linspace(-1.6 * wmax, 1.6 * wmax, cfg.sideband_points)
    spec = motional.sideband_spectrum(cfg.modes, cfg.sideband_probe_rabi,
                                      cfg.sideband_probe_time, grid)
    _write_csv(out / "spectrum.csv", ["detuning_rad_s", "transfer"],
               [(repr(float(d)), f"{t:.10f}")
                for d, t in zip(spec.detunings, spec.transfer)])
    fits = {}
    for mode in cfg.modes:
        nbar, ratio = motional.fit_mean_phonon(spec, mode.trap_freq)
        fits[mode.label] = {"nbar_true": mode.nbar, "nbar_fit": nbar,
                            "peak_ratio": ratio}
    _write_json(out / "thermometry.json", fits)
    plot = LinePlot("Sideband spectrum", "probe detuning (kHz)",
                    "transfer probability")
    plot.add_series("spectrum", spec.detunings / (2 * np.pi * 1e3),
                    spec.transfer, markers=False)
    for label, f in sorted(fits.items()):
        plot.add_note(f"{label}: nbar = {f['nbar_fit']:.3f}")
    plot.write(out / "sideband.svg")
    for label, f in sorted(fits.items()):
        print(f"{label}: fitted nbar = {f['nbar_fit']:.3f} (true {f['nbar_true']:.3f})")
    return ["spectrum.csv", "thermometry.json", "sideband.svg"]


def cmd_readout(cfg: RunConfig, out: Path) -> list:
    if cfg.imaging is None:
        raise ConfigError("[imaging] enabled = false leaves nothing to simulate")
    rng = np.random.default_rng([cfg.seed, 301])
    labeled = []
    for st in readout.AtomState:
        states = np.full(cfg.readout_calib_samples, int(st))
        c1, c2, _ = readout.simulate_counts_batch(states, cfg.imaging, rng)
        labeled.extend(zip(states.tolist(), c1.tolist(), c2.tolist()))
    th = readout.calibrate_thresholds(labeled)

    rows = []
    correct = 0
    survived_n = 0
    rng_test = np.random.default_rng([cfg.seed, 302])
    per_state = {}
    for st in readout.AtomState:
        states = np.full(cfg.readout_trials, int(st))
        c1, c2, surv = readout.simulate_counts_batch(states, cfg.imaging, rng_test)
        cls = readout.classify_batch(c1, c2, th)
        per_state[st.name] = {
            oc.name: float(np.mean(cls == int(oc))) for oc in readout.OutcomeClass}
        if st != readout.AtomState.LOST:
            correct += int(np.sum(cls == int(st)))
            survived_n += int(surv.sum())
        rows.extend((st.name, int(a), int(b), readout.OutcomeClass(int(k)).name)
                    for a, b, k in zip(c1, c2, cls))
    fidelity = correct / (2 * cfg.readout_trials)
    survival = survived_n / (2 * cfg.readout_trials)
    _write_csv(out / "scatter.csv", ["true_state", "c1", "c2", "assigned"], rows)
    _write_json(out / "readout.json", {
        "thresholds": {"t1": th.t1, "t2": th.t2},
        "confusion": per_state,
        "state_resolved_fidelity": fidelity,
        "survival": survival,
    })
    print(f"thresholds t1={th.t1} t2={th.t2}  "
          f"fidelity={fidelity:.4f}  survival={survival:.4f}")
    return ["scatter.csv", "readout.json"]


def cmd_rabi(cfg: RunConfig, out: Path) -> list:
    period = 2 * np.pi / cfg.model.omega
    durations = np.linspace(0.0, 2.5 * period, 251)
    scan = czgate.rabi_scan(cfg.model, durations)
    _write_csv(out / "rabi.csv", ["duration_s", "p_rydberg"],
               [(repr(float(t)), f"{p:.10f}") for t, p in scan])
    plot = LinePlot("Resonant ground-Rydberg Rabi flopping", "pulse time (ns)",
                    "Rydberg population")
    plot.add_series("two-level", [t * 1e9 for t, _ in scan],
                    [p for _, p in scan], markers=False)
    plot.add_note(f"Rabi frequency {cfg.model.omega / (2 * np.pi * 1e6):.3f} MHz, "
                  f"period {period * 1e9:.1f} ns")
    plot.write(out / "rabi.svg")
    print(f"Rabi period: {period * 1e9:.2f} ns")
    return ["rabi.csv", "rabi.svg"]


_COMMANDS = {
    "optimize-pulse": cmd_optimize_pulse,
    "rb": cmd_rb,
    "rounds": cmd_rounds,
    "sideband": cmd_sideband,
    "readout": cmd_readout,
    "rabi": cmd_rabi,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rydsim",
        description="Pulse-level simulator for Rydberg-blockade CZ gates: "
                    "gate synthesis, benchmarking, readout, and cooling.")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", metavar="PATH",
                        help="run configuration file (defaults used if omitted)")
    parser.add_argument("--out", metavar="DIR", default="out",
                        help="output directory (created if missing)")
    parser.add_argument("--seed", type=int, metavar="N",
                        help="override the configured master seed")
    parser.add_argument("--workers", type=int, metavar="N",
                        help="override the configured worker count")
    parser.add_argument("--version", action="version", version=__version__)
    args = parser.parse_args(argv)

    t0 = time.monotonic()
    try:
        cfg = load_config(args.config) if args.config else loads("")
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 63:
                raise ConfigError("--seed must be a nonnegative 63-bit integer")
            cfg = replace(cfg, seed=args.seed)
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers must be >= 1")
            cfg = replace(cfg, workers=args.workers)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        files = _COMMANDS[args.command](cfg, out)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonConvergence, FitError, ThermometryError) as e:
        print(f"non-convergence: {e}", file=sys.stderr)
        return EXIT_NONCONVERGED

    manifest = RunManifest(config_sha256=config_sha256(cfg),
                           tool_version=__version__)
    for name in files:
        manifest.add_file(out / name)
    manifest.wall_clock_s = time.monotonic() - t0
    manifest.write(out / "manifest.json")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
