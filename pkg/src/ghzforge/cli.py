"""Command-line entry point: ``ghzforge <experiment> [--config file.json] [flags]``.

Settings are merged in the order defaults < config file < ``--set key=value``
< dedicated flags. Exit codes: 0 ok, 2 bad config, 3 numerical failure, 4 I/O.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis, holes3d, latticeparams, protocol
from .fock import sites_from_state
from .io import metadata, write_csv, write_json
from .propagator import NumericalError

log = logging.getLogger("ghzforge")

EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 2, 3, 4

_PROTOCOL_KEYS = {f.name for f in fields(protocol.ProtocolParams)}

DEFAULTS = {
    "params": {f.name: f.default for f in fields(latticeparams.LatticeInputs)},
    "prepare": {"L": 5, "U": 405.0, "eta_ext": 21.0, "j0": 3.0, "J": 1.0, "OmegaP": 1000.0,
                "methods": ["pulse", "ramp"], "t_ramp": 5.0, "delta0": 1000.0,
                "Omega_hold": 122.0, "profile": "descending", "initial": "g"},
    "generate": {"L": 5, "U": 405.0, "eta_ext": 21.0, "j0": None, "J": 1.0, "holes": [],
                 "hole_correction": False, "calibrate": False, "grid_dt": None},
    "noise-scan": {"L": 8, "U": 405.0, "eta_ext": 21.0, "j0": 11.0, "J": 1.0,
                   "levels": [0.0, 0.25, 0.5], "trajectories": 100, "calibrate": False},
    "measure": {"L": 6, "U": 405.0, "eta_ext": 21.0, "j0": None, "J": 1.0, "OmegaP": 1000.0,
                "delta": 0.3, "periods": 4.0, "dt": 0.1, "window": [1, 2, 3]},
    "holes": {"L": 10, "fillings": [0.85, 0.9, 0.95], "seeds": 200, "mode": "iid",
              "direction": 0, "delta": 0.3, "t_max": 20.0, "nt": 400},
}


class ConfigError(ValueError):
    pass


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(kind: str, path: str | None, overrides: list[str]) -> dict:
    cfg = dict(DEFAULTS[kind])
    if path:
        text = Path(path).read_text(encoding="utf-8")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        cfg.update(_checked(kind, data, path))
    for item in overrides:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        cfg.update(_checked(kind, {key.strip(): _parse_value(val)}, "--set"))
    return cfg


def _checked(kind, data, where):
    unknown = sorted(set(data) - set(DEFAULTS[kind]))
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {unknown} for '{kind}'; "
                          f"allowed: {sorted(DEFAULTS[kind])}")
    for k, v in data.items():
        d = DEFAULTS[kind][k]
        if isinstance(d, (int, float)) and not isinstance(d, bool) and v is not None \
                and not isinstance(v, (int, float)):
            raise ConfigError(f"{where}: field '{k}' must be a number, got {v!r}")
        if isinstance(d, list) and not isinstance(v, list):
            raise ConfigError(f"{where}: field '{k}' must be a list, got {v!r}")
    return data


def _protocol_params(cfg, one_sided: bool = True) -> protocol.ProtocolParams:
    kw = {k: v for k, v in cfg.items() if k in _PROTOCOL_KEYS}
    if "holes" in kw:
        kw["holes"] = tuple(kw["holes"])
    try:
        p = protocol.ProtocolParams(**kw)
        if one_sided:
            p.check_one_sided()
        return p
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid protocol parameters: {e}") from None


# experiments --------------------------------------------------------------------------

def run_params(cfg, args, meta, out):
    try:
        inputs = latticeparams.LatticeInputs(**cfg)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid lattice inputs: {e}") from None
    d = latticeparams.derive(inputs)
    write_json(out / "params.json", {"metadata": meta, "inputs": cfg, "derived": d.report()})
    if args.format == "csv":
        write_csv(out / "params.csv", "params", [d.report()], meta)
    return [f"J/2pi = {d.J:.2f} Hz (anchor ~10.4)", f"U/2pi = {d.U:.0f} Hz (anchor ~4212)",
            f"eta_ext/2pi = {d.eta_ext:.1f} Hz (anchor ~219)", f"j0 = {d.j0:.2f} sites (anchor ~-2)",
            f"band gap = {d.band_gap / 1e3:.1f} kHz (anchor ~26)",
            f"U/J = {d.U_over_J:.1f}, eta/J = {d.eta_over_J:.2f} (anchors 405, 21)"]


def run_prepare(cfg, args, meta, out):
    p = _protocol_params(cfg, one_sided=False)  # preparation does not use the trap resonances
    rows = []
    for method in cfg["methods"]:
        if method == "pulse":
            r = protocol.prepare_pulse(p)
            rows.append({"method": "pulse", "L": p.L, "N": p.N, "profile": "",
                         "t_ramp": float("nan"), "fidelity": r.fidelity})
        elif method == "ramp":
            r = protocol.prepare_ramp(p, cfg["t_ramp"], cfg["delta0"], cfg["Omega_hold"],
                                      cfg["profile"], cfg["initial"])
            rows.append({"method": "ramp", "L": p.L, "N": p.N, "profile": cfg["profile"],
                         "t_ramp": cfg["t_ramp"], "fidelity": r.fidelity})
        else:
            raise ConfigError(f"unknown preparation method {method!r}")
    _emit(out, "prepare", rows, meta, args.format)
    return [f"{r['method']}: fidelity to all-down = {r['fidelity']:.5f}" for r in rows]


def run_generate(cfg, args, meta, out):
    p = _protocol_params(cfg)
    schedule = protocol.build_generation_schedule(
        p, durations=protocol.calibrate_durations(p) if cfg["calibrate"] else None)
    expected = protocol.expected_components(p, schedule)
    basis = p.basis()
    runner = protocol.make_runner(p, basis)
    psi = protocol.psi0(p, basis)
    rows = [{"t": 0.0, "label": "initial", "omega": float("nan"), "fidelity": 1.0,
             "population": 1.0, "components": sites_from_state(protocol.initial_state(p), p.L)}]
    t = 0.0
    for seg, comps in zip(schedule, expected):
        pieces = [seg.duration]
        if cfg["grid_dt"]:
            n = int(np.ceil(seg.duration / cfg["grid_dt"]))
            pieces = [seg.duration / n] * n
        for k, dt in enumerate(pieces):
            psi = runner.evolve_segment(seg, psi, duration=dt)
            t += dt
            pops = [abs(psi[basis.index(c)]) ** 2 for c in comps]
            rows.append({"t": t, "label": seg.label if k == len(pieces) - 1 else seg.label + "~",
                         "omega": seg.omega,
                         "fidelity": analysis.superposition_fidelity(psi, comps, basis),
                         "population": float(sum(pops)),
                         "components": "|".join(sites_from_state(c, p.L) for c in comps)})
    (out / "schedule.jsonl").write_text(schedule.to_text(), encoding="utf-8")
    _emit(out, "generate", rows, meta, args.format)
    nominal = np.pi / 4 + (p.L - 2) * np.pi / 2
    lines = [f"segments: {len(schedule)} (schedule {schedule.digest()})",
             f"total time tJ = {schedule.total_time:.6f} (pi/4 + {p.L - 2}pi/2 = {nominal:.6f})",
             f"final fidelity to expected two-component state = {rows[-1]['fidelity']:.5f}"]
    if not p.holes:
        tgt = analysis.GHZTarget.from_params(p)
        th = analysis.relative_phase(psi, tgt, basis)
        lines.append(f"relative phase = {th:.4f} rad; infinite-gap value "
                     f"{float(analysis.wrap(analysis.theta_f(p.L, p.U / p.J, p.eta_ext / p.J))):.4f}")
    return lines


def run_noise_scan(cfg, args, meta, out):
    p = _protocol_params(cfg)
    rows, traj, results = [], [], []
    for level in cfg["levels"]:
        sc = analysis.NoiseScanConfig(float(level), p, int(cfg["trajectories"]), args.seed,
                                      args.workers, bool(cfg["calibrate"]))
        res = analysis.noise_scan(sc)
        results.append(res.metadata | {"mean": res.mean, "std": res.std, "n": res.n,
                                       "fidelities": res.fidelities})
        rows.append(analysis.scan_row(res))
        traj += [{"deltaOmega_max": float(level), "trajectory": k, "fidelity": f}
                 for k, f in enumerate(res.fidelities)]
    if args.format == "csv":
        write_csv(out / "noise_scan.csv", "noise_scan", rows, meta)
        write_csv(out / "noise_trajectories.csv", "noise_trajectories", traj, meta)
    write_json(out / "noise_scan.json", {"metadata": meta, "config": cfg, "results": results})
    return [f"dOmega/J = {r['deltaOmega_max']:.3g}: F = {r['mean']:.4f} +- {r['std']:.4f} "
            f"(n={r['n']})" for r in rows]


def run_measure(cfg, args, meta, out):
    p = _protocol_params(cfg)
    runner = protocol.make_runner(p)
    state = protocol.run_generation(p, runner=runner).state
    rate = analysis.bare_precession_rate(p, state)
    omega = cfg["delta"] * (p.L - 1)
    t_max = cfg["periods"] * 2 * np.pi / abs(omega) if omega else 10.0
    grid = analysis.stroboscopic_grid(p, t_max, cfg["dt"], rate)
    sig = analysis.measurement_signal(p, cfg["delta"], grid, tuple(cfg["window"]), state)
    est = analysis.extract_detuning(sig, grid, p.L)
    rows = [{"t_delta": t, "n_d": s} for t, s in zip(grid, sig)]
    _emit(out, "measure", rows, meta, args.format,
          extra={"estimate": est._asdict() | {"peaks": [pk._asdict() for pk in est.peaks]},
                 "bare_rate": rate})
    if not est.found:
        return ["no dominant oscillation found"]
    return [f"bare precession rate = {rate:.4f} J (sampled stroboscopically)",
            f"oscillation omega = {est.omega:.5f}, expected delta(L-1) = {omega:.5f}",
            f"estimated delta = {est.delta:.5f} (true {cfg['delta']})"]


def run_holes(cfg, args, meta, out):
    L, n_seeds = int(cfg["L"]), int(cfg["seeds"])
    hist_rows, sig_rows, lines = [], [], []
    t = np.linspace(0, cfg["t_max"], int(cfg["nt"]))
    for k, f in enumerate(cfg["fillings"]):
        ms = []
        for s in range(n_seeds):
            occ = holes3d.sprinkle(L, f, seed=[args.seed, k, s], mode=cfg["mode"])
            ms.append(holes3d.length_histogram(occ, cfg["direction"]).m)
        ms = np.array(ms, dtype=float)
        exp = holes3d.expected_histogram(L, f)
        for l in range(L + 1):
            hist_rows.append({"filling": f, "l": l, "m_l": ms[:, l].mean(),
                              "sem": ms[:, l].std(ddof=1) / np.sqrt(n_seeds) if n_seeds > 1 else 0.0,
                              "expected": exp[l]})
        occ = holes3d.sprinkle(L, f, seed=[args.seed, k, 0], mode=cfg["mode"])
        hist = holes3d.length_histogram(occ, cfg["direction"])
        sig = holes3d.aggregate_doublon_signal(hist, cfg["delta"], t, seed=[args.seed, k])
        sig_rows += [{"filling": f, "t": ti, "n_d_total": si} for ti, si in zip(t, sig)]
        est = analysis.extract_detuning(sig, t, L)
        lines.append(f"filling {f}: mean m_L = {ms[:, L].mean():.2f} (expected {exp[L]:.2f}); "
                     f"dominant omega = {est.omega:.4f} vs (L-1)delta = {(L - 1) * cfg['delta']:.4f}")
        if k == len(cfg["fillings"]) - 1:
            (out / "occupancy.txt").write_text(occ.to_text(), encoding="utf-8")
    if args.format == "csv":
        write_csv(out / "holes_histogram.csv", "holes_histogram", hist_rows, meta)
        write_csv(out / "holes_signal.csv", "holes_signal", sig_rows, meta)
    else:
        write_json(out / "holes.json", {"metadata": meta, "config": cfg,
                                        "histogram": hist_rows, "signal": sig_rows})
    return lines


def _emit(out, table, rows, meta, fmt, extra=None):
    if fmt == "csv":
        write_csv(out / f"{table}.csv", table, rows, meta)
        if extra:
            write_json(out / f"{table}.json", {"metadata": meta, **extra})
    else:
        write_json(out / f"{table}.json", {"metadata": meta, "rows": rows, **(extra or {})})


EXPERIMENTS = {"params": run_params, "prepare": run_prepare, "generate": run_generate,
               "noise-scan": run_noise_scan, "measure": run_measure, "holes": run_holes}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ghzforge", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"ghzforge {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, default=0, help="base RNG seed (default 0)")
    common.add_argument("--out", default="out", help="output directory (default ./out)")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                        help="worker processes for Monte Carlo runs")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config field (value parsed as JSON)")
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sub.add_parser(name, parents=[common])
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("GHZFORGE_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else 0
    try:
        cfg = load_config(args.experiment, args.config, args.set)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"cannot read config: {e}", file=sys.stderr)
        return EXIT_IO
    if args.workers < 1:
        print("config error: --workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    meta = metadata({"experiment": args.experiment, "config": cfg}, args.seed)
    try:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        lines = EXPERIMENTS[args.experiment](cfg, args, meta, out)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as e:
        print(f"I/O failure: {e}", file=sys.stderr)
        return EXIT_IO
    print(f"ghzforge {__version__} {args.experiment}  config {meta['config_hash']}  "
          f"seed {args.seed}")
    for line in lines:
        print("  " + line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
