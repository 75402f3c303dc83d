"""Command-line entry point: ``qdbell <command> ...``.

Commands
  simulate     write an event file from a run configuration
  bell         degrees of correlation, fidelity and two-setting Bell parameters
  chsh         four-setting CHSH sum
  splitting    fit a waveplate-rotation scan (from file or simulated)
  gate-sweep   fidelity against gate width
  reproduce    simulate, bell, chsh and splitting end to end with figures
"""

from __future__ import annotations

import argparse
import dataclasses
import secrets
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .config import ConfigError, RunConfig, load_preset, resolve_config
from .correlator import (EmptyChannelError, NormalizationError, analytic_bell, analytic_chsh,
                         analyze_bases, analyze_chsh, build_histogram, peak_gate)
from .events import EventFileError, generate_run, read_events, write_events
from .report import (bell_items, bell_rows, chsh_items, chsh_rows, format_report, format_table)
from .source import (GateWindows, IntegrationError, SourceConfig, onset_gate, peak_centred_gate,
                     time_averaged_state)
from .splitting import FitError, fit_splitting, read_scan, simulate_scan, write_scan

GATE_SWEEP_WIDTHS = (0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0)


class CliError(Exception):
    pass


def _write_text(path, text):
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror}") from None


def _emit(text, out=None):
    sys.stdout.write(text)
    if out:
        _write_text(out, text)


# ----- simulate -----

def cmd_simulate(args) -> int:
    cfg = resolve_config(args.config)
    seed = args.seed
    if args.random_seed:
        seed = secrets.randbits(63)
    out = args.out or cfg.events_out
    if not out:
        raise CliError("no output path: pass --out or set events_out in the config")
    manifest = cfg.manifest(seed)
    if args.pulses:
        manifest = dataclasses.replace(manifest, n_pulses=args.pulses)
    t0 = time.perf_counter()
    events, diag = generate_run(manifest, max_workers=args.workers)
    try:
        digest = write_events(out, events, manifest, truth=args.truth)
    except OSError as exc:
        raise CliError(f"cannot write {out}: {exc.strerror}") from None
    items = {"digest": digest, "events_out": out, "seed": manifest.seed,
             "n_pulses": manifest.n_pulses, "settings": len(manifest.settings),
             "events": len(events), "overflow_resamples": diag.overflow_resamples}
    for origin, n in diag.by_origin.items():
        items[f"events_{origin}"] = n
    items["elapsed_s"] = round(time.perf_counter() - t0, 2) if args.timing else None
    sys.stdout.write(format_report({k: v for k, v in items.items() if v is not None}))
    return 0


# ----- analysis helpers -----

def _load_events(path):
    try:
        events, manifest, _ = read_events(path)
    except FileNotFoundError:
        raise CliError(f"event file not found: {path}") from None
    if manifest is None:
        raise CliError(f"{path}: event file has no manifest line")
    return events, manifest


def _gate_for(args, events, manifest) -> GateWindows:
    xx, x = args.gate_xx_ns, args.gate_x_ns
    if args.gate_placement == "peak":
        gate = peak_gate(events, manifest.config.rep_period_ns, xx, x)
    else:
        gate = onset_gate(manifest.config, xx, x)
    try:
        gate.check(manifest.config.rep_period_ns)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    return gate


def _analyses(args, events, manifest):
    """(label, gate) pairs requested by --gate."""
    out = []
    if args.gate in ("off", "both"):
        out.append(("ungated", None))
    if args.gate in ("on", "both"):
        out.append(("gated", _gate_for(args, events, manifest)))
    return out


def _gate_items(gate: GateWindows | None, prefix: str) -> dict:
    if gate is None:
        return {}
    return {f"{prefix}gate_xx_start_ns": gate.xx_window[0], f"{prefix}gate_xx_stop_ns": gate.xx_window[1],
            f"{prefix}gate_x_start_ns": gate.x_window[0], f"{prefix}gate_x_stop_ns": gate.x_window[1]}


def cmd_bell(args) -> int:
    events, manifest = _load_events(args.events)
    results = {}
    items = {"events": args.events}
    rows = []
    for label, gate in _analyses(args, events, manifest):
        res = analyze_bases(events, manifest, gate)
        results[label] = res
        items.update(_gate_items(gate, f"{label}."))
        items.update(bell_items(res, f"{label}."))
        rows += bell_rows(res, label)
    text = format_table(rows) if args.report == "csv" else format_report(items)
    _emit(text, args.out)
    if args.figures:
        from .plotting import plot_bell, plot_histograms
        fig_dir = Path(args.figures)
        plot_bell(results, fig_dir / "bell.png")
        by_label = manifest.by_label()
        for label, gate in _analyses(args, events, manifest):
            hists = {b: build_histogram(events, by_label[b].id, gate, n_pulses=manifest.n_pulses)
                     for b in ("rectilinear", "diagonal", "circular")}
            plot_histograms(hists, fig_dir / f"g2_{label}.png")
    return 0


def cmd_chsh(args) -> int:
    events, manifest = _load_events(args.events)
    items = {"events": args.events}
    rows = []
    last = None
    for label, gate in _analyses(args, events, manifest):
        res = analyze_chsh(events, manifest, gate)
        items.update(_gate_items(gate, f"{label}."))
        items.update(chsh_items(res, f"{label}."))
        rows += chsh_rows(res, label)
        last = res
    text = format_table(rows) if args.report == "csv" else format_report(items)
    _emit(text, args.out)
    if args.figures and last is not None:
        from .plotting import plot_chsh
        plot_chsh(last, Path(args.figures) / "chsh.png")
    return 0


def cmd_splitting(args) -> int:
    if args.scan:
        try:
            scan = read_scan(args.scan)
        except FileNotFoundError:
            raise CliError(f"scan file not found: {args.scan}") from None
    else:
        angles = np.linspace(0.0, 90.0, args.points, endpoint=False)
        scan = simulate_scan(args.simulate_S, args.phase_deg, args.noise_ueV, angles,
                             rng=args.seed)
        if args.scan_out:
            write_scan(args.scan_out, scan)
    fit = fit_splitting(scan)
    items = {"points": len(scan), "S_ueV": fit.S_ueV, "sigma_S_ueV": fit.sigma_S,
             "phase_deg": fit.phase_deg, "offset_ueV": fit.offset_ueV, "chi2": fit.chi2,
             "threshold_ueV": 0.5, "below_threshold": fit.verdict}
    if args.report == "csv":
        text = format_table([{"quantity": k, "value": v} for k, v in items.items()])
    else:
        text = format_report(items)
    _emit(text, args.out)
    if args.figures:
        from .plotting import plot_splitting
        plot_splitting(scan, fit, Path(args.figures) / "splitting.png")
    return 0


def gate_sweep_table(source: SourceConfig, widths=GATE_SWEEP_WIDTHS, x_ratio=1.5,
                     placement="onset", events=None, manifest=None) -> pd.DataFrame:
    rows = []
    for w in widths:
        make = onset_gate if placement == "onset" else peak_centred_gate
        gate = make(source, w, w * x_ratio)
        try:
            gate.check(source.rep_period_ns)
        except ValueError:
            continue
        row = {"gate_xx_ns": w, "gate_x_ns": w * x_ratio,
               "fidelity_model": analytic_bell(time_averaged_state(source, gate)).fidelity.value}
        if events is not None:
            res = analyze_bases(events, manifest, gate)
            row["fidelity"] = res.fidelity.value
            row["fidelity_err"] = res.fidelity.error
            row["S_RC"] = res.S_RC.value
            row["S_RC_err"] = res.S_RC.error
        rows.append(row)
    return pd.DataFrame(rows)


def cmd_gate_sweep(args) -> int:
    if bool(args.events) == bool(args.config):
        raise CliError("gate-sweep needs exactly one of --events or --config")
    events = manifest = None
    if args.events:
        events, manifest = _load_events(args.events)
        source = manifest.config
    else:
        source = resolve_config(args.config).source
    widths = [float(w) for w in args.widths.split(",")] if args.widths else GATE_SWEEP_WIDTHS
    table = gate_sweep_table(source, widths, args.x_ratio, args.gate_placement, events, manifest)
    if table.empty:
        raise CliError("no gate width fits inside the repetition period")
    _emit(format_table(table.to_dict("records")), args.out)
    if args.figures:
        from .plotting import plot_gate_sweep
        plot_gate_sweep(table, Path(args.figures) / "gate_sweep.png")
    return 0


def cmd_reproduce(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg: RunConfig = load_preset("noise-calibrated")
    manifest = cfg.manifest(args.seed)
    if args.pulses:
        manifest = dataclasses.replace(manifest, n_pulses=args.pulses)
    events, _ = generate_run(manifest, max_workers=args.workers)
    ev_path = out / "events.csv"
    digest = write_events(ev_path, events, manifest)

    gate = onset_gate(manifest.config, cfg.gate_xx_ns, cfg.gate_x_ns)
    ungated = analyze_bases(events, manifest)
    gated = analyze_bases(events, manifest, gate)
    chsh_res = analyze_chsh(events, manifest, gate)
    rho_gated = time_averaged_state(manifest.config, gate)
    scan = simulate_scan(0.32, 0.0, 0.03, np.linspace(0, 90, 20, endpoint=False), rng=manifest.seed)
    fit = fit_splitting(scan)

    items = {"digest": digest, "n_pulses": manifest.n_pulses}
    items.update(_gate_items(gate, "gated."))
    items.update(bell_items(ungated, "ungated."))
    items.update(bell_items(gated, "gated."))
    items.update(chsh_items(chsh_res, "gated."))
    items["model.gated.fidelity"] = analytic_bell(rho_gated).fidelity.value
    items["model.gated.S_CHSH"] = analytic_chsh(rho_gated).S.value
    items.update({"splitting.S_ueV": fit.S_ueV, "splitting.sigma_S_ueV": fit.sigma_S,
                  "splitting.below_threshold": fit.verdict})
    report = format_report(items)
    _write_text(out / "report.txt", report)
    rows = bell_rows(ungated, "ungated") + bell_rows(gated, "gated")
    _write_text(out / "bell.csv", format_table(rows))
    _write_text(out / "chsh.csv", format_table(chsh_rows(chsh_res, "gated")))
    sweep = gate_sweep_table(manifest.config, events=events, manifest=manifest)
    _write_text(out / "gate_sweep.csv", format_table(sweep.to_dict("records")))
    write_scan(out / "splitting_scan.csv", scan)

    from .plotting import plot_bell, plot_chsh, plot_gate_sweep, plot_histograms, plot_splitting
    plot_bell({"ungated": ungated, "gated": gated}, out / "bell.png")
    plot_chsh(chsh_res, out / "chsh.png")
    plot_splitting(scan, fit, out / "splitting.png")
    plot_gate_sweep(sweep, out / "gate_sweep.png")
    by_label = manifest.by_label()
    for label, g in (("ungated", None), ("gated", gate)):
        hists = {b: build_histogram(events, by_label[b].id, g, n_pulses=manifest.n_pulses)
                 for b in ("rectilinear", "diagonal", "circular")}
        plot_histograms(hists, out / f"g2_{label}.png")
    sys.stdout.write(report)
    return 0


# ----- argument parsing -----

def _add_gate_flags(p, default):
    p.add_argument("--gate", choices=("on", "off", "both"), default=default)
    p.add_argument("--gate-xx-ns", type=float, default=1.0, help="XX window width")
    p.add_argument("--gate-x-ns", type=float, default=1.5, help="X window width")
    p.add_argument("--gate-placement", choices=("onset", "peak"), default="onset",
                   help="onset: open one background lifetime after the pulse; "
                        "peak: centre on the arrival-time maxima in the data")


def _add_output_flags(p):
    p.add_argument("--report", choices=("text", "csv"), default="text")
    p.add_argument("--out", help="also write the report here")
    p.add_argument("--figures", metavar="DIR", help="render figures into DIR")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qdbell", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write an event file")
    p.add_argument("--config", required=True, help="config path or preset name")
    p.add_argument("--out", help="event file path (default: events_out from the config)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--random-seed", action="store_true", help="draw a fresh seed")
    p.add_argument("--pulses", type=int, help="override n_pulses")
    p.add_argument("--truth", action="store_true", help="add the origin column")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--timing", action="store_true", help="report elapsed time")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bell", help="two-setting Bell parameters and fidelity")
    p.add_argument("events")
    _add_gate_flags(p, "both")
    _add_output_flags(p)
    p.set_defaults(func=cmd_bell)

    p = sub.add_parser("chsh", help="four-setting CHSH sum")
    p.add_argument("events")
    _add_gate_flags(p, "on")
    _add_output_flags(p)
    p.set_defaults(func=cmd_chsh)

    p = sub.add_parser("splitting", help="fit a waveplate scan")
    p.add_argument("--scan", help="comma-separated angle_deg,delta_E_ueV[,sigma_ueV]")
    p.add_argument("--simulate-S", type=float, default=0.32, help="splitting to simulate (ueV)")
    p.add_argument("--phase-deg", type=float, default=0.0)
    p.add_argument("--noise-ueV", type=float, default=0.03)
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--scan-out", help="save the simulated scan")
    _add_output_flags(p)
    p.set_defaults(func=cmd_splitting)

    p = sub.add_parser("gate-sweep", help="fidelity against gate width")
    p.add_argument("--events")
    p.add_argument("--config")
    p.add_argument("--widths", help="comma-separated XX widths in ns")
    p.add_argument("--x-ratio", type=float, default=1.5, help="X width over XX width")
    p.add_argument("--gate-placement", choices=("onset", "peak"), default="onset")
    p.add_argument("--out")
    p.add_argument("--figures", metavar="DIR")
    p.set_defaults(func=cmd_gate_sweep)

    p = sub.add_parser("reproduce", aliases=["reproduce-paper"],
                       help="calibrated run end to end with figures")
    p.add_argument("--out", default="reproduce-out")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--pulses", type=int)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", None) is not None and args.seed < 0:
        print("error: --seed must be >= 0", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (CliError, ConfigError, EventFileError, EmptyChannelError, NormalizationError,
            FitError, IntegrationError, KeyError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
