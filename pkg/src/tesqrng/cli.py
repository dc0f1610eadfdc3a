"""Command-line front end.

Subcommands mirror the pipeline stages (simulate, extract, calibrate,
count, genbits, certify), plus `theory` for closed-form tables, `figures`
for plot-ready CSVs, and `pipeline` to run everything. Stage subcommands
re-run from persisted inputs, so externally recorded waveform/feature files
in the documented formats can replace simulation. The output directory
defaults to $TESQRNG_OUT or ./run.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import calibrate as cal_mod
from . import counting, detector, figures, io, nist, qrng, theory
from .config import RunConfig
from .pipeline import (
    CHANNELS,
    StageError,
    calibrate_stage,
    certify_stage,
    count_stage,
    extract_stage,
    genbits_stage,
    run_pipeline,
    simulate_stage,
)

__all__ = ["main"]


def _outdir(args) -> Path:
    out = Path(args.out or os.environ.get("TESQRNG_OUT", "run"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config(args) -> RunConfig:
    if args.config:
        cfg = RunConfig.load(args.config)
    else:
        cfg = RunConfig.default()
    d = cfg.to_dict()
    for name in ("seed", "events"):
        v = getattr(args, name, None)
        if v is not None:
            d[name] = v
    if getattr(args, "nbar", None) is not None:
        d["source"]["nbar"] = args.nbar
    if getattr(args, "mode", None) is not None:
        d["source"]["mode"] = args.mode
    if getattr(args, "d", None) is not None:
        d["qrng"]["d"] = args.d
    if getattr(args, "window_frac", None) is not None:
        d["calibrate"]["window_frac"] = args.window_frac
    if getattr(args, "calibration_mode", None) is not None:
        d["calibrate"]["mode"] = args.calibration_mode
    if getattr(args, "trial_size", None) is not None:
        d["nist"]["trial_size"] = args.trial_size
    if getattr(args, "alpha", None) is not None:
        d["nist"]["alpha"] = args.alpha
    if getattr(args, "save_waveforms", None) is not None:
        d["save_waveforms"] = args.save_waveforms
    return RunConfig.from_dict(d)


def _read_features(path: Path) -> dict:
    feats = io.read_features_csv(path)
    for ch in feats:
        feats[ch]["found"] = feats[ch]["duration"] > 0
    return feats


def cmd_theory(args) -> int:
    records = []
    for nbar in args.nbar:
        spec = theory.CoherentSpec(nbar)
        mod = theory.ModQSpec(q=args.q, n_max=None if args.unbounded else args.n_max)
        rep = theory.modq_probabilities(spec, mod)
        records.append(
            {
                "nbar": nbar,
                "q": args.q,
                "n_max": None if args.unbounded else args.n_max,
                "probabilities": rep.probabilities.tolist(),
                "max_bias": rep.max_bias,
                "parity": theory.coherent_parity(nbar),
            }
        )
    text = json.dumps(records, indent=2)
    if args.json:
        Path(args.json).write_text(text)
    else:
        print(text)
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    cfg.save(out / "config.json")
    simulate_stage(cfg, out)
    print(f"simulated {cfg.events} events into {out}")
    return 0


def cmd_extract(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    if args.events_file:
        path = Path(args.events_file)
        _, counts = (
            io.read_events_bin(path) if path.suffix == ".bin" else io.read_events_csv(path)
        )
    elif args.waveform_files:
        rows = []
        for spec in args.waveform_files:
            ch, path = spec.split("=", 1)
            header, mat = io.read_waveforms(path)
            batch = detector.extract_batch(mat, cfg.daq.thr_high, cfg.daq.thr_low)
            for i in range(len(mat)):
                rows.append(
                    (i, ch, batch.area[i], batch.height[i], batch.duration[i],
                     batch.t_start[i], batch.t_peak[i])
                )
        io.write_features_csv(out / "features.csv", rows)
        print(f"extracted features from waveform files into {out}")
        return 0
    else:
        ev = out / ("events.bin" if cfg.binary_events else "events.csv")
        if not ev.exists():
            raise StageError("extract", f"no events file at {ev}; run simulate first")
        _, counts = io.read_events_bin(ev) if ev.suffix == ".bin" else io.read_events_csv(ev)
    extract_stage(cfg, counts, out)
    print(f"extracted features for {len(counts)} events into {out}")
    return 0


def cmd_calibrate(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    feats_path = Path(args.features or (out / "features.csv"))
    if cfg.calibrate.mode == "fit" and not feats_path.exists():
        raise StageError("calibrate", f"no features file at {feats_path}")
    feats = _read_features(feats_path) if feats_path.exists() else {}
    calibrate_stage(cfg, feats, out)
    print(f"wrote calibrations into {out}")
    return 0


def cmd_count(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    if cfg.source.mode == "counts":
        _, totals = io.read_totals(out / "raw_totals.bin")
        count_stage(cfg, totals, None, out)
    else:
        feats = _read_features(Path(args.features or (out / "features.csv")))
        cals = {ch: cal_mod.Calibration.load(out / f"calibration_{ch}.json") for ch in CHANNELS}
        count_stage(cfg, feats, cals, out)
    report = json.loads((out / "distribution.json").read_text())
    print(
        f"counted {report['n_events']} resolved events "
        f"(parity {report['parity']:+.5f} +/- {report['parity_se']:.5f})"
    )
    return 0


def cmd_genbits(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    _, totals = io.read_totals(out / "totals.bin")
    stream = genbits_stage(cfg, totals, out)
    print(f"wrote {stream.bit_length} bits (d={stream.d}) to {out / 'bits.qrnb'}")
    return 0


def cmd_certify(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    stream = qrng.BitStream.load(args.bits or (out / "bits.qrnb"))
    outcomes, result = certify_stage(cfg, stream, out)
    for oc in outcomes:
        print(
            f"{oc.test:28s} proportion {oc.proportion:.4f} "
            f"threshold {oc.pass_threshold:.4f} {'pass' if oc.passed else 'FAIL'}"
        )
    print(f"verdict: {'random' if result.random else 'not-random'}")
    return 0 if result.random else 2


def cmd_figures(args) -> int:
    out = _outdir(args)
    tables = figures.tables_from_run(out, args.dest)
    print(f"wrote {len(tables)} figure tables")
    return 0


def cmd_pipeline(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    cfg.save(out / "config.json")
    summary = run_pipeline(cfg, out)
    print(json.dumps({k: v for k, v in summary.items() if k != "config"}, indent=2))
    return 0


def _add_common(p, seed_events=True):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", help="output directory (default $TESQRNG_OUT or ./run)")
    if seed_events:
        p.add_argument("--seed", type=int)
        p.add_argument("--events", type=int)
        p.add_argument("--nbar", type=float)
        p.add_argument("--mode", choices=["waveform", "counts"])
        p.add_argument("--d", type=int, help="bits per event (mod 2^d)")
        p.add_argument("--window-frac", dest="window_frac", type=float)
        p.add_argument("--calibration-mode", dest="calibration_mode", choices=["fit", "model"])
        p.add_argument("--trial-size", dest="trial_size", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--save-waveforms", dest="save_waveforms", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="tesqrng",
        description="Simulated photon-number-resolving detection and QRNG workbench",
    )
    ap.add_argument("--dump-config", action="store_true", help="print the default config and exit")
    sub = ap.add_subparsers(dest="command")

    p = sub.add_parser("theory", help="closed-form residue probabilities and parity")
    p.add_argument("--nbar", type=float, nargs="+", required=True)
    p.add_argument("--q", type=int, default=8)
    p.add_argument("--n-max", dest="n_max", type=int, default=100)
    p.add_argument("--unbounded", action="store_true")
    p.add_argument("--json", help="write records to this file instead of stdout")
    p.set_defaults(fn=cmd_theory)

    for name, fn, helptext in (
        ("simulate", cmd_simulate, "sample per-event channel counts"),
        ("pipeline", cmd_pipeline, "run every stage end to end"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_common(p)
        p.set_defaults(fn=fn)

    p = sub.add_parser("extract", help="synthesize/ingest waveforms and extract pulse features")
    _add_common(p)
    p.add_argument("--events-file", help="simulated events file (.csv or .bin)")
    p.add_argument(
        "--waveform-files",
        nargs="+",
        metavar="CH=FILE",
        help="ingest digitizer waveform files instead of simulating",
    )
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("calibrate", help="fit photon-number calibrations")
    _add_common(p)
    p.add_argument("--features", help="feature CSV (default <out>/features.csv)")
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("count", help="assign photon numbers and build the distribution")
    _add_common(p)
    p.add_argument("--features", help="feature CSV (default <out>/features.csv)")
    p.set_defaults(fn=cmd_count)

    p = sub.add_parser("genbits", help="turn totals into packed random bits")
    _add_common(p)
    p.set_defaults(fn=cmd_genbits)

    p = sub.add_parser("certify", help="run the randomness test suite")
    _add_common(p)
    p.add_argument("--bits", help="bitstream file (default <out>/bits.qrnb)")
    p.set_defaults(fn=cmd_certify)

    p = sub.add_parser("figures", help="emit plot-ready CSV tables from a run directory")
    p.add_argument("--out", help="pipeline output directory")
    p.add_argument("--dest", help="where to write tables (default: the run directory)")
    p.set_defaults(fn=cmd_figures)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.dump_config:
        print(json.dumps(RunConfig.default().to_dict(), indent=2))
        return 0
    if not getattr(args, "command", None):
        ap.print_help()
        return 1
    try:
        return args.fn(args)
    except (StageError, ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
