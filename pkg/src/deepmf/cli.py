"""Command-line entry point.

Subcommands: synth, train, infer, eval, kernels. Every run writes a
manifest.json next to its outputs capturing the command, the fully
resolved config and a hash of it, so any run can be replayed with
``--config manifest.json``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import model as mdl
from .config import ConfigError, load_config, thresholds_from, write_manifest
from .data import (
    LoadError,
    Recording,
    SynthConfig,
    load_recording,
    reference_peaks,
    save_recording,
    synthesize,
)
from .dsp import PeakConstraints, decimate, find_peaks
from .estimators import DeepMFDetector
from .baselines import PEAK_MAX_WIDTH, PEAK_MIN_DISTANCE
from .evaluation import DETECTORS, run_loso, summarize

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class NumericalError(RuntimeError):
    """Training or inference produced non-finite values."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the contract here is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit2(message)


class SystemExit2(Exception):
    def __init__(self, message):
        super().__init__(message)


def _parse_set(pairs: list[str]) -> dict:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        out[key.strip()] = value.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="deepmf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None,
                       help="JSON config or a manifest.json from a prior run")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a single config key")

    p = sub.add_parser("synth", help="generate a synthetic cohort of CSV recordings")
    common(p)
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("train", help="train a detector with LOSO-style held-out subject")
    common(p)
    p.add_argument("--data", type=Path, required=True, help="directory of recording CSVs")
    p.add_argument("--holdout", default=None,
                   help="subject id to exclude from training (used as test set)")
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("infer", help="score a recording with a trained model")
    common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--input", type=Path, required=True, help="recording CSV")
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("eval", help="leave-one-subject-out evaluation")
    common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--mode", default="all", choices=("all",) + DETECTORS)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("kernels", help="export first-layer kernels to CSV")
    common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--stage", default="trained", help="label written into the stage column")
    p.add_argument("--out", type=Path, required=True)
    return parser


def _load_one(path: Path) -> Recording:
    """Load a recording CSV, decimating to the 250 Hz working rate."""
    rec = load_recording(path)
    if rec.fs != 250:
        factor = rec.fs / 250.0
        if abs(factor - round(factor)) > 1e-9:
            raise LoadError(
                f"{path}: fs {rec.fs} Hz is not an integer multiple of 250 Hz"
            )
        factor = int(round(factor))
        rec = Recording(
            subject_id=rec.subject_id,
            ear=decimate(rec.ear, factor),
            reference=decimate(rec.reference, factor),
        )
    return rec


def _load_dir(data_dir: Path) -> list[Recording]:
    paths = sorted(data_dir.glob("*.csv"))
    if not paths:
        raise LoadError(f"no recording CSVs found in {data_dir}")
    return [_load_one(p) for p in paths]


def _train_kwargs(cfg: dict) -> dict:
    return {
        "enc_dec_epochs": cfg["enc_dec_epochs"],
        "classifier_epochs": cfg["classifier_epochs"],
        "batch_size": cfg["batch_size"],
        "lr": cfg["lr"],
        "seed": cfg["seed"],
        "template_init": cfg["template_init"],
        "dropout_p": cfg["dropout_p"],
        "threshold": cfg["deepmf_threshold"],
    }


def cmd_synth(args, cfg: dict) -> int:
    synth = SynthConfig(
        n_subjects=cfg["n_subjects"],
        duration_s=cfg["duration_s"],
        fs=cfg["fs"],
        mean_hr_bpm=cfg["mean_hr_bpm"],
        hr_variability=cfg["hr_variability"],
        ear_attenuation=cfg["ear_attenuation"],
        pink_sigma=cfg["pink_sigma"],
        drift_amp=cfg["drift_amp"],
        mains_amp=cfg["mains_amp"],
        impulse_rate=cfg["impulse_rate"],
        seed=cfg["seed"],
    )
    args.out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for rec in synthesize(synth):
        path = save_recording(rec, args.out)
        outputs.append(path.name)
        outputs.append(path.with_suffix(".json").name)
    write_manifest(args.out / "manifest.json", "synth", cfg, outputs)
    print(f"wrote {len(outputs) // 2} recordings to {args.out}")
    return EXIT_OK


def cmd_train(args, cfg: dict) -> int:
    recordings = _load_dir(args.data)
    subjects = [r.subject_id for r in recordings]
    if args.holdout is not None:
        if args.holdout not in subjects:
            raise LoadError(f"holdout subject {args.holdout!r} not in {subjects}")
        train = [r for r in recordings if r.subject_id != args.holdout]
        test = [r for r in recordings if r.subject_id == args.holdout]
    else:
        train, test = recordings, None
    est = DeepMFDetector(**_train_kwargs(cfg))
    est.fit(train, test_recordings=test)
    for log in est.train_log_:
        if not np.isfinite(log.mean_loss):
            raise NumericalError(
                f"non-finite loss in {log.phase} epoch {log.epoch}"
            )
    args.out.mkdir(parents=True, exist_ok=True)
    model_path = args.out / "model.dmf"
    mdl.save_model(model_path, est.params_)
    log_path = args.out / "train_log.json"
    with open(log_path, "w") as f:
        json.dump(
            [
                {"phase": l.phase, "epoch": l.epoch, "mean_loss": l.mean_loss,
                 "test_loss": l.test_loss}
                for l in est.train_log_
            ],
            f, indent=2,
        )
        f.write("\n")
    write_manifest(args.out / "manifest.json", "train", cfg,
                   [model_path.name, log_path.name])
    print(f"trained on {len(train)} recordings; model at {model_path}")
    return EXIT_OK


def cmd_infer(args, cfg: dict) -> int:
    params = mdl.load_model(args.model)
    rec = _load_one(args.input)
    scores = mdl.infer_stream(rec.ear, params)
    if not np.all(np.isfinite(scores.samples)):
        raise NumericalError("inference produced non-finite scores")
    peaks = find_peaks(
        scores,
        PeakConstraints(min_height=cfg["deepmf_threshold"],
                        min_distance=PEAK_MIN_DISTANCE,
                        max_width=PEAK_MAX_WIDTH),
    )
    args.out.mkdir(parents=True, exist_ok=True)
    scores_path = args.out / f"{rec.subject_id}_scores.csv"
    with open(scores_path, "w") as f:
        f.write("t,score\n")
        t = np.arange(len(scores)) / scores.fs
        for ti, s in zip(t, scores.samples):
            f.write(f"{ti:.17g},{s:.17g}\n")
    peaks_path = args.out / f"{rec.subject_id}_peaks.csv"
    with open(peaks_path, "w") as f:
        f.write("sample,t,height\n")
        for idx, h in zip(peaks.indices, peaks.heights):
            f.write(f"{idx},{idx / scores.fs:.17g},{h:.17g}\n")
    write_manifest(args.out / "manifest.json", "infer", cfg,
                   [scores_path.name, peaks_path.name])
    print(f"detected {len(peaks)} peaks; outputs in {args.out}")
    return EXIT_OK


def cmd_eval(args, cfg: dict) -> int:
    recordings = _load_dir(args.data)
    detectors = DETECTORS if args.mode == "all" else (args.mode,)
    thresholds = thresholds_from(cfg)
    mfht_params = {
        "corr_weight": cfg["mfht_corr_weight"],
        "rr_weight": cfg["mfht_rr_weight"],
        "accept_threshold": cfg["mfht_accept_threshold"],
        "smoothing_width": cfg["mfht_smoothing_width"],
        "rr_window": cfg["mfht_rr_window"],
    }
    train_cfg = _train_kwargs(cfg)
    train_cfg.pop("threshold")
    args.out.mkdir(parents=True, exist_ok=True)
    report = {}
    failed = {}
    for det in detectors:
        result = run_loso(
            recordings,
            det,
            train_config=train_cfg if det == "deep-mf" else None,
            thresholds=thresholds,
            deepmf_threshold=cfg["deepmf_threshold"],
            mf_threshold=cfg["mf_threshold"],
            mfht_params=mfht_params,
            tol_ms=cfg["tol_ms"],
            log=lambda msg: print(msg, file=sys.stderr),
            collect_errors=True,
        )
        entry = {
            "summary": summarize(result.metrics) if result.metrics else None,
            "subjects": [
                {"subject_id": m.subject_id, "recall": m.recall,
                 "precision": m.precision, "tp": m.tp, "fp": m.fp, "fn": m.fn}
                for m in result.metrics
            ],
            "errors": result.errors,
        }
        if result.pooled is not None:
            entry["pooled_auc"] = result.pooled.auc
            entry["pooled_curve"] = result.pooled.points
        report[det] = entry
        failed.update({f"{det}/{sid}": msg for sid, msg in result.errors.items()})
    report_path = args.out / "report.json"
    with open(report_path, "w") as f:
        json.dump(report, f, indent=2)
        f.write("\n")
    write_manifest(args.out / "manifest.json", "eval", cfg, [report_path.name])
    for det in detectors:
        summary = report[det]["summary"]
        if summary:
            r, p = summary["recall"], summary["precision"]
            print(f"{det}: recall median {r['median']:.3f} "
                  f"(IQR {r['q1']:.3f}-{r['q3']:.3f}), "
                  f"precision median {p['median']:.3f} "
                  f"(IQR {p['q1']:.3f}-{p['q3']:.3f})")
    if failed:
        for key, msg in sorted(failed.items()):
            print(f"error: {key}: {msg}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_kernels(args, cfg: dict) -> int:
    params = mdl.load_model(args.model)
    args.out.mkdir(parents=True, exist_ok=True)
    csv_path = args.out / "kernels.csv"
    mdl.export_kernels(params, args.stage, csv_path)
    write_manifest(args.out / "manifest.json", "kernels", cfg, [csv_path.name])
    print(f"kernel export at {csv_path}")
    return EXIT_OK


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "kernels": cmd_kernels,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config, _parse_set(args.set))
    except SystemExit2 as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args, cfg)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (LoadError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
