"""Command line pipeline: ingest -> train -> calibrate -> detect -> classify
-> report, plus transfer, synth, plot and check.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import selfcheck
from .anomaly import (ThresholdPolicy, UncalibratedError, classify_anomaly, near_threshold, read_reports,
                      summarize, threshold_from_scores, write_reports)
from .autoencoder import (CheckpointError, InvalidConfig, NumericalAbort, TrainReport, init_model, load_checkpoint,
                          reconstruction_errors, save_checkpoint, train)
from .config import RunConfig
from .features import (FeatureSeries, ResampleError, apply_norm, fit_norm_stats, invert_norm, read_features,
                       split_train_test, stack, write_features)
from .geo import TrackFormatError, format_airport_config, parse_airport_config, parse_tracks, write_tracks
from .pipeline import build_reports, prepare, prepare_track
from .plot import reconstruction_svg
from .synthgen import INJECTION_TYPES, AirportProfile, InjectionSpec, gen_helicopters, gen_nominal, inject, \
    write_labels
from .transfer import compare_transfer

log = logging.getLogger("trackae")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ------------------------------------------------------------------ helpers

def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed {value} is not an unsigned 64-bit integer")
    return value


def _path(value: Optional[str], flag: str, kind: str = "file") -> Path:
    if value is None:
        raise UsageError(f"{flag} is required (on the command line or in --config)")
    p = Path(value)
    ok = p.is_dir() if kind == "dir" else p.is_file() if kind == "file" else p.exists()
    if not ok:
        raise DataError(f"{flag} {p}: no such {'path' if kind == 'any' else kind}")
    return p


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _write_with(path: Path, writer, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer(rows, fh)


def _track_files(path: Path) -> list[Path]:
    if path.is_dir():
        return sorted(p for p in path.iterdir() if p.is_file() and p.suffix == ".csv")
    return [path]


def _load_tracks(path: Path):
    """Parse every CSV under ``path`` in lexicographic order.  Returns
    ``(tracks, row_rejects, file_errors)``; unreadable files do not stop the run."""
    tracks, rejects, errors = [], [], []
    for f in _track_files(path):
        try:
            with open(f, newline="") as fh:
                result = parse_tracks(fh)
        except (OSError, UnicodeDecodeError, TrackFormatError) as exc:
            errors.append((f.name, str(exc)))
            log.warning("%s: %s", f, exc)
            continue
        tracks += result.tracks
        rejects += [(f.name, r) for r in result.rejects]
    return tracks, rejects, errors


def _airport(cfg: RunConfig):
    p = _path(cfg.airport, "--airport")
    try:
        return parse_airport_config(p.read_text())
    except ValueError as exc:
        raise DataError(f"{p}: {exc}") from None


def _features(path: Path) -> list[FeatureSeries]:
    try:
        with open(path, newline="") as fh:
            series = read_features(fh)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if not series:
        raise DataError(f"{path}: no feature series")
    return series


def _checkpoint(cfg: RunConfig):
    p = _path(cfg.checkpoint or str(Path(cfg.out) / "model.ckpt"), "--checkpoint")
    try:
        return load_checkpoint(p)
    except CheckpointError as exc:
        raise DataError(str(exc)) from None


def _safe_name(flight_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", flight_id)


# ------------------------------------------------------------------ commands

def cmd_ingest(cfg: RunConfig, args) -> int:
    src = _path(cfg.tracks, "--tracks", "any")
    airport = _airport(cfg)
    rules, length = cfg.filter_rules(), cfg.input_length()
    out = Path(cfg.out)
    kept, flags, rejects, file_errors, n_tracks = [], [], [], [], 0
    for f in _track_files(src):  # one batch per file
        tracks, row_rejects, errors = _load_tracks(f)
        file_errors += errors
        rejects += [(name, r.flight_id, r.line or "", r.reason) for name, r in row_rejects]
        n_tracks += len(tracks)
        for p in prepare(tracks, airport, rules, length):
            if p.error is not None:
                rejects.append((f.name, p.flight_id, "", p.error))
            elif not p.verdict.normal:
                flags.append((p.flight_id, ";".join(p.verdict.reasons)))
            else:
                kept.append(p.features)

    _write(out / "rejects.csv", "source,flight_id,line,reason\n" + "".join(
        f"{s},{fid},{line},{json.dumps(reason)}\n" for s, fid, line, reason in rejects
    ) + "".join(f"{name},,,{json.dumps('file error: ' + msg)}\n" for name, msg in file_errors))
    _write(out / "flags.csv", "flight_id,reasons\n" + "".join(f"{fid},{r}\n" for fid, r in flags))
    if n_tracks == 0:
        raise DataError("no tracks")
    if not kept:
        raise DataError(f"no usable tracks ({len(flags)} flagged, {len(rejects)} rejected)")
    _write_with(out / "features.csv", write_features, kept)
    print(f"ingested {n_tracks} tracks: {len(kept)} preliminary-normal, {len(flags)} flagged, "
          f"{len(rejects)} rejected, {len(file_errors)} unreadable files")
    return EXIT_OK


def _split(cfg: RunConfig, series):
    train_part, _ = split_train_test(series, cfg.split_spec())
    if not train_part:
        raise DataError("training split is empty")
    return train_part


def cmd_train(cfg: RunConfig, args) -> int:
    features = _features(_path(cfg.features or str(Path(cfg.out) / "features.csv"), "--features"))
    mcfg = cfg.model_config()
    ts = cfg.train_settings()
    train_part = _split(cfg, features)
    stats = fit_norm_stats(train_part)
    model = init_model(mcfg, stats)
    try:
        data = stack([apply_norm(fs, stats) for fs in train_part])
    except ValueError as exc:
        raise DataError(f"feature series do not stack: {exc}") from None
    report = train(model, data, ts.epochs, ts.batch_size, ts.lr, cfg.seed, log=log.info)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out / "model.ckpt")
    _write(out / "train_report.csv", report.to_csv())
    print(f"trained on {len(train_part)} series for {ts.epochs} epochs; final loss "
          f"{report.epoch_losses[-1]:.6f}; checkpoint {out / 'model.ckpt'}")
    return EXIT_OK


def cmd_calibrate(cfg: RunConfig, args) -> int:
    model, _ = _checkpoint(cfg)
    features = _features(_path(cfg.features or str(Path(cfg.out) / "features.csv"), "--features"))
    train_part = _split(cfg, features)
    maes = reconstruction_errors(model, stack([apply_norm(fs, model.norm_stats) for fs in train_part]))
    policy = cfg.threshold_policy()
    delta = threshold_from_scores(maes, policy)
    out = Path(cfg.out)
    save_checkpoint(model, out / "model.ckpt", threshold=delta)
    _write(out / "calibration.json", json.dumps(
        {"delta": delta, "method": policy.method, "q": policy.q, "n": len(maes)}, indent=2) + "\n")
    print(f"delta = {delta!r} ({policy.method}, n={len(maes)})")
    return EXIT_OK


def cmd_detect(cfg: RunConfig, args) -> int:
    model, delta = _checkpoint(cfg)
    if delta is None:
        raise UncalibratedError("threshold uncalibrated")
    src = _path(cfg.tracks, "--tracks", "any")
    airport = _airport(cfg)
    tracks, _, _ = _load_tracks(src)
    if not tracks:
        raise DataError("no tracks")
    prepared = prepare(tracks, airport, cfg.filter_rules(), model.config.input_length)
    reports = build_reports(model, delta, prepared)
    out = Path(cfg.out)
    _write_with(out / "reports.csv", write_reports, reports)
    skipped = [p for p in prepared if p.features is None]
    _write(out / "detect_skipped.csv", "flight_id,reason\n" + "".join(
        f"{p.flight_id},{json.dumps(p.error)}\n" for p in skipped))
    n_alarm = sum(r.is_anomaly for r in reports)
    print(f"scored {len(reports)} tracks, {n_alarm} above delta = {delta:.6f}; {len(skipped)} not scorable")
    return EXIT_OK


def _reports_path(cfg: RunConfig, args, default: str) -> Path:
    return _path(args.reports or str(Path(cfg.out) / default), "--reports")


def cmd_classify(cfg: RunConfig, args) -> int:
    rpath = _reports_path(cfg, args, "reports.csv")
    with open(rpath, newline="") as fh:
        reports = read_reports(fh)
    airport = _airport(cfg)
    tracks, _, _ = _load_tracks(_path(cfg.tracks, "--tracks", "any"))
    by_id = {t.flight_id: t for t in tracks}
    ccfg = cfg.classifier_config()
    for r in reports:
        if not r.is_anomaly:
            continue
        track = by_id.get(r.flight_id)
        if track is None:
            raise DataError(f"{rpath}: flight {r.flight_id} not found in the track files")
        p = prepare_track(track, airport, cfg.filter_rules())
        r.taxonomy = classify_anomaly(track, p.segment if p.segment is not None else track, airport, ccfg)
    _write_with(Path(cfg.out) / "classified.csv", write_reports, reports)
    print(f"classified {sum(r.is_anomaly for r in reports)} anomalous tracks")
    return EXIT_OK


def cmd_report(cfg: RunConfig, args) -> int:
    default = "classified.csv" if (Path(cfg.out) / "classified.csv").is_file() else "reports.csv"
    rpath = _reports_path(cfg, args, default)
    with open(rpath, newline="") as fh:
        reports = read_reports(fh)
    stats = summarize(reports)
    out = Path(cfg.out)
    _write(out / "summary.json", stats.to_json())
    for view in ("overall", "category", "helicopter", "weight_class"):
        _write(out / f"breakdown_{view}.csv", stats.table(view))
    if args.near_threshold is not None:
        if args.near_threshold <= 0:
            raise UsageError("--near-threshold band must be positive")
        delta = args.delta
        if delta is None:
            _, delta = _checkpoint(cfg)
            if delta is None:
                raise UncalibratedError("threshold uncalibrated")
        near = near_threshold(reports, delta, args.near_threshold)
        _write(out / "near_threshold.csv", "flight_id,mae,delta,distance\n" + "".join(
            f"{r.flight_id},{r.mae!r},{delta!r},{abs(r.mae - delta)!r}\n" for r in near))
        for r in near:
            print(f"{r.flight_id}\t{r.mae:.6f}\t{'+' if r.mae > delta else '-'}{abs(r.mae - delta):.6f}")
    print(f"{stats.anomalies}/{stats.total} anomalous ({stats.pct_anomalous:.2f}%)")
    return EXIT_OK


def cmd_transfer(cfg: RunConfig, args) -> int:
    src = _path(cfg.checkpoint, "--checkpoint")
    target = _features(_path(cfg.features, "--features"))
    if args.loss_target is None and args.source_report is None:
        raise UsageError("transfer needs --loss-target or --source-report")
    loss_target = args.loss_target
    if loss_target is None:
        try:
            losses = TrainReport.from_csv(_path(args.source_report, "--source-report").read_text()).epoch_losses
        except ValueError as exc:
            raise DataError(f"{args.source_report}: {exc}") from None
        if not losses:
            raise DataError(f"{args.source_report}: no epochs recorded")
        loss_target = args.target_factor * losses[-1]
    freeze = args.freeze.split(",") if args.freeze else None
    ts = cfg.train_settings()
    try:
        rep = compare_transfer(src, target, loss_target, ts.epochs, cfg.seed, ts.batch_size, ts.lr, freeze)
    except CheckpointError as exc:
        raise DataError(str(exc)) from None
    out = Path(cfg.out)
    _write(out / "transfer.csv", rep.to_csv())
    save_checkpoint(rep.fine_tuned, out / "finetuned.ckpt")
    _write(out / "transfer.json", json.dumps({
        "loss_target": rep.loss_target, "epochs_to_target": rep.epochs_to_target,
        "speedup_ratio": rep.speedup_ratio, "budget_epochs": ts.epochs}, indent=2, sort_keys=True) + "\n")
    print(f"loss target {loss_target:.6f}: fine-tune {rep.epochs_to_target['fine_tune']} epochs, "
          f"scratch {rep.epochs_to_target['from_scratch']} epochs, speedup {rep.speedup_ratio:.2f}")
    return EXIT_OK


def cmd_synth(cfg: RunConfig, args) -> int:
    overrides = dict(args.profile_json and json.loads(args.profile_json) or {})
    overrides.setdefault("airport_code", args.airport_code)
    try:
        profile = AirportProfile(**overrides)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad airport profile: {exc}") from None
    if args.n < 1 or args.helicopters < 0 or args.inject_per_type < 0:
        raise UsageError("counts must be non-negative (and -n at least 1)")
    airport = profile.airport()
    tracks = gen_nominal(profile, args.n, cfg.seed)
    labels = [(t.flight_id, "none") for t in tracks]
    if args.helicopters:
        helis = gen_helicopters(profile, args.helicopters, cfg.seed)
        tracks += helis
        labels += [(t.flight_id, "helicopter") for t in helis]
    if args.inject_per_type:
        k = args.inject_per_type
        bases = gen_nominal(profile, k * len(INJECTION_TYPES), cfg.seed, prefix="INJ")
        for i, base in enumerate(bases):
            kind = INJECTION_TYPES[i // k]
            tracks.append(inject(base, InjectionSpec(kind, seed=cfg.seed * 100003 + i), airport))
            labels.append((base.flight_id, kind))
    out = Path(cfg.out)
    _write_with(out / "tracks.csv", write_tracks, tracks)
    _write_with(out / "labels.csv", write_labels, labels)
    _write(out / "airport.cfg", format_airport_config(airport))
    print(f"wrote {len(tracks)} tracks to {out / 'tracks.csv'}")
    return EXIT_OK


def cmd_plot(cfg: RunConfig, args) -> int:
    model, delta = _checkpoint(cfg)
    airport = _airport(cfg)
    tracks, _, _ = _load_tracks(_path(cfg.tracks, "--tracks", "any"))
    track = next((t for t in tracks if t.flight_id == args.flight_id), None)
    if track is None:
        raise DataError(f"unknown flight_id {args.flight_id!r}")
    p = prepare_track(track, airport, cfg.filter_rules(), model.config.input_length)
    if p.features is None:
        raise DataError(f"{args.flight_id}: {p.error}")
    x = apply_norm(p.features, model.norm_stats).as_array()[None]
    recon = FeatureSeries.from_array(track.flight_id, model.reconstruct(x)[0])
    mae = float(reconstruction_errors(model, x)[0])
    svg = reconstruction_svg(p.features, invert_norm(recon, model.norm_stats), mae, delta)
    path = Path(cfg.out) / f"plot_{_safe_name(args.flight_id)}.svg"
    _write(path, svg)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_check(cfg: RunConfig, args) -> int:
    results = selfcheck.run_all(log=print)
    failed = [r for r in results if not r.passed]
    if failed:
        worst = max(failed, key=lambda r: r.max_error / r.tol)
        print(f"{len(failed)} of {len(results)} checks failed; worst: {worst.name} "
              f"max error {worst.max_error:.3e}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"all {len(results)} checks passed")
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest, "train": cmd_train, "calibrate": cmd_calibrate, "detect": cmd_detect,
    "classify": cmd_classify, "report": cmd_report, "transfer": cmd_transfer, "synth": cmd_synth,
    "plot": cmd_plot, "check": cmd_check,
}


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON run configuration")
    common.add_argument("--seed", type=_u64, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = _Parser(prog="trackae", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, help_, *flags):
        p = sub.add_parser(name, help=help_, parents=[common])
        for flag in flags:
            p.add_argument(flag, default=None)
        return p

    add("ingest", "clip, filter and resample raw tracks", "--tracks", "--airport")
    p = add("train", "train the autoencoder on ingested features", "--features")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p = add("calibrate", "set the detection threshold", "--checkpoint", "--features")
    p.add_argument("--policy", choices=("max_train_mae", "quantile"))
    p.add_argument("--q", type=float)
    add("detect", "score tracks against the threshold", "--checkpoint", "--tracks", "--airport")
    add("classify", "assign anomaly categories to alarms", "--reports", "--tracks", "--airport")
    p = add("report", "summary statistics and breakdown tables", "--reports", "--checkpoint")
    p.add_argument("--near-threshold", type=float, metavar="BAND")
    p.add_argument("--delta", type=float)
    p = add("transfer", "fine-tune a source model on target features vs. from scratch",
            "--checkpoint", "--features", "--source-report", "--freeze")
    p.add_argument("--loss-target", type=float)
    p.add_argument("--target-factor", type=float, default=1.5)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p = add("synth", "generate synthetic tracks with ground-truth labels")
    p.add_argument("-n", type=int, default=100)
    p.add_argument("--helicopters", type=int, default=0)
    p.add_argument("--inject-per-type", type=int, default=0)
    p.add_argument("--airport-code", default="SYN")
    p.add_argument("--profile-json", help="AirportProfile overrides as a JSON object")
    p = add("plot", "original vs. reconstruction SVG for one flight", "--checkpoint", "--tracks", "--airport")
    p.add_argument("--flight-id", required=True)
    add("check", "numerical self-tests of the autodiff engine")
    return parser


def _resolve(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None) is not None:
        cfg.out = args.out
    for key in ("tracks", "airport", "checkpoint", "features"):
        if getattr(args, key, None) is not None:
            setattr(cfg, key, getattr(args, key))
    train_over = {k: getattr(args, a) for k, a in (("epochs", "epochs"), ("batch_size", "batch_size"), ("lr", "lr"))
                  if getattr(args, a, None) is not None}
    cfg.train = {**cfg.train, **train_over}
    if getattr(args, "policy", None) is not None:
        cfg.threshold = {"method": args.policy, "q": args.q}
    elif getattr(args, "q", None) is not None:
        raise UsageError("--q needs --policy quantile")
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required: " + ", ".join(COMMANDS))
        logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                            format="%(levelname)s %(message)s")
        cfg = _resolve(args)
        return COMMANDS[args.command](cfg, args)
    except (UsageError, InvalidConfig, UncalibratedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ResampleError, TrackFormatError, CheckpointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
