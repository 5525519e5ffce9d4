"""Command-line entry point: ``musepers <subcommand> ...``.

Run directory layout (``output_dir`` of a config)::

    run.lock                                resolved config
    <dimension>/stage1/model.ckpt           pretrained checkpoint
    <dimension>/stage1/report.csv           epoch,train_loss,dev_ccc
    <dimension>/personalised/<subject>/<seed>.ckpt
    <dimension>/personalised/selection.csv  chosen seed per subject
    <dimension>/personalised/seeds.csv      dev CCC of every seed
    predictions/<stage>/<dimension>/<subject>.csv

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import default_output_root, parse_config
from .ecg import RawSignal, extract_phys_sequence
from .ensemble import Provenance, ensemble_corpus, evaluate_corpus, read_predictions, write_predictions
from .errors import DataError, EmptySegment, MuseError, PathError
from .nn import Checkpoint
from .seqdata import (
    Manifest,
    ManifestEntry,
    apply_norm,
    load_corpus,
    load_label_csv,
    load_series_csv,
    split_subject,
    write_feature_csv,
)
from .synth import SynthSpec, generate_synthetic_corpus, write_corpus
from .training import mean_ccc, personalise, predict_checkpoint, pretrain

log = logging.getLogger("musepers")

STAGES = ("pretrained", "personalised")
RAW_SIGNALS = ("ecg", "resp", "bpm", "ecg_2hz")


@contextlib.contextmanager
def _about(what):
    """Tag module errors raised inside the block with ``what``."""
    try:
        yield
    except MuseError as exc:
        if not getattr(exc, "context", None):
            exc.context = what
        raise


def _write_lock(out, text):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run.lock").write_text(text, encoding="utf-8")


def _args_lock(args):
    skip = {"func", "command", "verbose", "quiet"}
    lines = [f"command = {args.command}"]
    for key, value in sorted(vars(args).items()):
        if key in skip:
            continue
        if isinstance(value, (list, tuple)):
            value = ",".join(str(Path(v).resolve()) if isinstance(v, Path) else str(v) for v in value)
        elif isinstance(value, Path):
            value = value.resolve().as_posix()
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def _config(args):
    return parse_config(args.config, output_dir=args.out, jobs=args.jobs)


def _load(cfg, role=None):
    with _about(f"manifest {cfg.manifest}"):
        return load_corpus(cfg.manifest, cfg.combo, role=role)


def _stage1_path(cfg, dim):
    return Path(cfg.output_dir) / dim / "stage1" / "model.ckpt"


def _load_stage1(cfg, dim):
    path = _stage1_path(cfg, dim)
    if not path.is_file():
        raise PathError(f"{path} not found; run 'pretrain' first")
    with _about(str(path)):
        return Checkpoint.load(path)


# --- subcommands ------------------------------------------------------------

def cmd_synth(args):
    n = args.subjects
    if n < 3:
        raise DataError("synth needs at least 3 subjects (train, dev and test)")
    held = max(1, n // 4)
    dims = []
    for part in args.modalities.split(","):
        name, _, width = part.partition(":")
        dims.append((name.strip(), int(width)))
    spec = SynthSpec(
        n_train=n - 2 * held, n_dev=held, n_test=held,
        duration_s=args.duration, modality_dims=tuple(dims),
        noise=args.noise, offset=args.offset,
        with_ecg=not args.no_ecg, with_phys=args.phys,
    )
    corpus = generate_synthetic_corpus(spec, seed=args.seed)
    write_corpus(corpus, args.out)
    _write_lock(args.out, _args_lock(args))
    print(f"wrote {n} subjects ({spec.n_train} train / {held} dev / {held} test) to {args.out}")
    return 0


def cmd_extract_hrv(args):
    manifest = Manifest.load(args.manifest)
    out = Path(args.out)
    entries = []
    for e in manifest.entries:
        entries.append(replace(e, path=manifest.resolve(e).resolve()))
    done = 0
    for sid in manifest.subjects():
        found = {name: manifest.find(sid, "raw", name) for name in RAW_SIGNALS}
        if any(v is None for v in found.values()):
            log.warning("%s: missing raw signals, skipped", sid)
            continue
        with _about(f"subject {sid}"):
            sigs = {}
            for name, entry in found.items():
                t, v = load_series_csv(manifest.resolve(entry))
                if t.size < 2:
                    raise DataError(f"{manifest.resolve(entry)}: need at least two samples")
                rate = 1000.0 / float(np.mean(np.diff(t))) if name == "ecg" else 2.0
                if name == "ecg" and args.ecg_rate:
                    rate = args.ecg_rate
                sigs[name] = RawSignal(v, rate, float(t[0]))
            seq = extract_phys_sequence(sigs["ecg"], sigs["resp"], sigs["bpm"], sigs["ecg_2hz"],
                                        subject_id=sid, modality_name=args.name)
        path = out / "features" / args.name / f"{sid}.csv"
        write_feature_csv(seq, path)
        entries.append(ManifestEntry(sid, manifest.role_of(sid), "feature", args.name, path.resolve()))
        done += 1
        log.info("%s: %d rows", sid, seq.T)
    if done == 0:
        raise DataError("no subject in the manifest has all raw signals")
    Manifest(out, entries).save(out / "manifest.txt")
    _write_lock(out, _args_lock(args))
    print(f"extracted {args.name} features for {done} subjects into {out}")
    return 0


def cmd_pretrain(args):
    cfg = _config(args)
    _write_lock(cfg.output_dir, cfg.to_text())
    samples = _load(cfg)
    train = [s for s in samples if s.role == "train"]
    dev = [s for s in samples if s.role == "dev"]
    if not train:
        raise DataError("manifest has no train subjects")
    model_cfg = cfg.model_config(train[0].widths, train[0].modality_names)
    for dim in cfg.dimensions:
        ck, report = pretrain(train, dev, model_cfg, cfg.train_config(), dim)
        path = _stage1_path(cfg, dim)
        ck.save(path)
        (path.parent / "report.csv").write_text(report.to_csv(), encoding="utf-8")
        print(f"{dim}: best dev CCC {report.best_dev_ccc:.4f} at epoch {report.best_epoch} -> {path}")
    return 0


def cmd_personalise(args):
    cfg = _config(args)
    _write_lock(cfg.output_dir, cfg.to_text())
    subjects = _load(cfg, role=args.role)
    if not subjects:
        raise DataError(f"manifest has no {args.role} subjects")
    tcfg = cfg.train_config()
    for dim in cfg.dimensions:
        pre = _load_stage1(cfg, dim)
        root = Path(cfg.output_dir) / dim / "personalised"
        selection = [("subject", "seed", "dev_ccc", "pretrained_dev_ccc")]
        seeds = [("subject", "seed", "dev_ccc")]
        for s in subjects:
            with _about(f"subject {s.subject_id}"):
                res = personalise(pre, split_subject(s), None, tcfg, dim)
            res.checkpoint.save(root / s.subject_id / f"{res.seed}.ckpt")
            selection.append((s.subject_id, res.seed, repr(res.dev_ccc), repr(res.pretrained_dev_ccc)))
            seeds += [(s.subject_id, k, repr(v)) for k, v in sorted(res.seed_scores.items())]
            print(f"{dim} {s.subject_id}: seed {res.seed} dev CCC {res.dev_ccc:.4f} "
                  f"(pretrained {res.pretrained_dev_ccc:.4f})")
        _write_rows(root / "selection.csv", selection)
        _write_rows(root / "seeds.csv", seeds)
    return 0


def _write_rows(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def _read_rows(path):
    if not Path(path).is_file():
        raise PathError(f"{path} not found")
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _personalised_checkpoint(cfg, dim, sid):
    root = Path(cfg.output_dir) / dim / "personalised"
    for row in _read_rows(root / "selection.csv"):
        if row["subject"] == sid:
            path = root / sid / f"{row['seed']}.ckpt"
            if not path.is_file():
                raise PathError(f"{path} not found")
            with _about(str(path)):
                return Checkpoint.load(path), int(row["seed"]), path
    raise PathError(f"subject {sid} has no personalised checkpoint; run 'personalise' first")


def cmd_predict(args):
    cfg = _config(args)
    _write_lock(cfg.output_dir, cfg.to_text())
    segment = args.segment or ("personal_test" if args.stage == "personalised" else "full")
    subjects = _load(cfg, role=args.role)
    if not subjects:
        raise DataError(f"manifest has no {args.role} subjects")
    preds = []
    for dim in cfg.dimensions:
        stage1 = _load_stage1(cfg, dim) if args.stage == "pretrained" else None
        for s in subjects:
            with _about(f"subject {s.subject_id}"):
                if stage1 is not None:
                    ck, seed, ck_id = stage1, None, f"{dim}/stage1"
                else:
                    ck, seed, path = _personalised_checkpoint(cfg, dim, s.subject_id)
                    ck_id = f"{dim}/personalised/{s.subject_id}/{path.name}"
                target = s
                if segment == "personal_test":
                    target = split_subject(s).personal_test
                    if target is None:
                        raise EmptySegment(f"{s.subject_id}: sequence too short for a personal_test segment")
                prov = (Provenance(cfg.combo_name, seed, ck_id),)
                preds.append(predict_checkpoint(ck, target, dim, prov))
    out = Path(cfg.output_dir) / "predictions" / args.stage
    write_predictions(preds, out)
    print(f"wrote {len(preds)} prediction files to {out}")
    return 0


def cmd_evaluate(args):
    out = Path(args.out) if args.out else default_output_root() / "evaluation"
    manifest = Manifest.load(args.manifest)
    subjects = manifest.subjects(args.role)
    if not subjects:
        raise DataError(f"manifest has no {args.role} subjects")
    preds = read_predictions(args.predictions)
    dims = sorted({p.dimension for p in preds})
    if not dims:
        raise DataError(f"no predictions under {args.predictions}")
    samples = [_labels_only(manifest, sid, dims) for sid in subjects]
    preds = [p for p in preds if p.subject_id in set(subjects)]
    report = evaluate_corpus(preds, samples, dims)
    _write_lock(out, _args_lock(args))
    report.to_csv(out / "evaluation.csv")
    print(report.summary())
    return 0


class _Labels:
    def __init__(self, subject_id, labels):
        self.subject_id = subject_id
        self.labels = labels


def _labels_only(manifest, sid, dims):
    labels = {}
    for d in dims:
        entry = manifest.find(sid, "label", d)
        if entry is not None:
            with _about(f"subject {sid}"):
                labels[d] = load_label_csv(manifest.resolve(entry), d, subject_id=sid)
    return _Labels(sid, labels)


def cmd_ensemble(args):
    if len(args.members) < 1:
        raise DataError("ensemble needs at least one member directory")
    sets = []
    for m in args.members:
        if not Path(m).is_dir():
            raise PathError(f"{m} is not a directory")
        sets.append(read_predictions(m, combo=Path(m).resolve().as_posix()))
    merged = ensemble_corpus(sets)
    _write_lock(args.out, _args_lock(args))
    write_predictions(merged, args.out)
    print(f"averaged {len(sets)} members into {len(merged)} prediction files in {args.out}")
    return 0


def cmd_ablate(args):
    cfg = _config(args)
    _write_lock(cfg.output_dir, cfg.to_text())
    samples = _load(cfg)
    train = [s for s in samples if s.role == "train"]
    dev = [s for s in samples if s.role == "dev"]
    test = [s for s in samples if s.role == "test"]
    if not train:
        raise DataError("manifest has no train subjects")
    for dim in cfg.dimensions:
        rows = [("layers", "model_dim", "rnn_bi", "dev_ccc", "test_ccc")]
        for layers in (1, 2):
            for width in (128, 256):
                for bi in (True, False):
                    run = replace(cfg, rnn_layers=layers, model_dim=width, rnn_bi=bi)
                    mcfg = run.model_config(train[0].widths, train[0].modality_names)
                    ck, report = pretrain(train, dev, mcfg, run.train_config(), dim)
                    test_ccc = mean_ccc(ck.model, [apply_norm(s, ck.stats) for s in test], dim) if test else float("nan")
                    rows.append((layers, width, "Y" if bi else "N", repr(report.best_dev_ccc), repr(test_ccc)))
                    log.info("ablate %s layers=%d dim=%d bi=%s dev=%.4f test=%.4f",
                             dim, layers, width, bi, report.best_dev_ccc, test_ccc)
        path = Path(cfg.output_dir) / f"ablation_{dim}.csv"
        _write_rows(path, rows)
        print(f"{dim}: wrote {path}")
    return 0


def cmd_report(args):
    run = Path(args.run)
    if not run.is_dir():
        raise PathError(f"{run} is not a directory")
    lines = [f"run {run}"]
    lock = run / "run.lock"
    if lock.is_file():
        lines.append("config:")
        lines += ["  " + ln for ln in lock.read_text(encoding="utf-8").splitlines()]
    for stage1 in sorted(run.glob("*/stage1/report.csv")):
        dim = stage1.parent.parent.name
        rows = _read_rows(stage1)
        if rows:
            best = max(rows, key=lambda r: float(r["dev_ccc"]))
            lines.append(f"{dim} pretrain: {len(rows)} epochs, best dev CCC {float(best['dev_ccc']):.4f} "
                         f"at epoch {best['epoch']}")
        sel = run / dim / "personalised" / "selection.csv"
        if sel.is_file():
            lines.append(f"{dim} personalised:")
            lines.append(f"  {'subject':<12}{'seed':>6}{'dev_ccc':>10}{'pretrained':>12}")
            for r in _read_rows(sel):
                lines.append(f"  {r['subject']:<12}{r['seed']:>6}{float(r['dev_ccc']):>10.4f}"
                             f"{float(r['pretrained_dev_ccc']):>12.4f}")
    for ev in sorted(run.rglob("evaluation.csv")):
        lines.append(f"{ev.relative_to(run)}:")
        for r in _read_rows(ev):
            lines.append(f"  {r['subject']:<12}{r['dimension']:<10}{float(r['ccc']):>8.4f}")
    for ab in sorted(run.glob("ablation_*.csv")):
        lines.append(f"{ab.name}:")
        lines.append(f"  {'layers':>6}{'dim':>6}{'bi':>4}{'dev':>9}{'test':>9}")
        for r in _read_rows(ab):
            lines.append(f"  {r['layers']:>6}{r['model_dim']:>6}{r['rnn_bi']:>4}"
                         f"{float(r['dev_ccc']):>9.4f}{float(r['test_ccc']):>9.4f}")
    if len(lines) == 1:
        raise DataError(f"{run} does not look like a run directory")
    print("\n".join(lines))
    return 0


# --- parser -----------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="musepers", description=__doc__.split("\n", 1)[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    common.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help):
        return sub.add_parser(name, help=help, parents=[common])

    def config_cmd(name, func, help):
        c = add(name, help)
        c.add_argument("--config", type=Path, required=True)
        c.add_argument("--out", type=Path, help="override output_dir")
        c.add_argument("--jobs", type=int, help="worker cap for the seed sweep (default 1)")
        c.set_defaults(func=func)
        return c

    c = add("synth", "write a synthetic corpus and manifest")
    c.add_argument("--out", type=Path, default=None)
    c.add_argument("--subjects", type=int, default=14)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--duration", type=float, default=300.0, help="seconds per subject")
    c.add_argument("--noise", type=float, default=0.1)
    c.add_argument("--offset", type=float, default=0.0, help="per-subject offset magnitude")
    c.add_argument("--modalities", default="audio:32,video:24", help="name:width list")
    c.add_argument("--phys", action="store_true", help="also write 21-d phys features")
    c.add_argument("--no-ecg", action="store_true", help="skip raw physiological signals")
    c.set_defaults(func=cmd_synth)

    c = add("extract-hrv", "phys feature CSVs from raw ECG/RESP/BPM")
    c.add_argument("--manifest", type=Path, required=True)
    c.add_argument("--out", type=Path, default=None)
    c.add_argument("--name", default="phys", help="modality name for the new features")
    c.add_argument("--ecg-rate", type=float, default=None, help="override the rate inferred from timestamps")
    c.set_defaults(func=cmd_extract_hrv)

    config_cmd("pretrain", cmd_pretrain, "stage 1: train on all train subjects")
    c = config_cmd("personalise", cmd_personalise, "stage 2: per-subject fine-tuning seed sweep")
    c.add_argument("--role", default="test", choices=("train", "dev", "test"))
    c = config_cmd("predict", cmd_predict, "write prediction CSVs")
    c.add_argument("--stage", default="pretrained", choices=STAGES)
    c.add_argument("--segment", choices=("full", "personal_test"), default=None,
                   help="default: personal_test for personalised, full otherwise")
    c.add_argument("--role", default="test", choices=("train", "dev", "test"))

    c = add("evaluate", "score predictions against manifest labels")
    c.add_argument("--manifest", type=Path, required=True)
    c.add_argument("--predictions", type=Path, required=True)
    c.add_argument("--out", type=Path, default=None)
    c.add_argument("--role", default="test", choices=("train", "dev", "test"))
    c.set_defaults(func=cmd_evaluate)

    c = add("ensemble", "average prediction directories")
    c.add_argument("--members", type=Path, nargs="+", required=True)
    c.add_argument("--out", type=Path, default=None)
    c.set_defaults(func=cmd_ensemble)

    config_cmd("ablate", cmd_ablate, "layers x model_dim x rnn_bi grid")

    c = add("report", "summarise a run directory")
    c.add_argument("--run", type=Path, required=True)
    c.set_defaults(func=cmd_report)
    return p


def _default_outs(args):
    if getattr(args, "out", "absent") is None and args.command in ("synth", "extract-hrv", "ensemble"):
        args.out = default_output_root() / args.command


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s", force=True)
    _default_outs(args)
    try:
        return args.func(args)
    except MuseError as exc:
        where = getattr(exc, "context", None)
        prefix = f"{type(exc).__name__} ({where})" if where else type(exc).__name__
        print(f"error: {prefix}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def run(subcommand, args=()):
    """Programmatic entry: ``run("synth", ["--subjects", "4"])``."""
    return main([subcommand, *args])


if __name__ == "__main__":
    sys.exit(main())
