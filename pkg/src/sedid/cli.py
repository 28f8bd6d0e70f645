"""``sedid`` command line.

Exit codes: 0 success, 1 runtime failure, 2 usage error (bad flags, missing
inputs). Every failure prints one line starting with ``error:`` on stderr.
The seed comes from ``--seed``, then the spec file, then ``SEDID_SEED``,
then 0.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import experiments as ex
from .classifier import build_input, nn_train, save_classifier, stratified_split
from .core import NoiseProfile, StepConfig, profile_batch
from .detectors import baseline_scores, calibrate_arrays
from .errors import InvalidArgument, SedidError
from .foundation import archive_read, archive_write, atomic_write_text, derive_seed
from .noise_model import ddpm_train, load_checkpoint, model_checksum, save_checkpoint
from .sampler import SamplerConfig, generate, load_samples, save_samples
from .schedule import linear_schedule

log = logging.getLogger("sedid")
SPEC_KEYS = {f.name for f in fields(ex.ExperimentSpec)}


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _ints(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _existing(path: str) -> str:
    if not Path(path).exists():
        raise UsageError(f"file not found: {path}")
    return path


# -- spec resolution -------------------------------------------------------------

def _spec(args) -> ex.ExperimentSpec:
    """Spec file values, overridden by any spec-key flag that was given."""
    values = {}
    if getattr(args, "spec", None):
        _existing(args.spec)
        values = ex.parse_spec_text(Path(args.spec).read_text(), args.spec)
    for key, val in vars(args).items():
        if key in SPEC_KEYS:
            values[key] = val
    if "seed" not in values:
        env = os.environ.get("SEDID_SEED")
        if env is not None:
            try:
                values["seed"] = int(env)
            except ValueError:
                raise UsageError(f"SEDID_SEED must be an integer, got {env!r}") from None
    for key in ("data_path", "model_path"):
        if values.get(key):
            _existing(values[key])
    return ex.ExperimentSpec(**values)


def _seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("SEDID_SEED")
    try:
        return int(env) if env is not None else 0
    except ValueError:
        raise UsageError(f"SEDID_SEED must be an integer, got {env!r}") from None


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


# -- subcommands -------------------------------------------------------------------

def cmd_train(args) -> None:
    if getattr(args, "dataset", None) and getattr(args, "data_path", None):
        raise UsageError("--toy and --data are mutually exclusive")
    spec = _spec(args)
    if spec.data_path:
        train = load_samples(spec.data_path)[0]
    else:
        train = np.stack(ex.make_toy_dataset(spec.dataset, spec.n_train, derive_seed(spec.seed, 1)))
    schedule = linear_schedule(spec.T, spec.beta_start, spec.beta_end)
    log.info("training on %d samples for %d steps", len(train), spec.train_steps)
    model, losses = ddpm_train(schedule, list(train), spec.train_config())
    save_checkpoint(args.out, model, schedule)
    loss_path = args.loss_csv or str(args.out) + ".loss.csv"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "loss"])
    for i, v in enumerate(losses):
        w.writerow([i, repr(float(v))])
    atomic_write_text(loss_path, buf.getvalue())
    print(f"checkpoint {args.out} ({model_checksum(model)}), loss trace {loss_path}")


def cmd_sample(args) -> None:
    _existing(args.model)
    model, schedule = load_checkpoint(args.model)
    seed = _seed(args)
    cfg = SamplerConfig(mode=args.mode, ddim_stepsize=args.ddim_stepsize, seed=seed, count=args.count,
                        sigma=args.sigma)
    X = generate(model, schedule, cfg, model.sample_shape)
    save_samples(args.out, X, {"mode": cfg.mode, "seed": seed, "delta": cfg.ddim_stepsize,
                               "sigma": cfg.sigma, "model": model_checksum(model)})
    print(f"{len(X)} samples written to {args.out}")


def _labelled_inputs(args):
    X, ids, labels = [], [], []
    for path, prefix, label in ((args.real, "real", 0), (args.generated, "gen", 1)):
        if path:
            samples, idx, _ = load_samples(_existing(path))
            X.append(samples)
            ids += [f"{prefix}{i}" for i in idx]
            labels += [label] * len(idx)
    if not X:
        raise UsageError("give --real and/or --generated")
    return np.concatenate(X), ids, np.array(labels, dtype=np.int64)


def cmd_profile(args) -> None:
    _existing(args.model)
    model, schedule = load_checkpoint(args.model)
    X, ids, labels = _labelled_inputs(args)
    cfg = StepConfig(args.t_se, args.delta).validate(schedule.T)
    batch = profile_batch(model, schedule, X, cfg)
    entries = {}
    for i in range(len(batch)):
        entries[f"profile{i}.x_tilde"] = batch.x_tilde_t[i]
        entries[f"profile{i}.x_recon"] = batch.x_recon[i]
        entries[f"profile{i}.residual"] = batch.residual[i]
    out = Path(args.out_dir)
    archive_write(out / "profiles.sedd", entries)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id", "label", "error"])
    for i, sid in enumerate(ids):
        w.writerow([sid, int(labels[i]), repr(float(batch.errors[i]))])
    atomic_write_text(out / "profiles.csv", buf.getvalue())
    atomic_write_text(out / "profile.json", _dump({"t_se": cfg.t_se, "delta": cfg.delta,
                                                   "model": model_checksum(model)}))
    print(f"{len(batch)} profiles written to {out}")


def _read_profiles(profile_dir: Path):
    table = profile_dir / "profiles.csv"
    _existing(str(table))
    with open(table, newline="") as fh:
        rows = list(csv.DictReader(fh))
    ids = [r["sample_id"] for r in rows]
    labels = np.array([int(r["label"]) for r in rows], dtype=np.int64)
    errors = np.array([float(r["error"]) for r in rows])
    return ids, labels, errors


def _write_detection(out: Path, ids, labels, scores, extra=None) -> dict:
    th, acc = calibrate_arrays(scores, labels)
    report = {**th.to_dict(), "best_acc": acc, **(extra or {})}
    atomic_write_text(out / "scores.csv", ex.scores_csv(ids, labels, scores))
    atomic_write_text(out / "calibration.json", _dump(report))
    return report


def cmd_detect(args) -> None:
    out = Path(args.out_dir)
    seed = _seed(args)
    if args.mode in ("stat", "nn"):
        if not args.profile_dir:
            raise UsageError(f"--mode {args.mode} needs --profile-dir")
        pdir = Path(args.profile_dir)
        ids, labels, errors = _read_profiles(pdir)
        if args.mode == "stat":
            report = _write_detection(out, ids, labels, errors)
        else:
            entries = archive_read(_existing(str(pdir / "profiles.sedd")))
            inputs = np.stack([build_input(NoiseProfile(entries[f"profile{i}.x_tilde"],
                                                        None,
                                                        entries[f"profile{i}.x_recon"],
                                                        entries[f"profile{i}.residual"],
                                                        float(errors[i])))
                               for i in range(len(ids))])
            spec = ex.ExperimentSpec(seed=seed, nn_epochs=args.epochs, nn_lr=args.lr, nn_batch=args.batch,
                                     nn_train_fraction=args.train_fraction)
            cfg = spec.nn_config()
            train, holdout = stratified_split(labels, cfg.train_fraction, derive_seed(seed, 6))
            net, _ = nn_train(inputs[train], labels[train], cfg)
            save_classifier(out / "classifier.sedd", net)
            report = _write_detection(out, [ids[i] for i in holdout], labels[holdout],
                                      net.proba(inputs[holdout]),
                                      {"n_train": int(len(train)), "n_holdout": int(len(holdout))})
    else:
        if args.profile_dir:
            raise UsageError("--mode baseline takes --model/--real/--generated, not --profile-dir")
        if not args.model:
            raise UsageError("--mode baseline needs --model")
        model, schedule = load_checkpoint(_existing(args.model))
        X, ids, labels = _labelled_inputs(args)
        t = args.t if args.t is not None else schedule.T // 2
        scores = baseline_scores(model, schedule, X, t, derive_seed(derive_seed(seed, 5), t))
        report = _write_detection(out, ids, labels, scores, {"t": t})
    print(f"{args.mode}: best_acc={report['best_acc']:.4f} orientation={report['orientation']}")


def cmd_sweep(args) -> None:
    spec = _spec(args)
    prep, sweep, comparison = ex.run_experiment(spec, args.out_dir, jobs=args.jobs)
    for row in comparison.rows:
        print(f"{row['detector']:<11} cell={row['cell']:<12} auc={row['auc']:.4f} acc={row['acc']:.4f}")


def cmd_report(args) -> None:
    if not Path(args.sweep_dir).is_dir():
        raise UsageError(f"sweep directory not found: {args.sweep_dir}")
    report = ex.write_report(args.sweep_dir)
    print(f"{len(report['cells'])} cells, {len(report['failed'])} failed; argmax {report['argmax']}")


# -- parser ------------------------------------------------------------------------

def _spec_flags(p, *, data=True):
    S = argparse.SUPPRESS
    p.add_argument("--spec", help="key=value spec file; flags override its values")
    p.add_argument("--seed", type=int, default=S, help="top-level seed (falls back to SEDID_SEED)")
    if data:
        p.add_argument("--toy", dest="dataset", default=S, choices=ex.TOY_KINDS, help="toy dataset kind")
        p.add_argument("--data", dest="data_path", default=S, help="archive of training samples")
        p.add_argument("--n-train", dest="n_train", type=int, default=S, help="toy training set size")
    p.add_argument("--T", dest="T", type=int, default=S, help="diffusion steps")
    p.add_argument("--beta-start", dest="beta_start", type=float, default=S)
    p.add_argument("--beta-end", dest="beta_end", type=float, default=S)
    p.add_argument("--steps", dest="train_steps", type=int, default=S, help="DDPM training steps")
    p.add_argument("--lr", dest="train_lr", type=float, default=S, help="DDPM learning rate")
    p.add_argument("--batch", dest="train_batch", type=int, default=S, help="DDPM batch size")
    p.add_argument("--hidden", type=_ints, default=S, help="hidden widths, e.g. 128,128")


def build_parser() -> Parser:
    parser = Parser(prog="sedid", description="Stepwise-error detection of diffusion-generated samples.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("train", help="train a DDPM noise predictor")
    _spec_flags(p)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--loss-csv", help="loss trace path (default: <out>.loss.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="generate samples from a checkpoint")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--count", type=int, default=512)
    p.add_argument("--mode", choices=("ancestral", "ddim"), default="ancestral")
    p.add_argument("--ddim-stepsize", type=int, default=1)
    p.add_argument("--sigma", choices=("beta", "beta_tilde"), default="beta")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output archive")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("profile", help="noise profiles at one (t_se, delta) cell")
    p.add_argument("--model", required=True)
    p.add_argument("--real", help="archive of real samples (label 0)")
    p.add_argument("--generated", help="archive of generated samples (label 1)")
    p.add_argument("--t-se", type=int, required=True)
    p.add_argument("--delta", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("detect", help="score samples and calibrate a threshold")
    p.add_argument("--mode", choices=("stat", "nn", "baseline"), required=True)
    p.add_argument("--profile-dir", help="output of `profile` (stat, nn)")
    p.add_argument("--model", help="checkpoint (baseline)")
    p.add_argument("--real", help="real samples archive (baseline)")
    p.add_argument("--generated", help="generated samples archive (baseline)")
    p.add_argument("--t", type=int, help="baseline timestep (default T/2)")
    p.add_argument("--epochs", type=int, default=120, help="classifier epochs (nn)")
    p.add_argument("--lr", type=float, default=0.01, help="classifier learning rate (nn)")
    p.add_argument("--batch", type=int, default=8, help="classifier batch size (nn)")
    p.add_argument("--train-fraction", type=float, default=0.1, help="classifier training share (nn)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("sweep", help="full T_SE x delta sweep and detector comparison")
    _spec_flags(p)
    S = argparse.SUPPRESS
    p.add_argument("--model", dest="model_path", default=S, help="use a trained checkpoint")
    p.add_argument("--deltas", type=_ints, default=S, help="delta grid, e.g. 5,10,20,25")
    p.add_argument("--t-se", dest="t_se_grid", type=_ints, default=S, help="t_se grid (default: all multiples)")
    p.add_argument("--baseline-ts", dest="baseline_ts", type=_ints, default=S)
    p.add_argument("--n-real", dest="n_real", type=int, default=S)
    p.add_argument("--n-generated", dest="n_generated", type=int, default=S)
    p.add_argument("--sampler", choices=("ancestral", "ddim"), default=S)
    p.add_argument("--nn-epochs", dest="nn_epochs", type=int, default=S)
    p.add_argument("--jobs", type=int, default=1, help="parallel grid cells")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="rebuild report.json / report.csv / curves.csv")
    p.add_argument("--sweep-dir", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InvalidArgument as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SedidError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
