"""Toy datasets, T_SE x delta sweeps, and detector comparison.

Every random choice is drawn from a substream of the experiment seed:

=====  ===========================================
key    use
=====  ===========================================
1      toy training data
2      DDPM initialisation and training
3      generation (sample i uses a further spawn(i))
4      choice of real evaluation samples
5      baseline noise draws (per fixed t: spawn(t))
6      classifier train/holdout split
7      classifier initialisation and batches
=====  ===========================================

Output layout under ``out_dir``::

    sweep/{t_se}_{delta}/scores.csv, metrics.json
    sweep/baseline_{t}/scores.csv, metrics.json
    compare.json, compare.csv
    report.json, report.csv, curves.csv
"""
from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .classifier import NnTrainConfig, build_inputs, nn_train, stratified_split
from .core import StepConfig, profile_batch
from .detectors import baseline_scores
from .errors import InvalidArgument, SedidError
from .foundation import Rng, atomic_write_text, derive_seed
from .metrics import FPR_TARGETS, evaluate
from .noise_model import TrainConfig, ddpm_train, load_checkpoint
from .sampler import SamplerConfig, generate, load_samples
from .schedule import linear_schedule

log = logging.getLogger(__name__)

TOY_KINDS = ("gauss_mixture", "ring", "bars8x8")
STAT, NNS, BASELINE = "SeDID_Stat", "SeDID_NNs", "baseline"


def normalize(x):
    """Per-channel mean 0.5 / std 0.5 normalisation: x -> (x - 0.5) / 0.5."""
    return (np.asarray(x, dtype=np.float64) - 0.5) / 0.5


def make_toy_dataset(kind: str, n: int, seed: int, normalized: bool = True) -> list[np.ndarray]:
    """Synthetic data living in [0, 1]-style pixel coordinates, then normalised.

    ``ring``: 8 tight modes on a circle of radius 1 around (0.5, 0.5); the
    radius is clipped to [0.8, 1.2]. ``gauss_mixture``: 4 isotropic
    Gaussians. ``bars8x8``: 8x8 binary images holding one horizontal or
    vertical bar.
    """
    if kind not in TOY_KINDS:
        raise InvalidArgument(f"unknown toy dataset {kind!r}; choose from {', '.join(TOY_KINDS)}")
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    rng = Rng(seed)
    if kind == "ring":
        mode = rng.integers(0, 8, n)
        ang = 2 * np.pi * mode / 8 + 0.01 * rng.normal(n)
        rad = np.clip(1.0 + 0.01 * rng.normal(n), 0.8, 1.2)
        x = np.stack([0.5 + rad * np.cos(ang), 0.5 + rad * np.sin(ang)], axis=1)
    elif kind == "gauss_mixture":
        centers = np.array([[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]])
        x = centers[rng.integers(0, 4, n)] + 0.05 * rng.normal((n, 2))
    else:
        x = np.zeros((n, 8, 8))
        which = rng.integers(0, 16, n)
        for i, w in enumerate(which):
            if w < 8:
                x[i, w, :] = 1.0
            else:
                x[i, :, w - 8] = 1.0
    if normalized:
        x = normalize(x)
    return list(x)


@dataclass
class ExperimentSpec:
    dataset: str = "ring"
    data_path: str = ""
    model_path: str = ""
    n_train: int = 2048
    T: int = 100
    beta_start: float = 1e-3
    beta_end: float = 0.2
    train_steps: int = 30000
    train_lr: float = 0.01
    train_batch: int = 128
    train_momentum: float = 0.9
    train_weight_decay: float = 5e-4
    hidden: tuple = (128, 128)
    n_real: int = 512
    n_generated: int = 512
    sampler: str = "ancestral"
    ddim_stepsize: int = 1
    deltas: tuple = (5, 10, 20, 25)
    t_se_grid: tuple = ()
    baseline_ts: tuple = ()
    nn_epochs: int = 120
    nn_lr: float = 0.01
    nn_batch: int = 8
    nn_momentum: float = 0.9
    nn_weight_decay: float = 5e-4
    nn_train_fraction: float = 0.1
    detectors: tuple = (BASELINE, STAT, NNS)
    seed: int = 0

    def __post_init__(self):
        if self.n_real < 2 or self.n_generated < 2:
            raise InvalidArgument("need at least 2 samples per class")
        if not self.data_path and not self.model_path and self.dataset not in TOY_KINDS:
            raise InvalidArgument(f"unknown toy dataset {self.dataset!r}")
        unknown = set(self.detectors) - {BASELINE, STAT, NNS}
        if unknown:
            raise InvalidArgument(f"unknown detectors {sorted(unknown)}")

    def cells(self) -> list[tuple[int, int]]:
        """(t_se, delta) grid. Default: every multiple of delta up to T - delta."""
        out = []
        for d in self.deltas:
            if self.t_se_grid:
                out += [(int(t), int(d)) for t in self.t_se_grid]
            else:
                out += [(t, int(d)) for t in range(0, self.T - d + 1, d)]
        return out

    def baseline_grid(self) -> list[int]:
        if self.baseline_ts:
            return [int(t) for t in self.baseline_ts]
        step = max(1, self.T // 20)
        return sorted({1, *range(step, self.T + 1, step)})

    def nn_config(self) -> NnTrainConfig:
        return NnTrainConfig(epochs=self.nn_epochs, learning_rate=self.nn_lr, momentum=self.nn_momentum,
                             weight_decay=self.nn_weight_decay, batch_size=self.nn_batch,
                             train_fraction=self.nn_train_fraction, seed=derive_seed(self.seed, 7))

    def train_config(self) -> TrainConfig:
        return TrainConfig(steps=self.train_steps, batch_size=self.train_batch,
                           learning_rate=self.train_lr, momentum=self.train_momentum,
                           weight_decay=self.train_weight_decay, seed=derive_seed(self.seed, 2),
                           hidden=tuple(self.hidden))

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


# -- key=value spec files -----------------------------------------------------

def _coerce(name: str, raw: str, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [v.strip() for v in raw.split(",") if v.strip()]
            if name in ("detectors",):
                return tuple(items)
            return tuple(int(v) for v in items)
    except ValueError:
        raise InvalidArgument(f"bad value for {name}: {raw!r}") from None
    return raw


def parse_spec_text(text: str, source: str = "<spec>") -> dict:
    """Parse ``key = value`` lines (``#`` comments) into typed ExperimentSpec fields."""
    defaults = {f.name: f.default for f in fields(ExperimentSpec)}
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgument(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in defaults:
            raise InvalidArgument(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value, defaults[key])
    return out


def load_spec(path, overrides: dict | None = None) -> ExperimentSpec:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"spec file not found: {path}")
    values = parse_spec_text(path.read_text(), str(path))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ExperimentSpec(**values)


# -- pipeline -----------------------------------------------------------------

@dataclass
class Prepared:
    schedule: object
    model: object
    train_data: np.ndarray
    losses: np.ndarray
    X: np.ndarray
    labels: np.ndarray
    ids: list

    @property
    def sample_shape(self):
        return self.X.shape[1:]


def prepare(spec: ExperimentSpec) -> Prepared:
    """Train (or load) the model, generate samples and pick real samples from the training split."""
    losses = np.empty(0)
    if spec.model_path:
        model, schedule = load_checkpoint(spec.model_path)
    else:
        schedule = linear_schedule(spec.T, spec.beta_start, spec.beta_end)
        model = None
    if spec.data_path:
        train = load_samples(spec.data_path)[0]
    else:
        train = np.stack(make_toy_dataset(spec.dataset, spec.n_train, derive_seed(spec.seed, 1)))
    if model is None:
        log.info("training DDPM: %d steps on %d samples", spec.train_steps, len(train))
        model, losses = ddpm_train(schedule, list(train), spec.train_config())
    if spec.n_real > len(train):
        raise InvalidArgument(f"n_real={spec.n_real} exceeds the {len(train)} training samples")
    pick = np.sort(Rng(derive_seed(spec.seed, 4)).permutation(len(train))[:spec.n_real])
    real = train[pick]
    cfg = SamplerConfig(mode=spec.sampler, ddim_stepsize=spec.ddim_stepsize,
                        seed=derive_seed(spec.seed, 3), count=spec.n_generated)
    log.info("generating %d samples (%s)", spec.n_generated, spec.sampler)
    gen = generate(model, schedule, cfg, train.shape[1:])
    X = np.concatenate([real, gen])
    labels = np.concatenate([np.zeros(len(real), np.int64), np.ones(len(gen), np.int64)])
    ids = [f"real{i}" for i in pick] + [f"gen{i}" for i in range(len(gen))]
    return Prepared(schedule, model, train, losses, X, labels, ids)


@dataclass
class Cell:
    key: str
    detector: str
    t_se: int
    delta: int
    scores: np.ndarray | None = None
    metrics: object = None
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error


@dataclass
class SweepReport:
    cells: list = field(default_factory=list)
    baseline: list = field(default_factory=list)

    def best(self, metric: str = "auc", detector: str = STAT) -> Cell:
        pool = [c for c in (self.cells if detector == STAT else self.baseline) if c.ok]
        if not pool:
            raise SedidError(f"no successful {detector} cells")
        return max(pool, key=lambda c: _metric(c.metrics, metric))

    def argmax(self) -> dict:
        return {m: self.best(m).key for m in ("auc", "best_acc", "tpr@0.01", "tpr@0.001")}


def _metric(m, name):
    if name.startswith("tpr@"):
        return m.tpr_at_fpr[float(name[4:])]
    return getattr(m, name)


def _stat_cell(prep: Prepared, t_se: int, delta: int) -> Cell:
    cell = Cell(f"{t_se}_{delta}", STAT, t_se, delta)
    try:
        cfg = StepConfig(t_se, delta).validate(prep.schedule.T)
        cell.scores = profile_batch(prep.model, prep.schedule, prep.X, cfg).errors
        cell.metrics = evaluate(cell.scores, prep.labels)
    except SedidError as exc:
        cell.error = str(exc)
    return cell


def _baseline_cell(prep: Prepared, t: int, seed: int) -> Cell:
    cell = Cell(f"baseline_{t}", BASELINE, t, 0)
    try:
        cell.scores = baseline_scores(prep.model, prep.schedule, prep.X, t, derive_seed(seed, t))
        cell.metrics = evaluate(cell.scores, prep.labels)
    except SedidError as exc:
        cell.error = str(exc)
    return cell


def run_sweep(spec: ExperimentSpec, prep: Prepared, jobs: int = 1) -> SweepReport:
    """Score every grid cell; invalid cells are recorded as failed and the sweep continues."""
    n_real = int(np.sum(prep.labels == 0))
    n_gen = int(np.sum(prep.labels == 1))
    if n_real < spec.n_real or n_gen < spec.n_generated:
        raise SedidError(f"sample accounting: have {n_real}/{n_gen}, spec wants "
                         f"{spec.n_real}/{spec.n_generated}")
    base_seed = derive_seed(spec.seed, 5)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        cells = list(pool.map(lambda c: _stat_cell(prep, *c), spec.cells()))
        baseline = []
        if BASELINE in spec.detectors:
            baseline = list(pool.map(lambda t: _baseline_cell(prep, t, base_seed), spec.baseline_grid()))
    for c in cells + baseline:
        if c.ok:
            assert len(c.scores) == len(prep.labels)
        else:
            log.warning("cell %s failed: %s", c.key, c.error)
    return SweepReport(cells, baseline)


@dataclass
class Comparison:
    rows: list
    train_idx: np.ndarray
    holdout_idx: np.ndarray
    nn_cell: str
    nn_scores: np.ndarray | None = None


def compare_detectors(spec: ExperimentSpec, prep: Prepared, sweep: SweepReport) -> Comparison:
    """Baseline, SeDID_Stat and SeDID_NNs on the same held-out split.

    Stat and baseline use their best-AUC sweep cells; the classifier is
    trained on the ``nn_train_fraction`` split of profiles at the Stat cell.
    """
    nn_cfg = spec.nn_config()
    train_idx, holdout_idx = stratified_split(prep.labels, nn_cfg.train_fraction,
                                              derive_seed(spec.seed, 6))
    y = prep.labels
    rows = []
    if BASELINE in spec.detectors and sweep.baseline:
        b = sweep.best("auc", BASELINE)
        m = evaluate(b.scores[holdout_idx], y[holdout_idx])
        rows.append({"detector": BASELINE, "cell": b.key, "auc": m.auc, "acc": m.best_acc,
                     "orientation": m.orientation})
    s = sweep.best("auc", STAT)
    m = evaluate(s.scores[holdout_idx], y[holdout_idx])
    rows.append({"detector": STAT, "cell": s.key, "auc": m.auc, "acc": m.best_acc,
                 "orientation": m.orientation})
    nn_scores = None
    if NNS in spec.detectors:
        pb = profile_batch(prep.model, prep.schedule, prep.X, StepConfig(s.t_se, s.delta))
        inputs = build_inputs(pb)
        net, _ = nn_train(inputs[train_idx], y[train_idx], nn_cfg)
        nn_scores = net.proba(inputs[holdout_idx])
        m = evaluate(nn_scores, y[holdout_idx])
        rows.append({"detector": NNS, "cell": s.key, "auc": m.auc, "acc": m.best_acc,
                     "orientation": m.orientation})
    return Comparison(rows, train_idx, holdout_idx, s.key, nn_scores)


# -- files ---------------------------------------------------------------------

def _fmt(v) -> str:
    return repr(float(v))


def scores_csv(ids, labels, scores) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "label", "score"])
    for i, lab, sc in zip(ids, labels, scores):
        w.writerow([i, int(lab), _fmt(sc)])
    return buf.getvalue()


def read_scores_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and set(rows[0]) != {"id", "label", "score"}:
        raise InvalidArgument(f"{path}: expected columns id,label,score")
    ids = [r["id"] for r in rows]
    labels = np.array([int(r["label"]) for r in rows], dtype=np.int64)
    scores = np.array([float(r["score"]) for r in rows], dtype=np.float64)
    return ids, labels, scores


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_sweep(out_dir, spec: ExperimentSpec, prep: Prepared, sweep: SweepReport,
                comparison: Comparison | None) -> None:
    out = Path(out_dir)
    for c in sweep.cells + sweep.baseline:
        cdir = out / "sweep" / c.key
        meta = {"detector": c.detector, "t_se": c.t_se, "delta": c.delta}
        if c.ok:
            atomic_write_text(cdir / "scores.csv", scores_csv(prep.ids, prep.labels, c.scores))
            meta.update(status="ok", **c.metrics.to_dict())
        else:
            meta.update(status="failed", reason=c.error)
        atomic_write_text(cdir / "metrics.json", _dump(meta))
    if comparison is not None:
        atomic_write_text(out / "compare.json", _dump({"rows": comparison.rows,
                                                       "nn_cell": comparison.nn_cell,
                                                       "n_train": int(len(comparison.train_idx)),
                                                       "n_holdout": int(len(comparison.holdout_idx))}))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["detector", "cell", "auc", "acc"])
        for r in comparison.rows:
            w.writerow([r["detector"], r["cell"], _fmt(r["auc"]), _fmt(r["acc"])])
        atomic_write_text(out / "compare.csv", buf.getvalue())
        if comparison.nn_scores is not None:
            ho = comparison.holdout_idx
            atomic_write_text(out / "sweep" / f"nn_{comparison.nn_cell}" / "scores.csv",
                              scores_csv([prep.ids[i] for i in ho], prep.labels[ho], comparison.nn_scores))
    atomic_write_text(out / "spec.json", _dump(spec.to_dict()))
    write_report(out)


REPORT_COLUMNS = ["t_se", "delta", "detector", "auc", "auc_raw", "best_acc", "tpr@0.01", "tpr@0.001"]


def write_report(out_dir) -> dict:
    """Rebuild report.json / report.csv / curves.csv from the per-cell files under ``out_dir``."""
    out = Path(out_dir)
    root = out / "sweep"
    if not root.is_dir():
        raise FileNotFoundError(f"no sweep directory under {out}")
    rows, failed, curves = [], [], []

    def order(p: Path):
        name = p.name
        kind = 0 if name[0].isdigit() else (1 if name.startswith("baseline") else 2)
        nums = [int(v) for v in name.split("_") if v.isdigit()]
        return kind, nums[::-1] if kind == 0 else nums

    for cdir in sorted((p for p in root.iterdir() if p.is_dir()), key=order):
        scores_path = cdir / "scores.csv"
        meta_path = cdir / "metrics.json"
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        if cdir.name.startswith("nn_"):
            t_se, delta = (int(v) for v in cdir.name[3:].split("_"))
            detector = NNS
        else:
            t_se, delta, detector = meta["t_se"], meta["delta"], meta["detector"]
        if meta.get("status") == "failed":
            failed.append({"cell": cdir.name, "reason": meta["reason"]})
            continue
        _, labels, scores = read_scores_csv(scores_path)
        m = evaluate(scores, labels)
        rows.append({"cell": cdir.name, "t_se": t_se, "delta": delta, "detector": detector,
                     "auc": m.auc, "auc_raw": m.auc_raw, "best_acc": m.best_acc,
                     "orientation": m.orientation,
                     "tpr@0.01": m.tpr_at_fpr[0.01], "tpr@0.001": m.tpr_at_fpr[0.001]})
        curves += [(t_se, delta, detector, fpr, tpr) for fpr, tpr in m.roc]
    stat_rows = [r for r in rows if r["detector"] == STAT]
    argmax = {}
    for metric in ("auc", "best_acc", "tpr@0.01", "tpr@0.001"):
        if stat_rows:
            argmax[metric] = max(stat_rows, key=lambda r: r[metric])["cell"]
    report = {"cells": rows, "failed": failed, "argmax": argmax}
    compare_path = out / "compare.json"
    if compare_path.exists():
        report["compare"] = json.loads(compare_path.read_text())["rows"]
    atomic_write_text(out / "report.json", _dump(report))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in rows:
        w.writerow([r["t_se"], r["delta"], r["detector"]] + [_fmt(r[k]) for k in REPORT_COLUMNS[3:]])
    atomic_write_text(out / "report.csv", buf.getvalue())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t_se", "delta", "detector", "fpr", "tpr"])
    for t_se, delta, det, fpr, tpr in curves:
        w.writerow([t_se, delta, det, _fmt(fpr), _fmt(tpr)])
    atomic_write_text(out / "curves.csv", buf.getvalue())
    return report


def run_experiment(spec: ExperimentSpec, out_dir=None, jobs: int = 1):
    """prepare -> run_sweep -> compare_detectors, optionally writing the output tree."""
    prep = prepare(spec)
    sweep = run_sweep(spec, prep, jobs)
    comparison = compare_detectors(spec, prep, sweep)
    if out_dir is not None:
        write_sweep(out_dir, spec, prep, sweep, comparison)
    return prep, sweep, comparison
