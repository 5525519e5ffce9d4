"""Windowing, global pretraining, per-subject personalisation, inference."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .ensemble import PredictionSequence, Provenance
from .errors import (
    Degenerate,
    EmptyCorpus,
    InvalidConfig,
    LayoutMismatch,
    NonFiniteLoss,
)
from .nn import AdamState, Checkpoint, adam_step, backward, forward, init_model
from .objective import ccc, ccc_loss_rows
from .seqdata import apply_norm, fit_norm_stats

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WindowingConfig:
    win_steps: int
    hop_steps: int

    def __post_init__(self):
        if self.win_steps < 2 or self.hop_steps < 1 or self.hop_steps > self.win_steps:
            raise InvalidConfig(f"invalid window {self.win_steps}/{self.hop_steps}: need 1 <= hop <= win, win >= 2")


@dataclass(frozen=True)
class TrainConfig:
    stage1_window: WindowingConfig = WindowingConfig(200, 100)
    stage2_window: WindowingConfig = WindowingConfig(10, 5)
    lr: float = 1e-3
    batch_size: int = 128
    max_epochs: int = 100
    patience: int = 15
    finetune_lr: float = 1e-4
    finetune_max_epochs: int = 50
    finetune_patience: int = 10
    seeds: tuple = tuple(range(10))
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not (self.lr > 0 and self.finetune_lr > 0):
            raise InvalidConfig("learning rates must be positive")
        if self.batch_size < 1 or self.jobs < 1:
            raise InvalidConfig("batch_size and jobs must be positive")
        if min(self.max_epochs, self.patience, self.finetune_max_epochs, self.finetune_patience) < 0:
            raise InvalidConfig("epoch budgets and patience must be non-negative")
        if len(self.seeds) != 10 or len(set(self.seeds)) != 10:
            raise InvalidConfig("personalisation needs exactly 10 distinct seeds")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_ccc: float
    best_dev_ccc: float


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    best_epoch: int = 0
    best_dev_ccc: float = float("-inf")
    wall_time: float = 0.0

    def to_csv(self):
        lines = ["epoch,train_loss,dev_ccc"]
        for r in self.epochs:
            lines.append(f"{r.epoch},{r.train_loss!r},{r.dev_ccc!r}")
        return "\n".join(lines) + "\n"


# --- windows ----------------------------------------------------------------

def window_bounds(T, win, hop):
    """Start at 0, hop, 2*hop... while start < T; drop windows shorter than 2."""
    out = []
    for start in range(0, T, hop):
        stop = min(start + win, T)
        if stop - start >= 2:
            out.append((start, stop))
    return out


def make_windows(sample, cfg, dimension):
    feats = sample.features()
    labels = sample.label(dimension)
    return [(feats[a:b], labels[a:b]) for a, b in window_bounds(sample.T, cfg.win_steps, cfg.hop_steps)]


def _batches(windows, batch_size, rng):
    order = rng.permutation(len(windows))
    for k in range(0, len(order), batch_size):
        yield [windows[i] for i in order[k:k + batch_size]]


def _length_groups(batch):
    groups = {}
    for x, y in batch:
        groups.setdefault(x.shape[0], []).append((x, y))
    for length in sorted(groups):
        members = groups[length]
        yield np.stack([m[0] for m in members]), np.stack([m[1] for m in members])


def train_epoch(model, state, windows, batch_size, rng):
    """One pass over ``windows``; returns the mean per-window CCC loss."""
    total, count = 0.0, 0
    for batch in _batches(windows, batch_size, rng):
        n = len(batch)
        grads = None
        for X, Y in _length_groups(batch):
            pred, cache = forward(model, X)
            losses, d_pred = ccc_loss_rows(pred, Y)
            if not np.all(np.isfinite(losses)):
                raise NonFiniteLoss("training loss became non-finite")
            total += float(losses.sum())
            g = backward(model, cache, d_pred / n)
            if grads is None:
                grads = g
            else:
                for k in grads:
                    grads[k] += g[k]
        adam_step(model, grads, state)
        count += n
    return total / max(count, 1)


# --- evaluation -------------------------------------------------------------

def check_layout(model, samples):
    cfg = model.config
    for s in samples:
        if s.widths != cfg.input_dims or (cfg.modality_names and s.modality_names != cfg.modality_names):
            raise LayoutMismatch(
                f"{s.subject_id}: layout {list(zip(s.modality_names, s.widths))} does not match "
                f"model {list(zip(cfg.modality_names or ('?',) * len(cfg.input_dims), cfg.input_dims))}"
            )


def predict_full(model, sample, dimension="arousal", provenance=()):
    """Run the whole sequence through the model in one pass from h0 = 0."""
    check_layout(model, [sample])
    values, _ = forward(model, sample.features())
    return PredictionSequence(sample.subject_id, dimension, sample.timestamps, values, provenance)


def safe_ccc(pred, target):
    try:
        return ccc(pred, target).ccc
    except Degenerate:
        return 0.0


def mean_ccc(model, samples, dimension):
    scores = [safe_ccc(predict_full(model, s, dimension).values, s.label(dimension)) for s in samples]
    return float(np.mean(scores))


def predict_checkpoint(checkpoint, sample, dimension, provenance=()):
    norm = apply_norm(sample, checkpoint.stats) if checkpoint.stats is not None else sample
    return predict_full(checkpoint.model, norm, dimension, provenance)


# --- stage 1 ----------------------------------------------------------------

def _shuffle_rng(seed, stream):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), stream])))


def _fit(model, windows, dev, dimension, lr, batch_size, max_epochs, patience, rng, base_score=None, tag=""):
    """Shared epoch loop with early stopping on mean dev CCC.

    ``base_score`` seeds the best-so-far with the untouched model (used by
    fine-tuning so that zero epochs returns the input model).
    """
    t0 = time.perf_counter()
    report = TrainReport()
    best_params = {k: v.copy() for k, v in model.params.items()}
    if base_score is not None:
        report.best_dev_ccc = base_score
    state = AdamState.fresh(model, lr=lr)
    stale = 0
    for epoch in range(1, max_epochs + 1):
        loss = train_epoch(model, state, windows, batch_size, rng)
        score = mean_ccc(model, dev, dimension)
        if score > report.best_dev_ccc:
            report.best_dev_ccc = score
            report.best_epoch = epoch
            best_params = {k: v.copy() for k, v in model.params.items()}
            stale = 0
        else:
            stale += 1
        report.epochs.append(EpochRecord(epoch, loss, score, report.best_dev_ccc))
        log.info("%sepoch %d train_loss %.5f dev_ccc %.5f best %.5f", tag, epoch, loss, score, report.best_dev_ccc)
        if stale > patience:
            break
    for k, v in best_params.items():
        model.params[k][...] = v
    model.bump()
    report.wall_time = time.perf_counter() - t0
    return report


def _check_corpus(train, dev):
    if not train:
        raise EmptyCorpus("training corpus is empty")
    if not dev:
        raise EmptyCorpus("development corpus is empty")
    ref = train[0]
    for s in list(train) + list(dev):
        if s.modality_names != ref.modality_names or s.widths != ref.widths:
            raise LayoutMismatch(f"{s.subject_id}: modality layout differs from {ref.subject_id}")


def pretrain(train, dev, model_cfg, train_cfg, dimension):
    """Stage 1: train one model on every training subject.

    Returns ``(Checkpoint, TrainReport)``; the checkpoint holds the parameters
    of the best dev epoch and the training-set normalisation statistics.
    """
    train, dev = list(train), list(dev)
    _check_corpus(train, dev)
    if model_cfg.input_dims != train[0].widths:
        raise LayoutMismatch(f"model input dims {model_cfg.input_dims} != corpus widths {train[0].widths}")
    if not model_cfg.modality_names:
        model_cfg = replace(model_cfg, modality_names=train[0].modality_names)
    stats = fit_norm_stats(train)
    train_n = [apply_norm(s, stats) for s in train]
    dev_n = [apply_norm(s, stats) for s in dev]
    model = init_model(model_cfg)
    windows = [w for s in train_n for w in make_windows(s, train_cfg.stage1_window, dimension)]
    rng = _shuffle_rng(model_cfg.seed, 1)
    if train_cfg.max_epochs == 0:
        report = TrainReport(best_epoch=0, best_dev_ccc=mean_ccc(model, dev_n, dimension))
    else:
        report = _fit(model, windows, dev_n, dimension, train_cfg.lr, train_cfg.batch_size,
                      train_cfg.max_epochs, train_cfg.patience, rng, tag=f"[{dimension}] ")
    return Checkpoint(model, stats), report


# --- stage 2 ----------------------------------------------------------------

@dataclass
class PersonalisedResult:
    checkpoint: Checkpoint
    seed: int
    dev_ccc: float
    pretrained_dev_ccc: float
    seed_scores: dict
    reports: dict


def finetune(pretrained, train_seg, dev_seg, train_cfg, dimension, seed):
    """One seed of stage 2: a copy of ``pretrained`` trained on one subject."""
    ck = pretrained.copy()
    t = [apply_norm(train_seg, ck.stats)] if ck.stats is not None else [train_seg]
    d = [apply_norm(dev_seg, ck.stats)] if ck.stats is not None else [dev_seg]
    check_layout(ck.model, t + d)
    base = mean_ccc(ck.model, d, dimension)
    windows = make_windows(t[0], train_cfg.stage2_window, dimension)
    report = _fit(ck.model, windows, d, dimension, train_cfg.finetune_lr, train_cfg.batch_size,
                  train_cfg.finetune_max_epochs, train_cfg.finetune_patience,
                  _shuffle_rng(seed, 2), base_score=base,
                  tag=f"[{train_seg.subject_id} seed {seed}] ")
    return ck, report, base


def personalise(pretrained, split, model_cfg, train_cfg, dimension):
    """Fine-tune a copy per seed and keep the best on the personal dev segment.

    Ties go to the lowest seed.
    """
    split.require()
    check_layout(pretrained.model, [split.personal_train])
    if model_cfg is not None and model_cfg.input_dims != pretrained.config.input_dims:
        raise LayoutMismatch("model config does not match the pretrained checkpoint")

    def run(seed):
        return finetune(pretrained, split.personal_train, split.personal_dev, train_cfg, dimension, seed)

    seeds = sorted(train_cfg.seeds)
    if train_cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=train_cfg.jobs) as pool:
            results = list(pool.map(run, seeds))
    else:
        results = [run(s) for s in seeds]

    best = None
    scores, reports = {}, {}
    for seed, (ck, report, base) in zip(seeds, results):
        scores[seed] = report.best_dev_ccc
        reports[seed] = report
        if best is None or report.best_dev_ccc > scores[best[0]]:
            best = (seed, ck)
    return PersonalisedResult(best[1], best[0], scores[best[0]], results[0][2], scores, reports)


def personalise_all(pretrained, samples, model_cfg, train_cfg, dimension):
    from .seqdata import split_subject
    return {s.subject_id: personalise(pretrained, split_subject(s), model_cfg, train_cfg, dimension)
            for s in samples}


def checkpoint_provenance(combo, seed, ck_id):
    return (Provenance(combo, seed, ck_id),)
