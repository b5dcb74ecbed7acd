"""Cross-validated evaluation of the four binary dyad classification tasks."""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .domain import Dataset, SexComp, TaskType
from .errors import LengthMismatch, TooFewSamples
from .nn import Arch, NetConfig, TrainConfig, build_and_train


class Task(str, enum.Enum):
    MM_TASK = "mm-task"
    FF_TASK = "ff-task"
    COOP_SEX = "coop-sex"
    COMP_SEX = "comp-sex"

    @property
    def class_names(self) -> tuple:
        if self in (Task.MM_TASK, Task.FF_TASK):
            return ("coop", "comp")
        return ("MM", "FF")

    def keep(self, sample) -> bool:
        return {
            Task.MM_TASK: sample.sex is SexComp.MM,
            Task.FF_TASK: sample.sex is SexComp.FF,
            Task.COOP_SEX: sample.task is TaskType.COOPERATION,
            Task.COMP_SEX: sample.task is TaskType.COMPETITION,
        }[self]

    def label(self, sample) -> int:
        if self in (Task.MM_TASK, Task.FF_TASK):
            return 0 if sample.task is TaskType.COOPERATION else 1
        return 0 if sample.sex is SexComp.MM else 1


def select(ds: Dataset, task: Task):
    """``(scores, labels, dyad_ids)`` for the samples the task uses."""
    task = Task(task)
    kept = [s for s in ds.samples if task.keep(s)]
    if not kept:
        return np.empty((0, ds.n_channels)), np.empty(0, dtype=int), []
    x = np.stack([s.scores for s in kept])
    y = np.array([task.label(s) for s in kept], dtype=int)
    return x, y, [s.dyad_id for s in kept]


def kfold_split(n: int, k: int = 3, seed: int = 0, strata=None, groups=None) -> list:
    """Partition ``range(n)`` into ``k`` disjoint, sorted index arrays.

    Stratified: each stratum is shuffled and dealt round-robin, continuing the
    dealer position across strata, so both overall and per-stratum fold
    counts differ by at most one. With ``groups`` whole groups go to one fold
    (largest first, into the currently smallest fold) and the balance
    guarantees no longer hold.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if n < k:
        raise TooFewSamples(f"{n} samples cannot fill {k} folds")
    rng = np.random.default_rng(seed)

    if groups is not None:
        groups = list(groups)
        if len(groups) != n:
            raise LengthMismatch("groups length differs from n")
        uniq = sorted(set(groups))
        if len(uniq) < k:
            raise TooFewSamples(f"{len(uniq)} groups cannot fill {k} folds")
        members = {g: [] for g in uniq}
        for i, g in enumerate(groups):
            members[g].append(i)
        order = [uniq[i] for i in rng.permutation(len(uniq))]
        order.sort(key=lambda g: -len(members[g]))
        folds = [[] for _ in range(k)]
        for g in order:
            target = min(range(k), key=lambda f: (len(folds[f]), f))
            folds[target].extend(members[g])
        return [np.array(sorted(f), dtype=int) for f in folds]

    if strata is None:
        strata = np.zeros(n, dtype=int)
    strata = np.asarray(strata)
    if strata.shape != (n,):
        raise LengthMismatch("strata length differs from n")
    dealt = []
    for value in np.unique(strata):
        idx = np.flatnonzero(strata == value)
        dealt.extend(idx[rng.permutation(idx.size)])
    dealt = np.asarray(dealt, dtype=int)
    fold_of = np.arange(n) % k
    return [np.sort(dealt[fold_of == f]) for f in range(k)]


def confusion_matrix(preds, labels, n_classes: int = 2) -> np.ndarray:
    """Counts indexed ``[actual][predicted]``."""
    preds = np.asarray(preds, dtype=int)
    labels = np.asarray(labels, dtype=int)
    if preds.shape != labels.shape:
        raise LengthMismatch(f"{preds.size} predictions vs {labels.size} labels")
    cm = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(cm, (labels, preds), 1)
    return cm


@dataclass
class FoldReport:
    fold_index: int
    train_size: int
    test_size: int
    accuracy: float
    confusion: np.ndarray
    loss_history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"fold_index": self.fold_index, "train_size": self.train_size,
                "test_size": self.test_size, "accuracy": self.accuracy,
                "confusion": self.confusion.tolist(), "loss_history": list(self.loss_history)}


@dataclass
class TaskReport:
    task: Task
    arch: Arch
    folds: list
    train_config: TrainConfig
    stratified: bool = True
    grouped_by_dyad: bool = False

    @property
    def confusion(self) -> np.ndarray:
        return sum(f.confusion for f in self.folds)

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean([f.accuracy for f in self.folds]))

    @property
    def pooled_accuracy(self) -> float:
        cm = self.confusion
        return float(np.trace(cm) / cm.sum())

    def to_dict(self) -> dict:
        return {
            "task": self.task.value,
            "arch": self.arch.value,
            "k": len(self.folds),
            "classes": list(self.task.class_names),
            "stratified": self.stratified,
            "grouped_by_dyad": self.grouped_by_dyad,
            "train_config": self.train_config.to_dict(),
            "mean_accuracy": self.mean_accuracy,
            "pooled_accuracy": self.pooled_accuracy,
            "confusion": self.confusion.tolist(),
            "folds": [f.to_dict() for f in self.folds],
        }


def _fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, 1000 + fold]).generate_state(1)[0])


def _as_images(x, net_config: NetConfig):
    return x.reshape((x.shape[0], 1) + net_config.input_hw)


def run_task(ds: Dataset, task: Task | str, arch: Arch | str = Arch.NO_POOLING,
             cfg: TrainConfig | None = None, k: int = 3, stratify: bool = True,
             group_by_dyad: bool = False, net_config: NetConfig | None = None,
             threads: int = 1) -> TaskReport:
    """Train on k-1 folds, test on the held-out one, for every fold."""
    task, arch = Task(task), Arch(arch)
    cfg = cfg or TrainConfig()
    net_config = net_config or NetConfig(input_hw=(ds.n_channels, 1))
    x, y, dyads = select(ds, task)
    counts = np.bincount(y, minlength=2)
    if counts.min() < k:
        raise TooFewSamples(f"{task.value}: class counts {counts.tolist()} < k={k}")
    folds = kfold_split(len(y), k, cfg.seed, strata=y if stratify else None,
                        groups=dyads if group_by_dyad else None)
    images = _as_images(x, net_config)

    def run_fold(f):
        test = folds[f]
        train_idx = np.setdiff1d(np.arange(len(y)), test)
        fold_cfg = replace(cfg, seed=_fold_seed(cfg.seed, f))
        result = build_and_train(arch, images[train_idx], y[train_idx], fold_cfg, net_config)
        preds = result.net.predict(images[test])
        cm = confusion_matrix(preds, y[test])
        return FoldReport(f, int(train_idx.size), int(test.size),
                          float(np.trace(cm) / test.size), cm, result.loss_history)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(run_fold, range(k)))
    else:
        reports = [run_fold(f) for f in range(k)]
    return TaskReport(task, arch, reports, cfg, stratify, group_by_dyad)
