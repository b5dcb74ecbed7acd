import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_sample
from dyadscan.domain import Dataset, SexComp, TaskType
from dyadscan.errors import LengthMismatch, TooFewSamples
from dyadscan.evaluation import Task, confusion_matrix, kfold_split, run_task, select
from dyadscan.nn import Arch, TrainConfig
from dyadscan.synth import SynthSpec, generate_dataset

CELLS = [("MM", "coop"), ("MM", "comp"), ("FF", "coop"), ("FF", "comp")]


def random_dataset(rng, n_per_cell=30, c=18, n_dyads=6):
    samples = []
    for sex, task in CELLS:
        for k in range(n_per_cell):
            samples.append(make_sample(rng.uniform(0.05, 1.0, size=c), sex, task,
                                       f"{sex}-{k % n_dyads:03d}"))
    return Dataset(tuple(samples))


def planted_dataset(rng, n_per_cell=40, column=5):
    """coop-sex labels (MM=0, FF=1) written into one score column."""
    samples = []
    for sex, task in CELLS:
        for k in range(n_per_cell):
            s = rng.uniform(0.2, 0.8, size=18)
            s[column] = 0.9 if sex == "FF" else 0.1
            samples.append(make_sample(s, sex, task, f"{sex}-{k % 8:03d}"))
    return Dataset(tuple(samples))


class TestTask:
    def test_filters_and_labels(self, rng):
        ds = random_dataset(rng, n_per_cell=5)
        expect = {
            Task.MM_TASK: ({"MM"}, lambda s: int(s.task is TaskType.COMPETITION)),
            Task.FF_TASK: ({"FF"}, lambda s: int(s.task is TaskType.COMPETITION)),
            Task.COOP_SEX: ({"MM", "FF"}, lambda s: int(s.sex is SexComp.FF)),
            Task.COMP_SEX: ({"MM", "FF"}, lambda s: int(s.sex is SexComp.FF)),
        }
        for task, (sexes, label) in expect.items():
            kept = [s for s in ds.samples if task.keep(s)]
            assert len(kept) == 10
            assert {s.sex.value for s in kept} <= sexes
            if task in (Task.COOP_SEX, Task.COMP_SEX):
                want = TaskType.COOPERATION if task is Task.COOP_SEX else TaskType.COMPETITION
                assert all(s.task is want for s in kept)
            x, y, dyads = select(ds, task)
            assert x.shape == (10, 18) and len(dyads) == 10
            np.testing.assert_array_equal(y, [label(s) for s in kept])

    def test_class_names(self):
        assert Task.MM_TASK.class_names == ("coop", "comp")
        assert Task.COMP_SEX.class_names == ("MM", "FF")


class TestKFold:
    def test_balanced_nine(self):
        labels = np.array([0, 1] * 4 + [0])
        folds = kfold_split(9, 3, seed=0, strata=labels)
        assert [f.size for f in folds] == [3, 3, 3]
        for f in folds:
            assert set(labels[f]) == {0, 1}

    def test_remainder(self):
        assert sorted(f.size for f in kfold_split(10, 3, seed=1)) == [3, 3, 4]

    def test_deterministic(self):
        a = kfold_split(50, 3, seed=9, strata=np.arange(50) % 3)
        b = kfold_split(50, 3, seed=9, strata=np.arange(50) % 3)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
        c = kfold_split(50, 3, seed=10, strata=np.arange(50) % 3)
        assert not all(np.array_equal(x, y) for x, y in zip(a, c))

    @settings(max_examples=100, deadline=None)
    @given(st.integers(3, 200), st.integers(2, 5), st.integers(0, 2**31), st.data())
    def test_partition_and_balance(self, n, k, seed, data):
        if n < k:
            return
        strata = np.array(data.draw(st.lists(st.integers(0, 2), min_size=n, max_size=n)))
        folds = kfold_split(n, k, seed, strata)
        union = np.concatenate(folds)
        assert np.array_equal(np.sort(union), np.arange(n))
        sizes = [f.size for f in folds]
        assert max(sizes) - min(sizes) <= 1
        for value in np.unique(strata):
            counts = [int(np.sum(strata[f] == value)) for f in folds]
            assert max(counts) - min(counts) <= 1

    def test_groups_never_split(self, rng):
        groups = [f"d{g}" for g in rng.integers(0, 12, size=90)]
        folds = kfold_split(90, 3, seed=2, groups=groups)
        assert np.array_equal(np.sort(np.concatenate(folds)), np.arange(90))
        owner = {}
        for f, idx in enumerate(folds):
            for i in idx:
                assert owner.setdefault(groups[i], f) == f

    def test_errors(self):
        with pytest.raises(TooFewSamples):
            kfold_split(2, 3)
        with pytest.raises(TooFewSamples):
            kfold_split(6, 3, groups=["a", "a", "a", "b", "b", "b"])
        with pytest.raises(LengthMismatch):
            kfold_split(6, 3, strata=[0, 1])
        with pytest.raises(ValueError):
            kfold_split(6, 1)


class TestConfusion:
    def test_perfect(self):
        y = np.array([0, 1, 1, 0, 1])
        cm = confusion_matrix(y, y)
        assert cm[0, 1] == cm[1, 0] == 0 and cm.trace() == 5

    def test_inverted(self):
        y = np.array([0, 1, 1, 0, 1])
        cm = confusion_matrix(1 - y, y)
        assert cm[0, 0] == cm[1, 1] == 0 and cm.sum() == 5

    def test_hand_counted(self):
        labels = [0, 0, 0, 1, 1, 1]
        preds = [0, 1, 0, 1, 0, 1]
        # actual 0: predicted 0 twice, 1 once; actual 1: predicted 0 once, 1 twice
        np.testing.assert_array_equal(confusion_matrix(preds, labels), [[2, 1], [1, 2]])

    def test_orientation(self):
        np.testing.assert_array_equal(confusion_matrix([1], [0]), [[0, 1], [0, 0]])

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            confusion_matrix([0, 1], [0])


class TestRunTask:
    def test_planted_column(self, rng):
        rep = run_task(planted_dataset(rng), Task.COOP_SEX, Arch.NO_POOLING, TrainConfig(seed=3))
        assert rep.mean_accuracy == 1.0
        assert len(rep.folds) == 3

    def test_reports_are_consistent(self, rng):
        ds = random_dataset(rng)
        rep = run_task(ds, Task.MM_TASK, Arch.WITH_POOLING, TrainConfig(epochs=2, seed=1))
        assert rep.confusion.sum() == 60
        for f in rep.folds:
            assert f.confusion.sum() == f.test_size
            assert f.accuracy == np.trace(f.confusion) / f.test_size
            assert f.train_size + f.test_size == 60
            assert len(f.loss_history) == 2
        assert rep.pooled_accuracy == np.trace(rep.confusion) / 60
        d = rep.to_dict()
        assert d["task"] == "mm-task" and d["arch"] == "pool" and len(d["folds"]) == 3

    def test_shuffled_labels_near_chance(self):
        rng = np.random.default_rng(5)
        samples = [make_sample(rng.uniform(0.05, 1.0, size=18), rng.choice(["MM", "FF"]),
                               "coop", f"d{k}") for k in range(300)]
        rep = run_task(Dataset(tuple(samples)), Task.COOP_SEX, Arch.NO_POOLING,
                       TrainConfig(seed=5))
        assert 0.40 <= rep.mean_accuracy <= 0.60

    def test_deterministic_and_thread_independent(self, rng):
        ds = random_dataset(rng)
        cfg = TrainConfig(epochs=2, seed=4)
        a = run_task(ds, Task.FF_TASK, Arch.NO_POOLING, cfg)
        b = run_task(ds, Task.FF_TASK, Arch.NO_POOLING, cfg, threads=3)
        assert a.to_dict() == b.to_dict()

    def test_grouped_and_unstratified(self, rng):
        ds = random_dataset(rng)
        rep = run_task(ds, Task.COMP_SEX, Arch.NO_POOLING, TrainConfig(epochs=1),
                       group_by_dyad=True)
        assert rep.confusion.sum() == 60 and rep.grouped_by_dyad
        rep = run_task(ds, Task.COMP_SEX, Arch.NO_POOLING, TrainConfig(epochs=1), stratify=False)
        assert rep.confusion.sum() == 60 and not rep.stratified

    def test_too_few_per_class(self, rng):
        samples = [make_sample(np.full(18, 0.5), "MM", "coop")] * 5 + \
                  [make_sample(np.full(18, 0.5), "FF", "coop")] * 2
        with pytest.raises(TooFewSamples):
            run_task(Dataset(tuple(samples)), Task.COOP_SEX)

    def test_table_one_scale(self):
        rng = np.random.default_rng(0)
        counts = {("MM", "coop"): 797, ("MM", "comp"): 797, ("FF", "coop"): 797,
                  ("FF", "comp"): 797}
        samples = [make_sample(rng.uniform(0.05, 1.0, size=18), s, t, f"{s}-{k % 20:03d}")
                   for (s, t), n in counts.items() for k in range(n)]
        ds = Dataset(tuple(samples))
        assert len(ds) == 3188
        rep = run_task(ds, Task.MM_TASK, Arch.NO_POOLING, TrainConfig(epochs=1))
        assert len(rep.folds) == 3 and rep.confusion.sum() == 1594


@pytest.mark.slow
@pytest.mark.parametrize("arch", list(Arch))
def test_planted_coupling_gap(arch):
    spec = SynthSpec(n_dyads=20, coupling={"MM-coop": 0.9, "FF-coop": 0.4},
                     cells=("MM-coop", "FF-coop"), seed=7)
    _, ds = generate_dataset(spec)
    assert len(ds) == 400
    rep = run_task(ds, Task.COOP_SEX, arch, TrainConfig(seed=7))
    assert rep.mean_accuracy >= 0.90
