import json

import numpy as np
import pytest

from dyadscan.domain import SexComp, TaskType
from dyadscan.dtw import similarity_samples
from dyadscan.errors import InvalidParams, IoFailure
from dyadscan.preprocess import filter_by_length, preprocess_trials
from dyadscan.synth import (
    HrfParams,
    RtDist,
    SynthSpec,
    cell_key,
    generate_dataset,
    generate_trial,
    generate_trials,
    hrf_kernel,
    parse_cell,
)


def mean_similarity(rho, n_trials=100, seed=0, **kw):
    spec = SynthSpec(n_dyads=n_trials // 10, trials_per_dyad=10, cells=("MM-coop",),
                     coupling={"MM-coop": rho}, seed=seed, **kw)
    scores = np.stack([s.scores for s in similarity_samples(preprocess_trials(
        generate_trials(spec)))])
    per_trial = scores.mean(axis=1)
    return per_trial.mean(), per_trial.std(ddof=1) / np.sqrt(per_trial.size)


class TestHrf:
    def test_peak_in_window(self):
        h = hrf_kernel(fs_hz=10.0)
        assert 50 <= int(np.argmax(h)) <= 60
        assert h.max() == 1.0

    def test_has_undershoot(self):
        h = hrf_kernel()
        assert h.min() < 0
        assert np.argmin(h) > np.argmax(h)

    def test_no_undershoot(self):
        assert np.all(hrf_kernel(HrfParams(undershoot_ratio=0.0)) >= 0)

    def test_sampling_consistency(self):
        a = int(np.argmax(hrf_kernel(fs_hz=10.0)))
        b = int(np.argmax(hrf_kernel(fs_hz=20.0)))
        assert abs(b - 2 * a) <= 1

    def test_invalid(self):
        with pytest.raises(InvalidParams):
            hrf_kernel(duration_s=20.0)
        with pytest.raises(InvalidParams):
            hrf_kernel(HrfParams(peak_delay_s=0.0))
        with pytest.raises(InvalidParams):
            hrf_kernel(fs_hz=0.0)


class TestSpec:
    def test_defaults(self):
        spec = SynthSpec()
        assert spec.fs_hz == 10.0 and spec.n_channels == 18 and spec.trial_len == (50, 60)
        assert set(spec.coupling) == {"MM-coop", "MM-comp", "FF-coop", "FF-comp"}

    @pytest.mark.parametrize("kwargs", [
        {"coupling": {"MM-coop": 1.5}},
        {"noise_sd": -0.1},
        {"trial_len": (40, 60)},
        {"trial_len": (55, 52)},
        {"n_dyads": 0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidParams):
            SynthSpec.from_dict(kwargs)

    def test_unknown_field(self):
        with pytest.raises(InvalidParams):
            SynthSpec.from_dict({"dyads": 3})

    def test_dict_round_trip(self, tmp_path):
        spec = SynthSpec(n_dyads=3, coupling={"MM-coop": 0.9, "MM-comp": 0.1, "FF-coop": 0.5,
                                              "FF-comp": 0.2},
                         hrf=HrfParams(peak_delay_s=5.0), seed=9)
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(spec.to_dict()))
        assert SynthSpec.load(path) == spec

    def test_partial_spec_keeps_defaults(self):
        spec = SynthSpec.from_dict({"coupling": {"FF-comp": 0.1}})
        assert spec.coupling["FF-comp"] == 0.1 and spec.coupling["MM-coop"] == 0.6

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoFailure):
            SynthSpec.load(tmp_path / "none.json")

    def test_cell_keys(self):
        assert cell_key(SexComp.FF, TaskType.COMPETITION) == "FF-comp"
        assert parse_cell("MM-coop") == (SexComp.MM, TaskType.COOPERATION)


class TestGenerate:
    def test_perfect_coupling(self):
        spec = SynthSpec(coupling={"MM-coop": 1.0}, noise_sd=0.0)
        rng = np.random.default_rng(1)
        trials = [generate_trial(spec, "MM-coop", rng, "MM-000", k) for k in range(5)]
        for t in trials:
            np.testing.assert_array_equal(t.a.channels, t.b.channels)
        for s in similarity_samples(preprocess_trials(trials)):
            np.testing.assert_array_equal(s.scores, np.ones(18))

    def test_uncoupled_below_coupled(self):
        low, _ = mean_similarity(0.0)
        high, _ = mean_similarity(1.0)
        assert low < high

    def test_monotone_in_coupling(self):
        prev, prev_se = -np.inf, 0.0
        for rho in (0.0, 0.25, 0.5, 0.75, 1.0):
            mean, se = mean_similarity(rho, seed=3)
            assert mean >= prev - 2 * np.hypot(se, prev_se)
            prev, prev_se = mean, se

    def test_deterministic(self):
        spec = SynthSpec(n_dyads=2, trials_per_dyad=3, seed=5)
        assert generate_trials(spec) == generate_trials(spec)
        other = generate_trials(SynthSpec(n_dyads=2, trials_per_dyad=3, seed=6))
        assert generate_trials(spec) != other

    def test_dyad_streams_are_independent_of_count(self):
        few = generate_trials(SynthSpec(n_dyads=2, trials_per_dyad=2, cells=("FF-comp",)))
        many = generate_trials(SynthSpec(n_dyads=4, trials_per_dyad=2, cells=("FF-comp",)))
        assert few == many[:4]

    def test_structure(self):
        spec = SynthSpec(n_dyads=3, trials_per_dyad=4, seed=2)
        trials = generate_trials(spec)
        assert len(trials) == 48
        assert all(50 <= t.n_samples <= 60 and t.n_channels == 18 for t in trials)
        assert filter_by_length(trials) == trials
        assert {t.dyad_id for t in trials if t.sex_comp is SexComp.FF} == {
            "FF-000", "FF-001", "FF-002"}
        rts = [p.reaction_time_s for t in trials for p in (t.a, t.b)]
        assert min(rts) >= spec.reaction_time["MM-coop"].min_s

    def test_reaction_time_floor(self):
        spec = SynthSpec(reaction_time={"MM-coop": RtDist(0.0, 0.01, 0.2)},
                         cells=("MM-coop",), n_dyads=1)
        assert all(t.a.reaction_time_s == 0.2 for t in generate_trials(spec))

    def test_dataset_counts(self):
        raw, ds = generate_dataset(SynthSpec(n_dyads=10, trials_per_dyad=10, seed=1))
        assert len(raw) == 400 and len(ds) == 400
        assert ds.seed == 1 and ds.n_channels == 18
        cells = {(s.sex, s.task) for s in ds.samples}
        assert len(cells) == 4
