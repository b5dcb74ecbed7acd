"""Synthetic dyad trials with a tunable amount of inter-brain coupling.

Each participant's channel is a mix ``rho * shared + (1 - rho) * private``
where both parts are HRF-convolved event trains plus white noise. The
shared part is common to the dyad, so ``rho`` directly controls how similar
the two participants look after preprocessing.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal

from .domain import Dataset, DyadTrial, Participant, Provenance, SexComp, TaskType, TrialSeries
from .errors import InvalidParams, IoFailure

CELLS = [(SexComp.MM, TaskType.COOPERATION), (SexComp.MM, TaskType.COMPETITION),
         (SexComp.FF, TaskType.COOPERATION), (SexComp.FF, TaskType.COMPETITION)]


def cell_key(sex, task) -> str:
    return f"{SexComp(sex).value}-{TaskType(task).value}"


def parse_cell(key: str):
    sex, task = key.split("-")
    return SexComp(sex), TaskType(task)


@dataclass(frozen=True)
class HrfParams:
    """Glover-style double gamma; ``peak_delay_s`` is where the positive lobe peaks."""

    peak_delay_s: float = 5.5
    undershoot_delay_s: float = 12.0
    peak_dispersion: float = 0.9
    undershoot_dispersion: float = 0.9
    undershoot_ratio: float = 1 / 6

    def validate(self):
        if min(self.peak_delay_s, self.undershoot_delay_s,
               self.peak_dispersion, self.undershoot_dispersion) <= 0:
            raise InvalidParams("HRF delays and dispersions must be positive")
        if self.undershoot_ratio < 0:
            raise InvalidParams("undershoot_ratio must be non-negative")


def hrf_kernel(params: HrfParams | None = None, fs_hz: float = 10.0,
               duration_s: float = 30.0) -> np.ndarray:
    """Sampled HRF starting at t = 0, scaled so its maximum is 1."""
    p = params or HrfParams()
    p.validate()
    if fs_hz <= 0:
        raise InvalidParams("fs_hz must be positive")
    if duration_s < 25 or duration_s < p.undershoot_delay_s + 4 * p.undershoot_dispersion:
        raise InvalidParams("duration must cover the undershoot (>= 25 s)")
    t = np.arange(int(round(duration_s * fs_hz)) + 1) / fs_hz

    def lobe(delay, disp):
        shape = delay / disp
        return (t / delay) ** shape * np.exp(-(t - delay) / disp)

    h = lobe(p.peak_delay_s, p.peak_dispersion) - p.undershoot_ratio * lobe(
        p.undershoot_delay_s, p.undershoot_dispersion)
    return h / h.max()


@dataclass(frozen=True)
class RtDist:
    """Per-participant button-press latency ~ N(mean, sd), floored at ``min_s``."""

    mean_s: float = 0.45
    sd_s: float = 0.12
    min_s: float = 0.1


def _default_coupling():
    return {"MM-coop": 0.6, "MM-comp": 0.6, "FF-coop": 0.6, "FF-comp": 0.6}


def _default_rt():
    return {"MM-coop": RtDist(0.45, 0.10), "MM-comp": RtDist(0.45, 0.14),
            "FF-coop": RtDist(0.47, 0.12), "FF-comp": RtDist(0.47, 0.13)}


@dataclass(frozen=True)
class SynthSpec:
    n_dyads: int = 10
    trials_per_dyad: int = 10
    fs_hz: float = 10.0
    trial_len: tuple = (50, 60)
    n_channels: int = 18
    coupling: dict = field(default_factory=_default_coupling)
    noise_sd: float = 0.3
    event_rate_hz: float = 0.1
    burn_in_s: float = 30.0
    hrf: HrfParams = field(default_factory=HrfParams)
    reaction_time: dict = field(default_factory=_default_rt)
    cells: tuple = tuple(cell_key(s, t) for s, t in CELLS)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "trial_len", tuple(int(v) for v in self.trial_len))
        object.__setattr__(self, "cells", tuple(self.cells))
        # partial maps only override the cells they name
        object.__setattr__(self, "coupling", {**_default_coupling(), **self.coupling})
        object.__setattr__(self, "reaction_time", {**_default_rt(), **self.reaction_time})
        lo, hi = self.trial_len
        if not (50 <= lo <= hi <= 60):
            raise InvalidParams("trial_len range must lie within [50, 60]")
        if self.noise_sd < 0 or self.event_rate_hz < 0:
            raise InvalidParams("noise_sd and event_rate_hz must be non-negative")
        if self.n_dyads < 1 or self.trials_per_dyad < 1 or self.n_channels < 1:
            raise InvalidParams("counts must be positive")
        for key in self.cells:
            parse_cell(key)
            rho = self.coupling.get(key)
            if rho is None or not 0 <= rho <= 1:
                raise InvalidParams(f"coupling for {key} must be in [0, 1]")
            if key not in self.reaction_time:
                raise InvalidParams(f"missing reaction-time distribution for {key}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["trial_len"] = list(self.trial_len)
        d["cells"] = list(self.cells)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        if "hrf" in d:
            d["hrf"] = HrfParams(**d["hrf"])
        if "reaction_time" in d:
            d["reaction_time"] = {k: RtDist(**v) for k, v in d["reaction_time"].items()}
        if "coupling" in d:
            d["coupling"] = {k: float(v) for k, v in d["coupling"].items()}
        try:
            return cls(**d)
        except TypeError as exc:
            raise InvalidParams(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "SynthSpec":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise IoFailure(f"cannot read synth spec {path}: {exc}") from exc


def _component(rng, spec: SynthSpec, hrf, length: int, burn: int) -> np.ndarray:
    """HRF-convolved events plus white noise, ``n_channels x length``.

    Every channel gets a cue event at trial onset and Poisson background events.
    """
    total = burn + length
    events = np.zeros((spec.n_channels, total))
    events[:, burn] = rng.normal(1.0, 0.3, size=spec.n_channels)
    n_bg = rng.poisson(spec.event_rate_hz * total / spec.fs_hz, size=spec.n_channels)
    rows = np.repeat(np.arange(spec.n_channels), n_bg)
    cols = rng.integers(0, total, size=rows.size)
    np.add.at(events, (rows, cols), rng.normal(0.0, 1.0, size=rows.size))
    bold = signal.fftconvolve(events, hrf[None, :], axes=1)[:, :total]
    noise = rng.normal(0.0, spec.noise_sd, size=(spec.n_channels, total))
    return (bold + noise)[:, burn:]


def generate_trial(spec: SynthSpec, cell, rng: np.random.Generator,
                   dyad_id: str = "dyad", index: int = 0) -> DyadTrial:
    if isinstance(cell, str):
        cell = parse_cell(cell)
    sex, task = SexComp(cell[0]), TaskType(cell[1])
    key = cell_key(sex, task)
    rho = spec.coupling[key]
    hrf = hrf_kernel(spec.hrf, spec.fs_hz, max(30.0, spec.hrf.undershoot_delay_s * 2.5))
    length = int(rng.integers(spec.trial_len[0], spec.trial_len[1] + 1))
    burn = int(round(spec.burn_in_s * spec.fs_hz))
    shared = _component(rng, spec, hrf, length, burn)
    rt = spec.reaction_time[key]
    series = []
    for p in (Participant.A, Participant.B):
        private = _component(rng, spec, hrf, length, burn)
        x = rho * shared + (1.0 - rho) * private
        rt_s = float(max(rt.min_s, rng.normal(rt.mean_s, rt.sd_s)))
        series.append(TrialSeries(dyad_id, p, sex, task, x, spec.fs_hz, rt_s))
    return DyadTrial(series[0], series[1], index)


def generate_trials(spec: SynthSpec) -> list:
    """All trials, ordered by cell, dyad, trial; each (dyad, task) has its own RNG stream."""
    out = []
    for key in spec.cells:
        sex, task = parse_cell(key)
        sex_i = [SexComp.MM, SexComp.FF].index(sex)
        task_i = [TaskType.COOPERATION, TaskType.COMPETITION].index(task)
        for d in range(spec.n_dyads):
            rng = np.random.default_rng(np.random.SeedSequence([spec.seed, sex_i, d, task_i]))
            dyad_id = f"{sex.value}-{d:03d}"
            for k in range(spec.trials_per_dyad):
                out.append(generate_trial(spec, (sex, task), rng, dyad_id, k))
    return out


def generate_dataset(spec: SynthSpec, preprocess_cfg=None, window: int | None = None,
                     normalize_path: bool = False):
    """Generate trials and push them through preprocessing and DTW scoring.

    Returns ``(raw_trials, dataset)``.
    """
    from .dtw import similarity_samples
    from .preprocess import preprocess_trials

    trials = generate_trials(spec)
    clean = preprocess_trials(trials, preprocess_cfg)
    samples = similarity_samples(clean, window, normalize_path)
    return trials, Dataset(tuple(samples), Provenance.SYNTHETIC, spec.seed)
