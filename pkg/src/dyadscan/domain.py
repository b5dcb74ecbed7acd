"""Core data model and dataset file IO.

Two on-disk formats live here:

* similarity datasets (JSON Lines, canonical; CSV for spreadsheets), one
  :class:`SimilaritySample` per record;
* trial files (JSON Lines), one :class:`DyadTrial` per record, carrying either
  HbO channels or raw two-wavelength optical density.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyDataset,
    InconsistentChannelCount,
    IoFailure,
    MalformedRecord,
)

PAPER_CHANNELS = 18
DEFAULT_FS_HZ = 10.0


class Participant(str, enum.Enum):
    A = "A"
    B = "B"


class SexComp(str, enum.Enum):
    MM = "MM"
    FF = "FF"


class TaskType(str, enum.Enum):
    COOPERATION = "coop"
    COMPETITION = "comp"


class Provenance(str, enum.Enum):
    REAL = "real"
    SYNTHETIC = "synthetic"


class FileFormat(str, enum.Enum):
    JSONL = "jsonl"
    CSV = "csv"


def _fmt(x: float) -> str:
    # 17 significant digits round-trips every double exactly
    return format(float(x), ".17g")


@dataclass(frozen=True, eq=False)
class TrialSeries:
    """One participant's HbO channels (C rows x T samples) for one trial."""

    dyad_id: str
    participant: Participant
    sex_comp: SexComp
    task: TaskType
    channels: np.ndarray
    fs_hz: float = DEFAULT_FS_HZ
    reaction_time_s: float | None = None

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=np.float64)
        if ch.ndim == 1:
            ch = ch[None, :]
        if ch.ndim != 2 or ch.shape[1] < 1 or ch.shape[0] < 1:
            raise ValueError(f"channels must be a non-empty C x T matrix, got shape {ch.shape}")
        if not self.fs_hz > 0:
            raise ValueError("fs_hz must be positive")
        ch.setflags(write=False)
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "participant", Participant(self.participant))
        object.__setattr__(self, "sex_comp", SexComp(self.sex_comp))
        object.__setattr__(self, "task", TaskType(self.task))

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]

    @property
    def conformant(self) -> bool:
        return self.n_channels == PAPER_CHANNELS

    def with_channels(self, channels) -> "TrialSeries":
        return TrialSeries(
            self.dyad_id, self.participant, self.sex_comp, self.task,
            channels, self.fs_hz, self.reaction_time_s,
        )

    def __eq__(self, other):
        if not isinstance(other, TrialSeries):
            return NotImplemented
        return (
            self.dyad_id == other.dyad_id
            and self.participant == other.participant
            and self.sex_comp == other.sex_comp
            and self.task == other.task
            and self.fs_hz == other.fs_hz
            and self.reaction_time_s == other.reaction_time_s
            and np.array_equal(self.channels, other.channels)
        )


@dataclass(frozen=True, eq=False)
class DyadTrial:
    a: TrialSeries
    b: TrialSeries
    index: int = 0

    def __post_init__(self):
        a, b = self.a, self.b
        if a.dyad_id != b.dyad_id:
            raise ValueError("participants belong to different dyads")
        if a.task != b.task or a.sex_comp != b.sex_comp:
            raise ValueError("participants disagree on task or sex composition")
        if a.n_channels != b.n_channels or a.fs_hz != b.fs_hz:
            raise ValueError("participants disagree on channel count or sampling rate")

    @property
    def dyad_id(self) -> str:
        return self.a.dyad_id

    @property
    def sex_comp(self) -> SexComp:
        return self.a.sex_comp

    @property
    def task(self) -> TaskType:
        return self.a.task

    @property
    def fs_hz(self) -> float:
        return self.a.fs_hz

    @property
    def n_channels(self) -> int:
        return self.a.n_channels

    @property
    def n_samples(self) -> int:
        """Trial length; the shorter participant if they differ."""
        return min(self.a.n_samples, self.b.n_samples)

    def map_channels(self, fn) -> "DyadTrial":
        """Apply ``fn`` to both participants' channel matrices."""
        return DyadTrial(self.a.with_channels(fn(self.a.channels)),
                         self.b.with_channels(fn(self.b.channels)), self.index)

    def __eq__(self, other):
        if not isinstance(other, DyadTrial):
            return NotImplemented
        return self.a == other.a and self.b == other.b and self.index == other.index


@dataclass(frozen=True, eq=False)
class SimilaritySample:
    scores: np.ndarray
    sex: SexComp
    task: TaskType
    dyad_id: str

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64).ravel()
        if s.size == 0:
            raise ValueError("scores must be non-empty")
        if not np.all((s > 0) & (s <= 1)):
            raise ValueError("every score must lie in (0, 1]")
        s.setflags(write=False)
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "sex", SexComp(self.sex))
        object.__setattr__(self, "task", TaskType(self.task))
        object.__setattr__(self, "dyad_id", str(self.dyad_id))

    def __eq__(self, other):
        if not isinstance(other, SimilaritySample):
            return NotImplemented
        return (
            self.sex == other.sex
            and self.task == other.task
            and self.dyad_id == other.dyad_id
            and self.scores.shape == other.scores.shape
            # bit-for-bit, not numeric equality
            and self.scores.tobytes() == other.scores.tobytes()
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    samples: tuple
    provenance: Provenance = Provenance.SYNTHETIC
    seed: int | None = None

    def __post_init__(self):
        samples = tuple(self.samples)
        if samples:
            c = samples[0].scores.size
            for s in samples:
                if s.scores.size != c:
                    raise InconsistentChannelCount(
                        f"mixed channel counts: {c} and {s.scores.size}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "provenance", Provenance(self.provenance))

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.samples == other.samples

    @property
    def n_channels(self) -> int:
        if not self.samples:
            raise EmptyDataset("dataset has no samples")
        return self.samples[0].scores.size

    def scores_matrix(self) -> np.ndarray:
        return np.stack([s.scores for s in self.samples])


# ----------------------------------------------------------------------------
# Similarity dataset IO

def _score_columns(c: int) -> list[str]:
    return [f"s{i:02d}" for i in range(1, c + 1)]


def _record_to_sample(rec: dict, line: int) -> SimilaritySample:
    try:
        scores = [float(v) for v in rec["scores"]]
        if not all(math.isfinite(v) for v in scores):
            raise ValueError("non-finite score")
        return SimilaritySample(scores, rec["sex"], rec["task"], str(rec["dyad_id"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedRecord(line, str(exc) or type(exc).__name__) from exc


def _collect(samples: list, seed, provenance) -> Dataset:
    if not samples:
        raise EmptyDataset("dataset file contains no records")
    return Dataset(tuple(samples), provenance=provenance, seed=seed)


def load_dataset(path, format: FileFormat | str = FileFormat.JSONL,
                 provenance: Provenance | str = Provenance.SYNTHETIC) -> Dataset:
    """Read a similarity dataset; every record is validated, nothing partial is returned."""
    fmt = FileFormat(format)
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    samples = []
    if fmt is FileFormat.JSONL:
        for lineno, line in enumerate(text.split("\n"), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(lineno, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(rec, dict):
                raise MalformedRecord(lineno, "record is not an object")
            samples.append(_record_to_sample(rec, lineno))
    else:
        rows = list(csv.reader(text.splitlines()))
        if not rows:
            raise EmptyDataset("dataset file contains no records")
        header = rows[0]
        if header[:3] != ["dyad_id", "sex", "task"] or len(header) < 4:
            raise MalformedRecord(1, "bad CSV header")
        for lineno, row in enumerate(rows[1:], start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise MalformedRecord(lineno, f"expected {len(header)} fields, got {len(row)}")
            samples.append(_record_to_sample(
                {"dyad_id": row[0], "sex": row[1], "task": row[2], "scores": row[3:]}, lineno))
    return _collect(samples, None, provenance)


def save_dataset(ds: Dataset, path, format: FileFormat | str = FileFormat.JSONL) -> None:
    fmt = FileFormat(format)
    path = Path(path)
    lines = []
    if fmt is FileFormat.JSONL:
        for s in ds.samples:
            scores = ", ".join(_fmt(v) for v in s.scores)
            lines.append(
                f'{{"dyad_id": {json.dumps(s.dyad_id)}, "sex": "{s.sex.value}", '
                f'"task": "{s.task.value}", "scores": [{scores}]}}')
    else:
        c = ds.n_channels if ds.samples else PAPER_CHANNELS
        lines.append(",".join(["dyad_id", "sex", "task"] + _score_columns(c)))
        for s in ds.samples:
            if any(ch in s.dyad_id for ch in ',"\n\r'):
                raise MalformedRecord(0, f"dyad_id {s.dyad_id!r} not representable in CSV")
            lines.append(",".join([s.dyad_id, s.sex.value, s.task.value]
                                  + [_fmt(v) for v in s.scores]))
    _write_text(path, "\n".join(lines) + "\n")


def _write_text(path: Path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# ----------------------------------------------------------------------------
# Trial IO
#
# {"dyad_id": str, "sex": "MM"|"FF", "task": "coop"|"comp", "index": int,
#  "fs_hz": float,
#  "a": {"rt": float|null, "hbo": [[T floats] x C]},
#  "b": {...}}
# A participant may carry "od": [[[T floats] x 2 wavelengths] x C] instead of
# "hbo"; such raw records must go through preprocessing first.

@dataclass(frozen=True, eq=False)
class RawParticipant:
    od: np.ndarray  # C x 2 x T optical density changes
    rt: float | None = None

    @property
    def reaction_time_s(self):
        return self.rt


@dataclass(frozen=True, eq=False)
class RawTrial:
    dyad_id: str
    sex: SexComp
    task: TaskType
    a: RawParticipant
    b: RawParticipant
    fs_hz: float = DEFAULT_FS_HZ
    index: int = 0

    @property
    def sex_comp(self) -> SexComp:
        return self.sex


def _series_to_json(ts: TrialSeries) -> dict:
    return {"rt": ts.reaction_time_s, "hbo": ts.channels.tolist()}


def trial_to_record(trial: DyadTrial) -> dict:
    return {
        "dyad_id": trial.dyad_id,
        "sex": trial.sex_comp.value,
        "task": trial.task.value,
        "index": trial.index,
        "fs_hz": trial.fs_hz,
        "a": _series_to_json(trial.a),
        "b": _series_to_json(trial.b),
    }


def _opt_float(v):
    return None if v is None else float(v)


def record_to_trial(rec: dict, line: int = 0) -> DyadTrial | RawTrial:
    try:
        fs = float(rec.get("fs_hz", DEFAULT_FS_HZ))
        common = dict(dyad_id=str(rec["dyad_id"]), sex=SexComp(rec["sex"]),
                      task=TaskType(rec["task"]))
        index = int(rec.get("index", 0))
        if "od" in rec["a"]:
            parts = [RawParticipant(np.asarray(rec[p]["od"], dtype=np.float64),
                                    _opt_float(rec[p].get("rt"))) for p in ("a", "b")]
            for p in parts:
                if p.od.ndim != 3 or p.od.shape[1] != 2:
                    raise ValueError("od must be C x 2 x T")
            return RawTrial(common["dyad_id"], common["sex"], common["task"],
                            parts[0], parts[1], fs, index)
        series = []
        for p in ("a", "b"):
            ch = np.asarray(rec[p]["hbo"], dtype=np.float64)
            if not np.all(np.isfinite(ch)):
                raise ValueError("non-finite HbO sample")
            series.append(TrialSeries(common["dyad_id"], Participant(p.upper()), common["sex"],
                                      common["task"], ch, fs, _opt_float(rec[p].get("rt"))))
        return DyadTrial(series[0], series[1], index)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedRecord(line, str(exc) or type(exc).__name__) from exc


def load_trials(path) -> list:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    out = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(lineno, f"invalid JSON: {exc.msg}") from exc
        out.append(record_to_trial(rec, lineno))
    if not out:
        raise EmptyDataset(f"{path} contains no trials")
    return out


def save_trials(trials: Iterable[DyadTrial], path) -> None:
    lines = [json.dumps(trial_to_record(t)) for t in trials]
    _write_text(Path(path), "".join(line + "\n" for line in lines))


def group_by(samples: Sequence, key) -> dict:
    out: dict = {}
    for s in samples:
        out.setdefault(key(s), []).append(s)
    return out
