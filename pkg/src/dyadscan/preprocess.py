"""Trial cleaning: optical density -> HbO, band limiting, length gating,
trimming and per-channel unit normalisation."""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy import signal

from .domain import DyadTrial, Participant, RawTrial, TrialSeries
from .errors import InvalidBand, InvalidParams, SeriesTooShort, SingularExtinction, ZeroChannel

# (mM*cm)^-1 -> (uM*mm)^-1
_MM_CM_TO_UM_MM = 1e-4


def _default_extinction():
    # rows: 690 nm, 830 nm; columns: HbO, HbR
    return ((0.350 * _MM_CM_TO_UM_MM, 2.100 * _MM_CM_TO_UM_MM),
            (1.058 * _MM_CM_TO_UM_MM, 0.740 * _MM_CM_TO_UM_MM))


@dataclass(frozen=True)
class MbllConfig:
    wavelengths_nm: tuple = (690.0, 830.0)
    extinction: tuple = field(default_factory=_default_extinction)
    dpf: tuple = (6.0, 6.0)
    distance_mm: float = 30.0

    def __post_init__(self):
        if min(self.dpf) <= 0 or self.distance_mm <= 0:
            raise InvalidParams("dpf and distance_mm must be positive")
        if abs(np.linalg.det(np.asarray(self.extinction, dtype=np.float64))) <= 1e-12:
            raise SingularExtinction("extinction matrix is (near) singular")

    def system_matrix(self) -> np.ndarray:
        """Maps (dHbO, dHbR) in uM to dOD at each wavelength."""
        eps = np.asarray(self.extinction, dtype=np.float64)
        path = self.distance_mm * np.asarray(self.dpf, dtype=np.float64)
        return eps * path[:, None]


@dataclass(frozen=True)
class BandpassConfig:
    low_hz: float = 0.01
    high_hz: float = 0.5
    order: int = 3
    zero_phase: bool = True

    def validate(self, fs_hz: float) -> None:
        if not (0 < self.low_hz < self.high_hz < fs_hz / 2):
            raise InvalidBand(
                f"need 0 < low ({self.low_hz}) < high ({self.high_hz}) < fs/2 ({fs_hz / 2})")
        if self.order < 1:
            raise InvalidBand("filter order must be >= 1")


def mbll_convert(od, cfg: MbllConfig | None = None):
    """Modified Beer-Lambert conversion of a 2 x T optical-density block.

    Returns ``(hbo, hbr)`` in uM.
    """
    cfg = cfg or MbllConfig()
    od = np.asarray(od, dtype=np.float64)
    if od.ndim != 2 or od.shape[0] != 2:
        raise ValueError(f"od must be 2 x T, got {od.shape}")
    if not np.all(np.isfinite(od)):
        raise ValueError("od contains non-finite values")
    m = cfg.system_matrix()
    if abs(np.linalg.det(m)) <= 1e-12 * max(1.0, np.abs(m).max() ** 2):
        raise SingularExtinction("system matrix is (near) singular")
    conc = np.linalg.solve(m, od)
    return conc[0], conc[1]


def mbll_forward(hbo, hbr, cfg: MbllConfig | None = None) -> np.ndarray:
    cfg = cfg or MbllConfig()
    return cfg.system_matrix() @ np.vstack([hbo, hbr])


@functools.lru_cache(maxsize=32)
def _design(fs_hz: float, cfg: BandpassConfig):
    cfg.validate(fs_hz)
    sos = signal.butter(cfg.order, [cfg.low_hz, cfg.high_hz], btype="bandpass",
                        fs=fs_hz, output="sos")
    return sos, signal.sosfilt_zi(sos)


def _run(sos, zi, x):
    # each row starts in the steady state for a constant input equal to its first sample
    y, _ = signal.sosfilt(sos, x, axis=-1, zi=zi[:, None, :] * x[None, :, :1])
    return y


def bandpass_rows(rows, fs_hz: float, cfg: BandpassConfig | None = None) -> np.ndarray:
    """:func:`bandpass` applied independently to every row of a matrix."""
    cfg = cfg or BandpassConfig()
    x = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if x.shape[1] < 3 * (cfg.order + 1):
        raise SeriesTooShort(f"need at least {3 * (cfg.order + 1)} samples, got {x.shape[1]}")
    sos, zi = _design(float(fs_hz), cfg)
    y = _run(sos, zi, x)
    if cfg.zero_phase:
        y = _run(sos, zi, y[:, ::-1])[:, ::-1]
    return np.ascontiguousarray(y)


def bandpass(series, fs_hz: float, cfg: BandpassConfig | None = None) -> np.ndarray:
    """Butterworth band-pass (bilinear-transform design).

    With ``zero_phase`` the filter runs forward, then over the reversed
    output, so the net phase is zero and the magnitude response is squared.
    No edge padding is used: the 0.01 Hz pole makes padded transients decay
    far slower than a trial lasts.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("bandpass expects a 1-D series")
    return bandpass_rows(x[None, :], fs_hz, cfg)[0]


def filter_by_length(trials: Iterable[DyadTrial], min_t: int = 50, max_t: int = 60) -> list:
    """Keep trials whose length lies in ``[min_t, max_t]`` (both ends kept)."""
    return [t for t in trials if min_t <= t.n_samples <= max_t]


def trim_last_n(trial: DyadTrial, n: int = 50) -> DyadTrial:
    if trial.n_samples < n:
        raise SeriesTooShort(f"trial has {trial.n_samples} samples, need {n}")
    return trial.map_channels(lambda ch: ch[:, ch.shape[1] - n:])


def _unit_rows(ch: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(ch, axis=1)
    if np.any(norms == 0):
        raise ZeroChannel(f"channel(s) {np.flatnonzero(norms == 0).tolist()} are identically zero")
    return ch / norms[:, None]


def unit_norm(trial: DyadTrial) -> DyadTrial:
    return trial.map_channels(_unit_rows)


def clamp_artifacts(series, k_mad: float = 8.0) -> np.ndarray:
    """Clip samples further than ``k_mad`` MADs from the median.

    Crude stand-in for wavelet motion correction; MAD == 0 is a no-op.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.size < 5:
        raise SeriesTooShort("clamp_artifacts needs at least 5 samples")
    med = np.median(x)
    mad = np.median(np.abs(x - med))
    if mad == 0:
        return x.copy()
    return np.clip(x, med - k_mad * mad, med + k_mad * mad)


@dataclass(frozen=True)
class PreprocessConfig:
    bandpass: BandpassConfig = field(default_factory=BandpassConfig)
    mbll: MbllConfig = field(default_factory=MbllConfig)
    min_t: int = 50
    max_t: int = 60
    trim: int = 50
    clamp_mad: float | None = None
    apply_bandpass: bool = True


def _clean_channels(ch: np.ndarray, fs: float, cfg: PreprocessConfig) -> np.ndarray:
    if cfg.clamp_mad is not None:
        ch = np.vstack([clamp_artifacts(x, cfg.clamp_mad) for x in ch])
    if cfg.apply_bandpass:
        ch = bandpass_rows(ch, fs, cfg.bandpass)
    return ch


def raw_to_hbo(raw: RawTrial, cfg: PreprocessConfig) -> DyadTrial:
    """Clamp and band-limit optical density per wavelength, then convert to HbO."""
    series = []
    for name, part in (("A", raw.a), ("B", raw.b)):
        hbo = []
        for od in part.od:
            od = _clean_channels(od, raw.fs_hz, cfg)
            hbo.append(mbll_convert(od, cfg.mbll)[0])
        series.append(TrialSeries(raw.dyad_id, Participant(name), raw.sex, raw.task,
                                  np.vstack(hbo), raw.fs_hz, part.rt))
    return DyadTrial(series[0], series[1], raw.index)


def preprocess_trials(trials, cfg: PreprocessConfig | None = None) -> list:
    """Full cleaning chain; accepts HbO trials or raw optical-density trials.

    Output trials all have exactly ``cfg.trim`` samples per channel and unit
    L2 norm per channel.
    """
    cfg = cfg or PreprocessConfig()
    kept = [t for t in trials if cfg.min_t <= _length(t) <= cfg.max_t]
    out = []
    for t in kept:
        if isinstance(t, RawTrial):
            t = raw_to_hbo(t, cfg)
        else:
            t = t.map_channels(lambda ch, fs=t.fs_hz: _clean_channels(ch, fs, cfg))
        out.append(unit_norm(trim_last_n(t, cfg.trim)))
    return out


def _length(t) -> int:
    if isinstance(t, RawTrial):
        return min(t.a.od.shape[2], t.b.od.shape[2])
    return t.n_samples
