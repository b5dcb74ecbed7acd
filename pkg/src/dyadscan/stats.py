"""Reaction-time statistics: per-dyad differences, Mann-Whitney U tests and
Gaussian kernel density estimates."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.stats import rankdata

from .domain import SexComp, TaskType
from .errors import DegenerateSample, EmptySample, MissingReactionTime


class RankMethod(str, enum.Enum):
    EXACT = "exact"
    NORMAL = "normal-approx"


@dataclass(frozen=True)
class RankTestResult:
    u_statistic: float
    p_value: float
    n1: int
    n2: int
    method: RankMethod

    def to_dict(self) -> dict:
        return {"u": self.u_statistic, "p": self.p_value, "n1": self.n1, "n2": self.n2,
                "method": self.method.value}


# ----------------------------------------------------------------------------
# Reaction-time differences

def reaction_time_diffs(trials, unit: str = "trial") -> dict:
    """``|rt_A - rt_B|`` grouped by ``(sex, task)``.

    ``unit="dyad"`` averages each dyad's trials first, giving one value per
    dyad and cell.
    """
    if unit not in ("trial", "dyad"):
        raise ValueError("unit must be 'trial' or 'dyad'")
    cells = {(s, t): [] for s in SexComp for t in TaskType}
    per_dyad: dict = {}
    for trial in trials:
        ra, rb = trial.a.reaction_time_s, trial.b.reaction_time_s
        if ra is None or rb is None:
            raise MissingReactionTime(f"dyad {trial.dyad_id} trial {trial.index} lacks a reaction time")
        diff = abs(ra - rb)
        key = (trial.sex_comp, trial.task)
        if unit == "trial":
            cells[key].append(diff)
        else:
            per_dyad.setdefault(key, {}).setdefault(trial.dyad_id, []).append(diff)
    if unit == "dyad":
        for key, dyads in per_dyad.items():
            cells[key] = [float(np.mean(v)) for _, v in sorted(dyads.items())]
    return {key: np.asarray(v, dtype=np.float64) for key, v in cells.items()}


# ----------------------------------------------------------------------------
# Mann-Whitney U

@lru_cache(maxsize=None)
def _u_counts(n1: int, n2: int) -> tuple:
    """Number of arrangements giving each U = 0..n1*n2 (no ties).

    Recurrence on whether the largest observation belongs to the first sample.
    """
    if n1 == 0 or n2 == 0:
        return (1,)
    a = _u_counts(n1 - 1, n2)  # largest is in sample 1: it beats all n2
    b = _u_counts(n1, n2 - 1)  # largest is in sample 2: contributes nothing
    out = [0] * (n1 * n2 + 1)
    for u, c in enumerate(a):
        out[u + n2] += c
    for u, c in enumerate(b):
        out[u] += c
    return tuple(out)


def exact_p_value(u_min: float, n1: int, n2: int) -> float:
    counts = _u_counts(n1, n2)
    total = sum(counts)
    below = sum(counts[: int(math.floor(u_min)) + 1])
    return min(1.0, 2 * below / total)


def u_statistics(x, y) -> tuple:
    """``(U1, U2)`` from midrank sums; ``U1`` counts pairs where ``x`` wins."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    n1, n2 = x.size, y.size
    if n1 == 0 or n2 == 0:
        raise EmptySample("both samples need at least one observation")
    ranks = rankdata(np.concatenate([x, y]))
    u1 = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2)
    return u1, n1 * n2 - u1


def mann_whitney_u(x, y, method: str = "auto") -> RankTestResult:
    """Two-sided Mann-Whitney U test reporting ``U = min(U1, U2)``.

    ``auto`` uses exact enumeration when there are no ties and
    ``n1 * n2 <= 64``, otherwise the normal approximation with tie-corrected
    variance and a 0.5 continuity correction.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    n1, n2 = x.size, y.size
    if n1 == 0 or n2 == 0:
        raise EmptySample("both samples need at least one observation")
    ranks = rankdata(np.concatenate([x, y]))  # midranks for ties
    u1 = ranks[:n1].sum() - n1 * (n1 + 1) / 2
    u2 = n1 * n2 - u1
    u = min(u1, u2)
    has_ties = np.unique(ranks).size < ranks.size
    if method == "auto":
        method = "exact" if (not has_ties and n1 * n2 <= 64) else "normal"
    if method == "exact":
        if has_ties:
            raise ValueError("exact test requires tie-free samples")
        return RankTestResult(float(u), exact_p_value(u, n1, n2), n1, n2, RankMethod.EXACT)
    return RankTestResult(float(u), _normal_p(u, n1, n2, ranks), n1, n2, RankMethod.NORMAL)


def _normal_p(u, n1, n2, ranks) -> float:
    n = n1 + n2
    _, tie_counts = np.unique(ranks, return_counts=True)
    tie_term = float((tie_counts ** 3 - tie_counts).sum())
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1))) if n > 1 else 0.0
    if var <= 0:
        return 1.0
    z = max(0.0, abs(u - n1 * n2 / 2.0) - 0.5) / math.sqrt(var)
    return min(1.0, math.erfc(z / math.sqrt(2.0)))


RT_TESTS = {
    "male-male": ((SexComp.MM, TaskType.COOPERATION), (SexComp.MM, TaskType.COMPETITION)),
    "female-female": ((SexComp.FF, TaskType.COOPERATION), (SexComp.FF, TaskType.COMPETITION)),
    "cooperation": ((SexComp.MM, TaskType.COOPERATION), (SexComp.FF, TaskType.COOPERATION)),
    "competition": ((SexComp.MM, TaskType.COMPETITION), (SexComp.FF, TaskType.COMPETITION)),
}


def rt_tests(trials, unit: str = "dyad", tests=None) -> dict:
    """The four reaction-time comparisons, keyed by test name."""
    diffs = reaction_time_diffs(trials, unit)
    out = {}
    for name in tests or RT_TESTS:
        first, second = RT_TESTS[name]
        out[name] = mann_whitney_u(diffs[first], diffs[second])
    return out


# ----------------------------------------------------------------------------
# Kernel density estimation

@dataclass(frozen=True)
class KdeModel:
    centers: np.ndarray
    bandwidth: float

    def __call__(self, grid):
        return kde_eval(self, grid)


def silverman_bandwidth(samples) -> float:
    x = np.asarray(samples, dtype=np.float64)
    sd = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return 0.9 * spread * x.size ** (-0.2)


def kde_fit(samples, bandwidth: float | None = None) -> KdeModel:
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise EmptySample("KDE needs at least one sample")
    if bandwidth is None:
        if x.size < 2:
            raise DegenerateSample("automatic bandwidth needs at least two samples")
        bandwidth = silverman_bandwidth(x)
        if not bandwidth > 0:
            raise DegenerateSample("all samples are identical; pass a bandwidth")
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    return KdeModel(x, float(bandwidth))


def kde_eval(model: KdeModel, grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=np.float64)
    z = (grid[..., None] - model.centers) / model.bandwidth
    phi = np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    return phi.sum(axis=-1) / (model.centers.size * model.bandwidth)


def kde_grid(model: KdeModel, n: int = 512, pad: float = 6.0) -> np.ndarray:
    lo = model.centers.min() - pad * model.bandwidth
    hi = model.centers.max() + pad * model.bandwidth
    return np.linspace(lo, hi, n)
