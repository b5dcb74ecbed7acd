"""Dynamic time warping with path backtracking and channel-wise similarity.

Local cost is ``|a_i - b_j|``; steps are (1,0), (0,1) and (1,1). The DP
kernel is vectorised across a batch of equal-shape pairs, which is how the
18 channels of every trial in a dataset are scored in one sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import DyadTrial, SimilaritySample
from .errors import EmptySeries, InvalidPath, WindowTooNarrow

# pairs per DP sweep; bounds memory at ~2 x _CHUNK x m x n doubles
_CHUNK = 2048


@dataclass(frozen=True, eq=False)
class WarpPath:
    steps: tuple  # of (i, j)

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def __eq__(self, other):
        return isinstance(other, WarpPath) and self.steps == other.steps

    def validate(self, len_a: int, len_b: int) -> None:
        steps = self.steps
        if not steps or tuple(steps[0]) != (0, 0) or tuple(steps[-1]) != (len_a - 1, len_b - 1):
            raise InvalidPath(f"path must run from (0, 0) to ({len_a - 1}, {len_b - 1})")
        for (i0, j0), (i1, j1) in zip(steps, steps[1:]):
            if (i1 - i0, j1 - j0) not in ((1, 0), (0, 1), (1, 1)):
                raise InvalidPath(f"illegal step ({i0}, {j0}) -> ({i1}, {j1})")


@dataclass(frozen=True)
class DtwResult:
    distance: float
    path: WarpPath

    @property
    def similarity(self) -> float:
        return similarity_from_distance(self.distance)


def similarity_from_distance(d):
    return 1.0 / (1.0 + d)


def _as_series(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size == 0:
        raise EmptySeries("DTW needs non-empty series")
    return x


def _check_window(m: int, n: int, window) -> None:
    if window is not None:
        if window < 0:
            raise WindowTooNarrow("window must be non-negative")
        if abs(m - n) > window:
            raise WindowTooNarrow(f"|{m} - {n}| exceeds window {window}")


def accumulated_cost(a, b, window: int | None = None) -> np.ndarray:
    """Accumulated-cost tensor for a batch of pairs.

    ``a`` is ``(B, m)`` and ``b`` is ``(B, n)``; returns ``(B, m, n)`` with
    ``inf`` outside the Sakoe-Chiba band when ``window`` is given.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    m, n = a.shape[1], b.shape[1]
    if m == 0 or n == 0:
        raise EmptySeries("DTW needs non-empty series")
    _check_window(m, n, window)
    # batch axis last keeps every cell update contiguous
    cost = np.abs(a.T[:, None, :] - b.T[None, :, :])
    acc = np.full_like(cost, np.inf)
    for i in range(m):
        lo, hi = 0, n
        if window is not None:
            lo, hi = max(0, i - window), min(n, i + window + 1)
        for j in range(lo, hi):
            if i == 0 and j == 0:
                acc[0, 0] = cost[0, 0]
                continue
            if i == 0:
                best = acc[0, j - 1]
            elif j == 0:
                best = acc[i - 1, 0]
            else:
                best = np.minimum(np.minimum(acc[i - 1, j - 1], acc[i - 1, j]), acc[i, j - 1])
            np.add(cost[i, j], best, out=acc[i, j])
    return acc.transpose(2, 0, 1)


def backtrack(acc: np.ndarray) -> WarpPath:
    """Optimal path through one ``(m, n)`` accumulated-cost matrix.

    Ties prefer the diagonal, then (i-1, j), then (i, j-1).
    """
    i, j = acc.shape[0] - 1, acc.shape[1] - 1
    steps = [(i, j)]
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            diag, up, left = acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1]
            if diag <= up and diag <= left:
                i, j = i - 1, j - 1
            elif up <= left:
                i -= 1
            else:
                j -= 1
        steps.append((i, j))
    return WarpPath(tuple(reversed(steps)))


def dtw(a, b, window: int | None = None) -> DtwResult:
    a, b = _as_series(a), _as_series(b)
    acc = accumulated_cost(a[None], b[None], window)[0]
    return DtwResult(float(acc[-1, -1]), backtrack(acc))


def dtw_distances(a, b, window: int | None = None, normalize_path: bool = False) -> np.ndarray:
    """Distances for a batch of pairs (rows of ``a`` against rows of ``b``)."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    out = []
    for s in range(0, a.shape[0], _CHUNK):
        acc = accumulated_cost(a[s:s + _CHUNK], b[s:s + _CHUNK], window)
        d = acc[:, -1, -1].copy()
        if normalize_path:
            d /= np.array([len(backtrack(x)) for x in acc])
        out.append(d)
    return np.concatenate(out) if out else np.empty(0)


def path_costs(a, b, path: WarpPath) -> np.ndarray:
    a, b = _as_series(a), _as_series(b)
    idx = np.asarray(path.steps)
    return np.abs(a[idx[:, 0]] - b[idx[:, 1]])


def align(a, b, path: WarpPath):
    """Expand both series along ``path`` so they can be overlaid point by point."""
    a, b = _as_series(a), _as_series(b)
    path.validate(a.size, b.size)
    idx = np.asarray(path.steps)
    return a[idx[:, 0]], b[idx[:, 1]]


def channelwise_similarity(trial: DyadTrial, window: int | None = None,
                           normalize_path: bool = False) -> SimilaritySample:
    """Similarity between matching channels of the two participants."""
    return similarity_samples([trial], window, normalize_path)[0]


def similarity_samples(trials, window: int | None = None,
                       normalize_path: bool = False) -> list:
    """Score many trials at once; trials sharing a length are batched together."""
    trials = list(trials)
    out = [None] * len(trials)
    groups: dict = {}
    for k, t in enumerate(trials):
        groups.setdefault((t.a.n_samples, t.b.n_samples), []).append(k)
    for ks in groups.values():
        a = np.concatenate([trials[k].a.channels for k in ks])
        b = np.concatenate([trials[k].b.channels for k in ks])
        sims = similarity_from_distance(dtw_distances(a, b, window, normalize_path))
        offset = 0
        for k in ks:
            c = trials[k].n_channels
            t = trials[k]
            out[k] = SimilaritySample(sims[offset:offset + c], t.sex_comp, t.task, t.dyad_id)
            offset += c
    return out


def path_csv(a, b, path: WarpPath) -> str:
    """``i,j,cost`` rows for plotting an alignment."""
    costs = path_costs(a, b, path)
    rows = ["i,j,cost"] + [f"{i},{j},{float(c)!r}" for (i, j), c in zip(path.steps, costs)]
    return "\n".join(rows) + "\n"
