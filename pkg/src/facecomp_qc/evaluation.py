"""Detection and utility evaluation of quality scores.

Detection treats "compressed" as the positive class, flagged when the
quality score falls below a threshold (scores are lower-is-worse). The
DET sweep visits every distinct score plus the two infinities; the EER
operating point is the threshold minimizing |FPR - FNR| (ties: smaller
FPR+FNR, then smaller threshold) and reports their midpoint, since exact
equality rarely exists on finite samples.

The EDC curve discards mated comparisons in ascending order of their
pair quality (the minimum of the two samples' qualities, stable
tie-break on the id pair) and tracks the false non-match rate of the
survivors against a fixed similarity threshold.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateInput,
    EmptyComparisons,
    EmptyInput,
    UndefinedF1,
    UnknownSampleId,
)


@dataclass(frozen=True)
class DetPoint:
    threshold: float
    fpr: float
    fnr: float


@dataclass(frozen=True)
class ComparisonRecord:
    probe_id: str
    reference_id: str
    similarity: float
    mated: bool

    def __post_init__(self):
        if self.probe_id == self.reference_id:
            raise EmptyComparisons("probe and reference ids must differ")


@dataclass(frozen=True)
class EdcPoint:
    discard_fraction: float
    fnmr: float


def _as_scores(name: str, values) -> np.ndarray:
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise EmptyInput(f"{name} score list is empty")
    return arr


def det_curve(uncompressed_scores, compressed_scores) -> list[DetPoint]:
    """One DET point per candidate threshold.

    Decision rule: flag "compressed" when score < t. fpr(t) is the fraction
    of uncompressed scores below t, fnr(t) the fraction of compressed
    scores at or above t; t sweeps all distinct scores plus +-infinity.
    """
    u = np.sort(_as_scores("uncompressed", uncompressed_scores))
    c = np.sort(_as_scores("compressed", compressed_scores))
    thresholds = np.concatenate(
        [[-np.inf], np.unique(np.concatenate([u, c])), [np.inf]])
    points = []
    for t in thresholds:
        fpr = np.searchsorted(u, t, side="left") / u.size
        fnr = (c.size - np.searchsorted(c, t, side="left")) / c.size
        points.append(DetPoint(float(t), float(fpr), float(fnr)))
    return points


def eer(uncompressed_scores, compressed_scores) -> tuple[float, float]:
    """Equal error rate and its threshold over the DET sweep."""
    points = det_curve(uncompressed_scores, compressed_scores)
    best = min(points, key=lambda p: (abs(p.fpr - p.fnr), p.fpr + p.fnr, p.threshold))
    return (best.fpr + best.fnr) / 2.0, best.threshold


def f1_at(threshold: float, uncompressed_scores, compressed_scores) -> float:
    """F1 of the compressed-detection decision at a fixed threshold."""
    u = _as_scores("uncompressed", uncompressed_scores)
    c = _as_scores("compressed", compressed_scores)
    tp = int(np.sum(c < threshold))
    fp = int(np.sum(u < threshold))
    fn = int(np.sum(c >= threshold))
    if tp + fp + fn == 0:
        raise UndefinedF1("no decisions to score")
    return 2.0 * tp / (2.0 * tp + fp + fn)


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0  # mean of ranks i+1 .. j+1
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Spearman rank correlation with average ranks for ties."""
    xa = np.asarray(list(x), dtype=np.float64)
    ya = np.asarray(list(y), dtype=np.float64)
    if xa.size != ya.size or xa.size < 2:
        raise DegenerateInput("need two equal-length samples of size >= 2")
    if np.all(xa == xa[0]) or np.all(ya == ya[0]):
        raise DegenerateInput("constant input has no rank correlation")
    rx = _average_ranks(xa)
    ry = _average_ranks(ya)
    rx -= rx.mean()
    ry -= ry.mean()
    return float((rx * ry).sum() / np.sqrt((rx * rx).sum() * (ry * ry).sum()))


def fnmr_threshold(mated_similarities, target_fnmr: float) -> float:
    """Similarity threshold whose empirical FNMR is as close under target as possible.

    Returns the (floor(target * N))-th order statistic of the mated
    similarities: the largest threshold leaving at most `target_fnmr` of
    them strictly below. The realized FNMR is within 1/N of the target.
    """
    scores = np.sort(_as_scores("mated", mated_similarities))
    if not 0.0 < target_fnmr < 1.0:
        raise EmptyInput("target FNMR must lie in (0, 1)")
    k = int(np.floor(target_fnmr * scores.size))
    k = min(k, scores.size - 1)
    return float(scores[k])


def edc_curve(qualities: dict[str, int], comparisons: list[ComparisonRecord],
              threshold: float, discard_grid) -> list[EdcPoint]:
    """Error-versus-discard curve over mated comparisons.

    Pair quality is the minimum of the two samples' qualities; at each
    discard fraction d the floor(d*N) lowest-quality pairs are dropped and
    the FNMR (similarity < threshold) of the remainder is reported. An
    empty remainder yields FNMR 0.
    """
    if not comparisons:
        raise EmptyComparisons("no mated comparisons")
    rows = []
    for comp in comparisons:
        if not comp.mated:
            continue
        if comp.probe_id not in qualities:
            raise UnknownSampleId(f"no quality for probe {comp.probe_id!r}")
        if comp.reference_id not in qualities:
            raise UnknownSampleId(f"no quality for reference {comp.reference_id!r}")
        pair_q = min(qualities[comp.probe_id], qualities[comp.reference_id])
        rows.append((pair_q, comp.probe_id, comp.reference_id,
                     comp.similarity < threshold))
    if not rows:
        raise EmptyComparisons("no mated comparisons")
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    failures = np.array([r[3] for r in rows], dtype=np.int64)
    n = failures.size
    suffix_failures = np.concatenate([np.cumsum(failures[::-1])[::-1], [0]])

    points = []
    for d in discard_grid:
        if not 0.0 <= d <= 1.0:
            raise EmptyComparisons(f"discard fraction {d} outside [0, 1]")
        drop = int(np.floor(d * n))
        remaining = n - drop
        fnmr = float(suffix_failures[drop] / remaining) if remaining > 0 else 0.0
        points.append(EdcPoint(float(d), fnmr))
    return points


def default_discard_grid(stop: float = 0.30, step: float = 0.01) -> list[float]:
    count = int(round(stop / step))
    return [round(i * step, 10) for i in range(count + 1)]


def read_comparisons_csv(path) -> list[ComparisonRecord]:
    """Read `probe_id,reference_id,similarity,mated` rows."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"probe_id", "reference_id", "similarity", "mated"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            missing = required - set(reader.fieldnames or [])
            raise EmptyComparisons(f"comparison CSV missing columns: {sorted(missing)}")
        for row in reader:
            out.append(ComparisonRecord(
                probe_id=row["probe_id"], reference_id=row["reference_id"],
                similarity=float(row["similarity"]),
                mated=row["mated"].strip().lower() in ("true", "1", "yes")))
    return out


def write_det_csv(path, points: list[DetPoint]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "fpr", "fnr"])
        for p in points:
            writer.writerow([repr(p.threshold), repr(p.fpr), repr(p.fnr)])


def write_edc_csv(path, points: list[EdcPoint]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["discard_fraction", "fnmr"])
        for p in points:
            writer.writerow([repr(p.discard_fraction), repr(p.fnmr)])
