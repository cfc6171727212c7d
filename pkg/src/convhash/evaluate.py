"""Cross-validated evaluation and latency benchmarking."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import clone

from .dataset import Vocalization
from .exceptions import DataError
from .model import MODES, ConvexHashClassifier

logger = logging.getLogger(__name__)

SCHEMES = ("train-one", "standard")


def fold_parts(labels, folds: int, seed: int = 0, holdout_fraction: float = 0.0):
    """Split vocalization indices class by class into ``folds`` parts.

    Returns ``(parts, holdout)``: ``parts[i]`` lists the indices of part
    ``i`` (all classes); ``holdout`` lists indices set aside first
    (``holdout_fraction`` of each class) and never used.
    """
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if not 0.0 <= holdout_fraction < 1.0:
        raise ValueError("holdout_fraction must lie in [0, 1)")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    parts = [[] for _ in range(folds)]
    holdout = []
    for label in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == label)
        idx = idx[rng.permutation(idx.size)]
        n_hold = int(round(holdout_fraction * idx.size))
        holdout.extend(idx[:n_hold].tolist())
        idx = idx[n_hold:]
        if idx.size < folds:
            raise DataError(f"class {label!r} has {idx.size} vocalizations, fewer than {folds} folds")
        for i, chunk in enumerate(np.array_split(idx, folds)):
            parts[i].extend(chunk.tolist())
    return [sorted(p) for p in parts], sorted(holdout)


def fold_splits(parts, scheme: str = "train-one"):
    """``(train, test)`` index lists per fold.

    ``"train-one"`` trains on one part and tests on the others (one third of
    the data for training with three folds); ``"standard"`` is ordinary
    k-fold, testing on one part.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    out = []
    for i, part in enumerate(parts):
        rest = sorted(j for k, p in enumerate(parts) if k != i for j in p)
        out.append((part, rest) if scheme == "train-one" else (rest, part))
    return out


@dataclass
class FoldResult:
    fold: int
    n_train: int
    n_test: int
    accuracy: dict  # mode -> accuracy
    latency_s: dict  # mode -> mean per-vocalization classification seconds
    encode_latency_s: float
    fallback_rate: float


@dataclass
class EvalReport:
    labels: list
    folds: list = field(default_factory=list)
    mean_accuracy: dict = field(default_factory=dict)
    per_class_accuracy: dict = field(default_factory=dict)  # mode -> label -> acc
    confusion: dict = field(default_factory=dict)  # mode -> rows true, cols predicted
    mean_latency_s: dict = field(default_factory=dict)
    mean_encode_latency_s: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def summary(self) -> str:
        lines = []
        for f in self.folds:
            lines.append(
                f"fold {f.fold}: train={f.n_train} test={f.n_test} "
                + " ".join(f"{m}={f.accuracy[m]:.4f}" for m in MODES)
            )
        lines.append("mean accuracy: " + " ".join(f"{m}={self.mean_accuracy[m]:.4f}" for m in MODES))
        lines.append(
            "mean classification latency per vocalization: "
            + " ".join(f"{m}={1e3 * self.mean_latency_s[m]:.3f} ms" for m in MODES)
            + f" (convex coding {1e3 * self.mean_encode_latency_s:.3f} ms)"
        )
        return "\n".join(lines)


def evaluate(
    vocs: list[Vocalization],
    estimator: ConvexHashClassifier,
    folds: int = 3,
    seed: int = 0,
    holdout_fraction: float = 0.0,
    scheme: str = "train-one",
) -> EvalReport:
    """Cross-validate ``estimator`` at the vocalization level, both modes."""
    usable = [v for v in vocs if v.csfs.shape[0] > 0]
    if len(usable) < len(vocs):
        logger.warning("%d vocalizations yield no CSFs and are skipped", len(vocs) - len(usable))
    y = np.array([v.label for v in usable])
    X = [v.csfs for v in usable]
    labels = sorted(set(y.tolist()))
    rank = {lab: i for i, lab in enumerate(labels)}
    parts, _ = fold_parts(y, folds, seed, holdout_fraction)

    report = EvalReport(labels=labels)
    conf = {m: np.zeros((len(labels), len(labels)), dtype=np.int64) for m in MODES}
    for i, (train, test) in enumerate(fold_splits(parts, scheme)):
        clf = clone(estimator).fit([X[j] for j in train], y[train])
        t0 = time.perf_counter()
        codes = clf.convex_codes([X[j] for j in test])
        enc = (time.perf_counter() - t0) / max(len(test), 1)
        acc, lat = {}, {}
        fallbacks = 0
        n_csfs = sum(c.shape[0] for c in codes)
        for mode in MODES:
            preds, times = clf.timed_classify(codes, mode)
            hits = 0
            for j, p in zip(test, preds):
                conf[mode][rank[y[j]], rank[p.label]] += 1
                hits += p.label == y[j]
                if mode == "minhash":
                    fallbacks += p.fallbacks
            acc[mode] = hits / len(test)
            lat[mode] = float(np.mean(times))
        report.folds.append(FoldResult(i, len(train), len(test), acc, lat, enc, fallbacks / max(n_csfs, 1)))
        logger.info("fold %d: %s", i, acc)

    for mode in MODES:
        report.mean_accuracy[mode] = float(np.mean([f.accuracy[mode] for f in report.folds]))
        report.mean_latency_s[mode] = float(np.mean([f.latency_s[mode] for f in report.folds]))
        c = conf[mode]
        report.confusion[mode] = c.tolist()
        report.per_class_accuracy[mode] = {
            lab: float(c[k, k] / c[k].sum()) if c[k].sum() else 0.0 for k, lab in enumerate(labels)
        }
    report.mean_encode_latency_s = float(np.mean([f.encode_latency_s for f in report.folds]))
    return report


@dataclass
class BenchReport:
    runs: list  # one dict per run: mode -> mean seconds per vocalization
    mean_latency_s: dict
    ratio: float  # minhash / full
    encode_latency_s: float
    n_vocalizations: int
    table_entries: int

    def to_dict(self) -> dict:
        return asdict(self)


def bench(clf: ConvexHashClassifier, X, n_runs: int = 10) -> BenchReport:
    """Mean per-vocalization classification latency of both modes.

    Convex coding is shared by both paths; it is timed once and reported
    separately. Each run classifies every vocalization in both modes.
    """
    t0 = time.perf_counter()
    codes = [c for c in clf.convex_codes(X) if c.shape[0]]
    if not codes:
        raise DataError("no vocalization with CSFs to benchmark")
    enc = (time.perf_counter() - t0) / len(codes)
    for mode in MODES:  # warm-up
        clf.timed_classify(codes[:1], mode)
    runs = []
    for _ in range(n_runs):
        runs.append({mode: float(np.mean(clf.timed_classify(codes, mode)[1])) for mode in MODES})
    mean = {mode: float(np.mean([r[mode] for r in runs])) for mode in MODES}
    return BenchReport(runs, mean, mean["minhash"] / mean["full"], enc, len(codes), len(clf.hash_table_))
