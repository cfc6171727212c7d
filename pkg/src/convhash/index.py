"""Hash tables over conv-codes and their classification rules.

Two lookup structures are built from training data:

* :class:`HashTable` -- ``q * T`` (conv-code, label) entries, the keys being
  class-wise K-medoids of the training conv-codes under Jaccard similarity.
  A query is scanned against every key.
* :class:`DirectAddressTable` -- one slot per archetype, addressed by the
  min-hash of a convex code, holding the label that most training codes
  hashing there carried.

Per-CSF decisions are pooled into one label per vocalization by voting.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .codes import (
    BloomConfig,
    ConvCode,
    MinHashPermutation,
    bloom_encode_batch,
    effective_sets_batch,
    jaccard_bits_matrix,
    min_hash_batch,
)
from .exceptions import DataError

EMPTY = -1
DEFAULT_T = 10
MAX_SWEEPS = 50


def _as_words(codes) -> np.ndarray:
    if isinstance(codes, np.ndarray):
        return np.atleast_2d(codes).astype(np.uint64, copy=False)
    codes = list(codes)
    if not codes:
        raise DataError("no codes given")
    widths = {c.width for c in codes}
    if len(widths) != 1:
        raise DataError(f"incompatible code widths {sorted(widths)}")
    return np.stack([c.words for c in codes])


# K-medoids -------------------------------------------------------------

@dataclass
class KMedoidsResult:
    medoid_indices: list
    labels: np.ndarray
    objective: list  # total within-cluster similarity, one value per sweep


def kmedoids_jaccard_indices(codes, T: int, seed: int = 0, max_sweeps: int = MAX_SWEEPS) -> KMedoidsResult:
    """K-medoids on conv-codes with similarity ``jaccard_bits``.

    Greedy build (the code with the largest summed similarity first, then
    repeatedly the code furthest in Jaccard distance from its nearest
    medoid) followed by PAM swaps: each sweep applies the single best
    medoid/non-medoid exchange while it raises the total similarity of
    points to their nearest medoid. ``seed`` fixes the order used to break
    ties.
    """
    words = _as_words(codes)
    n = words.shape[0]
    if T < 1:
        raise ValueError("T must be >= 1")
    if n < T:
        raise DataError(f"fewer codes than clusters ({n} < {T})")
    S = jaccard_bits_matrix(words, words)
    order = np.random.default_rng(seed).permutation(n)

    def pick(scores):
        # argmax with ties broken by the seeded order
        best = scores[order].max()
        return int(order[np.flatnonzero(scores[order] >= best)[0]])

    medoids = [pick(S.sum(axis=1))]
    nearest = S[:, medoids[0]].copy()
    while len(medoids) < T:
        dist = 1.0 - nearest
        dist[medoids] = -1.0
        j = pick(dist)
        medoids.append(j)
        nearest = np.maximum(nearest, S[:, j])

    objective = [float(nearest.sum())]
    for _ in range(max_sweeps):
        M = S[:, medoids]  # (n, T)
        if T > 1:
            top2 = np.partition(M, T - 2, axis=1)[:, T - 2:]
            best, second = top2.max(axis=1), top2.min(axis=1)
        else:
            best, second = M[:, 0], np.zeros(n)
        owner = np.argmax(M, axis=1)
        current = best.sum()
        best_gain, best_swap = 1e-12, None
        is_medoid = np.zeros(n, dtype=bool)
        is_medoid[medoids] = True
        for t in range(T):
            # similarity of each point to the remaining medoids if t leaves
            without = np.where(owner == t, second, best)
            gains = np.maximum(without[:, None], S).sum(axis=0) - current
            gains[is_medoid] = -np.inf
            h = pick(gains)
            if gains[h] > best_gain:
                best_gain, best_swap = gains[h], (t, h)
        if best_swap is None:
            break
        medoids[best_swap[0]] = best_swap[1]
        objective.append(float(S[:, medoids].max(axis=1).sum()))

    labels = np.argmax(S[:, medoids], axis=1)
    return KMedoidsResult(medoids, labels, objective)


def kmedoids_jaccard(codes: Sequence[ConvCode], T: int = DEFAULT_T, seed: int = 0) -> list[ConvCode]:
    """Return ``T`` medoid codes, each one of the inputs."""
    codes = list(codes)
    res = kmedoids_jaccard_indices(codes, T, seed)
    return [codes[i] for i in res.medoid_indices]


# Full hash table -------------------------------------------------------

class HashTable:
    """Keys (conv-codes) with the label each points to, in insertion order."""

    def __init__(self, keys: np.ndarray, labels: Sequence, T: int | None = None):
        keys = np.ascontiguousarray(np.atleast_2d(keys), dtype=np.uint64)
        if keys.shape[0] != len(labels):
            raise ValueError("one label per key required")
        keys.flags.writeable = False
        self.keys = keys
        self.labels = list(labels)
        self.T = T

    def __len__(self):
        return self.keys.shape[0]

    @property
    def bits(self) -> int:
        return 64 * self.keys.shape[1]

    @property
    def entries(self) -> list[tuple[ConvCode, object]]:
        return [(ConvCode(k), lab) for k, lab in zip(self.keys, self.labels)]


def build_hash_table(per_class_codes: Mapping, T: int = DEFAULT_T, seed: int = 0) -> HashTable:
    """K-medoids per class; keys keep class order, then medoid order."""
    keys, labels = [], []
    for label, codes in per_class_codes.items():
        try:
            res = kmedoids_jaccard_indices(codes, T, seed)
        except DataError as exc:
            raise DataError(f"class {label!r}: {exc}") from None
        words = _as_words(codes)
        keys.append(words[res.medoid_indices])
        labels.extend([label] * T)
    if not keys:
        raise DataError("no classes to index")
    return HashTable(np.vstack(keys), labels, T)


class CsfDecision(NamedTuple):
    label: object
    similarity: float
    fallback: bool = False
    comparisons: int = 0


def _scan(words: np.ndarray, table: HashTable) -> tuple[np.ndarray, np.ndarray]:
    if len(table) == 0:
        raise DataError("hash table is empty")
    if words.shape[1] != table.keys.shape[1]:
        raise DataError(f"incompatible code widths ({64 * words.shape[1]} vs {table.bits})")
    sims = jaccard_bits_matrix(words, table.keys)
    best = np.argmax(sims, axis=1)  # first maximum = lowest entry index
    return best, sims[np.arange(len(best)), best]


def classify_csf(code: ConvCode, table: HashTable) -> tuple[object, float]:
    """Label and similarity of the most similar key (full scan)."""
    best, sim = _scan(code.words[None, :], table)
    return table.labels[int(best[0])], float(sim[0])


@dataclass
class VocalizationPrediction:
    label: object
    per_csf_votes: dict
    n_csfs: int
    similarity_sums: dict = field(default_factory=dict)
    fallbacks: int = 0

    @property
    def vote_fraction(self) -> float:
        return self.per_csf_votes.get(self.label, 0) / self.n_csfs if self.n_csfs else 0.0


def vote(labels: Sequence, similarities: Sequence[float], label_order: Sequence) -> VocalizationPrediction:
    """Majority vote; ties go to the larger summed similarity, then label order."""
    if len(labels) == 0:
        raise DataError("no CSFs in vocalization")
    votes = Counter(labels)
    sums: dict = {}
    for lab, s in zip(labels, similarities):
        sums[lab] = sums.get(lab, 0.0) + float(s)
    rank = {lab: i for i, lab in enumerate(label_order)}
    winner = min(votes, key=lambda lab: (-votes[lab], -sums[lab], rank.get(lab, len(rank))))
    return VocalizationPrediction(winner, dict(votes), len(labels), sums)


def _label_order(table: HashTable) -> list:
    return list(dict.fromkeys(table.labels))


def classify_words(words: np.ndarray, table: HashTable) -> VocalizationPrediction:
    best, sims = _scan(np.atleast_2d(words), table)
    labels = [table.labels[int(b)] for b in best]
    return vote(labels, sims, _label_order(table))


def classify_vocalization(codes: Sequence[ConvCode], table: HashTable) -> VocalizationPrediction:
    codes = list(codes)
    if not codes:
        raise DataError("no CSFs in vocalization")
    return classify_words(_as_words(codes), table)


# Direct-address table --------------------------------------------------

class DirectAddressTable:
    """Array of ``qd`` slots holding a label position or ``EMPTY``."""

    def __init__(self, slots: np.ndarray, labels: Sequence, perm_seed: int):
        slots = np.asarray(slots, dtype=np.int64).copy()
        if np.any((slots < EMPTY) | (slots >= len(labels))):
            raise ValueError("slot label ids out of range")
        slots.flags.writeable = False
        self.slots = slots
        self.labels = list(labels)
        self.perm_seed = perm_seed

    @property
    def qd(self) -> int:
        return self.slots.size

    def __getitem__(self, i):
        v = self.slots[i]
        return None if v == EMPTY else self.labels[v]


def build_direct_table(
    train_codes: Sequence,
    perm: MinHashPermutation,
    Z: int,
    qd: int,
    labels: Sequence | None = None,
) -> DirectAddressTable:
    """Slot ``h`` gets the majority label of training items with min-hash ``h``.

    ``train_codes`` is a sequence of ``(convex_code, label)`` pairs. Ties go
    to the label with more training items overall, then to label order
    (``labels`` if given, else first appearance).
    """
    pairs = list(train_codes)
    if perm.qd != qd:
        raise DataError(f"permutation is defined on {perm.qd} indices, table needs {qd}")
    if labels is None:
        labels = list(dict.fromkeys(lab for _, lab in pairs))
    rank = {lab: i for i, lab in enumerate(labels)}
    if any(lab not in rank for _, lab in pairs):
        raise DataError("training label outside the model's class set")
    slots = np.full(qd, EMPTY, dtype=np.int64)
    if not pairs:
        return DirectAddressTable(slots, labels, perm.seed)
    Y = np.vstack([np.asarray(y, dtype=np.float64).ravel() for y, _ in pairs])
    ids = np.array([rank[lab] for _, lab in pairs])
    mh = min_hash_batch(effective_sets_batch(Y, Z), perm)
    if np.any(mh >= qd):
        raise RuntimeError("min-hash outside [0, qd): permutation invariant broken")
    keep = mh >= 0
    counts = np.zeros((qd, len(labels)), dtype=np.int64)
    np.add.at(counts, (mh[keep], ids[keep]), 1)
    totals = np.bincount(ids, minlength=len(labels))
    for h in np.flatnonzero(counts.sum(axis=1)):
        row = counts[h]
        tied = np.flatnonzero(row == row.max())
        slots[h] = min(tied, key=lambda k: (-totals[k], k))
    return DirectAddressTable(slots, labels, perm.seed)


def _check_perm(dtable: DirectAddressTable, perm: MinHashPermutation) -> None:
    if perm.seed != dtable.perm_seed or perm.qd != dtable.qd:
        raise DataError("permutation does not match table")


def classify_csf_minhash(
    y,
    dtable: DirectAddressTable,
    perm: MinHashPermutation,
    Z: int,
    table: HashTable | None = None,
    bloom: BloomConfig | None = None,
) -> CsfDecision:
    """One array access at the min-hash of ``y``.

    An ``EMPTY`` slot (or a code with no support) falls back to the full
    scan of ``table`` using conv-codes built with ``bloom``; the decision is
    then flagged and reports how many keys were compared.
    """
    _check_perm(dtable, perm)
    Y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    sets = effective_sets_batch(Y, Z)
    h = int(min_hash_batch(sets, perm)[0])
    if h != EMPTY and dtable.slots[h] != EMPTY:
        return CsfDecision(dtable.labels[dtable.slots[h]], 1.0, False, 0)
    if table is None or bloom is None:
        raise DataError("min-hash slot is empty and no hash table was given for the fallback")
    words = bloom_encode_batch(sets, bloom, perm.qd)
    best, sims = _scan(words, table)
    return CsfDecision(table.labels[int(best[0])], float(sims[0]), True, len(table))


def classify_vocalization_minhash(
    Y: np.ndarray,
    dtable: DirectAddressTable,
    perm: MinHashPermutation,
    Z: int,
    table: HashTable,
    bloom: BloomConfig,
) -> VocalizationPrediction:
    """Min-hash path for all convex codes (rows of ``Y``) of a vocalization.

    Direct hits contribute similarity 0 to the tie-break sums, so vote ties
    are settled by fallback similarities, then label order.
    """
    _check_perm(dtable, perm)
    Y = np.atleast_2d(Y)
    if Y.shape[0] == 0:
        raise DataError("no CSFs in vocalization")
    sets = effective_sets_batch(Y, Z)
    h = min_hash_batch(sets, perm)
    slot = np.where(h >= 0, dtable.slots[np.maximum(h, 0)], EMPTY)
    miss = np.flatnonzero(slot == EMPTY)
    labels = [dtable.labels[s] if s != EMPTY else None for s in slot]
    sims = np.zeros(len(labels))
    if miss.size:
        words = bloom_encode_batch(sets[miss], bloom, perm.qd)
        best, s = _scan(words, table)
        for i, b, v in zip(miss, best, s):
            labels[i] = table.labels[int(b)]
            sims[i] = v
    pred = vote(labels, sims, dtable.labels)
    pred.fallbacks = int(miss.size)
    return pred
