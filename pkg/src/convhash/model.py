"""Supervised convex-sparse hashing classifier.

``ConvexHashClassifier`` consumes vocalizations, each an ``(n_csfs, K)``
array of CSFs, and predicts one label per vocalization. Fitting learns one
archetypal dictionary per class, codes every training CSF against the
concatenated dictionary, and builds both lookup tables from those codes.
"""

from __future__ import annotations

import logging
import time

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_vocalizations
from .archetypes import AaConfig, ArchetypalDictionary, ConcatenatedDictionary, encode_batch, learn_dictionary
from .codes import (
    DEFAULT_HASH_FAMILY,
    BloomConfig,
    MinHashPermutation,
    bloom_encode_batch,
    effective_sets_batch,
)
from .exceptions import DataError
from .index import (
    build_direct_table,
    build_hash_table,
    classify_vocalization_minhash,
    classify_words,
)

logger = logging.getLogger(__name__)

MODES = ("full", "minhash")


class ConvexHashClassifier(ClassifierMixin, BaseEstimator):
    """Classify vocalizations by hashing their convex codes.

    Parameters
    ----------
    n_archetypes : int, default=25
        Archetypes learned per class.
    n_effective : int, default=4
        Size ``Z`` of each effective-set.
    n_bits : int, default=1024
        Conv-code width (power of two).
    n_medoids : int, default=10
        Hash-table keys per class.
    mode : {"full", "minhash"}, default="full"
        Lookup used by :meth:`predict`.
    max_iter, tol : archetypal-analysis stopping rule.
    hash_family : tuple of (algorithm_id, seed)
        Bloom-filter hash functions.
    random_state : int, default=0
        Seeds dictionary initialisation, K-medoids tie-breaking and the
        min-hash permutation.

    Attributes
    ----------
    classes_ : ndarray
    dictionary_ : ConcatenatedDictionary
    hash_table_ : HashTable
    direct_table_ : DirectAddressTable
    permutation_ : MinHashPermutation
    bloom_ : BloomConfig
    objectives_ : dict
        Archetypal-analysis objective history per class.
    """

    def __init__(
        self,
        n_archetypes=25,
        n_effective=4,
        n_bits=1024,
        n_medoids=10,
        mode="full",
        max_iter=100,
        tol=1e-6,
        hash_family=DEFAULT_HASH_FAMILY,
        random_state=0,
    ):
        self.n_archetypes = n_archetypes
        self.n_effective = n_effective
        self.n_bits = n_bits
        self.n_medoids = n_medoids
        self.mode = mode
        self.max_iter = max_iter
        self.tol = tol
        self.hash_family = hash_family
        self.random_state = random_state

    def fit(self, X, y):
        X = check_vocalizations(X)
        y = np.asarray(y)
        if len(X) != len(y):
            raise DataError(f"{len(X)} vocalizations but {len(y)} labels")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.classes_ = np.array(sorted(set(y.tolist())))
        self.n_features_in_ = X[0].shape[1] if X else 0
        self.bloom_ = BloomConfig(self.n_bits, tuple(self.hash_family))
        cfg = AaConfig(self.n_archetypes, self.max_iter, self.tol, self.random_state)

        dictionaries = []
        self.objectives_ = {}
        for label in self.classes_:
            pooled = np.vstack([x for x, lab in zip(X, y) if lab == label]).T
            dic = learn_dictionary(pooled, cfg, class_label=label.item())
            logger.info("class %s: %d CSFs, objective %.6g -> %.6g in %d sweeps",
                        label, pooled.shape[1], dic.objective[0], dic.objective[-1], len(dic.objective) - 1)
            self.objectives_[label.item()] = dic.objective
            dictionaries.append(dic)
        self._set_dictionary(dictionaries)

        codes = [encode_batch(x.T, self.dictionary_) for x in X]
        self._build_tables(codes, y)
        return self

    def _set_dictionary(self, dictionaries: list[ArchetypalDictionary]) -> None:
        self.dictionary_ = ConcatenatedDictionary(dictionaries)
        self.permutation_ = MinHashPermutation(self.random_state, self.dictionary_.qd)

    def _build_tables(self, codes: list[np.ndarray], y) -> None:
        labels = [lab.item() for lab in self.classes_]
        qd = self.dictionary_.qd
        per_class = {}
        pairs = []
        for label in labels:
            rows = [c for c, lab in zip(codes, y) if lab == label and c.shape[0]]
            Y = np.vstack(rows) if rows else np.zeros((0, qd))
            sets = effective_sets_batch(Y, self.n_effective)
            per_class[label] = bloom_encode_batch(sets, self.bloom_, qd)
            pairs.extend((row, label) for row in Y)
        self.hash_table_ = build_hash_table(per_class, self.n_medoids, self.random_state)
        self.direct_table_ = build_direct_table(pairs, self.permutation_, self.n_effective, qd, labels)

    # inference ---------------------------------------------------------

    def convex_codes(self, X) -> list[np.ndarray]:
        """Convex codes, one ``(n_csfs, qd)`` array per vocalization."""
        check_is_fitted(self, "dictionary_")
        X = check_vocalizations(X, self.n_features_in_)
        return [encode_batch(x.T, self.dictionary_) for x in X]

    def conv_codes(self, codes: np.ndarray) -> np.ndarray:
        """Conv-code words for rows of convex codes."""
        sets = effective_sets_batch(codes, self.n_effective)
        return bloom_encode_batch(sets, self.bloom_, self.dictionary_.qd)

    def classify_codes(self, codes: np.ndarray, mode: str | None = None):
        """:class:`VocalizationPrediction` from one vocalization's convex codes."""
        mode = mode or self.mode
        if mode == "full":
            return classify_words(self.conv_codes(codes), self.hash_table_)
        if mode == "minhash":
            return classify_vocalization_minhash(
                codes, self.direct_table_, self.permutation_, self.n_effective, self.hash_table_, self.bloom_
            )
        raise ValueError(f"mode must be one of {MODES}")

    def predict_vocalizations(self, X, mode: str | None = None):
        return [self.classify_codes(c, mode) for c in self.convex_codes(X)]

    def predict(self, X):
        return np.array([p.label for p in self.predict_vocalizations(X)])

    def timed_classify(self, codes: list[np.ndarray], mode: str) -> tuple[list, list[float]]:
        """Predictions and per-vocalization wall-clock seconds, codes given."""
        preds, times = [], []
        for c in codes:
            t0 = time.perf_counter()
            preds.append(self.classify_codes(c, mode))
            times.append(time.perf_counter() - t0)
        return preds, times
