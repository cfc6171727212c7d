"""Versioned binary model container.

All integers and floats are little-endian. Layout::

    magic        8 bytes  b"CVXHASH\\0"
    version      u16
    header       see _HEADER (frontend, coding and table parameters)
    hash family  n_hash x (u8 algorithm id, u64 seed)
    labels       u8 kind (0 str, 1 int), q x (u16 byte length, utf-8 text)
    dictionaries q x (u16 label id, u32 d, K*d f64 row-major D)
    hash table   u32 n, n x (u16 label id, bits/64 u64 words)
    direct table u32 qd, qd x u16 label id (0xFFFF = empty)
    crc32        u32 over everything above

The projection matrix and min-hash permutation are stored only as seeds and
regenerated on load.
"""

from __future__ import annotations

import io
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .archetypes import ArchetypalDictionary
from .codes import BloomConfig
from .exceptions import ModelFormatError
from .frontend import SAMPLE_RATE, CsfExtractor
from .index import EMPTY, DirectAddressTable, HashTable
from .model import ConvexHashClassifier

MAGIC = b"CVXHASH\x00"
VERSION = 1
EMPTY_SLOT = 0xFFFF

_HEADER = struct.Struct("<IIIIddBIIIIIIQQIdB")
_HEADER_FIELDS = (
    "K", "W", "m", "fft_size", "frame_s", "overlap", "log_magnitude", "sample_rate",
    "Z", "bits", "T", "q", "d", "projection_seed", "permutation_seed",
    "aa_max_iter", "aa_tol", "n_hash",
)


@dataclass
class ConvHashModel:
    extractor: CsfExtractor
    classifier: ConvexHashClassifier

    def header(self) -> dict:
        ex, clf = self.extractor, self.classifier
        return {
            "format_version": VERSION,
            "K": ex.proj_dim,
            "W": ex.window,
            "m": ex.n_bins,
            "fft_size": ex.fft_size,
            "frame_s": ex.frame_ms / 1000.0,
            "overlap": ex.overlap,
            "log_magnitude": int(bool(ex.log_magnitude)),
            "sample_rate": SAMPLE_RATE,
            "Z": clf.n_effective,
            "bits": clf.n_bits,
            "T": clf.n_medoids,
            "q": len(clf.classes_),
            "d": clf.n_archetypes,
            "projection_seed": ex.random_state,
            "permutation_seed": clf.random_state,
            "aa_max_iter": clf.max_iter,
            "aa_tol": clf.tol,
            "n_hash": len(clf.bloom_.hash_family),
            "hash_family": [list(h) for h in clf.bloom_.hash_family],
            "labels": [str(c) for c in clf.classes_],
        }


def dumps(model: ConvHashModel) -> bytes:
    h = model.header()
    clf = model.classifier
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<H", VERSION))
    out.write(_HEADER.pack(*(h[f] for f in _HEADER_FIELDS)))
    for alg, seed in clf.bloom_.hash_family:
        out.write(struct.pack("<BQ", alg, seed))

    labels = [c.item() for c in clf.classes_]
    kind = 1 if all(isinstance(lab, int) for lab in labels) else 0
    out.write(struct.pack("<B", kind))
    for lab in labels:
        raw = str(lab).encode("utf-8")
        out.write(struct.pack("<H", len(raw)) + raw)

    Df = clf.dictionary_
    for k in range(Df.q):
        D = np.ascontiguousarray(Df.dictionary(k), dtype="<f8")
        out.write(struct.pack("<HI", k, D.shape[1]))
        out.write(D.tobytes(order="C"))

    rank = {lab: i for i, lab in enumerate(labels)}
    table = clf.hash_table_
    out.write(struct.pack("<I", len(table)))
    for key, lab in zip(table.keys, table.labels):
        out.write(struct.pack("<H", rank[lab]))
        out.write(key.astype("<u8").tobytes())

    slots = clf.direct_table_.slots
    out.write(struct.pack("<I", slots.size))
    out.write(np.where(slots == EMPTY, EMPTY_SLOT, slots).astype("<u2").tobytes())

    body = out.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError("model file is truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        s = fmt if isinstance(fmt, struct.Struct) else struct.Struct(fmt)
        return s.unpack(self.take(s.size))


def read_header(data: bytes) -> dict:
    r = _Reader(data)
    if r.take(len(MAGIC)) != MAGIC:
        raise ModelFormatError("not a convhash model file (bad magic)")
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise ModelFormatError(f"unsupported model format version {version} (expected {VERSION})")
    h = dict(zip(_HEADER_FIELDS, r.unpack(_HEADER)))
    h["format_version"] = version
    h["hash_family"] = [list(r.unpack("<BQ")) for _ in range(h["n_hash"])]
    (kind,) = r.unpack("<B")
    labels = []
    for _ in range(h["q"]):
        (n,) = r.unpack("<H")
        text = r.take(n).decode("utf-8")
        labels.append(int(text) if kind == 1 else text)
    h["labels"] = labels
    h["_offset"] = r.pos
    return h


def loads(data: bytes) -> ConvHashModel:
    if len(data) < len(MAGIC) + 6:
        raise ModelFormatError("model file is truncated")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if data[:len(MAGIC)] != MAGIC:
        raise ModelFormatError("not a convhash model file (bad magic)")
    h = read_header(body)
    if zlib.crc32(body) != crc:
        raise ModelFormatError("model file checksum mismatch")
    r = _Reader(body)
    r.pos = h.pop("_offset")
    K, q, d, bits, T = h["K"], h["q"], h["d"], h["bits"], h["T"]
    labels = h["labels"]
    if h["m"] != h["fft_size"] // 2 + 1:
        raise ModelFormatError("header inconsistent: m != fft_size/2 + 1")
    if h["sample_rate"] != SAMPLE_RATE:
        raise ModelFormatError(f"unsupported sample rate {h['sample_rate']}")

    dictionaries = []
    for k in range(q):
        label_id, dk = r.unpack("<HI")
        if label_id != k or dk != d:
            raise ModelFormatError(f"dictionary block {k} is out of order or has d={dk} (expected {d})")
        D = np.frombuffer(r.take(8 * K * dk), dtype="<f8").reshape(K, dk).astype(np.float64)
        if not np.all(np.isfinite(D)):
            raise ModelFormatError(f"dictionary {k} contains non-finite values")
        dictionaries.append(ArchetypalDictionary(D=D, B=None, class_label=labels[k]))

    (n_entries,) = r.unpack("<I")
    if n_entries != q * T:
        raise ModelFormatError(f"hash table has {n_entries} entries, expected q*T = {q * T}")
    n_words = bits // 64
    keys = np.empty((n_entries, n_words), dtype=np.uint64)
    key_labels = []
    for i in range(n_entries):
        (lid,) = r.unpack("<H")
        if lid >= q:
            raise ModelFormatError(f"hash table entry {i} has unknown label id {lid}")
        key_labels.append(labels[lid])
        keys[i] = np.frombuffer(r.take(8 * n_words), dtype="<u8")

    (qd,) = r.unpack("<I")
    if qd != q * d:
        raise ModelFormatError(f"direct table has {qd} slots, expected q*d = {q * d}")
    raw = np.frombuffer(r.take(2 * qd), dtype="<u2").astype(np.int64)
    if np.any((raw >= q) & (raw != EMPTY_SLOT)):
        raise ModelFormatError("direct table references an unknown label id")
    slots = np.where(raw == EMPTY_SLOT, EMPTY, raw)
    if r.pos != len(body):
        raise ModelFormatError("trailing bytes after direct table")

    extractor = CsfExtractor(
        fft_size=h["fft_size"],
        frame_ms=h["frame_s"] * 1000.0,
        overlap=h["overlap"],
        window=h["W"],
        proj_dim=K,
        log_magnitude=bool(h["log_magnitude"]),
        random_state=h["projection_seed"],
    )
    try:
        bloom = BloomConfig(bits, tuple(tuple(x) for x in h["hash_family"]))
    except ValueError as exc:
        raise ModelFormatError(f"invalid Bloom configuration: {exc}") from None
    clf = ConvexHashClassifier(
        n_archetypes=d,
        n_effective=h["Z"],
        n_bits=bits,
        n_medoids=T,
        max_iter=h["aa_max_iter"],
        tol=h["aa_tol"],
        hash_family=bloom.hash_family,
        random_state=h["permutation_seed"],
    )
    clf.classes_ = np.array(labels)
    clf.n_features_in_ = K
    clf.bloom_ = bloom
    clf.objectives_ = {}
    clf._set_dictionary(dictionaries)
    clf.hash_table_ = HashTable(keys, key_labels, T)
    clf.direct_table_ = DirectAddressTable(slots, labels, clf.permutation_.seed)
    return ConvHashModel(extractor, clf)


def save(path, model: ConvHashModel) -> None:
    Path(path).write_bytes(dumps(model))


def load(path) -> ConvHashModel:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ModelFormatError(f"cannot read model {path}: {exc}") from exc
    return loads(data)
