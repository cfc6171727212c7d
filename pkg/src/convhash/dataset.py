"""Manifest ingestion: recordings -> labelled vocalizations -> CSF arrays."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import DataError
from .frontend import (
    AudioClip,
    CsfExtractor,
    SegmentList,
    build_csf,
    read_annotations,
    read_wav,
    segment_energy_fallback,
)

logger = logging.getLogger(__name__)

MANIFEST_HEADER = ("path", "label", "annotations_path")


@dataclass
class ManifestRow:
    path: Path
    label: str
    annotations_path: Path | None

    @property
    def has_annotations(self) -> bool:
        return self.annotations_path is not None


@dataclass
class Vocalization:
    recording_id: str
    onset_s: float
    offset_s: float
    label: str | None
    csfs: np.ndarray  # (n_csfs, K)


def read_manifest(path) -> list[ManifestRow]:
    """Read ``path,label,annotations_path``; relative paths resolve against the manifest."""
    path = Path(path)
    base = path.parent
    rows = []
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ())[:3] != MANIFEST_HEADER:
            raise DataError(f"{path}: manifest header must be {','.join(MANIFEST_HEADER)}")
        for row in reader:
            label = (row["label"] or "").strip()
            if not label:
                raise DataError(f"{path}:{reader.line_num}: empty label")
            audio = base / row["path"]
            if not audio.exists():
                raise DataError(f"{path}:{reader.line_num}: audio file {audio} does not exist")
            ann = (row.get("annotations_path") or "").strip()
            ann_path = base / ann if ann else None
            if ann_path is not None and not ann_path.exists():
                raise DataError(f"{path}:{reader.line_num}: annotation file {ann_path} does not exist")
            rows.append(ManifestRow(audio, label, ann_path))
    return rows


def write_manifest(path, rows: list[ManifestRow]) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for r in rows:
            ann = "" if r.annotations_path is None else _rel(r.annotations_path, path.parent)
            w.writerow([_rel(r.path, path.parent), r.label, ann])


def _rel(p: Path, base: Path) -> str:
    try:
        return str(Path(p).relative_to(base))
    except ValueError:
        return str(p)


def recording_segments(clip: AudioClip, annotations: Path | None, extractor: CsfExtractor) -> SegmentList:
    """Annotated segments for ``clip``, or energy-detected ones without annotations."""
    if annotations is not None:
        segs = read_annotations(annotations).get(clip.id, SegmentList(clip.id, []))
        return segs.normalized(clip.duration)
    segs = segment_energy_fallback(extractor.spectrogram(clip), recording_id=clip.id)
    if not len(segs):
        logger.warning("%s: no annotations and the energy segmenter found no vocalizations", clip.id)
    return segs


def load_vocalizations(rows: list[ManifestRow], extractor: CsfExtractor) -> list[Vocalization]:
    """Every vocalization of every manifest row, in manifest then time order."""
    proj = extractor.projection()
    out = []
    for row in rows:
        clip = read_wav(row.path)
        spec = extractor.spectrogram(clip)
        segs = recording_segments(clip, row.annotations_path, extractor)
        for onset, offset in segs:
            csf = build_csf(spec, SegmentList(clip.id, [(onset, offset)]), proj)
            out.append(Vocalization(clip.id, onset, offset, row.label, np.ascontiguousarray(csf.columns.T)))
    return out
