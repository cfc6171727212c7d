"""Audio to compressed super-frames (CSFs).

Pipeline: 16-bit mono WAV -> Hann-windowed magnitude STFT -> vocalization
segments (from an annotation CSV, or an energy-threshold fallback) ->
``W`` stacked neighbouring frames per position -> Gaussian random
projection to ``K`` dimensions.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.io import wavfile
from scipy.signal import get_window
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import is_power_of_two
from .exceptions import DataError

logger = logging.getLogger(__name__)

SAMPLE_RATE = 44100


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE
    id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.samples.ndim != 1:
            raise DataError(f"unsupported channel count: expected mono, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise DataError("sample rate must be positive")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass
class Spectrogram:
    magnitudes: np.ndarray  # (m, f)
    frame_hop_s: float
    frame_len_s: float

    @property
    def n_bins(self) -> int:
        return self.magnitudes.shape[0]

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[1]

    def frame_energy(self) -> np.ndarray:
        return np.einsum("ij,ij->j", self.magnitudes, self.magnitudes)


@dataclass
class SegmentList:
    """Vocalization intervals ``(onset_s, offset_s)`` of one recording."""

    recording_id: str = ""
    segments: list = field(default_factory=list)

    def __post_init__(self):
        self.segments = [(float(a), float(b)) for a, b in self.segments]
        for a, b in self.segments:
            if not a < b:
                raise DataError(f"segment onset must precede offset, got ({a}, {b}) in {self.recording_id!r}")
            if a < 0:
                raise DataError(f"negative onset {a} in {self.recording_id!r}")

    def __len__(self):
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    def normalized(self, duration: float | None = None) -> "SegmentList":
        """Sorted, clipped to ``duration``, with overlapping intervals merged."""
        segs = sorted(self.segments)
        if duration is not None:
            segs = [(a, min(b, duration)) for a, b in segs if a < duration]
        merged: list[tuple[float, float]] = []
        for a, b in segs:
            if merged and a <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(merged[-1][1], b))
            else:
                merged.append((a, b))
        return SegmentList(self.recording_id, merged)


@dataclass(frozen=True)
class ProjectionMatrix:
    """Gaussian random projection, regenerated from ``(seed, K, W, m)``.

    ``explicit`` overrides the generated entries; such a matrix cannot be
    persisted and exists for diagnostics (e.g. an identity projection).
    """

    seed: int
    K: int
    W: int
    m: int
    explicit: np.ndarray | None = field(default=None, repr=False, compare=False)

    @cached_property
    def entries(self) -> np.ndarray:
        if self.explicit is not None:
            out = np.asarray(self.explicit, dtype=np.float64)
            if out.shape != (self.K, self.W * self.m):
                raise DataError(f"projection/spectrogram mismatch: explicit entries have shape {out.shape}")
        else:
            rng = np.random.default_rng(self.seed)
            out = rng.standard_normal((self.K, self.W * self.m)) / np.sqrt(self.K)
        out.flags.writeable = False
        return out

    @classmethod
    def identity(cls, m: int) -> "ProjectionMatrix":
        return cls(seed=0, K=m, W=1, m=m, explicit=np.eye(m))


@dataclass
class CsfMatrix:
    """CSFs as columns, ``(K, l)``, with per-column provenance.

    ``source_ids`` holds ``(recording_id, segment_index, frame_index)``.
    A segment shorter than the context window yields ``l = 0``.
    """

    columns: np.ndarray
    source_ids: list = field(default_factory=list)
    source_labels: list | None = None

    @property
    def K(self) -> int:
        return self.columns.shape[0]

    @property
    def l(self) -> int:
        return self.columns.shape[1]

    @classmethod
    def concatenate(cls, parts: Sequence["CsfMatrix"], K: int) -> "CsfMatrix":
        if not parts:
            return cls(np.zeros((K, 0)), [])
        labels = None
        if all(p.source_labels is not None for p in parts):
            labels = [lab for p in parts for lab in p.source_labels]
        return cls(
            np.hstack([p.columns for p in parts]),
            [s for p in parts for s in p.source_ids],
            labels,
        )


def read_wav(path) -> AudioClip:
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except (OSError, ValueError) as exc:
        raise DataError(f"unreadable audio {path}: {exc}") from exc
    if data.ndim != 1:
        raise DataError(f"unsupported channel count in {path}: {data.shape[1]} channels (mono required)")
    if data.dtype != np.int16:
        raise DataError(f"{path}: expected 16-bit PCM, got {data.dtype}")
    if rate != SAMPLE_RATE:
        raise DataError(f"{path}: sample rate {rate} Hz, expected {SAMPLE_RATE} Hz (resample externally)")
    return AudioClip(data, rate, path.stem)


def write_wav(path, clip: AudioClip) -> None:
    wavfile.write(Path(path), clip.sample_rate, np.asarray(clip.samples, dtype=np.int16))


def read_annotations(path) -> dict[str, SegmentList]:
    """Parse ``recording_id,onset_s,offset_s`` CSV into per-recording segments."""
    out: dict[str, list] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"recording_id", "onset_s", "offset_s"} - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: annotation header lacks {sorted(missing)}")
        for row in reader:
            try:
                seg = (float(row["onset_s"]), float(row["offset_s"]))
            except ValueError as exc:
                raise DataError(f"{path}: bad number on line {reader.line_num}") from exc
            out.setdefault(row["recording_id"], []).append(seg)
    return {rid: SegmentList(rid, segs) for rid, segs in out.items()}


def write_annotations(path, segment_lists: Iterable[SegmentList]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["recording_id", "onset_s", "offset_s"])
        for sl in segment_lists:
            for a, b in sl:
                w.writerow([sl.recording_id, f"{a:.6f}", f"{b:.6f}"])


def compute_spectrogram(
    clip: AudioClip,
    fft_size: int = 512,
    frame_s: float = 0.020,
    overlap_fraction: float = 0.5,
    log_magnitude: bool = False,
) -> Spectrogram:
    """Hann-windowed magnitude STFT with ``fft_size // 2 + 1`` bins.

    Frames are ``round(frame_s * sample_rate)`` samples long. When a frame
    is longer than ``fft_size`` it is wrapped (time-aliased) onto
    ``fft_size`` points, which samples the frame's DTFT exactly at the
    ``fft_size`` bin frequencies; shorter frames are zero-padded.
    """
    if not isinstance(clip, AudioClip):
        clip = AudioClip(np.asarray(clip))
    if not is_power_of_two(fft_size) or fft_size < 64:
        raise ValueError(f"fft_size must be a power of two >= 64, got {fft_size}")
    if not 0 <= overlap_fraction < 1:
        raise ValueError("overlap_fraction must lie in [0, 1)")
    frame_len = int(round(frame_s * clip.sample_rate))
    hop = max(1, int(round(frame_len * (1.0 - overlap_fraction))))
    x = clip.samples.astype(np.float64)
    if x.size < frame_len or frame_len < 1:
        raise DataError(f"input too short: {x.size} samples, one frame needs {frame_len}")

    n_frames = (x.size - frame_len) // hop + 1
    frames = np.lib.stride_tricks.sliding_window_view(x, frame_len)[::hop][:n_frames]
    frames = frames * get_window("hann", frame_len)
    if frame_len > fft_size:
        pad = (-frame_len) % fft_size
        frames = np.pad(frames, ((0, 0), (0, pad))).reshape(n_frames, -1, fft_size).sum(axis=1)
    mags = np.abs(np.fft.rfft(frames, n=fft_size, axis=1)).T
    if log_magnitude:
        mags = np.log1p(mags)
    return Spectrogram(np.ascontiguousarray(mags), hop / clip.sample_rate, frame_len / clip.sample_rate)


def segment_energy_fallback(
    spec: Spectrogram,
    threshold_factor: float = 4.0,
    min_dur_s: float = 0.05,
    recording_id: str = "",
) -> SegmentList:
    """Segments where frame energy exceeds ``threshold_factor`` x median energy.

    Runs of consecutive active frames become intervals spanning from the
    first frame's start to the last frame's end; touching intervals merge
    and those shorter than ``min_dur_s`` are dropped.
    """
    energy = spec.frame_energy()
    if energy.size == 0:
        return SegmentList(recording_id, [])
    active = energy > threshold_factor * np.median(energy)
    padded = np.concatenate([[False], active, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    runs = edges.reshape(-1, 2)  # [start, stop) frame indices
    segs = [(s * spec.frame_hop_s, (e - 1) * spec.frame_hop_s + spec.frame_len_s) for s, e in runs]
    merged = SegmentList(recording_id, segs).normalized()
    kept = [(a, b) for a, b in merged if b - a >= min_dur_s - 1e-12]
    return SegmentList(recording_id, kept)


def make_projection(seed: int, K: int, W: int, m: int) -> ProjectionMatrix:
    if min(K, W, m) < 1:
        raise ValueError("K, W and m must be positive")
    if K >= W * m:
        raise DataError(f"projection does not compress (K={K} >= W*m={W * m})")
    return ProjectionMatrix(int(seed), int(K), int(W), int(m))


def segment_frames(spec: Spectrogram, onset: float, offset: float) -> np.ndarray:
    """Indices of frames whose centre lies in ``[onset, offset)``."""
    centres = np.arange(spec.n_frames) * spec.frame_hop_s + spec.frame_len_s / 2
    return np.flatnonzero((centres >= onset) & (centres < offset))


def build_csf(spec: Spectrogram, segs: SegmentList, proj: ProjectionMatrix) -> CsfMatrix:
    """Stack ``W`` centred neighbouring frames and project them to ``K`` dims.

    A frame belongs to a segment when its centre falls inside it; frames
    whose context window would reach outside the segment are skipped, so a
    segment with fewer than ``W`` frames contributes no CSFs.
    """
    if proj.W % 2 != 1:
        raise DataError(f"context window W must be odd, got {proj.W}")
    if proj.m != spec.n_bins:
        raise DataError(f"projection/spectrogram mismatch: projection expects {proj.m} bins, spectrogram has {spec.n_bins}")
    half = proj.W // 2
    mags = spec.magnitudes
    stacks = []
    ids = []
    for si, (onset, offset) in enumerate(segs):
        idx = segment_frames(spec, onset, offset)
        if idx.size < proj.W:
            continue
        centres = idx[half: idx.size - half]
        # (W*m, n): frame centre-half first, each frame's bins contiguous
        window = np.stack([mags[:, centres + k] for k in range(-half, half + 1)], axis=0)
        stacks.append(window.reshape(proj.W * proj.m, -1))
        ids.extend((segs.recording_id, si, int(f)) for f in centres)
    if not stacks:
        return CsfMatrix(np.zeros((proj.K, 0)), [])
    stacked = np.hstack(stacks)
    return CsfMatrix(proj.entries @ stacked, ids)


class CsfExtractor(TransformerMixin, BaseEstimator):
    """Turn vocalizations into per-vocalization CSF arrays.

    ``transform`` takes a sequence of ``(clip, onset_s, offset_s)`` triples
    and returns one ``(n_csfs, proj_dim)`` array per triple, so the output
    lines up with per-vocalization labels. Stateless: ``fit`` only checks
    the parameters.
    """

    def __init__(
        self,
        fft_size=512,
        frame_ms=20.0,
        overlap=0.5,
        window=5,
        proj_dim=500,
        log_magnitude=False,
        random_state=0,
    ):
        self.fft_size = fft_size
        self.frame_ms = frame_ms
        self.overlap = overlap
        self.window = window
        self.proj_dim = proj_dim
        self.log_magnitude = log_magnitude
        self.random_state = random_state

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def projection(self) -> ProjectionMatrix:
        return make_projection(self.random_state, self.proj_dim, self.window, self.n_bins)

    def fit(self, X=None, y=None):
        self.projection_ = self.projection()
        return self

    def spectrogram(self, clip: AudioClip) -> Spectrogram:
        return compute_spectrogram(clip, self.fft_size, self.frame_ms / 1000.0, self.overlap, self.log_magnitude)

    def transform(self, X) -> list[np.ndarray]:
        proj = getattr(self, "projection_", None) or self.projection()
        cache: dict[int, Spectrogram] = {}
        out = []
        for clip, onset, offset in X:
            key = id(clip)
            if key not in cache:
                cache[key] = self.spectrogram(clip)
            csf = build_csf(cache[key], SegmentList(clip.id, [(onset, offset)]), proj)
            out.append(np.ascontiguousarray(csf.columns.T))
        return out
