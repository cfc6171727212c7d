"""Synthetic, acoustically separable species corpus.

Class ``k`` owns the frequency band ``class_bands(q)[k]``. A vocalization
is a pair of frequency-modulated partials placed symmetrically about a
jittered carrier, with a class-specific modulation rate, so every
instantaneous frequency stays inside the class band (see
``signal_frequency_range``). Recordings hold a few vocalizations separated
by a low white-noise floor; annotation CSVs give their exact extents.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import ManifestRow, write_manifest
from .frontend import SAMPLE_RATE, AudioClip, SegmentList, write_annotations, write_wav

F_LO = 1500.0
F_HI = 15000.0
GUARD = 0.1  # fraction of a band left free on each side

PARTIAL_OFFSET = 0.20  # of band width, partials at carrier +/- offset
FM_DEPTH = 0.08
CARRIER_JITTER = 0.05

VOCS_PER_RECORDING = 5
NOISE_LEVEL = 0.003
PEAK = 0.5


def class_bands(q: int) -> list[tuple[float, float]]:
    """Disjoint ``(lo, hi)`` bands in Hz, one per class, guards excluded."""
    edges = np.linspace(F_LO, F_HI, q + 1)
    width = edges[1] - edges[0]
    return [(float(a + GUARD * width), float(b - GUARD * width)) for a, b in zip(edges[:-1], edges[1:])]


def signal_frequency_range(q: int, k: int) -> tuple[float, float]:
    """Extreme instantaneous frequencies any class-``k`` vocalization can reach."""
    edges = np.linspace(F_LO, F_HI, q + 1)
    width = edges[1] - edges[0]
    centre = (edges[k] + edges[k + 1]) / 2
    reach = (PARTIAL_OFFSET + FM_DEPTH + CARRIER_JITTER) * width
    return float(centre - reach), float(centre + reach)


def modulation_rate(k: int) -> float:
    return 4.0 + 3.0 * (k % 5)


def vocalization(rng: np.random.Generator, q: int, k: int, duration: float) -> np.ndarray:
    """Float waveform in [-1, 1] of one class-``k`` vocalization."""
    edges = np.linspace(F_LO, F_HI, q + 1)
    width = edges[1] - edges[0]
    centre = (edges[k] + edges[k + 1]) / 2
    carrier = centre + rng.uniform(-CARRIER_JITTER, CARRIER_JITTER) * width
    n = int(round(duration * SAMPLE_RATE))
    t = np.arange(n) / SAMPLE_RATE
    phase0 = rng.uniform(0, 2 * np.pi)
    inst = carrier + FM_DEPTH * width * np.sin(2 * np.pi * modulation_rate(k) * t + phase0)
    out = np.zeros(n)
    for sign, amp in ((-1.0, 1.0), (1.0, 0.6)):
        f = inst + sign * PARTIAL_OFFSET * width
        out += amp * np.sin(2 * np.pi * np.cumsum(f) / SAMPLE_RATE + rng.uniform(0, 2 * np.pi))
    ramp = min(n // 2, int(0.02 * SAMPLE_RATE))
    env = np.ones(n)
    env[:ramp] = np.sin(np.linspace(0, np.pi / 2, ramp)) ** 2
    env[n - ramp:] = env[:ramp][::-1]
    return out * env / 1.6


@dataclass
class SynthSpec:
    q: int
    vocs_per_class: int
    seed: int = 0
    min_dur: float = 0.25
    max_dur: float = 0.40


def generate(spec: SynthSpec, out_dir) -> list[ManifestRow]:
    """Write WAVs, annotation CSVs and ``manifest.csv`` under ``out_dir``."""
    if spec.q < 2:
        raise ValueError("need at least two classes")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    rows = []
    for k in range(spec.q):
        label = f"species{k:02d}"
        remaining = spec.vocs_per_class
        rec = 0
        while remaining > 0:
            n_vocs = min(VOCS_PER_RECORDING, remaining)
            remaining -= n_vocs
            rid = f"{label}_rec{rec:03d}"
            rec += 1
            pieces, segs = [], []
            t = rng.uniform(0.15, 0.25)
            pieces.append(np.zeros(int(round(t * SAMPLE_RATE))))
            for _ in range(n_vocs):
                dur = rng.uniform(spec.min_dur, spec.max_dur)
                wave = vocalization(rng, spec.q, k, dur)
                onset = sum(p.size for p in pieces) / SAMPLE_RATE
                pieces.append(wave)
                segs.append((onset, onset + wave.size / SAMPLE_RATE))
                pieces.append(np.zeros(int(round(rng.uniform(0.15, 0.35) * SAMPLE_RATE))))
            signal = np.concatenate(pieces) * PEAK
            signal += rng.normal(0.0, NOISE_LEVEL, signal.size)
            pcm = np.clip(np.round(signal * 32767), -32768, 32767).astype(np.int16)
            wav = out_dir / f"{rid}.wav"
            ann = out_dir / f"{rid}.csv"
            write_wav(wav, AudioClip(pcm, SAMPLE_RATE, rid))
            write_annotations(ann, [SegmentList(rid, segs)])
            rows.append(ManifestRow(wav, label, ann))
    write_manifest(out_dir / "manifest.csv", rows)
    return rows
