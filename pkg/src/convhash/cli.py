"""``convhash`` command line: synth, train, classify, evaluate, bench, inspect.

Exit codes: 0 success, 1 usage, 2 data error, 3 model-format error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import modelfile
from .dataset import load_vocalizations, read_manifest, recording_segments
from .evaluate import SCHEMES, bench, evaluate
from .exceptions import ConvHashError, DataError
from .frontend import CsfExtractor, SegmentList, build_csf, read_wav
from .model import MODES, ConvexHashClassifier
from .synth import SynthSpec, generate

logger = logging.getLogger("convhash")

PREDICTION_HEADER = ("recording_id", "onset_s", "offset_s", "label", "vote_fraction", "mode", "fallbacks")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_params(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model parameters")
    g.add_argument("--fft", type=int, default=512, help="FFT points (default 512)")
    g.add_argument("--frame-ms", type=float, default=20.0, help="frame length in ms (default 20)")
    g.add_argument("--overlap", type=float, default=0.5, help="frame overlap fraction (default 0.5)")
    g.add_argument("--window", type=int, default=5, help="super-frame context W, odd (default 5)")
    g.add_argument("--proj-dim", type=int, default=500, help="CSF dimension K (default 500)")
    g.add_argument("--log-magnitude", action="store_true", help="log1p-compress the spectrogram")
    g.add_argument("--atoms", type=int, default=25, help="archetypes per class d (default 25)")
    g.add_argument("--z", type=int, default=4, help="effective-set size Z (default 4)")
    g.add_argument("--bits", type=int, default=1024, help="conv-code width (default 1024)")
    g.add_argument("--medoids", type=int, default=10, help="hash-table keys per class T (default 10)")
    g.add_argument("--max-iter", type=int, default=100, help="archetypal analysis sweeps (default 100)")
    g.add_argument("--tol", type=float, default=1e-6, help="relative objective change to stop (default 1e-6)")
    g.add_argument("--seed", type=int, default=0, help="seed for projection, initialisation and min-hash")


def _estimators(args) -> tuple[CsfExtractor, ConvexHashClassifier]:
    extractor = CsfExtractor(
        fft_size=args.fft,
        frame_ms=args.frame_ms,
        overlap=args.overlap,
        window=args.window,
        proj_dim=args.proj_dim,
        log_magnitude=args.log_magnitude,
        random_state=args.seed,
    )
    clf = ConvexHashClassifier(
        n_archetypes=args.atoms,
        n_effective=args.z,
        n_bits=args.bits,
        n_medoids=args.medoids,
        max_iter=args.max_iter,
        tol=args.tol,
        random_state=args.seed,
    )
    try:
        extractor.projection()
    except ValueError as exc:
        raise DataError(str(exc)) from None
    return extractor, clf


def _out_stream(path):
    if path in (None, "-"):
        return sys.stdout
    return open(path, "w", newline="", encoding="utf-8")


def cmd_synth(args) -> int:
    rows = generate(SynthSpec(args.classes, args.vocs, args.seed), args.out)
    print(f"wrote {len(rows)} recordings to {Path(args.out) / 'manifest.csv'}")
    return 0


def cmd_train(args) -> int:
    extractor, clf = _estimators(args)
    rows = read_manifest(args.manifest)
    vocs = [v for v in load_vocalizations(rows, extractor) if v.csfs.shape[0]]
    if not vocs:
        raise DataError("no vocalizations with CSFs in the manifest")
    clf.fit([v.csfs for v in vocs], [v.label for v in vocs])
    model = modelfile.ConvHashModel(extractor, clf)
    modelfile.save(args.out, model)
    for label, obj in clf.objectives_.items():
        print(f"{label}: objective {obj[0]:.6g} -> {obj[-1]:.6g} over {len(obj) - 1} sweeps")
    print(f"model written to {args.out} (q={len(clf.classes_)}, entries={len(clf.hash_table_)})")
    return 0


def _classify_rows(model, audio, annotations, mode) -> list[list]:
    ex, clf = model.extractor, model.classifier
    clip = read_wav(audio)
    try:
        spec = ex.spectrogram(clip)
    except DataError as exc:
        logger.warning("%s: %s; nothing to classify", audio, exc)
        return []
    segs = recording_segments(clip, Path(annotations) if annotations else None, ex)
    if not len(segs):
        logger.warning("%s: no vocalizations found", audio)
    proj = ex.projection()
    rows = []
    for onset, offset in segs:
        csf = build_csf(spec, SegmentList(clip.id, [(onset, offset)]), proj)
        if csf.l == 0:
            logger.warning("%s [%.3f, %.3f]: shorter than the context window", clip.id, onset, offset)
            rows.append([clip.id, f"{onset:.6f}", f"{offset:.6f}", "", "0.000000", mode, 0])
            continue
        codes = clf.convex_codes([csf.columns.T])[0]
        pred = clf.classify_codes(codes, mode)
        rows.append([
            clip.id, f"{onset:.6f}", f"{offset:.6f}", pred.label, f"{pred.vote_fraction:.6f}", mode, pred.fallbacks,
        ])
    return rows


def cmd_classify(args) -> int:
    model = modelfile.load(args.model)
    rows = _classify_rows(model, args.audio, args.annotations, args.mode)
    out = _out_stream(args.out)
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(PREDICTION_HEADER)
        writer.writerows(rows)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_evaluate(args) -> int:
    extractor, clf = _estimators(args)
    vocs = load_vocalizations(read_manifest(args.manifest), extractor)
    report = evaluate(vocs, clf, args.folds, args.seed, args.holdout, args.scheme)
    print(report.summary())
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=2))
    return 0


def cmd_bench(args) -> int:
    model = modelfile.load(args.model)
    vocs = load_vocalizations(read_manifest(args.manifest), model.extractor)
    rep = bench(model.classifier, [v.csfs for v in vocs if v.csfs.shape[0]], args.runs)
    print("run,full_s,minhash_s")
    for i, r in enumerate(rep.runs):
        print(f"{i},{r['full']:.9f},{r['minhash']:.9f}")
    print(f"mean,{rep.mean_latency_s['full']:.9f},{rep.mean_latency_s['minhash']:.9f}")
    print(f"minhash/full ratio: {rep.ratio:.4f} over {rep.n_vocalizations} vocalizations, "
          f"{rep.table_entries} table entries; convex coding {rep.encode_latency_s:.6f} s per vocalization")
    if args.out:
        Path(args.out).write_text(json.dumps(rep.to_dict(), indent=2))
    return 0


def cmd_inspect(args) -> int:
    model = modelfile.load(args.model)
    for key, value in model.header().items():
        print(f"{key}: {value}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="convhash", description="Convex-sparse audio hashing for species classification.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic annotated corpus")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--vocs", type=int, default=40, help="vocalizations per class")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", "--model", dest="out", required=True, help="model file to write")
    _add_params(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="classify the vocalizations of one recording")
    p.add_argument("--model", required=True)
    p.add_argument("--audio", required=True)
    p.add_argument("--annotations", help="segment CSV; energy segmentation is used without it")
    p.add_argument("--mode", choices=MODES, default="full")
    p.add_argument("--out", help="predictions CSV (default stdout)")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", help="cross-validate on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--folds", type=int, default=3)
    p.add_argument("--holdout", type=float, default=0.0, help="validation fraction set aside per class")
    p.add_argument("--scheme", choices=SCHEMES, default="train-one",
                   help="train-one: train on one fold, test on the rest; standard: the reverse")
    p.add_argument("--out", help="JSON report path")
    _add_params(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="time both classification modes")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--out", help="JSON report path")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("inspect", help="print a model header")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConvHashError as exc:
        print(f"convhash: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"convhash: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
