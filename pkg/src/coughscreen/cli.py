"""Command-line interface.

Exit status: 0 on success, 1 when inputs or configuration are invalid,
2 when a processing stage fails at run time.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, explain, fairness, pipeline, stats
from .audio_io import AudioError, Label, ManifestError, load_manifest, read_wav, write_wav
from .config import ConfigError, load_config
from .features import FEATURE_NAMES, read_feature_table, write_feature_table
from .ml import selection
from .ml.metrics import metrics_from_predictions, write_metrics_report
from .preprocess import preprocess
from .segment import segment_coughs, write_segment_report
from .synthetic import make_synthetic_corpus

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
VALIDATION_ERRORS = (ConfigError, ManifestError, pipeline.PipelineValidationError, AudioError, FileNotFoundError)


def _config(args, **extra):
    return load_config(args.config, seed=args.seed, **extra)


def _rows_for_split(ids, split_path, which):
    if split_path is None:
        return np.arange(len(ids))
    with open(split_path, newline="") as fh:
        chosen = {r["subject_id"] for r in csv.DictReader(fh) if r["split"] == which}
    return np.array([i for i, s in enumerate(ids) if s in chosen], dtype=int)


def _load_xy(path, split_path=None, which="train", columns=None):
    ids, seg_idx, labels, X = read_feature_table(path)
    rows = _rows_for_split(ids, split_path, which)
    if len(rows) == 0:
        raise pipeline.PipelineValidationError(f"no {which} rows selected from {path}")
    y = np.array([Label(lab).code for lab in labels])[rows]
    X = X[rows]
    if columns:
        X = X[:, [FEATURE_NAMES.index(c) for c in columns]]
    return [ids[i] for i in rows], [seg_idx[i] for i in rows], X, y


def cmd_synth(args):
    path = make_synthetic_corpus(args.out, args.subjects, args.seed or 0, args.coughs)
    print(path)


def cmd_preprocess(args):
    cfg = _config(args)
    write_wav(args.out, preprocess(read_wav(args.input), cfg.preprocess))


def cmd_segment(args):
    cfg = _config(args)
    wav = preprocess(read_wav(args.input), cfg.preprocess)
    segs = segment_coughs(wav, cfg.segment, Path(args.input).stem)
    write_segment_report(args.out, segs)
    print(f"{len(segs)} segments")


def cmd_features(args):
    cfg = _config(args, manifest=args.manifest)
    records = load_manifest(cfg.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "spectrograms").mkdir(exist_ok=True)
    table, segments = pipeline.extract_segments(records, cfg, Path(cfg.manifest).parent, out, with_images=args.images)
    write_segment_report(out / "segments.csv", segments)
    names = {0: Label.HEALTHY.value, 1: Label.CANCER.value}
    write_feature_table(out / "features.csv", ((s, k, names[int(c)], v) for s, k, c, v in zip(table.subject_ids, table.segment_idx, table.y, table.X)))


def cmd_stats(args):
    _, _, X, y = _load_xy(args.features, args.split, "train")
    stats.write_stats_report(args.out, stats.feature_tests(X, y, FEATURE_NAMES))
    if args.correlation:
        cfg = _config(args)
        report = stats.prune_collinear(stats.pearson_matrix(X, FEATURE_NAMES), cfg.features.correlation_threshold)
        stats.write_correlation_report(args.correlation, report)


def cmd_train(args):
    cfg = _config(args)
    ids, _, X, y = _load_xy(args.features, args.split, "train", args.columns)
    names = args.columns or list(FEATURE_NAMES)
    gs = selection.grid_search_cv(args.family, cfg.grid[args.family], X, y, ids, cfg.split.cv_folds, cfg.seed, names)
    gs.model.save(args.out)
    print(f"{args.family} best params {gs.best.params} cv accuracy {gs.best.mean:.4f} +/- {gs.best.std:.4f}")


def cmd_evaluate(args):
    model = selection.FittedModel.load(args.model)
    ids, _, X, y = _load_xy(args.features, args.split, "test", model.feature_names)
    preds = model.predict(X)
    votes = pipeline.subject_vote(ids, preds)
    truth = dict(zip(ids, y))
    subj = sorted(votes)
    write_metrics_report(args.out, [
        (f"{model.family}_segment", metrics_from_predictions(y, preds)),
        (f"{model.family}_subject", metrics_from_predictions([truth[s] for s in subj], [votes[s] for s in subj])),
    ])


def cmd_explain(args):
    cfg = _config(args)
    model = selection.FittedModel.load(args.model)
    _, _, X_bg, _ = _load_xy(args.features, args.split, "train", model.feature_names)
    ids, segs, X, _ = _load_xy(args.features, args.split, "test", model.feature_names)
    rng = np.random.default_rng(cfg.seed)
    bg = X_bg[np.sort(rng.choice(len(X_bg), size=min(cfg.shap.background, len(X_bg)), replace=False))]
    expl = [explain.kernel_shap(model.decision_function, x, bg, cfg.shap.n_coalitions, cfg.seed + i) for i, x in enumerate(X)]
    explain.write_shap_table(args.out, expl, model.feature_names, [f"{s}_{k}" for s, k in zip(ids, segs)])


def cmd_fairness(args):
    cfg = _config(args)
    records = {r.subject_id: r for r in load_manifest(args.manifest)}
    with open(args.predictions, newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if r["model"] == args.model]
    if not rows:
        raise pipeline.PipelineValidationError(f"no predictions for model {args.model!r}")
    votes = pipeline.subject_vote([r["subject_id"] for r in rows], [int(r["y_pred"]) for r in rows])
    ids = sorted(votes)
    y_true = [records[s].label.code for s in ids]
    y_pred = [votes[s] for s in ids]
    groups = {
        "age": [fairness.age_group(records[s].age_years, cfg.fairness.age_threshold) for s in ids],
        "sex": [records[s].sex.value for s in ids],
    }
    reports, notes = [], []
    for attr, g in groups.items():
        try:
            reports.append(fairness.equalized_odds_difference_mean(y_true, y_pred, g, attr))
        except ValueError as exc:
            notes.append((attr, str(exc)))
    fairness.write_fairness_report(args.out, reports, notes=notes, model=args.model)


def cmd_pipeline(args):
    cfg = _config(args, output_dir=args.out)
    res = pipeline.run_pipeline(cfg)
    for name, (seg, subj) in res.test_metrics.items():
        print(f"{name}: segment accuracy {seg.accuracy:.4f}, subject accuracy {subj.accuracy:.4f}")
    print(f"best model: {res.best_model}; outputs in {res.run_dir}")


def cmd_figures(args):
    for p in pipeline.emit_figures(args.run_dir):
        print(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coughscreen", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML configuration file")
    common.add_argument("--seed", type=int, help="override the configured seed")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, out_help="output path", out_required=True):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--out", required=out_required, help=out_help)
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "write a synthetic two-class corpus", "output directory")
    p.add_argument("--subjects", type=int, default=40)
    p.add_argument("--coughs", type=int, default=2)

    add("preprocess", cmd_preprocess, "filter, resample and normalise one WAV").add_argument("input", type=Path)
    add("segment", cmd_segment, "detect coughs in one WAV", "segment CSV").add_argument("input", type=Path)

    p = add("features", cmd_features, "feature table and spectrograms for a manifest", "output directory")
    p.add_argument("--manifest", required=True)
    p.add_argument("--no-images", dest="images", action="store_false")

    p = add("stats", cmd_stats, "per-feature Mann-Whitney tests", "stats CSV")
    p.add_argument("--features", required=True, type=Path)
    p.add_argument("--split", type=Path, help="split.csv; restricts the tests to training subjects")
    p.add_argument("--correlation", type=Path, help="also write the correlation/pruning table here")

    p = add("train", cmd_train, "grid-search one classical model family", "model JSON")
    p.add_argument("--features", required=True, type=Path)
    p.add_argument("--family", choices=sorted(selection.FAMILIES), required=True)
    p.add_argument("--split", type=Path)
    p.add_argument("--columns", nargs="+", choices=FEATURE_NAMES, metavar="FEATURE")

    for name, func, text in (("evaluate", cmd_evaluate, "test-set metrics for a saved model"),
                             ("explain", cmd_explain, "Kernel SHAP values for test rows")):
        p = add(name, func, text)
        p.add_argument("--model", required=True, type=Path)
        p.add_argument("--features", required=True, type=Path)
        p.add_argument("--split", type=Path)

    p = add("fairness", cmd_fairness, "equalized-odds audit from a predictions table")
    p.add_argument("--predictions", required=True, type=Path)
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--model", required=True)

    add("pipeline", cmd_pipeline, "run every stage", "run directory (overrides output_dir)", out_required=False)

    p = sub.add_parser("figures", parents=[common], help="redraw figures from a run directory")
    p.add_argument("run_dir", type=Path)
    p.set_defaults(func=cmd_figures)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; those are invalid input here
        return EXIT_INVALID if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
