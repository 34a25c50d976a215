"""End-to-end orchestration from manifest to reports.

All statistics, feature pruning, scaling and model selection read only the
training split; the test split is touched once, for final evaluation.
"""

from __future__ import annotations

import csv
import json
import logging
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__, explain, fairness, figures, nn, stats
from .audio_io import Label, SubjectRecord, load_manifest, read_wav
from .config import PipelineConfig
from .features import FEATURE_NAMES, feature_vector, mel_spectrogram_image, read_feature_table, write_feature_table, write_raster
from .ml import selection
from .ml.metrics import metrics_from_predictions, write_metrics_report
from .preprocess import preprocess
from .segment import segment_coughs, write_segment_report

log = logging.getLogger(__name__)


class PipelineValidationError(ValueError):
    pass


class PipelineError(RuntimeError):
    def __init__(self, stage: str, subject_ids, cause):
        self.stage = stage
        self.subject_ids = list(subject_ids)
        super().__init__(f"stage {stage!r} failed for subjects {self.subject_ids}: {cause}")


# -- splitting --------------------------------------------------------------

def split_ids(ids, labels, fraction: float, seed: int) -> tuple[list, list]:
    """Stratified subject split; returns ``(kept, held_out)`` with ``round(n_c * fraction)`` held out per class."""
    ids = list(ids)
    labels = list(labels)
    rng = np.random.default_rng(seed)
    kept, held = [], []
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise PipelineValidationError("both classes must be present to split")
    for c in classes:
        members = sorted(i for i, lab in zip(ids, labels) if lab == c)
        n_out = int(round(len(members) * fraction))
        if n_out < 1 or n_out >= len(members):
            raise PipelineValidationError(f"class {c!r} with {len(members)} subjects is too small for fraction {fraction}")
        perm = [members[k] for k in rng.permutation(len(members))]
        held += perm[:n_out]
        kept += perm[n_out:]
    return sorted(kept), sorted(held)


def split_corpus(records: list[SubjectRecord], test_fraction: float = 0.10, seed: int = 0) -> tuple[list[str], list[str]]:
    return split_ids([r.subject_id for r in records], [r.label.value for r in records], test_fraction, seed)


# -- data assembly ----------------------------------------------------------

@dataclass
class SegmentTable:
    subject_ids: list[str]
    segment_idx: list[int]
    y: np.ndarray
    X: np.ndarray
    images: np.ndarray | None = None

    def rows_for(self, subjects) -> np.ndarray:
        wanted = set(subjects)
        return np.array([i for i, s in enumerate(self.subject_ids) if s in wanted], dtype=int)


def extract_segments(records, cfg: PipelineConfig, base_dir: Path, out_dir: Path | None = None, with_images=True):
    """Preprocess, segment and featurise every recording."""
    subject_ids, seg_idx, labels, rows, images, segments = [], [], [], [], [], []
    failures: dict[str, list[str]] = {}
    for rec in records:
        path = Path(rec.audio_path)
        path = path if path.is_absolute() else base_dir / path
        try:
            wav = preprocess(read_wav(path), cfg.preprocess)
        except Exception as exc:  # noqa: BLE001 - reported with stage and subject
            failures.setdefault("preprocess", []).append(f"{rec.subject_id} ({exc})")
            continue
        segs = segment_coughs(wav, cfg.segment, rec.subject_id)
        if not segs:
            failures.setdefault("segment", []).append(rec.subject_id)
            continue
        for k, seg in enumerate(segs):
            try:
                vec = feature_vector(seg, cfg.mfcc, cfg.features.welch_frame, cfg.features.welch_overlap)
            except ValueError as exc:
                failures.setdefault("features", []).append(f"{rec.subject_id} ({exc})")
                continue
            subject_ids.append(rec.subject_id)
            seg_idx.append(k)
            labels.append(rec.label.code)
            rows.append(vec)
            segments.append(seg)
            if with_images:
                img = mel_spectrogram_image(seg, cfg.mel)
                images.append(img)
                if out_dir is not None:
                    write_raster(out_dir / "spectrograms" / f"{rec.subject_id}_{k}.f32", img)
    if failures:
        stage = next(iter(failures))
        raise PipelineError(stage, failures[stage], "no usable output")
    table = SegmentTable(subject_ids, seg_idx, np.array(labels, dtype=int), np.array(rows).reshape(-1, len(FEATURE_NAMES)),
                         np.array(images, dtype=np.float32) if with_images else None)
    return table, segments


def subject_vote(subject_ids, preds) -> dict[str, int]:
    """Majority vote of segment predictions per subject; ties go to cancer."""
    votes: dict[str, list[int]] = {}
    for s, p in zip(subject_ids, preds):
        votes.setdefault(s, []).append(int(p))
    return {s: int(np.mean(v) >= 0.5) for s, v in votes.items()}


# -- reports ----------------------------------------------------------------

def demographics(records) -> list[list]:
    """Cohort description: age (Mann-Whitney), sex and smoking (chi-squared)."""
    by = {lab: [r for r in records if r.label is lab] for lab in Label}
    rows = []
    ages = {lab: [r.age_years for r in rs] for lab, rs in by.items()}
    try:
        p_age = stats.mann_whitney_u(ages[Label.CANCER], ages[Label.HEALTHY]).p_value
    except stats.StatsError:
        p_age = float("nan")

    def med_iqr(a):
        if not a:
            return ""
        q1, m, q3 = np.percentile(a, [25, 50, 75])
        return f"{m:g} ({q1:g}-{q3:g})"

    rows.append(["age_median_iqr", med_iqr(ages[Label.CANCER]), med_iqr(ages[Label.HEALTHY]), repr(float(p_age))])
    for attr, levels in (("sex", ("male", "female")), ("smoking", ("ever", "never", "not_given"))):
        table = [[sum(getattr(r, attr).value == lv for r in by[lab]) for lv in levels] for lab in (Label.CANCER, Label.HEALTHY)]
        try:
            p = stats.chi_square(table).p_value
        except stats.StatsError:
            p = float("nan")
        for k, lv in enumerate(levels):
            rows.append([f"{attr}_{lv}", table[0][k], table[1][k], repr(float(p)) if k == 0 else ""])
    return rows


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


# -- CNN --------------------------------------------------------------------

def _cnn_config(cfg: PipelineConfig, seed: int) -> nn.TrainConfig:
    return nn.TrainConfig(max_epochs=cfg.cnn.max_epochs, batch_size=cfg.cnn.batch_size, lr=cfg.cnn.lr, patience=cfg.cnn.patience, seed=seed)


def cnn_cross_validate(images, y, groups, cfg: PipelineConfig) -> list[float]:
    folds = selection.stratified_kfold(y, cfg.cnn.cv_folds, cfg.seed, groups)
    accs = []
    for f in range(cfg.cnn.cv_folds):
        tr, va = folds != f, folds == f
        net = nn.build_cnn(seed=cfg.seed + f)
        net, _ = nn.train(net, images[tr], y[tr], images[va], y[va], _cnn_config(cfg, cfg.seed + f))
        accs.append(float(np.mean((nn.predict_proba(net, images[va], cfg.cnn.batch_size) > 0.5) == y[va])))
        log.info("cnn fold %d accuracy %.3f", f, accs[-1])
    return accs


# -- main entry -------------------------------------------------------------

@dataclass
class RunResult:
    run_dir: Path
    test_metrics: dict = field(default_factory=dict)  # model -> (segment Metrics, subject Metrics)
    best_model: str = ""
    cv: dict = field(default_factory=dict)


def run_pipeline(cfg: PipelineConfig) -> RunResult:
    t_start = time.time()
    if not cfg.manifest:
        raise PipelineValidationError("config has no manifest path")
    manifest_path = Path(cfg.manifest)
    if not manifest_path.exists():
        raise PipelineValidationError(f"manifest {manifest_path} does not exist")
    records = load_manifest(manifest_path)
    if not records:
        raise PipelineValidationError(f"manifest {manifest_path} lists no subjects")
    train_ids, test_ids = split_corpus(records, cfg.split.test_fraction, cfg.seed)

    out = Path(cfg.output_dir)
    for sub in ("spectrograms", "models", "figures"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    by_id = {r.subject_id: r for r in records}
    table, segments = extract_segments(records, cfg, manifest_path.parent, out, with_images=cfg.cnn.enabled)
    write_segment_report(out / "segments.csv", segments)
    label_names = {0: Label.HEALTHY.value, 1: Label.CANCER.value}
    write_feature_table(out / "features.csv", ((s, k, label_names[int(c)], v) for s, k, c, v in zip(table.subject_ids, table.segment_idx, table.y, table.X)))

    test_set = set(test_ids)
    _write_csv(out / "split.csv", ["subject_id", "label", "split"],
               [[r.subject_id, r.label.value, "test" if r.subject_id in test_set else "train"] for r in records])
    _write_csv(out / "demographics.csv", ["characteristic", "cancer", "healthy", "p_value"], demographics(records))

    tr_rows, te_rows = table.rows_for(train_ids), table.rows_for(test_ids)
    X_tr, y_tr = table.X[tr_rows], table.y[tr_rows]
    X_te, y_te = table.X[te_rows], table.y[te_rows]
    g_tr = [table.subject_ids[i] for i in tr_rows]
    g_te = [table.subject_ids[i] for i in te_rows]

    # univariate tests and collinearity screening: training rows only
    tests = stats.feature_tests(X_tr, y_tr, FEATURE_NAMES)
    stats.write_stats_report(out / "stats_features.csv", tests)
    corr = stats.prune_collinear(stats.pearson_matrix(X_tr, FEATURE_NAMES), cfg.features.correlation_threshold)
    stats.write_correlation_report(out / "correlation.csv", corr)
    keep = [FEATURE_NAMES.index(n) for n in corr.retained]
    Xk_tr, Xk_te = X_tr[:, keep], X_te[:, keep]

    result = RunResult(out)
    cv_rows, pred_rows, seg_metrics, subj_metrics = [], [], [], []
    searches = {}
    for fam in cfg.families:
        gs = selection.grid_search_cv(fam, cfg.grid[fam], Xk_tr, y_tr, g_tr, cfg.split.cv_folds, cfg.seed, corr.retained)
        searches[fam] = gs
        for i, r in enumerate(gs.results):
            cv_rows.append([fam, json.dumps(r.params, sort_keys=True), *(f"{a:.6f}" for a in r.fold_accuracies),
                            f"{r.mean:.6f}", f"{r.std:.6f}", int(i == gs.best_index)])
        gs.model.save(out / "models" / f"{fam}.json")
        result.cv[fam] = (gs.best.mean, gs.best.std)

    def record_predictions(name, scores, preds):
        for s, k, yt, sc, p in zip(g_te, [table.segment_idx[i] for i in te_rows], y_te, scores, preds):
            pred_rows.append([name, s, k, int(yt), repr(float(sc)), int(p)])
        seg_metrics.append((name, metrics_from_predictions(y_te, preds)))
        votes = subject_vote(g_te, preds)
        ids = sorted(votes)
        subj_metrics.append((name, metrics_from_predictions([by_id[s].label.code for s in ids], [votes[s] for s in ids])))
        result.test_metrics[name] = (seg_metrics[-1][1], subj_metrics[-1][1])
        return votes

    votes_by_model = {}
    for fam, gs in searches.items():
        scores = gs.model.decision_function(Xk_te)
        votes_by_model[fam] = record_predictions(fam, scores, (scores > 0).astype(int))

    cnn_history = None
    if cfg.cnn.enabled:
        imgs_tr, imgs_te = table.images[tr_rows], table.images[te_rows]
        if cfg.cnn.cv_folds >= 2:
            accs = cnn_cross_validate(imgs_tr, y_tr, g_tr, cfg)
            cv_rows.append(["cnn", json.dumps({"lr": cfg.cnn.lr, "batch_size": cfg.cnn.batch_size}), *(f"{a:.6f}" for a in accs),
                            f"{np.mean(accs):.6f}", f"{np.std(accs):.6f}", 1])
            result.cv["cnn"] = (float(np.mean(accs)), float(np.std(accs)))
        fit_ids, val_ids = split_ids(train_ids, [by_id[s].label.value for s in train_ids], cfg.split.val_fraction, cfg.seed)
        fit_set, val_set = set(fit_ids), set(val_ids)
        fit_m = np.array([s in fit_set for s in g_tr])
        val_m = np.array([s in val_set for s in g_tr])
        net = nn.build_cnn(seed=cfg.seed)
        net, cnn_history = nn.train(net, imgs_tr[fit_m], y_tr[fit_m], imgs_tr[val_m], y_tr[val_m], _cnn_config(cfg, cfg.seed))
        nn.save_weights(net, out / "models" / "cnn.weights")
        nn.write_history(out / "cnn_history.csv", cnn_history)
        probs = nn.predict_proba(net, imgs_te, cfg.cnn.batch_size)
        votes_by_model["cnn"] = record_predictions("cnn", probs, (probs > 0.5).astype(int))

    n_folds = max([len(r) - 5 for r in cv_rows], default=0)
    _write_csv(out / "cv_results.csv", ["model", "params", *(f"fold_{i + 1}" for i in range(n_folds)), "mean", "std", "selected"], cv_rows)
    _write_csv(out / "predictions.csv", ["model", "subject_id", "segment_idx", "y_true", "score", "y_pred"], pred_rows)
    write_metrics_report(out / "metrics_segment.csv", seg_metrics)
    write_metrics_report(out / "metrics_subject.csv", subj_metrics)

    # SHAP on the best classical model
    fam_order = list(cfg.families)
    best_classical = min(fam_order, key=lambda f: (-result.cv[f][0], result.cv[f][1], fam_order.index(f)))
    model = searches[best_classical].model
    rng = np.random.default_rng(cfg.seed)
    n_bg = min(cfg.shap.background, len(Xk_tr))
    background = Xk_tr[np.sort(rng.choice(len(Xk_tr), size=n_bg, replace=False))]
    to_explain = range(len(Xk_te)) if cfg.shap.max_instances <= 0 else range(min(cfg.shap.max_instances, len(Xk_te)))
    n_coal = max(cfg.shap.n_coalitions, 2 * len(keep))
    expl = [explain.kernel_shap(model.decision_function, Xk_te[i], background, n_coal, cfg.seed + i) for i in to_explain]
    inst_ids = [f"{g_te[i]}_{table.segment_idx[te_rows[i]]}" for i in to_explain]
    if expl:
        explain.write_shap_table(out / "shap.csv", expl, corr.retained, inst_ids)
        summary = explain.shap_summary(expl, corr.retained)
        _write_csv(out / "shap_summary.csv", ["rank", "feature", "mean_abs_phi"],
                   [[k + 1, n, repr(v)] for k, (n, v) in enumerate(summary.ranked())])

    # fairness of the overall best model (by cross-validated accuracy)
    candidates = [f for f in fam_order] + (["cnn"] if "cnn" in result.cv else [])
    best = min(candidates, key=lambda f: (-result.cv[f][0], result.cv[f][1]))
    result.best_model = best
    votes = votes_by_model[best]
    ids = sorted(votes)
    y_true = [by_id[s].label.code for s in ids]
    y_pred = [votes[s] for s in ids]
    reports, notes = [], []
    attrs = {
        "age": [fairness.age_group(by_id[s].age_years, cfg.fairness.age_threshold) for s in ids],
        "sex": [by_id[s].sex.value for s in ids],
    }
    for attr, groups in attrs.items():
        try:
            reports.append(fairness.equalized_odds_difference_mean(y_true, y_pred, groups, attr))
        except (fairness.InsufficientSupportError, ValueError) as exc:
            notes.append((attr, str(exc)))
    fairness.write_fairness_report(out / "fairness.csv", reports, notes=notes, model=best)

    emit_figures(out)

    manifest = {
        "package": "coughscreen",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "seed": cfg.seed,
        "config_sha256": cfg.digest(),
        "config": cfg.to_dict(),
        "n_subjects": len(records),
        "n_segments": len(table.subject_ids),
        "train_subjects": len(train_ids),
        "test_subjects": len(test_ids),
        "retained_features": corr.retained,
        "best_classical_model": best_classical,
        "best_model": best,
        "cnn_epochs": len(cnn_history) if cnn_history else 0,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "elapsed_s": round(time.time() - t_start, 2),
    }
    with open(out / "run_manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True, default=str)
    return result


REQUIRED_FOR_FIGURES = ("stats_features.csv", "features.csv", "split.csv", "correlation.csv")


def emit_figures(run_dir) -> list[Path]:
    """Boxplots of significant retained features (training split) and the SHAP beeswarm."""
    run_dir = Path(run_dir)
    missing = [n for n in REQUIRED_FOR_FIGURES if not (run_dir / n).exists()]
    if missing:
        raise PipelineValidationError(f"cannot draw figures, missing tables: {', '.join(missing)}")
    (run_dir / "figures").mkdir(exist_ok=True)

    with open(run_dir / "split.csv", newline="") as fh:
        train = {r["subject_id"] for r in csv.DictReader(fh) if r["split"] == "train"}
    with open(run_dir / "correlation.csv", newline="") as fh:
        retained = {r["feature"] for r in csv.DictReader(fh) if r["status"] == "retained"}
    ids, _, labels, X = read_feature_table(run_dir / "features.csv")
    rows = np.array([s in train for s in ids])
    lab = np.array(labels)[rows]
    Xtr = X[rows]
    panels = []
    for name, _, p, _ in stats.read_stats_report(run_dir / "stats_features.csv"):
        if name in retained and p < 0.05:
            k = FEATURE_NAMES.index(name)
            panels.append((name, p, [Xtr[lab == Label.HEALTHY.value, k], Xtr[lab == Label.CANCER.value, k]]))
    paths = [run_dir / "figures" / "feature_boxplots.svg"]
    paths[0].write_text(figures.boxplot_svg(panels))

    if (run_dir / "shap.csv").exists():
        _, names, phi, vals = explain.read_shap_table(run_dir / "shap.csv")
        importance = np.abs(phi).mean(axis=0)
        order = sorted(range(len(names)), key=lambda i: (-importance[i], i))
        paths.append(run_dir / "figures" / "shap_beeswarm.svg")
        paths[1].write_text(figures.beeswarm_svg(names, phi, vals, order))
    return paths
