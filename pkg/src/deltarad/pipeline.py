"""Pipeline stages. Each reads the previous stage's files and stamps its own outputs.

Every artifact embeds the config hash and seed so that a report can be traced
back to the exact configuration that produced it.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from skimage.filters import threshold_otsu

from . import cohort as co
from . import dosimetry as dm
from .config import PipelineConfig
from .learn import Dataset, evaluate, feature_importances, load_model, predict, random_search, save_model
from .learn import stratified_split, train as fit_model
from .preprocess import clahe, denoise_median, window
from .radiomics import FEATURE_NAMES, delta_features, extract_features
from .registration import (apply_transform, dice, invert, mutual_information, read_transform,
                           register_rigid, transform_mask, write_transform)
from .svg import write_bar_chart
from .volgrid import BinaryMask, RigidTransform, read_mask, read_nifti, write_mask, write_nifti

log = logging.getLogger("deltarad")

ONE_HOT_FIELDS = ("sex", "metastasis_group", "machine", "primary_tumor")
TOP_K = 8
GBT_NOTE = ("GBT is an in-repo second-order gradient-boosted tree model with L2 leaf "
            "regularisation; no numerical parity with the XGBoost library is claimed.")
IMAGE_COLUMNS = ["patient_id", "ct_path", "mri_path", "transform_path"]


class StageError(RuntimeError):
    """A stage cannot run because an upstream artifact is missing or inconsistent."""


@dataclass(frozen=True)
class ImageEntry:
    patient_id: str
    ct: Path
    mri: Path
    transform: Path | None


def load_images(path) -> list[ImageEntry]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        missing = [c for c in IMAGE_COLUMNS[:3] if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing image columns {missing}")
        out = []
        for row in reader:
            tfm = (row.get("transform_path") or "").strip()
            out.append(ImageEntry(row["patient_id"].strip(), (path.parent / row["ct_path"].strip()).resolve(),
                                  (path.parent / row["mri_path"].strip()).resolve(),
                                  (path.parent / tfm).resolve() if tfm else None))
    return out


def _stage_dir(cfg: PipelineConfig, name: str) -> Path:
    d = cfg.output / name
    d.mkdir(parents=True, exist_ok=True)
    return d


def _require(path: Path, message: str) -> Path:
    if not path.exists():
        raise StageError(message)
    return path


def _csv_writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _read_stamped_csv(path: Path):
    """Return (stamp line without '# ', rows as dicts)."""
    with path.open(newline="") as fh:
        first = fh.readline()
        stamp = first[2:].strip() if first.startswith("# ") else ""
        if not stamp:
            fh.seek(0)
        return stamp, list(csv.DictReader(fh))


def _check_stamp(cfg: PipelineConfig, stamp: str, what: str) -> None:
    if stamp != cfg.stamp:
        raise StageError(f"{what} was produced with a different configuration ({stamp or 'unstamped'}); "
                         f"expected {cfg.stamp}. Rerun the upstream stage.")


# ---------------------------------------------------------------------------


def run_preprocess(cfg: PipelineConfig) -> list[Path]:
    out = _stage_dir(cfg, "preprocess")
    radius = int(cfg.doc["preprocess"]["median_radius"])
    written = []
    for e in load_images(cfg.path("images")):
        ct = read_nifti(e.ct, "HU")
        mr = read_nifti(e.mri, "intensity")
        write_nifti(window(ct, cfg.window), out / f"{e.patient_id}_ct.nii", cfg.stamp)
        write_nifti(clahe(denoise_median(mr, radius), cfg.clahe), out / f"{e.patient_id}_mr.nii", cfg.stamp)
        written += [out / f"{e.patient_id}_ct.nii", out / f"{e.patient_id}_mr.nii"]
        log.info("preprocessed %s", e.patient_id)
    return written


def _brain_mask(arr: np.ndarray, lo: float, hi: float, geometry) -> BinaryMask:
    return BinaryMask(geometry, ndimage.binary_fill_holes((arr > lo) & (arr < hi)))


def run_register(cfg: PipelineConfig) -> Path:
    src = cfg.output / "preprocess"
    out = _stage_dir(cfg, "register")
    rows = []
    for e in load_images(cfg.path("images")):
        pid = e.patient_id
        fixed = read_nifti(_require(src / f"{pid}_mr.nii", "missing preprocessed images (run `preprocess` first)"))
        moving = read_nifti(_require(src / f"{pid}_ct.nii", "missing preprocessed images (run `preprocess` first)"))
        if e.transform is not None:
            t = read_transform(e.transform)
            iterations, source = 0, "external"
        else:
            res = register_rigid(fixed, moving, cfg.registration)
            t, iterations, source = res.transform, res.iterations, "registered"
        bins = cfg.registration.bins
        mi_id = mutual_information(fixed, apply_transform(moving, RigidTransform.identity(), fixed.geometry), bins)
        mi_t = mutual_information(fixed, apply_transform(moving, t, fixed.geometry), bins)
        # brain masks: soft tissue on CT, Otsu foreground on MR, holes filled
        ct_raw = read_nifti(e.ct, "HU")
        mr_raw = read_nifti(e.mri)
        ct_brain = _brain_mask(ct_raw.array, -200.0, 300.0, ct_raw.geometry)
        mr_brain = _brain_mask(mr_raw.array, float(threshold_otsu(mr_raw.array)), np.inf, mr_raw.geometry)
        to_ct = invert(t)
        d_id = dice(ct_brain, transform_mask(mr_brain, RigidTransform.identity(), ct_raw.geometry))
        d_t = dice(ct_brain, transform_mask(mr_brain, to_ct, ct_raw.geometry))
        write_transform(t, out / f"{pid}.tfm", f"{cfg.stamp}\nmaps CT world (mm) to MR world (mm)")
        write_nifti(apply_transform(fixed, to_ct, ct_raw.geometry), out / f"{pid}_mr_in_ct.nii", cfg.stamp)
        rows.append([pid, source, f"{mi_id:.6f}", f"{mi_t:.6f}", f"{d_id:.6f}", f"{d_t:.6f}", iterations])
        log.info("registered %s: MI %.4f -> %.4f, Dice %.3f -> %.3f", pid, mi_id, mi_t, d_id, d_t)
    path = out / "registration.csv"
    with path.open("w", newline="") as fh:
        fh.write(f"# {cfg.stamp}\n")
        w = _csv_writer(fh)
        w.writerow(["patient_id", "source", "mi_identity", "mi_final", "dice_identity", "dice_final", "iterations"])
        w.writerows(rows)
    return path


def run_dose(cfg: PipelineConfig) -> Path:
    out = _stage_dir(cfg, "dose")
    factor = float(cfg.doc["dosimetry"]["factor"])
    summaries = []
    for rec in dm.load_lesions(cfg.path("lesions")):
        m = read_mask(rec.mask_path)
        dose = read_nifti(rec.dose_path, "Gy")
        summaries.append(dm.summarize_lesion(dose, m, rec))
        region = dm.incidence_region(m, factor)
        iso = BinaryMask(m.geometry, dm.isodose_mask(dose, rec.prescription_gy).bits & region.bits)
        if iso.count == 0:
            log.warning("lesion %s: no voxel reaches %.2f Gy inside the incidence region", rec.lesion_id,
                        rec.prescription_gy)
        write_mask(iso, out / f"{rec.lesion_id}_isodose.nii", cfg.stamp)
    path = out / "dose_summary.csv"
    dm.write_summary_csv(summaries, path, cfg.stamp)
    return path


def run_features(cfg: PipelineConfig) -> Path:
    reg = cfg.output / "register"
    dose_dir = cfg.output / "dose"
    out = _stage_dir(cfg, "features")
    disc = cfg.discretization
    distance = int(cfg.doc["radiomics"]["distance"])
    rows = []
    for rec in dm.load_lesions(cfg.path("lesions")):
        img = read_nifti(_require(reg / f"{rec.patient_id}_mr_in_ct.nii",
                                  "missing registered images (run `register` first)"))
        roi = read_mask(rec.mask_path)
        iso = read_mask(_require(dose_dir / f"{rec.lesion_id}_isodose.nii",
                                 "missing isodose masks (run `dose` first)"))
        f_roi = extract_features(img, roi, disc, distance)
        if iso.count == 0:
            log.warning("lesion %s: empty isodose mask, using the ROI (delta = 0)", rec.lesion_id)
            f_iso = f_roi
        else:
            f_iso = extract_features(img, iso, disc, distance)
        for role, fv in (("roi", f_roi), ("isodose", f_iso), ("delta", delta_features(f_iso, f_roi))):
            rows.append([rec.lesion_id, rec.patient_id, role] + [f"{v:.9g}" for v in fv.values])
        log.info("features %s", rec.lesion_id)
    path = out / "features.csv"
    with path.open("w", newline="") as fh:
        fh.write(f"# {cfg.stamp}\n")
        w = _csv_writer(fh)
        w.writerow(["lesion_id", "patient_id", "role"] + list(FEATURE_NAMES))
        w.writerows(rows)
    return path


def run_cohort(cfg: PipelineConfig) -> dict:
    out = _stage_dir(cfg, "cohort")
    records, issues = co.load_patients(cfg.path("patients"))
    kept, report = co.validate_and_exclude(records)
    (out / "issues.txt").write_text(f"# {cfg.stamp}\n" + "".join(f"{i}\n" for i in issues))
    (out / "exclusions.txt").write_text(f"# {cfg.stamp}\n" + "".join(f"{line}\n" for line in report.lines()))
    co.write_summary_csv(co.summarize_cohort(kept), out / "cohort_summary.csv", cfg.stamp)
    intervals = co.record_intervals(kept)
    with (out / "intervals.csv").open("w", newline="") as fh:
        fh.write(f"# {cfg.stamp}\n")
        w = _csv_writer(fh)
        w.writerow(["patient_id", "interval_months", "long_interval"])
        for pid, months in intervals:
            w.writerow([pid, f"{months:.2f}", int(co.is_long_interval(months))])
    files = {"summary": out / "cohort_summary.csv"}
    if intervals:
        bins = co.interval_histogram([m for _, m in intervals], float(cfg.doc["cohort"]["histogram_bin_months"]))
        co.write_histogram_csv(bins, out / "interval_histogram.csv", cfg.stamp)
        _histogram_svg(bins, out / "interval_histogram.svg", cfg.stamp)
        files["histogram"] = out / "interval_histogram.csv"
    log.info("cohort: %d records, %d kept, %d issues", len(records), len(kept), len(issues))
    return files


def _histogram_svg(bins, path, stamp):
    write_bar_chart(path, [f"{a:g}" for a, _, _ in bins], [c for _, _, c in bins],
                    title="Months from first treatment to first follow-up", comment=stamp)


def build_dataset(cfg: PipelineConfig) -> tuple[Dataset, list[str]]:
    """Delta-feature rows of included patients plus one-hot clinical columns."""
    feats = _require(cfg.output / "features" / "features.csv", "missing features (run `features` first)")
    stamp, rows = _read_stamped_csv(feats)
    _check_stamp(cfg, stamp, "features.csv")
    records, _ = co.load_patients(cfg.path("patients"))
    kept, _ = co.validate_and_exclude(records)
    by_id = {r.patient_id: r for r in kept}
    delta = [r for r in rows if r["role"] == "delta" and r["patient_id"] in by_id]
    if not delta:
        raise StageError("no feature rows belong to included patients")
    enc_rows, enc_cols, _ = co.one_hot_encode([by_id[r["patient_id"]] for r in delta], ONE_HOT_FIELDS)
    X = np.array([[float(r[n]) for n in FEATURE_NAMES] + enc for r, enc in zip(delta, enc_rows)])
    cols = [f"delta.{n}" for n in FEATURE_NAMES] + enc_cols
    y = [by_id[r["patient_id"]].decision_si for r in delta]
    return Dataset(X, y, cols, [r["patient_id"] for r in delta]), [r["lesion_id"] for r in delta]


def run_train(cfg: PipelineConfig) -> list[Path]:
    out = _stage_dir(cfg, "train")
    d, lesion_ids = build_dataset(cfg)
    sp = cfg.doc["split"]
    split = stratified_split(d, float(sp["fraction"]), cfg.seed, grouped=sp["mode"] == "patient")
    side = np.array(["train"] * len(d), dtype=object)
    side[split.test] = "test"
    with (out / "dataset.csv").open("w", newline="") as fh:
        fh.write(f"# {cfg.stamp}\n")
        w = _csv_writer(fh)
        w.writerow(["lesion_id", "patient_id", "set", "label"] + list(d.columns))
        for i in range(len(d)):
            w.writerow([lesion_ids[i], d.groups[i], side[i], int(d.y[i])] + [repr(float(v)) for v in d.X[i]])
    train_d = d.subset(split.train)
    m = cfg.doc["models"]
    written = [out / "dataset.csv"]
    for fam in m["families"]:
        res = random_search(fam, train_d, cfg.space(fam), int(m["n_iter"]), int(m["k"]), cfg.seed)
        with (out / f"search_{fam}.csv").open("w", newline="") as fh:
            fh.write(f"# {cfg.stamp}\n")
            w = _csv_writer(fh)
            w.writerow(["draw", "params", "mean_macro_f1"] + [f"fold{i}" for i in range(int(m["k"]))])
            for row in res.table:
                w.writerow([row.draw, json.dumps(row.params, sort_keys=True), f"{row.mean:.6f}"]
                           + [f"{s:.6f}" for s in row.fold_scores])
        model = fit_model(fam, train_d.X, train_d.y, d.columns, res.best_params, cfg.seed,
                          {"config_hash": cfg.hash, "seed": cfg.seed, "cv_macro_f1": res.best_score})
        save_model(model, out / f"{fam}.model")
        written += [out / f"search_{fam}.csv", out / f"{fam}.model"]
        log.info("trained %s %s (CV macro-F1 %.3f)", fam, res.best_params, res.best_score)
    return written


def _load_split_dataset(cfg: PipelineConfig):
    path = _require(cfg.output / "train" / "dataset.csv", "missing trained models (run `train` first)")
    stamp, rows = _read_stamped_csv(path)
    _check_stamp(cfg, stamp, "dataset.csv")
    with path.open(newline="") as fh:
        fh.readline()
        header = next(csv.reader(fh))
    cols = header[4:]
    X = np.array([[float(r[c]) for c in cols] for r in rows])
    y = np.array([int(r["label"]) for r in rows])
    test = np.array([r["set"] == "test" for r in rows])
    return X, y, test, cols


def run_evaluate(cfg: PipelineConfig) -> list[Path]:
    fams = cfg.doc["models"]["families"]
    model_dir = cfg.output / "train"
    missing = [f for f in fams if not (model_dir / f"{f}.model").is_file()]
    if missing:
        raise StageError(f"missing trained models: {', '.join(missing)} (run `train` first)")
    models = [load_model(model_dir / f"{f}.model") for f in fams]
    hashes = {m.meta.get("config_hash") for m in models}
    if hashes != {cfg.hash}:
        raise StageError(f"trained models carry config hashes {sorted(map(str, hashes))}; expected {cfg.hash}")
    X, y, test, cols = _load_split_dataset(cfg)
    results = []
    for m in models:
        reports = {}
        for name, sel in (("train", ~test), ("test", test)):
            reports[name] = evaluate(predict(m, X[sel], cols), y[sel])
        try:
            imp = feature_importances(m, TOP_K)
        except ValueError:
            imp = None
        results.append({"family": m.family, "params": m.params, "reports": reports, "importances": imp})
    hist = None
    hist_csv = cfg.output / "cohort" / "interval_histogram.csv"
    if hist_csv.is_file():
        _, rows = _read_stamped_csv(hist_csv)
        hist = [(float(r["bin_start"]), float(r["bin_end"]), int(r["count"])) for r in rows]
    return emit_report(results, _stage_dir(cfg, "report"), cfg.stamp, hist)


def emit_report(results, out_dir, stamp: str, histogram=None) -> list[Path]:
    """Metrics table (CSV + JSON), per-model confusion matrices and top-8 importances (CSV + SVG)."""
    out = Path(out_dir)
    if not out.is_dir():
        raise OSError(f"report directory {out} does not exist")
    written = []
    metrics_csv = out / "metrics.csv"
    with metrics_csv.open("w", newline="") as fh:
        fh.write(f"# {stamp}\n")
        w = _csv_writer(fh)
        w.writerow(["model", "precision_train", "recall_train", "f1_train", "accuracy_train",
                    "precision_test", "recall_test", "f1_test", "accuracy_test"])
        for r in results:
            row = [r["family"]]
            for s in ("train", "test"):
                rep = r["reports"][s]
                row += [f"{rep.macro[0]:.4f}", f"{rep.macro[1]:.4f}", f"{rep.macro[2]:.4f}", f"{rep.accuracy:.4f}"]
            w.writerow(row)
    written.append(metrics_csv)
    doc = {"stamp": stamp, "averaging": "macro (per-class and weighted values included)", "note": GBT_NOTE,
           "models": {r["family"]: {"params": r["params"],
                                    "train": r["reports"]["train"].as_dict(),
                                    "test": r["reports"]["test"].as_dict(),
                                    "top_features": r["importances"]} for r in results}}
    (out / "metrics.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    written.append(out / "metrics.json")
    for r in results:
        path = out / f"confusion_{r['family']}.csv"
        with path.open("w", newline="") as fh:
            fh.write(f"# {stamp}\n")
            w = _csv_writer(fh)
            w.writerow(["set", "predicted", "actual_0", "actual_1"])
            for s in ("train", "test"):
                mat = r["reports"][s].confusion.predicted_by_actual()
                w.writerow([s, 0] + mat[0])
                w.writerow([s, 1] + mat[1])
        written.append(path)
        if r["importances"] is None:
            continue
        path = out / f"importance_{r['family']}.csv"
        with path.open("w", newline="") as fh:
            fh.write(f"# {stamp}\n")
            w = _csv_writer(fh)
            w.writerow(["rank", "feature", "weight"])
            for k, (name, wt) in enumerate(r["importances"], start=1):
                w.writerow([k, name, f"{wt:.6f}"])
        svg = out / f"importance_{r['family']}.svg"
        write_bar_chart(svg, [n for n, _ in r["importances"]], [v for _, v in r["importances"]],
                        title=f"{r['family']}: top {len(r['importances'])} most important features",
                        horizontal=True, comment=stamp)
        written += [path, svg]
    if histogram:
        svg = out / "interval_histogram.svg"
        _histogram_svg(histogram, svg, stamp)
        written.append(svg)
    return written


STAGES = {
    "preprocess": run_preprocess,
    "register": run_register,
    "dose": run_dose,
    "features": run_features,
    "cohort": run_cohort,
    "train": run_train,
    "evaluate": run_evaluate,
}
ORDER = ["preprocess", "register", "dose", "features", "cohort", "train", "evaluate"]


def run(stage: str, cfg: PipelineConfig):
    if stage == "all":
        for s in ORDER:
            log.info("stage %s", s)
            STAGES[s](cfg)
        return None
    return STAGES[stage](cfg)
