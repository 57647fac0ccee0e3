"""Seeded synthetic data: a clinical cohort shaped like the published one and small imaging phantoms."""
from __future__ import annotations

import csv
import json
from dataclasses import replace
from datetime import date, timedelta
from pathlib import Path

import numpy as np
from scipy import ndimage

from .cohort import PatientRecord, write_patients_csv
from .dosimetry import select_target_kind
from .registration import euler_matrix
from .volgrid import (BinaryMask, Geometry, RigidTransform, Volume, grid_points, voxel_to_world,
                      write_mask, write_nifti)

SEX_COUNTS = {"Male": 15, "Female": 37, "Other": 1}
METASTASIS_COUNTS = {">=5": 22, "<5": 31}
MACHINE_COUNTS = {"LINAC": 28, "GammaKnife": 25}
TUMOR_COUNTS = {
    "Lung": 23, "Breast": 19, "Kidney": 2, "Colon": 2, "Clivus Chordoma": 1, "Pineal Tumor": 1,
    "Intraventricular Tumor": 1, "Metastatic Melanoma": 1, "Thyroid": 1, "Low Grade Glioma": 1,
    "Carcinomatous Meningitis": 1,
}
DECISION_COUNTS = {1: 45, 0: 8}


def _expand(counts, rng):
    vals = [k for k, c in counts.items() for _ in range(c)]
    return [vals[i] for i in rng.permutation(len(vals))]


def _intervals_days(n, rng):
    """Mostly 5-8 months, a few early (1-3), a few long (>18) and one near 70 months."""
    n_early, n_long = 5, 3
    core = rng.uniform(5.0, 8.0, n - n_early - n_long - 1)
    early = rng.uniform(1.0, 3.0, n_early)
    late = rng.uniform(19.0, 30.0, n_long)
    months = np.concatenate([core, early, late, [69.8]])
    months = months[rng.permutation(n)]
    return [int(round(m * 30.4375)) for m in months]


def table1_records(seed: int = 0, n_patients: int = 53) -> list[PatientRecord]:
    """Complete records whose marginal counts match the published cohort table."""
    rng = np.random.default_rng(seed)
    if n_patients != 53:
        raise ValueError("the published-cohort fixture has exactly 53 patients")
    sex = _expand(SEX_COUNTS, rng)
    groups = _expand(METASTASIS_COUNTS, rng)
    machine = _expand(MACHINE_COUNTS, rng)
    tumor = _expand(TUMOR_COUNTS, rng)
    si = _expand(DECISION_COUNTS, rng)
    gaps = _intervals_days(53, rng)
    out = []
    for i in range(53):
        n_met = int(rng.integers(5, 13)) if groups[i] == ">=5" else int(rng.integers(1, 5))
        t0 = date(2019, 1, 7) + timedelta(days=int(rng.integers(0, 1200)))
        out.append(PatientRecord(
            patient_id=f"P{i + 1:03d}", sex=sex[i], n_metastases=n_met, machine=machine[i],
            primary_tumor=tumor[i], decision_si=int(si[i]), date_first_treatment=t0,
            date_first_followup=t0 + timedelta(days=gaps[i]), age=float(rng.integers(35, 85)),
        ))
    return out


def cohort_with_incomplete(seed: int = 0) -> list[PatientRecord]:
    """The 53 complete records plus 4 that each lack one required clinical field."""
    base = table1_records(seed)
    template = base[0]
    holes = ["primary_tumor", "sex", "decision_si", "machine"]
    extra = [replace(template, patient_id=f"X{i + 1:03d}", **{f: None}) for i, f in enumerate(holes)]
    return base + extra


# ---------------------------------------------------------------------------
# imaging phantoms for the end-to-end demo

CT_GEOMETRY = dict(dims=(40, 40, 32), spacing=(1.5, 1.5, 2.0))
MR_GEOMETRY = dict(dims=(36, 36, 30), spacing=(1.75, 1.75, 2.2))
HEAD_RADII = np.array([24.0, 26.0, 22.0])
SKULL_MM = 3.0
CT_HU = {"air": -1000.0, "skull": 900.0, "brain": 35.0, "ventricle": 5.0, "lesion": 55.0}
MR_INT = {"air": 0.0, "skull": 20.0, "brain": 300.0, "ventricle": 80.0, "lesion": 620.0}
PRESCRIPTIONS = (15.0, 18.0, 20.0, 24.0)


def centered_geometry(dims, spacing, offset=(0.0, 0.0, 0.0), rotation=None):
    spacing = np.asarray(spacing, dtype=float)
    direction = np.eye(3) if rotation is None else np.asarray(rotation)
    half = (np.asarray(dims) - 1) / 2.0 * spacing
    origin = np.asarray(offset) - direction @ half
    return Geometry(tuple(dims), tuple(spacing), tuple(origin), direction)


def _ellipsoid_level(p, center, radii):
    return (((p - center) / radii) ** 2).sum(axis=1)


def tissue_values(points, lesions, table):
    """Intensity of the analytic head at world ``points`` (N, 3) in patient space."""
    head = _ellipsoid_level(points, np.zeros(3), HEAD_RADII)
    brain = _ellipsoid_level(points, np.zeros(3), HEAD_RADII - SKULL_MM)
    vent = _ellipsoid_level(points, np.array([0.0, 3.0, 2.0]), np.array([4.0, 9.0, 5.0]))
    out = np.full(len(points), table["air"])
    out[head <= 1] = table["skull"]
    out[brain <= 1] = table["brain"]
    out[vent <= 1] = table["ventricle"]
    for c, r in lesions:
        out[((points - c) ** 2).sum(axis=1) <= r * r] = table["lesion"]
    return out


def _render(geometry, lesions, table, noise, rng, to_patient=None):
    idx = grid_points(geometry.dims).astype(float)
    world = voxel_to_world(geometry, idx)
    if to_patient is not None:
        world = to_patient.apply(world)
    arr = tissue_values(world, lesions, table).reshape(geometry.dims)
    arr = ndimage.gaussian_filter(arr, 0.6)
    return arr + rng.normal(0.0, noise, arr.shape)


def _lesion_mask(geometry, center, radius):
    world = voxel_to_world(geometry, grid_points(geometry.dims).astype(float))
    bits = (((world - center) ** 2).sum(axis=1) <= radius * radius).reshape(geometry.dims)
    return BinaryMask(geometry, bits)


def _dose(geometry, lesion_specs):
    """Sum of super-Gaussian lesion doses; under-treated lesions are shifted and weaker."""
    world = voxel_to_world(geometry, grid_points(geometry.dims).astype(float))
    total = np.zeros(len(world))
    for center, radius, rx, miss in lesion_specs:
        c = center + miss["shift"]
        d = np.sqrt(((world - c) ** 2).sum(axis=1))
        total += rx * miss["scale"] * 1.08 * np.exp(-(d / (1.6 * radius)) ** 4)
    return Volume(geometry, total.reshape(geometry.dims), "Gy")


def write_demo_cohort(out_dir, seed: int = 0, n_patients: int = 24) -> dict:
    """Write a synthetic cohort (tables, NIfTI images, config.json); returns the config dict.

    Patients who needed re-irradiation (SI = 1) have plans whose high-dose
    region is displaced from the lesion, so the isodose and lesion masks
    differ more and the delta features carry signal.
    """
    out = Path(out_dir)
    img_dir = out / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    if not 10 <= n_patients <= 51:
        raise ValueError("demo cohort size must lie in [10, 51]")
    rng = np.random.default_rng(seed)
    base = table1_records(seed)
    si = np.zeros(n_patients, dtype=int)
    si[rng.permutation(n_patients)[: int(round(0.55 * n_patients))]] = 1
    patients = [replace(base[i], patient_id=f"D{i + 1:03d}", decision_si=int(si[i])) for i in range(n_patients)]
    # two records with missing clinical fields exercise the exclusion rule
    patients.append(replace(base[n_patients], patient_id=f"D{n_patients + 1:03d}", primary_tumor=None))
    patients.append(replace(base[n_patients + 1], patient_id=f"D{n_patients + 2:03d}", sex=None))
    write_patients_csv(patients, out / "patients.csv")

    ct_geom = centered_geometry(**CT_GEOMETRY)
    image_rows, lesion_rows = [], []
    for rec in patients:
        pid = rec.patient_id
        n_les = int(rng.integers(1, 4))
        lesions = []
        for _ in range(n_les):
            r = float(rng.uniform(3.0, 6.0))
            c = rng.uniform(-1, 1, 3)
            c = c / max(np.linalg.norm(c), 1e-9) * rng.uniform(4.0, 12.0)
            lesions.append((c, r))
        # the MR scanner frame differs from the CT frame by a small rigid motion
        rot = euler_matrix(*np.radians(rng.uniform(-4, 4, 3)))
        shift = rng.uniform(-3, 3, 3)
        ct_to_mr = RigidTransform.from_rotation_translation(rot, shift)
        mr_geom = centered_geometry(**MR_GEOMETRY, offset=rng.uniform(-2, 2, 3))
        mr_to_patient = RigidTransform(np.linalg.inv(ct_to_mr.matrix))

        ct = Volume(ct_geom, _render(ct_geom, lesions, CT_HU, 8.0, rng), "HU")
        mr = Volume(mr_geom, np.maximum(_render(mr_geom, lesions, MR_INT, 15.0, rng, mr_to_patient), 0.0))
        write_nifti(ct, img_dir / f"{pid}_ct.nii", "demo CT")
        write_nifti(mr, img_dir / f"{pid}_mr.nii", "demo MR")
        image_rows.append([pid, f"images/{pid}_ct.nii", f"images/{pid}_mr.nii", ""])

        machine = rec.machine or "LINAC"
        specs = []
        for k, (c, r) in enumerate(lesions):
            rx = float(rng.choice(PRESCRIPTIONS))
            if rec.decision_si == 1:
                u = rng.normal(size=3)
                miss = {"shift": u / np.linalg.norm(u) * r * rng.uniform(0.6, 1.0), "scale": rng.uniform(0.93, 0.98)}
            else:
                miss = {"shift": rng.normal(0, 0.3, 3), "scale": rng.uniform(0.98, 1.03)}
            specs.append((c, r, rx, miss))
            lid = f"{pid}_L{k + 1}"
            write_mask(_lesion_mask(ct_geom, c, r), img_dir / f"{lid}_mask.nii", "demo lesion")
            kind = select_target_kind(machine)
            lesion_rows.append([pid, lid, f"{kind}{k + 1}", kind, machine, f"{rx:g}",
                                f"images/{lid}_mask.nii", f"images/{pid}_dose.nii"])
        write_nifti(_dose(ct_geom, specs), img_dir / f"{pid}_dose.nii", "demo dose")

    with (out / "images.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "ct_path", "mri_path", "transform_path"])
        w.writerows(image_rows)
    with (out / "lesions.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "lesion_id", "roi_name", "target_kind", "machine", "prescription_gy",
                    "mask_path", "dose_path"])
        w.writerows(lesion_rows)

    cfg = {
        "seed": seed,
        "paths": {"patients": "patients.csv", "lesions": "lesions.csv", "images": "images.csv",
                  "output": "out"},
        "preprocess": {"clahe": {"tiles": [4, 4], "clip_limit": 2.0, "bins": 128}},
        "models": {"n_iter": 10, "k": 5},
    }
    (out / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    return cfg
