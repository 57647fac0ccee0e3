"""Isodose masks, per-lesion dose statistics and the incidence region around a lesion."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .volgrid import BinaryMask, Volume, _check_match

MACHINES = ("LINAC", "GammaKnife")
TARGET_KINDS = ("GTV", "PTV")

LESION_COLUMNS = ["patient_id", "lesion_id", "roi_name", "target_kind", "machine",
                  "prescription_gy", "mask_path", "dose_path"]
SUMMARY_COLUMNS = ["lesion_id", "volume_cc", "mean_dose_gy", "max_dose_gy", "min_dose_gy",
                   "coverage", "discrepancy"]


def select_target_kind(machine: str) -> str:
    """Gamma Knife plans are evaluated on the GTV, LINAC plans on the PTV."""
    if machine == "GammaKnife":
        return "GTV"
    if machine == "LINAC":
        return "PTV"
    raise ValueError(f"unknown machine {machine!r}; expected one of {MACHINES}")


def normalize_machine(text: str) -> str:
    key = text.replace(" ", "").replace("_", "").replace("-", "").lower()
    aliases = {"linac": "LINAC", "gammaknife": "GammaKnife"}
    if key not in aliases:
        raise ValueError(f"unknown machine {text!r}; expected one of {MACHINES}")
    return aliases[key]


@dataclass(frozen=True)
class LesionRecord:
    lesion_id: str
    patient_id: str
    roi_name: str
    target_kind: str
    prescription_gy: float
    machine: str
    mask_path: str = ""
    dose_path: str = ""

    def __post_init__(self):
        if not self.prescription_gy > 0:
            raise ValueError(f"lesion {self.lesion_id}: prescription must be positive")
        expected = select_target_kind(self.machine)
        if self.target_kind != expected:
            raise ValueError(
                f"lesion {self.lesion_id}: {self.machine} plans use {expected}, got {self.target_kind}")


@dataclass(frozen=True)
class LesionDoseSummary:
    lesion_id: str
    volume_cc: float
    mean_dose_gy: float
    max_dose_gy: float
    min_dose_gy: float
    coverage: float
    discrepancy: float

    def row(self) -> list[str]:
        nums = [self.volume_cc, self.mean_dose_gy, self.max_dose_gy, self.min_dose_gy,
                self.coverage, self.discrepancy]
        return [self.lesion_id] + [f"{x:.6f}" for x in nums]


def _masked_dose(dose: Volume, m: BinaryMask) -> np.ndarray:
    _check_match(dose.geometry, m.geometry, "dose grid and mask")
    vals = dose.array[m.bits]
    if vals.size == 0:
        raise ValueError("mask is empty")
    return vals


def mean_dose(dose: Volume, m: BinaryMask) -> float:
    return float(np.mean(_masked_dose(dose, m)))


def isodose_mask(dose: Volume, threshold: float) -> BinaryMask:
    """Voxels receiving at least ``threshold`` Gy."""
    if not threshold > 0:
        raise ValueError("isodose threshold must be positive")
    return BinaryMask(dose.geometry, dose.array >= threshold)


def coverage_fraction(dose: Volume, m: BinaryMask, rx: float) -> float:
    vals = _masked_dose(dose, m)
    return float(np.count_nonzero(vals >= rx)) / vals.size


def volume_cc(m: BinaryMask) -> float:
    return m.count * m.geometry.voxel_volume_mm3 / 1000.0


def incidence_margin_mm(m: BinaryMask, factor: float = 1.5) -> float:
    """Margin ``(factor - 1) * r_eq``, floored at one voxel (the largest spacing)."""
    if not factor > 1:
        raise ValueError("incidence factor must exceed 1")
    if m.count == 0:
        raise ValueError("mask is empty")
    vol_mm3 = m.count * m.geometry.voxel_volume_mm3
    r_eq = (3.0 * vol_mm3 / (4.0 * np.pi)) ** (1.0 / 3.0)
    return max((factor - 1.0) * r_eq, max(m.geometry.spacing))


def incidence_region(m: BinaryMask, factor: float = 1.5) -> BinaryMask:
    """Mask grown by an equivalent-sphere radius margin (exact Euclidean distance)."""
    margin = incidence_margin_mm(m, factor)
    dist = ndimage.distance_transform_edt(~m.bits, sampling=m.geometry.spacing)
    grown = (dist <= margin * (1.0 + 1e-12)) | m.bits
    return BinaryMask(m.geometry, grown)


def summarize_lesion(dose: Volume, m: BinaryMask, rec: LesionRecord) -> LesionDoseSummary:
    vals = _masked_dose(dose, m)
    mean = float(np.mean(vals))
    # the mean of a constant field can round a hair above its maximum
    lo, hi = float(vals.min()), float(vals.max())
    mean = min(max(mean, lo), hi)
    return LesionDoseSummary(
        lesion_id=rec.lesion_id,
        volume_cc=volume_cc(m),
        mean_dose_gy=mean,
        max_dose_gy=hi,
        min_dose_gy=lo,
        coverage=float(np.count_nonzero(vals >= rec.prescription_gy)) / vals.size,
        discrepancy=(mean - rec.prescription_gy) / rec.prescription_gy,
    )


def load_lesions(path) -> list[LesionRecord]:
    """Read the lesion table; relative image paths resolve against the table's folder."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(row for row in fh if not row.startswith("#"))
        missing = [c for c in LESION_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing lesion columns {missing}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            try:
                machine = normalize_machine(row["machine"])
                rec = LesionRecord(
                    lesion_id=row["lesion_id"].strip(),
                    patient_id=row["patient_id"].strip(),
                    roi_name=row["roi_name"].strip(),
                    target_kind=row["target_kind"].strip().upper(),
                    prescription_gy=float(row["prescription_gy"]),
                    machine=machine,
                    mask_path=str((path.parent / row["mask_path"].strip()).resolve()),
                    dose_path=str((path.parent / row["dose_path"].strip()).resolve()),
                )
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}, row {lineno}: {exc}") from exc
            out.append(rec)
    ids = [r.lesion_id for r in out]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise ValueError(f"{path}: duplicate lesion ids {dupes}")
    return out


def write_summary_csv(summaries, path, header: str = "") -> None:
    with Path(path).open("w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for s in summaries:
            w.writerow(s.row())
