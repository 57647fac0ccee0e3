"""Clinical table ingestion, exclusion rules, one-hot encoding and cohort summaries."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields, replace
from datetime import date
from pathlib import Path

from .dosimetry import normalize_machine

PATIENT_COLUMNS = ["patient_id", "sex", "n_metastases", "machine", "primary_tumor", "decision_si",
                   "date_first_treatment", "date_first_followup", "age"]
OPTIONAL_COLUMNS = ("date_first_followup", "age")
REQUIRED_FIELDS = ("patient_id", "sex", "n_metastases", "machine", "primary_tumor", "decision_si",
                   "date_first_treatment")
SEXES = ("Male", "Female", "Other")
DAYS_PER_MONTH = 30.4375
LONG_INTERVAL_MONTHS = 18.0
DECISION_LABELS = {1: "2nd Treatment", 0: "Follow-Up"}
METASTASIS_CUTOFF = 5


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    sex: str | None = None
    n_metastases: int | None = None
    machine: str | None = None
    primary_tumor: str | None = None
    decision_si: int | None = None
    date_first_treatment: date | None = None
    date_first_followup: date | None = None
    age: float | None = None

    @property
    def metastasis_group(self) -> str | None:
        if self.n_metastases is None:
            return None
        return ">=5" if self.n_metastases >= METASTASIS_CUTOFF else "<5"


@dataclass(frozen=True)
class Issue:
    row: int
    column: str
    message: str

    def __str__(self):
        return f"row {self.row}, {self.column}: {self.message}"


@dataclass
class ExclusionReport:
    excluded: dict[str, list[str]] = field(default_factory=dict)

    @property
    def reasons(self) -> dict[str, list[str]]:
        return {pid: [f"{f} missing" if f in REQUIRED_FIELDS else f for f in fs]
                for pid, fs in self.excluded.items()}

    def lines(self) -> list[str]:
        return [f"{pid}: {', '.join(r)}" for pid, r in self.reasons.items()]


def _normalize_sex(text: str) -> str:
    key = text.strip().lower()
    table = {"male": "Male", "m": "Male", "female": "Female", "f": "Female",
             "other": "Other", "others": "Other"}
    if key not in table:
        raise ValueError(f"unknown sex {text!r}")
    return table[key]


def _parse_si(text: str) -> int:
    v = int(text)
    if v not in (0, 1):
        raise ValueError("decision_si must be 0 or 1")
    return v


def _parse_count(text: str) -> int:
    v = int(text)
    if v < 1:
        raise ValueError("n_metastases must be >= 1")
    return v


_PARSERS = {
    "sex": _normalize_sex,
    "n_metastases": _parse_count,
    "machine": normalize_machine,
    "primary_tumor": lambda s: " ".join(s.split()),
    "decision_si": _parse_si,
    "date_first_treatment": date.fromisoformat,
    "date_first_followup": date.fromisoformat,
    "age": float,
}


def load_patients(path) -> tuple[list[PatientRecord], list[Issue]]:
    """Parse the patient table. Bad cells become ``None`` plus an :class:`Issue`."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        header = reader.fieldnames or []
        missing = [c for c in PATIENT_COLUMNS if c not in header and c not in OPTIONAL_COLUMNS]
        if missing:
            raise ValueError(f"{path}: missing patient columns {missing}")
        records, issues, seen = [], [], {}
        for row_no, row in enumerate(reader, start=2):
            pid = (row.get("patient_id") or "").strip()
            if not pid:
                issues.append(Issue(row_no, "patient_id", "empty patient id"))
                continue
            if pid in seen:
                issues.append(Issue(row_no, "patient_id", f"duplicate patient id {pid} (first on row {seen[pid]})"))
                continue
            seen[pid] = row_no
            vals = {"patient_id": pid}
            for col, parse in _PARSERS.items():
                raw = (row.get(col) or "").strip()
                if not raw:
                    vals[col] = None
                    continue
                try:
                    vals[col] = parse(raw)
                except ValueError as exc:
                    issues.append(Issue(row_no, col, f"cannot parse {raw!r}: {exc}"))
                    vals[col] = None
            rec = PatientRecord(**vals)
            if rec.date_first_treatment and rec.date_first_followup and \
                    rec.date_first_followup < rec.date_first_treatment:
                issues.append(Issue(row_no, "date_first_followup", "follow-up precedes treatment"))
                rec = replace(rec, date_first_followup=None)
            records.append(rec)
    return records, issues


def validate_and_exclude(records) -> tuple[list[PatientRecord], ExclusionReport]:
    """Drop records missing any required clinical field; idempotent."""
    keep, report = [], ExclusionReport()
    for r in records:
        gaps = [f for f in REQUIRED_FIELDS if getattr(r, f) in (None, "")]
        if gaps:
            report.excluded[r.patient_id] = gaps
        else:
            keep.append(r)
    return keep, report


def followup_interval_months(t0: date, t1: date) -> float:
    if t1 < t0:
        raise ValueError(f"follow-up {t1} precedes treatment {t0}")
    return round((t1 - t0).days / DAYS_PER_MONTH, 2)


def is_long_interval(months: float) -> bool:
    return months > LONG_INTERVAL_MONTHS


def record_intervals(records) -> list[tuple[str, float]]:
    return [(r.patient_id, followup_interval_months(r.date_first_treatment, r.date_first_followup))
            for r in records if r.date_first_treatment and r.date_first_followup]


def field_value(rec: PatientRecord, name: str):
    if name == "metastasis_group":
        return rec.metastasis_group
    return getattr(rec, name)


@dataclass(frozen=True)
class OneHotEncoding:
    """Fitted category lists per field, each sorted lexicographically."""

    categories: dict[str, tuple[str, ...]]

    @classmethod
    def fit(cls, records, fields_) -> "OneHotEncoding":
        cats = {}
        for f in fields_:
            vals = {str(field_value(r, f)) for r in records if field_value(r, f) is not None}
            cats[f] = tuple(sorted(vals))
        return cls(cats)

    @property
    def columns(self) -> list[str]:
        return [f"{f}={c}" for f, cs in self.categories.items() for c in cs]

    def transform(self, records) -> list[list[int]]:
        rows = []
        for r in records:
            row = []
            for f, cs in self.categories.items():
                v = field_value(r, f)
                if v is None or str(v) not in cs:
                    raise ValueError(f"unseen category {v!r} for field {f!r}")
                row.extend(int(str(v) == c) for c in cs)
            rows.append(row)
        return rows


def one_hot_encode(records, fields_, encoding: OneHotEncoding | None = None):
    """Return ``(rows, column_names, encoding)``; pass ``encoding`` to reuse a fitted one."""
    enc = encoding if encoding is not None else OneHotEncoding.fit(records, fields_)
    return enc.transform(records), enc.columns, enc


@dataclass(frozen=True)
class CategoryCount:
    category: str
    count: int
    percent: float


@dataclass(frozen=True)
class CohortSummary:
    n: int
    characteristics: dict[str, tuple[CategoryCount, ...]]

    def get(self, characteristic: str, category: str) -> CategoryCount:
        for c in self.characteristics[characteristic]:
            if c.category == category:
                return c
        raise KeyError(f"{characteristic}/{category}")

    def rows(self) -> list[list[str]]:
        return [[name, c.category, str(c.count), f"{c.percent:.2f}"]
                for name, cats in self.characteristics.items() for c in cats]


SUMMARY_FIELDS = {
    "sex": lambda r: r.sex,
    "metastases": lambda r: r.metastasis_group,
    "machine": lambda r: r.machine,
    "primary_tumor": lambda r: r.primary_tumor,
    "decision": lambda r: DECISION_LABELS[r.decision_si],
}


def summarize_cohort(records) -> CohortSummary:
    """Counts and ``100 * count / N`` percentages (2 decimals), largest category first."""
    records = list(records)
    if not records:
        raise ValueError("cannot summarise an empty cohort")
    n = len(records)
    out = {}
    for name, get in SUMMARY_FIELDS.items():
        tally = {}
        for r in records:
            k = get(r)
            tally[k] = tally.get(k, 0) + 1
        ordered = sorted(tally.items(), key=lambda kv: (-kv[1], kv[0]))
        out[name] = tuple(CategoryCount(k, c, round(100.0 * c / n, 2)) for k, c in ordered)
    return CohortSummary(n, out)


def interval_histogram(intervals, width: float = 1.0) -> list[tuple[float, float, int]]:
    """Counts over half-open bins ``[k*w, (k+1)*w)`` from the first to the last occupied bin."""
    xs = list(intervals)
    if not xs:
        raise ValueError("no intervals to bin")
    if not width > 0:
        raise ValueError("bin width must be positive")
    ks = [math.floor(x / width) for x in xs]
    lo, hi = min(ks), max(ks)
    counts = [0] * (hi - lo + 1)
    for k in ks:
        counts[k - lo] += 1
    return [((lo + i) * width, (lo + i + 1) * width, c) for i, c in enumerate(counts)]


def write_patients_csv(records, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PATIENT_COLUMNS)
        for r in records:
            w.writerow(["" if getattr(r, f.name) is None else
                        (getattr(r, f.name).isoformat() if isinstance(getattr(r, f.name), date)
                         else getattr(r, f.name))
                        for f in fields(PatientRecord)])


def write_summary_csv(summary: CohortSummary, path, header: str = "") -> None:
    with Path(path).open("w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["characteristic", "category", "count", "percent"])
        w.writerows(summary.rows())


def write_histogram_csv(bins, path, header: str = "") -> None:
    with Path(path).open("w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_start", "bin_end", "count"])
        for a, b, c in bins:
            w.writerow([f"{a:g}", f"{b:g}", c])
