"""Cohort tables, standardisation, the synthetic sickle-cell cohort and CSV I/O."""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .results import BiomarkerShift, IndicatorPerf, PhenoResult
from .trace import ElboTrace, StopReason


class ColumnType(str, enum.Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"
    CATEGORICAL = "categorical"


class CohortError(ValueError):
    """Malformed cohort input.  ``row`` is 1-based and counts the header as row 1."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass(frozen=True)
class Scaling:
    mean: float
    sd: float


@dataclass(frozen=True)
class Cohort:
    columns: dict[str, np.ndarray]
    types: dict[str, ColumnType]
    scaling: dict[str, Scaling] = field(default_factory=dict)

    def __post_init__(self):
        if set(self.columns) != set(self.types):
            raise CohortError("every column needs a type")
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise CohortError(f"columns have differing lengths {sorted(lengths)}")
        for name, values in self.columns.items():
            kind = ColumnType(self.types[name])
            self.types[name] = kind
            if kind is ColumnType.BINARY:
                bad = np.flatnonzero(~np.isin(values, (0, 1)))
                if bad.size:
                    raise CohortError(f"binary column holds {values[bad[0]]!r}", row=int(bad[0]) + 2,
                                      column=name)
        for name, rec in self.scaling.items():
            if not rec.sd > 0:
                raise CohortError("scaling sd must be positive", column=name)

    @property
    def n(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise CohortError("no such column", column=name) from None

    def __contains__(self, name: str) -> bool:
        return name in self.columns

    def matrix(self, names) -> np.ndarray:
        return np.column_stack([np.asarray(self[c], dtype=float) for c in names])

    def take(self, rows) -> "Cohort":
        return Cohort({k: v[rows] for k, v in self.columns.items()}, dict(self.types), dict(self.scaling))


def infer_schema(header, rows) -> dict[str, ColumnType]:
    schema = {}
    for j, name in enumerate(header):
        cells = {r[j].strip() for r in rows}
        schema[name] = ColumnType.BINARY if cells <= {"0", "1"} else ColumnType.CONTINUOUS
    return schema


def load_csv(path, schema: dict[str, str] | None = None) -> Cohort:
    """Read a comma-separated file with a header row into a typed cohort.

    ``schema`` maps column names to ``continuous``, ``binary`` or
    ``categorical``; columns absent from the file raise, columns absent
    from the schema are dropped.  Without a schema, 0/1 columns are binary
    and everything else continuous.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0]:
        raise CohortError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise CohortError(f"{path}: no data rows")
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise CohortError(f"expected {len(header)} fields, found {len(r)}", row=i + 2)
    if schema is None:
        schema = infer_schema(header, body)
    schema = {k: ColumnType(v) for k, v in schema.items()}
    missing = [c for c in schema if c not in header]
    if missing:
        raise CohortError(f"{path}: missing column(s) {missing}")

    columns, types = {}, {}
    for name, kind in schema.items():
        j = header.index(name)
        values = np.empty(len(body), dtype=float if kind is ColumnType.CONTINUOUS else np.int64)
        for i, r in enumerate(body):
            cell = r[j].strip()
            try:
                if kind is ColumnType.CONTINUOUS:
                    values[i] = float(cell)
                else:
                    v = float(cell)
                    if v != int(v):
                        raise ValueError
                    values[i] = int(v)
            except (ValueError, OverflowError):
                raise CohortError(f"cannot parse {cell!r} as {kind.value}", row=i + 2, column=name) from None
            if kind is ColumnType.BINARY and values[i] not in (0, 1):
                raise CohortError(f"binary column holds {cell!r}", row=i + 2, column=name)
        columns[name] = values
        types[name] = kind
    return Cohort(columns, types)


def _fmt(value, kind: ColumnType) -> str:
    if kind is ColumnType.CONTINUOUS:
        return format(float(value), ".17g")
    return str(int(value))


def _write_cohort(cohort: Cohort, fh) -> None:
    fh.write(",".join(cohort.names) + "\n")
    cols = [(cohort.columns[c], cohort.types[c]) for c in cohort.names]
    for i in range(cohort.n):
        fh.write(",".join(_fmt(v[i], t) for v, t in cols) + "\n")


def save_cohort(cohort: Cohort, path) -> None:
    """Write ``cohort`` as CSV to a path or an open text stream."""
    if hasattr(path, "write"):
        _write_cohort(cohort, path)
        return
    with open(path, "w", newline="") as fh:
        _write_cohort(cohort, fh)


def standardize(cohort: Cohort, columns) -> Cohort:
    """z-score the named continuous columns using the sample sd (n - 1).

    Columns that already carry a scaling record are left untouched, so a
    second application is the identity.
    """
    new_cols = dict(cohort.columns)
    scaling = dict(cohort.scaling)
    for name in columns:
        if cohort.types.get(name) is not ColumnType.CONTINUOUS:
            raise CohortError("only continuous columns can be standardised", column=name)
        if name in scaling:
            continue
        values = cohort.columns[name]
        if values.size < 2:
            raise CohortError("need at least two rows to standardise", column=name)
        mean = float(values.mean())
        # second pass removes the rounding left in the first mean
        mean += float((values - mean).mean())
        centred = values - mean
        sd = float(np.sqrt(centred @ centred / (values.size - 1)))
        if not sd > 0 or not math.isfinite(sd):
            raise CohortError("zero-variance column cannot be standardised", column=name)
        new_cols[name] = centred / sd
        scaling[name] = Scaling(mean, sd)
    return Cohort(new_cols, dict(cohort.types), scaling)


def unstandardize(cohort: Cohort, columns=None) -> Cohort:
    """Invert :func:`standardize` using the stored scaling records."""
    columns = list(cohort.scaling) if columns is None else list(columns)
    new_cols = dict(cohort.columns)
    scaling = dict(cohort.scaling)
    for name in columns:
        rec = scaling.pop(name)
        new_cols[name] = cohort.columns[name] * rec.sd + rec.mean
    return Cohort(new_cols, dict(cohort.types), scaling)


def load_faithful() -> np.ndarray:
    """Old Faithful eruptions (minutes) and waiting times (minutes), 272 x 2."""
    text = resources.files("phenovb").joinpath("data/faithful.csv").read_text()
    return np.loadtxt(text.splitlines()[1:], delimiter=",")


# --- synthetic sickle-cell cohort -------------------------------------------------

@dataclass(frozen=True)
class IndicatorSpec:
    sensitivity: float
    specificity: float


def _default_indicators():
    return {"scd_code": IndicatorSpec(0.9, 0.99), "hydroxyurea": IndicatorSpec(0.6, 0.998)}


@dataclass(frozen=True)
class ScdGenParams:
    """Parameters of the synthetic rare-phenotype cohort.

    Healthy complete blood count (CBC, g/dL) is normal around
    ``healthy_cbc_mean`` shifted by ``cbc_sex_gap`` between the sexes, so the
    healthy population is itself bimodal.  Healthy reticulocyte count
    (RC, %) is normal with its central 95% spanning ``healthy_rc_range``.
    Disease rows are tight normals around the disease means.
    """

    n: int = 10_000
    prevalence: float = 0.003
    healthy_cbc_mean: float = 12.0
    healthy_cbc_sd: float = 0.8
    male_fraction: float = 0.5
    cbc_sex_gap: float = 2.5
    healthy_rc_range: tuple[float, float] = (0.5, 2.5)
    scd_cbc_mean: float = 4.1
    scd_cbc_sd: float = 0.25
    scd_rc_mean: float = 5.2
    scd_rc_sd: float = 0.12
    highrisk_rate: tuple[float, float] = (0.1, 0.8)
    indicators: dict[str, IndicatorSpec] = field(default_factory=_default_indicators)
    seed: int = 1

    def __post_init__(self):
        if not 0 < self.prevalence < 1:
            raise ValueError("prevalence must lie in (0, 1)")
        if self.n < 1:
            raise ValueError("n must be positive")
        if round(self.n * self.prevalence) < 5:
            raise ValueError("n * prevalence must be at least 5")
        lo, hi = self.healthy_rc_range
        if not 0 < lo < hi:
            raise ValueError("healthy_rc_range must be an increasing pair of positive values")
        for name in ("healthy_cbc_mean", "scd_cbc_mean", "scd_rc_mean"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("healthy_cbc_sd", "scd_cbc_sd", "scd_rc_sd"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for p in self.highrisk_rate:
            if not 0 <= p <= 1:
                raise ValueError("highrisk_rate entries must be probabilities")
        for name, spec in self.indicators.items():
            if not (0 < spec.sensitivity < 1 and 0 < spec.specificity < 1):
                raise ValueError(f"indicator {name}: sensitivity and specificity must lie in (0, 1)")

    @property
    def n_disease(self) -> int:
        return int(round(self.n * self.prevalence))

    @property
    def healthy_rc_mean(self) -> float:
        lo, hi = self.healthy_rc_range
        return 0.5 * (lo + hi)

    @property
    def healthy_rc_sd(self) -> float:
        # the range is read as a central 95% interval
        lo, hi = self.healthy_rc_range
        return (hi - lo) / (2 * 1.959963984540054)


@dataclass(frozen=True)
class ScdTruth:
    labels: np.ndarray
    shift: dict[str, float]
    indicator_perf: dict[str, IndicatorSpec]


@dataclass(frozen=True)
class ScdCohort:
    cohort: Cohort
    truth: ScdTruth


def generate_scd_cohort(params: ScdGenParams | None = None) -> ScdCohort:
    """Draw a cohort with exactly ``round(n * prevalence)`` disease rows.

    Columns: ``age`` (uniform 0-90), ``highrisk`` (binary), ``CBC``, ``RC``
    and one binary column per configured indicator.  The true shifts are
    the differences of the class-conditional biomarker means.
    """
    p = params or ScdGenParams()
    rng = np.random.default_rng(p.seed)
    n, nd = p.n, p.n_disease
    labels = np.zeros(n, dtype=np.int64)
    labels[rng.choice(n, size=nd, replace=False)] = 1
    sick = labels == 1

    age = rng.uniform(0.0, 90.0, size=n)
    highrisk = (rng.random(n) < np.where(sick, p.highrisk_rate[1], p.highrisk_rate[0])).astype(np.int64)
    male = (rng.random(n) < p.male_fraction).astype(np.int64)
    healthy_cbc = p.healthy_cbc_mean + p.cbc_sex_gap * (male - p.male_fraction)
    cbc = np.where(sick, rng.normal(p.scd_cbc_mean, p.scd_cbc_sd, n),
                   rng.normal(healthy_cbc, p.healthy_cbc_sd))
    rc = np.where(sick, rng.normal(p.scd_rc_mean, p.scd_rc_sd, n),
                  rng.normal(p.healthy_rc_mean, p.healthy_rc_sd, n))

    columns = {"age": age, "sex": male, "highrisk": highrisk, "CBC": cbc, "RC": rc}
    types = {"age": ColumnType.CONTINUOUS, "sex": ColumnType.BINARY, "highrisk": ColumnType.BINARY,
             "CBC": ColumnType.CONTINUOUS, "RC": ColumnType.CONTINUOUS}
    for name in sorted(p.indicators):
        spec = p.indicators[name]
        prob = np.where(sick, spec.sensitivity, 1.0 - spec.specificity)
        columns[name] = (rng.random(n) < prob).astype(np.int64)
        types[name] = ColumnType.BINARY

    truth = ScdTruth(labels=labels,
                     shift={"CBC": p.scd_cbc_mean - p.healthy_cbc_mean,
                            "RC": p.scd_rc_mean - p.healthy_rc_mean},
                     indicator_perf=dict(p.indicators))
    return ScdCohort(Cohort(columns, types), truth)


# --- result files -----------------------------------------------------------------

RESULT_KEYS = ("latent_class", "soft_prob", "biomarker_shift", "indicator_perf", "elbo_trace", "config_echo")


class MalformedResultError(ValueError):
    pass


def _json_value(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            raise ValueError(f"cannot serialise non-finite value {obj}")
        text = format(float(obj), ".17g")
        return text if any(ch in text for ch in ".en") else text + ".0"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json_value(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_json_value(v, indent, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _json_value(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with every float written to 17 significant digits."""
    return _json_value(obj, indent, 0) + "\n"


def trace_to_dict(trace: ElboTrace) -> dict:
    return {"values": list(trace.values), "deltas": list(trace.deltas),
            "stopped_because": trace.stopped_because.value}


def trace_from_dict(doc) -> ElboTrace:
    try:
        values = [float(v) for v in doc["values"]]
        deltas = [float(v) for v in doc["deltas"]]
        reason = StopReason(doc["stopped_because"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedResultError(f"bad elbo_trace: {exc}") from None
    if len(deltas) != max(len(values) - 1, 0):
        raise MalformedResultError(f"elbo_trace has {len(values)} values but {len(deltas)} deltas")
    trace = ElboTrace(tuple(values), reason)
    if not np.allclose(trace.deltas, deltas, rtol=1e-9, atol=1e-9):
        raise MalformedResultError("elbo_trace deltas disagree with its values")
    return trace


def result_to_dict(result: PhenoResult) -> dict:
    return {
        "latent_class": [int(v) for v in result.latent_class],
        "soft_prob": [float(v) for v in result.soft_prob],
        "biomarker_shift": {k: {"shift": v.shift, "signed_coef": v.signed_coef, "sd": v.sd}
                            for k, v in result.biomarker_shift.items()},
        "indicator_perf": {k: {"sensitivity": v.sensitivity, "specificity": v.specificity}
                           for k, v in result.indicator_perf.items()},
        "elbo_trace": trace_to_dict(result.gmm_trace),
        "config_echo": result.config_echo,
        "disease_component": result.disease_component,
        "disease_class_empty": result.disease_class_empty,
    }


def save_result(result: PhenoResult, path) -> None:
    Path(path).write_text(dumps(result_to_dict(result)))


def load_result(path) -> PhenoResult:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MalformedResultError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise MalformedResultError(f"{path}: top level must be an object")
    missing = [k for k in RESULT_KEYS if k not in doc]
    if missing:
        raise MalformedResultError(f"{path}: missing key(s) {missing}")
    try:
        latent = np.asarray(doc["latent_class"], dtype=np.int64)
        soft = np.asarray(doc["soft_prob"], dtype=float)
        shifts = {k: BiomarkerShift(float(v["shift"]), float(v["signed_coef"]), float(v["sd"]))
                  for k, v in doc["biomarker_shift"].items()}
        perf = {k: IndicatorPerf(float(v["sensitivity"]), float(v["specificity"]))
                for k, v in doc["indicator_perf"].items()}
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise MalformedResultError(f"{path}: {exc}") from None
    if latent.shape != soft.shape or latent.ndim != 1:
        raise MalformedResultError(f"{path}: latent_class and soft_prob lengths differ")
    return PhenoResult(latent_class=latent, soft_prob=soft, biomarker_shift=shifts, indicator_perf=perf,
                       gmm_trace=trace_from_dict(doc["elbo_trace"]),
                       disease_component=int(doc.get("disease_component", -1)),
                       disease_class_empty=bool(doc.get("disease_class_empty", not latent.any())),
                       config_echo=doc["config_echo"])
