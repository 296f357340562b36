"""Correlations, uncertainty-ranked filtering, GLM adjustment and effect sizes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import InputError, RankError, UndefinedStatisticError

DEFAULT_FRACTIONS = tuple(round(1.0 - 0.05 * i, 2) for i in range(19))


def _pair(x, y, min_n=3):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise InputError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < min_n:
        raise InputError(f"need at least {min_n} observations, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InputError("observations must be finite")
    return x, y


def pearson(x, y) -> float:
    x, y = _pair(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedStatisticError("correlation undefined: zero variance")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def spearman(x, y) -> float:
    """Pearson correlation of average ranks."""
    x, y = _pair(x, y)
    return pearson(rankdata(x, method="average"), rankdata(y, method="average"))


# ------------------------------------------------------------------ filtering
@dataclass(frozen=True)
class FilterCurve:
    fractions: tuple
    values: tuple
    level: str = "parcel"
    counts: tuple = ()

    def __post_init__(self):
        fr = tuple(float(f) for f in self.fractions)
        if len(fr) != len(self.values):
            raise InputError("fractions and values differ in length")
        if any(not 0 < f <= 1 for f in fr):
            raise InputError("fractions must lie in (0, 1]")
        if any(b >= a for a, b in zip(fr, fr[1:])):
            raise InputError("fractions must be strictly decreasing")
        object.__setattr__(self, "fractions", fr)
        object.__setattr__(self, "values", tuple(None if v is None else float(v) for v in self.values))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))

    def at(self, q):
        for f, v in zip(self.fractions, self.values):
            if abs(f - q) < 1e-9:
                return v
        raise KeyError(q)

    def rows(self):
        return list(zip(self.fractions, self.values))


def _check_fractions(fractions):
    fr = [float(f) for f in fractions]
    if not fr:
        raise InputError("no keep fractions given")
    for f in fr:
        if not 0 < f <= 1:
            raise InputError(f"keep fraction {f} outside (0, 1]")
    return sorted(set(fr), reverse=True)


def keep_count(q, n):
    # guard against 0.7 * 10 = 7.000000000000001 style round-up
    return max(1, min(n, math.ceil(q * n - 1e-9)))


def keep_order(uncert):
    """Item indices by increasing uncertainty, ties by index."""
    return np.argsort(np.asarray(uncert, dtype=np.float64), kind="stable")


def filter_curve(errors, uncert, fractions=DEFAULT_FRACTIONS, level="parcel") -> FilterCurve:
    errors = np.asarray(errors, dtype=np.float64).ravel()
    uncert = np.asarray(uncert, dtype=np.float64).ravel()
    if errors.shape != uncert.shape:
        raise InputError(f"length mismatch: {errors.size} errors vs {uncert.size} uncertainties")
    if errors.size == 0:
        raise InputError("no items to filter")
    fr = _check_fractions(fractions)
    order = keep_order(uncert)
    n = errors.size
    vals, counts = [], []
    for q in fr:
        k = keep_count(q, n)
        vals.append(float(np.mean(errors[order[:k]])))
        counts.append(k)
    return FilterCurve(tuple(fr), tuple(vals), level, tuple(counts))


def nested_filter_curve(node_errors, node_uncert, parcel_of_node, parcel_uncert: dict,
                        top_fraction=0.1, fractions=DEFAULT_FRACTIONS) -> FilterCurve:
    """Node-level filtering restricted to the most uncertain parcels.

    ``parcel_uncert`` maps parcel id -> uncertainty; the top
    ``ceil(top_fraction * n_parcels)`` parcels by uncertainty (ties by id)
    define the node subset.
    """
    node_errors = np.asarray(node_errors, dtype=np.float64).ravel()
    node_uncert = np.asarray(node_uncert, dtype=np.float64).ravel()
    parcel_of_node = np.asarray(parcel_of_node).ravel()
    if not (node_errors.shape == node_uncert.shape == parcel_of_node.shape):
        raise InputError("node arrays differ in length")
    if not 0 < top_fraction <= 1:
        raise InputError("top_fraction must lie in (0, 1]")
    items = [(k, v) for k, v in parcel_uncert.items() if v is not None]
    if not items:
        raise InputError("no parcel uncertainties given")
    ids = [k for k, _ in items]
    vals = np.array([v for _, v in items], dtype=np.float64)
    # most uncertain first; stable on the given key order
    order = np.argsort(-vals, kind="stable")
    n_top = keep_count(top_fraction, len(ids))
    top = {ids[i] for i in order[:n_top]}
    mask = np.isin(parcel_of_node, list(top))
    if not mask.any():
        raise InputError("restriction to the top parcels leaves no nodes")
    return filter_curve(node_errors[mask], node_uncert[mask], fractions, level="node")


# ------------------------------------------------------------------ GLM
def design_matrix(covariates, n=None):
    if covariates is None:
        cov = np.zeros((n, 0))
    else:
        cov = np.asarray(covariates, dtype=np.float64)
        if cov.ndim == 1:
            cov = cov[:, None]
    return np.column_stack([np.ones(cov.shape[0]), cov])


def glm_residualize(y, covariates) -> np.ndarray:
    """Residuals of an intercept + covariates OLS fit, solved by QR."""
    y = np.asarray(y, dtype=np.float64).ravel()
    X = design_matrix(covariates, len(y))
    if X.shape[0] != y.size:
        raise InputError(f"{y.size} responses for {X.shape[0]} design rows")
    n, p = X.shape
    if n <= p:
        raise RankError(f"need more subjects ({n}) than design columns ({p})")
    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    scale = max(float(np.max(np.linalg.norm(X, axis=0))), 1.0)
    if np.any(diag <= 1e-10 * scale):
        raise RankError("design matrix is rank deficient")
    return y - q @ (q.T @ y)


# ------------------------------------------------------------------ effect size
def cohens_d(a, b) -> float:
    """(mean(a) - mean(b)) over the pooled sample standard deviation."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size < 2 or b.size < 2:
        raise InputError("each group needs at least 2 values")
    na, nb = a.size, b.size
    ss = float(np.sum((a - a.mean()) ** 2) + np.sum((b - b.mean()) ** 2))
    pooled = ss / (na + nb - 2)
    if pooled <= 0.0:
        raise UndefinedStatisticError("effect size undefined: zero pooled variance")
    return float((a.mean() - b.mean()) / math.sqrt(pooled))


GROUPS = ("case", "control")


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    age: float
    sex: int
    group: str
    parcel_thickness: dict
    parcel_uncertainty: dict
    subject_uncertainty: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.group not in GROUPS:
            raise InputError(f"group must be one of {GROUPS}, got {self.group!r}")
        if self.sex not in (0, 1):
            raise InputError("sex is encoded 0/1")
        vals = [self.age, self.subject_uncertainty, *self.parcel_thickness.values(),
                *(v for v in self.parcel_uncertainty.values() if v is not None)]
        if not all(np.isfinite(v) for v in vals):
            raise InputError(f"subject {self.subject_id}: values must be finite")


def _check_study(subjects):
    subjects = list(subjects)
    if not subjects:
        raise InputError("empty study")
    keys = set(subjects[0].parcel_thickness)
    for s in subjects[1:]:
        if set(s.parcel_thickness) != keys:
            raise InputError(f"subject {s.subject_id} has inconsistent parcel keys")
    return subjects


def effect_size(subjects: Sequence[SubjectRecord], parcel) -> float:
    """Case-minus-control d on thickness residualised for age and sex."""
    subjects = list(subjects)
    y = np.array([s.parcel_thickness[parcel] for s in subjects])
    cov = np.array([[s.age, s.sex] for s in subjects], dtype=np.float64)
    res = glm_residualize(y, cov)
    grp = np.array([s.group for s in subjects])
    return cohens_d(res[grp == "case"], res[grp == "control"])


def effect_size_curve(subjects: Sequence[SubjectRecord], parcel, fractions=DEFAULT_FRACTIONS,
                      signed=False) -> FilterCurve:
    """|d| (or signed d) after keeping the lowest-uncertainty subjects.

    The GLM is refit on every kept subset. Fractions where a group has
    fewer than two subjects, or the statistic is undefined, give ``None``.
    """
    subjects = _check_study(subjects)
    fr = _check_fractions(fractions)
    order = keep_order([s.subject_uncertainty for s in subjects])
    vals, counts = [], []
    for q in fr:
        k = keep_count(q, len(subjects))
        # original order, so q = 1 reproduces the full-cohort fit bit for bit
        kept = [subjects[i] for i in np.sort(order[:k])]
        try:
            d = effect_size(kept, parcel)
            vals.append(d if signed else abs(d))
        except (InputError, RankError, UndefinedStatisticError):
            vals.append(None)
        counts.append(k)
    return FilterCurve(tuple(fr), tuple(vals), "subject", tuple(counts))


# ------------------------------------------------------------------ reports
@dataclass(frozen=True)
class CorrelationCell:
    level: str
    key: str
    n: int
    scc: Optional[float]
    pcc: Optional[float]


def _cell(level, key, u, e):
    u = np.asarray(u, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    out = []
    for fn in (spearman, pearson):
        try:
            out.append(fn(u, e))
        except (InputError, UndefinedStatisticError):
            out.append(None)
    return CorrelationCell(level, str(key), int(u.size), out[0], out[1])


def correlation_report(results, measure="unsurf"):
    """SCC/PCC tables of uncertainty against thickness error.

    ``results`` is a sequence of dicts with keys ``subject_uncertainty``,
    ``subject_error``, ``parcel_uncertainty`` and ``parcel_error`` (parcel
    id -> value), and optionally ``slice_spacing``. Cells with too few
    observations or zero variance are reported with ``None``.
    """
    results = list(results)
    cells = [_cell("subject", "all", [r["subject_uncertainty"] for r in results],
                   [r["subject_error"] for r in results])]
    parcels = sorted({p for r in results for p in r.get("parcel_error", {})})
    for p in parcels:
        pairs = [(r["parcel_uncertainty"].get(p), r["parcel_error"].get(p)) for r in results]
        pairs = [(u, e) for u, e in pairs if u is not None and e is not None]
        cells.append(_cell("parcel", p, [u for u, _ in pairs], [e for _, e in pairs]))
    spacings = sorted({r["slice_spacing"] for r in results if "slice_spacing" in r})
    for sp in spacings:
        sub = [r for r in results if r.get("slice_spacing") == sp]
        cells.append(_cell("spacing", f"{sp:g}", [r["subject_uncertainty"] for r in sub],
                           [r["subject_error"] for r in sub]))
    return cells
