"""Run configuration loaded from JSON."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .errors import FormatError, SpecError
from .geometry.pial import GeometryParams
from .phantom import SLICE_SPACINGS, SLICE_AXES, DegradationSpec, PhantomSpec
from .study import StudySpec
from .uncertainty import MEASURES

MEASURE_CHOICES = ("unsurf", "variance", "both")
AXES_ORDER = ("axial", "coronal", "sagittal")
QC_FRACTIONS = tuple(round(1.0 - 0.1 * i, 1) for i in range(10))


def measures_for(choice):
    if choice == "both":
        return MEASURES
    if choice not in MEASURES:
        raise SpecError(f"measure must be one of {MEASURE_CHOICES}, got {choice!r}")
    return (choice,)


@dataclass(frozen=True)
class RunConfig:
    phantom: PhantomSpec = field(default_factory=PhantomSpec)
    degradation: DegradationSpec = field(default_factory=DegradationSpec)
    geometry: GeometryParams = field(default_factory=GeometryParams)
    spacings: tuple = SLICE_SPACINGS
    axes: tuple = AXES_ORDER
    n_models: int = 2
    n_passes: int = 5
    seed: int = 0
    measure: str = "both"
    out: str = "unsurf_run"
    write_volumes: bool = True
    study: StudySpec = field(default_factory=StudySpec)
    fractions: tuple = QC_FRACTIONS
    top_fraction: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "spacings", tuple(float(s) for s in self.spacings))
        object.__setattr__(self, "axes", tuple(self.axes))
        object.__setattr__(self, "fractions", tuple(float(f) for f in self.fractions))
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise SpecError("seed must be an integer")
        if self.n_models < 1 or self.n_passes < 1:
            raise SpecError("n_models and n_passes must be >= 1")
        if not self.spacings or not self.axes:
            raise SpecError("need at least one spacing and one axis")
        for ax in self.axes:
            if ax not in SLICE_AXES:
                raise SpecError(f"unknown slice axis {ax!r}")
        measures_for(self.measure)
        if "variance" in measures_for(self.measure) and self.ensemble_size < 2:
            raise SpecError("the variance measure needs n_models * n_passes >= 2")

    @property
    def ensemble_size(self):
        return self.n_models * self.n_passes

    @property
    def measures(self):
        return measures_for(self.measure)

    def cells(self):
        """(index, axis, spacing) for every degradation-grid cell, axes outer."""
        out = []
        for ax in self.axes:
            for sp in self.spacings:
                out.append((len(out), ax, sp))
        return out

    def degradation_for(self, axis, spacing, seed):
        return replace(self.degradation, slice_axis=axis, slice_spacing=spacing,
                       ensemble_size=self.ensemble_size, seed=seed)

    def to_dict(self, include_out=True):
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            d[f.name] = asdict(v) if hasattr(v, "__dataclass_fields__") else v
        d["spacings"] = list(self.spacings)
        d["axes"] = list(self.axes)
        d["fractions"] = list(self.fractions)
        if not include_out:
            d.pop("out")
        return d

    @classmethod
    def from_dict(cls, d: dict):
        if not isinstance(d, dict):
            raise SpecError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise SpecError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(d)
        nested = {"phantom": PhantomSpec, "degradation": DegradationSpec,
                  "geometry": GeometryParams, "study": StudySpec}
        for key, typ in nested.items():
            if key in kw:
                sub = kw[key]
                if not isinstance(sub, dict):
                    raise SpecError(f"'{key}' must be an object")
                bad = set(sub) - {f.name for f in fields(typ)}
                if bad:
                    raise SpecError(f"unknown keys in '{key}': {sorted(bad)}")
                kw[key] = typ(**sub)
        return cls(**kw)

    def with_overrides(self, seed=None, out=None, measure=None):
        kw = {}
        if seed is not None:
            kw["seed"] = int(seed)
        if out is not None:
            kw["out"] = str(out)
        if measure is not None:
            kw["measure"] = measure
        return replace(self, **kw) if kw else self


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})", "config") from exc
    try:
        return RunConfig.from_dict(doc)
    except TypeError as exc:
        raise SpecError(f"{path}: {exc}") from exc
