"""Simulated case/control cohort for the effect-size filtering analysis.

Each subject gets a subject-level uncertainty drawn from a log-normal law;
the measurement noise added to its parcel thicknesses has a standard
deviation proportional to that uncertainty, so filtering out uncertain
subjects removes the noisiest measurements.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import SpecError
from .stats import SubjectRecord


@dataclass(frozen=True)
class StudySpec:
    n_subjects: int = 200
    n_parcels: int = 16
    thinning: float = 0.3          # mm, cases only, affected parcels only
    affected_fraction: float = 0.5
    base_thickness: float = 2.5
    between_subject_sd: float = 0.15
    age_range: tuple = (55.0, 90.0)
    age_slope: float = -0.01       # mm per year
    sex_effect: float = 0.05
    uncertainty_median: float = 0.002   # mm^2
    uncertainty_spread: float = 0.75    # sd of log uncertainty
    noise_per_uncertainty: float = 0.15  # mm of noise sd at the median uncertainty
    null: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 8:
            raise SpecError("a study needs at least 8 subjects")
        if self.n_parcels < 1:
            raise SpecError("n_parcels must be >= 1")
        if not 0 <= self.affected_fraction <= 1:
            raise SpecError("affected_fraction must lie in [0, 1]")
        if self.uncertainty_median <= 0 or self.uncertainty_spread < 0:
            raise SpecError("uncertainty law needs a positive median and non-negative spread")
        if self.between_subject_sd < 0 or self.noise_per_uncertainty < 0:
            raise SpecError("standard deviations must be >= 0")
        object.__setattr__(self, "age_range", tuple(float(a) for a in self.age_range))

    @property
    def affected_parcels(self):
        return list(range(int(round(self.affected_fraction * self.n_parcels))))

    def to_dict(self):
        return asdict(self)


def simulate_group_study(spec: StudySpec = StudySpec()):
    """List of :class:`SubjectRecord`, half cases and half controls."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(spec.seed), 0x57D])))
    n, p = spec.n_subjects, spec.n_parcels
    is_case = np.zeros(n, dtype=bool)
    is_case[rng.permutation(n)[: n // 2]] = True
    age = rng.uniform(*spec.age_range, size=n)
    sex = rng.integers(0, 2, size=n)
    rel_u = np.exp(spec.uncertainty_spread * rng.standard_normal(n))
    u_subject = spec.uncertainty_median * rel_u
    parcel_jitter = np.exp(0.25 * rng.standard_normal((n, p)))
    bio = spec.between_subject_sd * rng.standard_normal((n, p))
    noise = rng.standard_normal((n, p)) * (spec.noise_per_uncertainty * rel_u)[:, None]

    true = (spec.base_thickness
            + spec.age_slope * (age - np.mean(spec.age_range))[:, None]
            + spec.sex_effect * sex[:, None]
            + bio)
    if not spec.null:
        affected = np.zeros(p, dtype=bool)
        affected[spec.affected_parcels] = True
        true = true - spec.thinning * (is_case[:, None] & affected[None, :])
    measured = true + noise

    width = len(str(n - 1))
    out = []
    for i in range(n):
        out.append(SubjectRecord(
            subject_id=f"sub{i:0{width}d}",
            age=float(age[i]),
            sex=int(sex[i]),
            group="case" if is_case[i] else "control",
            parcel_thickness={j: float(measured[i, j]) for j in range(p)},
            parcel_uncertainty={j: float(u_subject[i] * parcel_jitter[i, j]) for j in range(p)},
            subject_uncertainty=float(u_subject[i]),
        ))
    return out
