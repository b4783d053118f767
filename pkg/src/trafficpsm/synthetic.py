"""Synthetic corridor data with a known treatment effect.

Hourly through counts at each intersection follow a shared diurnal profile
scaled by a per-week multiplier, a day-of-week factor and log-normal noise.
A week may also carry an additive offset (extra through traffic, as a
fraction of the intersection's base volume, e.g. a detour). Multipliers are
largely absorbed by the diurnal range; offsets compress the low tail and so
remove common support for light-traffic hours.

Every week is a known distribution, so the true propensity of any pooled
table is the density ratio of treated to control weeks.

Speed falls linearly with the mean relative volume (``confounding_strength``
mph per unit), so any volume difference between the treatment week and the
control pool biases a naive before/after comparison.

``volume_profile="flattened"`` gives the treatment week a flatter diurnal
shape (peak spreading): its mean volume matches the controls but its spread
does not, a confounder no linear-index model can represent.
"""
from __future__ import annotations

import datetime as dt
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset import Group, Observation, StudyTable, WeekWindow, WindowRole
from .errors import ConfigError

__all__ = [
    "DIURNAL_PROFILE",
    "ScenarioSpec",
    "GroundTruth",
    "generate_synthetic",
    "confounded_scenario",
    "staged_scenario",
    "nonlinear_scenario",
]

# relative demand for hours 6..21
DIURNAL_PROFILE = (0.55, 0.85, 0.80, 0.65, 0.62, 0.68, 0.72, 0.74,
                   0.75, 0.80, 0.92, 1.00, 0.95, 0.75, 0.58, 0.45)
# Monday..Sunday
DAY_FACTORS = (1.0, 1.0, 1.0, 1.0, 1.05, 0.85, 0.75)
DEFAULT_BASES = (577.0, 800.0, 850.0, 900.0, 530.0)


@dataclass(frozen=True)
class ScenarioSpec:
    """Parameters of a synthetic study.

    ``week_shifts`` holds one volume multiplier per control week in pool
    order (the first is the initial control week); ``treatment_shift`` is
    the treatment week's multiplier.
    """

    week_shifts: tuple = (1.0,)
    treatment_shift: float = 1.0
    week_offsets: Optional[tuple] = None
    treatment_offset: float = 0.0
    effect_mph: float = 0.0
    confounding_strength: float = 8.0
    noise_mph: float = 1.0
    volume_noise: float = 0.08
    hour_noise: float = 0.05
    n_covariates: int = 5
    covariate_bases: Optional[tuple] = None
    free_speed_mph: float = 45.0
    volume_profile: str = "scaled"
    flatten_power: float = 0.4
    start_date: str = "2020-08-31"
    segment_id: str = "SYN"
    round_counts: bool = True

    def __post_init__(self):
        object.__setattr__(self, "week_shifts", tuple(float(s) for s in self.week_shifts))
        if self.covariate_bases is not None:
            object.__setattr__(self, "covariate_bases", tuple(float(b) for b in self.covariate_bases))
        if self.week_offsets is not None:
            object.__setattr__(self, "week_offsets", tuple(float(o) for o in self.week_offsets))
            if len(self.week_offsets) != len(self.week_shifts):
                raise ConfigError("week_offsets length must equal week_shifts length")
            if any(o < 0 for o in self.week_offsets):
                raise ConfigError("week_offsets must be >= 0")
        if self.treatment_offset < 0:
            raise ConfigError("treatment_offset must be >= 0")
        if not self.week_shifts:
            raise ConfigError("at least one control week is required")
        if any(s <= 0 for s in self.week_shifts) or self.treatment_shift <= 0:
            raise ConfigError("volume shifts must be positive")
        if self.n_covariates < 1:
            raise ConfigError("n_covariates must be >= 1")
        if self.covariate_bases is not None and len(self.covariate_bases) != self.n_covariates:
            raise ConfigError("covariate_bases length must equal n_covariates")
        if min(self.noise_mph, self.volume_noise, self.hour_noise, self.confounding_strength) < 0:
            raise ConfigError("noise scales and confounding strength must be >= 0")
        if self.volume_profile not in ("scaled", "flattened"):
            raise ConfigError(f"unknown volume_profile {self.volume_profile!r}")
        if not 0 < self.flatten_power <= 1:
            raise ConfigError("flatten_power must be in (0, 1]")
        try:
            dt.date.fromisoformat(self.start_date)
        except ValueError as exc:
            raise ConfigError(f"bad start_date {self.start_date!r}") from exc

    @property
    def bases(self) -> np.ndarray:
        if self.covariate_bases is not None:
            return np.array(self.covariate_bases)
        reps = -(-self.n_covariates // len(DEFAULT_BASES))
        return np.array((DEFAULT_BASES * reps)[: self.n_covariates])

    @property
    def offsets(self) -> tuple:
        return self.week_offsets if self.week_offsets is not None else (0.0,) * len(self.week_shifts)

    @property
    def control_labels(self) -> list[str]:
        return ["C1"] + [f"AC{k}" for k in range(1, len(self.week_shifts))]

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["week_shifts"] = list(self.week_shifts)
        if self.week_offsets is not None:
            doc["week_offsets"] = list(self.week_offsets)
        if self.covariate_bases is not None:
            doc["covariate_bases"] = list(self.covariate_bases)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ScenarioSpec":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc


@dataclass(frozen=True)
class GroundTruth:
    effect_mph: float
    week_shifts: dict
    week_offsets: dict
    expected_naive_bias: dict = field(default_factory=dict)
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _windows(spec: ScenarioSpec) -> tuple:
    start = dt.date.fromisoformat(spec.start_date)
    wins = []
    for k, label in enumerate(spec.control_labels):
        s = start + dt.timedelta(days=7 * k)
        role = WindowRole.INITIAL_CONTROL if k == 0 else WindowRole.ADDITIONAL_CONTROL
        wins.append(WeekWindow(label, s, s + dt.timedelta(days=6), role))
    s = start + dt.timedelta(days=7 * len(spec.week_shifts))
    wins.append(WeekWindow("T1", s, s + dt.timedelta(days=6), WindowRole.TREATMENT))
    return tuple(wins)


def _profile(spec: ScenarioSpec, treated: bool) -> np.ndarray:
    prof = np.array(DIURNAL_PROFILE)
    if treated and spec.volume_profile == "flattened":
        flat = prof**spec.flatten_power
        return flat * prof.mean() / flat.mean()
    return prof


def _mean_relative_volume(spec: ScenarioSpec, shift: float, offset: float, treated: bool) -> float:
    # E[exp(s*Z)] = exp(s^2/2) for the log-normal noise terms
    noise = np.exp(0.5 * (spec.volume_noise**2 + spec.hour_noise**2))
    return float((shift * _profile(spec, treated).mean() * np.mean(DAY_FACTORS) + offset) * noise)


def generate_synthetic(spec: ScenarioSpec, seed: int = 0) -> tuple[StudyTable, GroundTruth]:
    """Generate a study table (treated block first) and its ground truth."""
    rng = np.random.default_rng(seed)
    windows = _windows(spec)
    bases = spec.bases
    hours = range(6, 6 + len(DIURNAL_PROFILE))
    shifts = dict(zip(spec.control_labels, spec.week_shifts))
    shifts["T1"] = spec.treatment_shift
    offsets = dict(zip(spec.control_labels, spec.offsets))
    offsets["T1"] = spec.treatment_offset
    treated_obs, control_obs = [], []
    # generate in calendar order so a given seed always yields the same rows
    for w in windows:
        is_treated = w.role is WindowRole.TREATMENT
        prof = _profile(spec, is_treated)
        for d in range(7):
            day = w.start_date + dt.timedelta(days=d)
            day_factor = DAY_FACTORS[day.weekday()]
            for k, hour in enumerate(hours):
                common = np.exp(spec.hour_noise * rng.standard_normal())
                own = np.exp(spec.volume_noise * rng.standard_normal(bases.size))
                level = prof[k] * day_factor * shifts[w.label] + offsets[w.label]
                vol = bases * level * common * own
                if spec.round_counts:
                    vol = np.round(vol)
                rel = float(np.mean(vol / bases))
                speed = (spec.free_speed_mph - spec.confounding_strength * rel
                         + (spec.effect_mph if is_treated else 0.0)
                         + spec.noise_mph * rng.standard_normal())
                obs = Observation(
                    week_id=w.label,
                    date=day,
                    hour=hour,
                    covariates=tuple(float(v) for v in vol),
                    outcome=float(speed),
                    group=Group.TREATED if is_treated else Group.CONTROL,
                )
                (treated_obs if is_treated else control_obs).append(obs)
    names = tuple(f"X{i + 1}" for i in range(bases.size))
    table = StudyTable(
        segment_id=spec.segment_id,
        covariate_names=names,
        observations=tuple(treated_obs + control_obs),
        week_order=tuple(spec.control_labels),
        windows=windows,
        outcome_column="speed",
        hour_start=hours[0],
        hour_end=hours[-1],
    )
    t_rel = _mean_relative_volume(spec, spec.treatment_shift, spec.treatment_offset, True)
    c_rels = [_mean_relative_volume(spec, s, o, False) for s, o in zip(spec.week_shifts, spec.offsets)]
    # expected naive difference minus the true effect, per pool size m
    naive = {str(m): float(-spec.confounding_strength * (t_rel - np.mean(c_rels[:m])))
             for m in range(1, len(c_rels) + 1)}
    truth = GroundTruth(spec.effect_mph, shifts, offsets, naive, seed)
    return table, truth


def confounded_scenario(**overrides) -> ScenarioSpec:
    """Pool weeks run heavier than the treatment week, the first two with detour traffic.

    17 control weeks plus the treatment week: 2016 hourly observations.
    """
    shifts = (1.25, 1.2, 1.15, 1.1, 1.0, 1.2, 0.95, 1.1, 1.15, 1.05, 1.2, 1.1, 1.0, 1.15, 1.25, 1.1, 1.05)
    base = dict(week_shifts=shifts, week_offsets=(0.2, 0.2) + (0.0,) * 15, effect_mph=2.0,
                confounding_strength=10.0)
    return ScenarioSpec(**{**base, **overrides})


def staged_scenario(**overrides) -> ScenarioSpec:
    """First two control weeks carry +30% extra traffic; the third matches treatment."""
    base = dict(week_shifts=(1.0,) * 5, week_offsets=(0.3, 0.3, 0.0, 0.3, 0.3), effect_mph=1.5)
    return ScenarioSpec(**{**base, **overrides})


def nonlinear_scenario(**overrides) -> ScenarioSpec:
    """Flattened treatment-week profile at an unchanged mean volume."""
    base = dict(week_shifts=(1.0,) * 6, treatment_shift=1.0, effect_mph=1.0, volume_profile="flattened",
                flatten_power=0.15)
    return ScenarioSpec(**{**base, **overrides})
