"""Observation model, study configuration and CSV ingestion.

A study is one corridor segment: hourly through-movement counts (the
covariates), a segment speed (the outcome) and a set of week windows that
decide which rows are treated and in which order control weeks join the
control pool.
"""
from __future__ import annotations

import csv
import datetime as dt
import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from .errors import ConfigError, EmptyGroupError, ParseError, SchemaError

__all__ = [
    "Group",
    "WindowRole",
    "Observation",
    "WeekWindow",
    "StudyConfig",
    "StudyTable",
    "load_study_configs",
    "load_study",
    "write_study_csv",
    "control_subset",
    "covariate_matrix",
]


class Group(str, enum.Enum):
    TREATED = "treated"
    CONTROL = "control"


class WindowRole(str, enum.Enum):
    INITIAL_CONTROL = "initial_control"
    ADDITIONAL_CONTROL = "additional_control"
    TREATMENT = "treatment"


@dataclass(frozen=True)
class Observation:
    week_id: str
    date: dt.date
    hour: int
    covariates: tuple
    outcome: Optional[float]
    group: Group

    def __post_init__(self):
        if not self.covariates:
            raise ValueError("observation needs at least one covariate")
        for v in self.covariates:
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"covariate counts must be finite and >= 0, got {v}")

    @property
    def treated(self) -> bool:
        return self.group is Group.TREATED


@dataclass(frozen=True)
class WeekWindow:
    label: str
    start_date: dt.date
    end_date: dt.date
    role: WindowRole

    def __post_init__(self):
        object.__setattr__(self, "role", WindowRole(self.role))
        if self.start_date > self.end_date:
            raise ConfigError(f"window {self.label}: start {self.start_date} after end {self.end_date}")

    def contains(self, day: dt.date) -> bool:
        return self.start_date <= day <= self.end_date

    @property
    def days(self) -> int:
        return (self.end_date - self.start_date).days + 1

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "start": self.start_date.isoformat(),
            "end": self.end_date.isoformat(),
            "role": self.role.value,
        }


@dataclass(frozen=True)
class StudyConfig:
    """Everything needed to turn a CSV into a :class:`StudyTable`."""

    segment_id: str
    covariate_names: tuple
    windows: tuple
    week_order: tuple = ()
    outcome_column: str = "speed"
    date_column: str = "date"
    hour_column: str = "hour"
    hour_start: int = 6
    hour_end: int = 21
    window_days: Optional[int] = 7

    def __post_init__(self):
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        object.__setattr__(self, "windows", tuple(self.windows))
        if not self.covariate_names:
            raise ConfigError("at least one covariate column is required")
        if len(set(self.covariate_names)) != len(self.covariate_names):
            raise ConfigError("duplicate covariate names")
        if not 0 <= self.hour_start <= self.hour_end <= 23:
            raise ConfigError(f"bad hour window {self.hour_start}-{self.hour_end}")
        labels = [w.label for w in self.windows]
        if len(set(labels)) != len(labels):
            raise ConfigError("duplicate window labels")
        for w in self.windows:
            if self.window_days is not None and w.days != self.window_days:
                raise ConfigError(f"window {w.label} spans {w.days} days, expected {self.window_days}")
        ordered = sorted(self.windows, key=lambda w: w.start_date)
        for a, b in zip(ordered, ordered[1:]):
            if b.start_date <= a.end_date:
                raise ConfigError(f"windows {a.label} and {b.label} overlap")
        initial = [w.label for w in self.windows if w.role is WindowRole.INITIAL_CONTROL]
        controls = [w.label for w in self.windows if w.role is not WindowRole.TREATMENT]
        if len(initial) != 1:
            raise ConfigError(f"exactly one initial control window required, got {len(initial)}")
        if not any(w.role is WindowRole.TREATMENT for w in self.windows):
            raise ConfigError("no treatment window declared")
        order = tuple(self.week_order) or tuple(initial + [c for c in controls if c != initial[0]])
        if sorted(order) != sorted(controls) or len(order) != len(controls):
            raise ConfigError(f"week_order must list each control window exactly once: {order}")
        if order[0] != initial[0]:
            raise ConfigError(f"week_order must start with the initial control window {initial[0]}")
        object.__setattr__(self, "week_order", order)

    @property
    def treatment_windows(self) -> tuple:
        return tuple(w for w in self.windows if w.role is WindowRole.TREATMENT)

    def window(self, label: str) -> WeekWindow:
        for w in self.windows:
            if w.label == label:
                return w
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {
            "segment_id": self.segment_id,
            "covariates": list(self.covariate_names),
            "outcome": self.outcome_column,
            "date_column": self.date_column,
            "hour_column": self.hour_column,
            "hours": [self.hour_start, self.hour_end],
            "window_days": self.window_days,
            "windows": [w.to_dict() for w in self.windows],
            "week_order": list(self.week_order),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "StudyConfig":
        try:
            windows = tuple(
                WeekWindow(
                    w["label"],
                    dt.date.fromisoformat(w["start"]),
                    dt.date.fromisoformat(w["end"]),
                    WindowRole(w["role"]),
                )
                for w in doc["windows"]
            )
            hours = doc.get("hours", [6, 21])
            return cls(
                segment_id=str(doc["segment_id"]),
                covariate_names=tuple(doc["covariates"]),
                windows=windows,
                week_order=tuple(doc.get("week_order", ())),
                outcome_column=doc.get("outcome", "speed"),
                date_column=doc.get("date_column", "date"),
                hour_column=doc.get("hour_column", "hour"),
                hour_start=int(hours[0]),
                hour_end=int(hours[1]),
                window_days=doc.get("window_days", 7),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid study config: {exc!r}") from exc


def load_study_configs(path) -> list[StudyConfig]:
    """Read a study config file.

    The file is either a single segment document or a document with a
    ``segments`` list whose entries override ``segment_id``, ``covariates``
    and ``outcome`` on top of the shared top-level keys.
    """
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if "segments" not in doc:
        return [StudyConfig.from_dict(doc)]
    shared = {k: v for k, v in doc.items() if k != "segments"}
    return [StudyConfig.from_dict({**shared, **seg}) for seg in doc["segments"]]


@dataclass(frozen=True)
class StudyTable:
    """Observations of one segment, treated block first then controls.

    ``week_order`` lists the control windows in pool-expansion order;
    ``dropped`` counts CSV rows that fell outside every window or the hour
    range (not part of equality).
    """

    segment_id: str
    covariate_names: tuple
    observations: tuple
    week_order: tuple
    windows: tuple
    outcome_column: str = "speed"
    hour_start: int = 6
    hour_end: int = 21
    dropped: int = field(default=0, compare=False)

    def __post_init__(self):
        n = len(self.covariate_names)
        n_treated = 0
        for i, obs in enumerate(self.observations):
            if len(obs.covariates) != n:
                raise ValueError(f"observation {i} has {len(obs.covariates)} covariates, expected {n}")
            if not self.hour_start <= obs.hour <= self.hour_end:
                raise ValueError(f"observation {i} hour {obs.hour} outside {self.hour_start}-{self.hour_end}")
            n_treated += obs.treated
        if n_treated == 0 or n_treated == len(self.observations):
            raise EmptyGroupError(
                f"segment {self.segment_id}: {n_treated} treated and "
                f"{len(self.observations) - n_treated} control observations"
            )
        if any(o.treated for o in self.observations[n_treated:]):
            raise ValueError("observations must list the treated block before the control block")

    @property
    def n_treated(self) -> int:
        return sum(o.treated for o in self.observations)

    @property
    def n_control(self) -> int:
        return len(self.observations) - self.n_treated

    @property
    def labels(self) -> np.ndarray:
        return np.array([1 if o.treated else 0 for o in self.observations])

    def treated_indices(self) -> np.ndarray:
        return np.flatnonzero(self.labels == 1)

    def control_indices(self) -> np.ndarray:
        return np.flatnonzero(self.labels == 0)

    def outcomes(self) -> np.ndarray:
        return np.array([np.nan if o.outcome is None else o.outcome for o in self.observations])

    def to_config(self) -> StudyConfig:
        return StudyConfig(
            segment_id=self.segment_id,
            covariate_names=self.covariate_names,
            windows=self.windows,
            week_order=self.week_order,
            outcome_column=self.outcome_column,
            hour_start=self.hour_start,
            hour_end=self.hour_end,
            window_days=None,
        )


def _parse_float(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(row, column, text) from None
    if not math.isfinite(value):
        raise ParseError(row, column, text)
    return value


def load_study(csv_path, config: StudyConfig) -> StudyTable:
    """Load one segment from a CSV file.

    Rows are assigned to the window whose dates contain them; rows outside
    every window or outside the hour range are dropped and counted. Row
    numbers in errors count data rows from 1.
    """
    path = Path(csv_path)
    windows = config.windows
    treated, control = [], []
    dropped = 0
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (config.date_column, config.hour_column, *config.covariate_names, config.outcome_column):
            if col not in header:
                raise SchemaError(col, path)
        for row_no, row in enumerate(reader, start=1):
            try:
                day = dt.date.fromisoformat(row[config.date_column].strip())
            except (ValueError, AttributeError):
                raise ParseError(row_no, config.date_column, row[config.date_column]) from None
            hour_text = row[config.hour_column].strip()
            if not hour_text.lstrip("-").isdigit():
                raise ParseError(row_no, config.hour_column, hour_text)
            hour = int(hour_text)
            window = next((w for w in windows if w.contains(day)), None)
            if window is None or not config.hour_start <= hour <= config.hour_end:
                dropped += 1
                continue
            covs = []
            for name in config.covariate_names:
                v = _parse_float(row[name], row_no, name)
                if v < 0:
                    raise ParseError(row_no, name, row[name])
                covs.append(v)
            speed_text = (row[config.outcome_column] or "").strip()
            outcome = _parse_float(speed_text, row_no, config.outcome_column) if speed_text else None
            is_treated = window.role is WindowRole.TREATMENT
            obs = Observation(
                week_id=window.label,
                date=day,
                hour=hour,
                covariates=tuple(covs),
                outcome=outcome,
                group=Group.TREATED if is_treated else Group.CONTROL,
            )
            (treated if is_treated else control).append(obs)
    return StudyTable(
        segment_id=config.segment_id,
        covariate_names=config.covariate_names,
        observations=tuple(treated + control),
        week_order=config.week_order,
        windows=windows,
        outcome_column=config.outcome_column,
        hour_start=config.hour_start,
        hour_end=config.hour_end,
        dropped=dropped,
    )


def write_study_csv(table: StudyTable, path) -> None:
    """Write observations as ``date,hour,<covariates>,<outcome>`` rows.

    Floats are written with ``repr`` so a reload reproduces them exactly.
    """
    cols = ["date", "hour", *table.covariate_names, table.outcome_column]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for obs in table.observations:
            writer.writerow(
                [obs.date.isoformat(), obs.hour, *map(repr, obs.covariates),
                 "" if obs.outcome is None else repr(obs.outcome)]
            )


def control_subset(table: StudyTable, m: int) -> StudyTable:
    """Keep treated rows and the controls from the first ``m`` pool windows."""
    if not 1 <= m <= len(table.week_order):
        raise IndexError(f"m={m} outside 1..{len(table.week_order)}")
    keep = set(table.week_order[:m])
    obs = tuple(o for o in table.observations if o.treated or o.week_id in keep)
    windows = tuple(w for w in table.windows if w.role is WindowRole.TREATMENT or w.label in keep)
    return replace(table, observations=obs, week_order=table.week_order[:m], windows=windows, dropped=0)


def covariate_matrix(table: Union[StudyTable, Iterable[Observation]]) -> tuple[np.ndarray, np.ndarray]:
    """(n x N matrix, 0/1 treatment labels) in observation order.

    Also accepts a bare sequence of observations, which need not contain
    both groups.
    """
    obs = table.observations if isinstance(table, StudyTable) else tuple(table)
    if not obs:
        raise ValueError("no observations")
    X = np.array([o.covariates for o in obs], dtype=float)
    return X, np.array([1 if o.treated else 0 for o in obs])
