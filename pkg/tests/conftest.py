import datetime as dt
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from trafficpsm.dataset import StudyConfig, load_study_configs  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture
def table1_config() -> StudyConfig:
    (cfg,) = load_study_configs(ROOT / "configs" / "table1_study.json")
    return cfg


def write_hourly_csv(path, config: StudyConfig, labels, covariates=None, seed=0, extra_rows=()):
    """Write 7 days x 16 hours of rows for each window label."""
    rng = np.random.default_rng(seed)
    n_cov = len(config.covariate_names)
    lines = ["date,hour," + ",".join(config.covariate_names) + ",speed"]
    for label in labels:
        w = config.window(label)
        for d in range(w.days):
            day = w.start_date + dt.timedelta(days=d)
            for hour in range(config.hour_start, config.hour_end + 1):
                covs = covariates(label, day, hour) if covariates else rng.integers(300, 900, n_cov)
                speed = round(float(rng.normal(38, 2)), 3)
                lines.append(f"{day.isoformat()},{hour}," + ",".join(str(c) for c in covs) + f",{speed}")
    lines.extend(extra_rows)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return len(lines) - 1


def make_table(x_treated, x_control, y_treated=None, y_control=None, control_weeks=None, names=None):
    """StudyTable from covariate arrays; one treated week, controls in week C1 unless labelled."""
    from trafficpsm.dataset import Group, Observation, StudyTable, WeekWindow, WindowRole

    xt = np.atleast_2d(np.asarray(x_treated, dtype=float))
    xc = np.atleast_2d(np.asarray(x_control, dtype=float))
    if xt.shape[0] == 1 and xt.shape[1] != xc.shape[1]:
        xt, xc = xt.T, xc.T
    yt = [40.0] * len(xt) if y_treated is None else list(y_treated)
    yc = [40.0] * len(xc) if y_control is None else list(y_control)
    weeks = ["C1"] * len(xc) if control_weeks is None else list(control_weeks)
    order = list(dict.fromkeys(weeks))
    start = dt.date(2020, 1, 6)
    windows = [WeekWindow(lbl, start + dt.timedelta(7 * k), start + dt.timedelta(7 * k + 6),
                          WindowRole.INITIAL_CONTROL if k == 0 else WindowRole.ADDITIONAL_CONTROL)
               for k, lbl in enumerate(order)]
    t_start = start + dt.timedelta(7 * len(order))
    windows.append(WeekWindow("T1", t_start, t_start + dt.timedelta(6), WindowRole.TREATMENT))
    by_label = {w.label: w for w in windows}

    def obs(i, row, y, label, group):
        w = by_label[label]
        return Observation(label, w.start_date + dt.timedelta(i // 16 % 7), 6 + i % 16, tuple(row), y, group)

    observations = [obs(i, r, y, "T1", Group.TREATED) for i, (r, y) in enumerate(zip(xt, yt))]
    observations += [obs(i, r, y, lbl, Group.CONTROL) for i, (r, y, lbl) in enumerate(zip(xc, yc, weeks))]
    names = tuple(names or (f"X{k + 1}" for k in range(xt.shape[1])))
    return StudyTable("TEST", names, tuple(observations), tuple(order), tuple(windows))
