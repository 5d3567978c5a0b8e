"""Forward simulation of tumor cell count under fractionated treatment.

Logistic growth with discrete multiplicative treatment events: each treated
day, the cell count is multiplied by a linear-quadratic surviving fraction
(times a chemotherapy factor) at the first grid point of that day, before
that day's growth. Between events the logistic ODE is advanced with its
exact per-step flow, so trajectories are step-size consistent: refining dt
changes values only at rounding level.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

N_TREATMENT_WEEKS = 6
FIRST_WEEK_DOSE_GY = 2.0
MAX_DAILY_DOSE_GY = 10.0


@dataclass(frozen=True)
class PatientParameters:
    """Uncertain per-patient state of the growth model.

    rho: net proliferation rate, 1/day
    K: tissue carrying capacity, cells
    N_initial: tumor burden at day 0, cells
    alpha_RT: linear radiosensitivity, 1/Gy
    """

    rho: float
    K: float
    N_initial: float
    alpha_RT: float

    def __post_init__(self) -> None:
        for name in ("rho", "K", "N_initial", "alpha_RT"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if self.K <= 0 or self.N_initial <= 0:
            raise ValueError("K and N_initial must be strictly positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.rho, self.K, self.N_initial, self.alpha_RT], dtype=float)

    def to_dict(self) -> dict:
        return {"rho": self.rho, "K": self.K, "N_initial": self.N_initial, "alpha_RT": self.alpha_RT}

    @classmethod
    def from_dict(cls, d: dict) -> "PatientParameters":
        return cls(rho=d["rho"], K=d["K"], N_initial=d["N_initial"], alpha_RT=d["alpha_RT"])


PARAMETER_NAMES = ("rho", "K", "N_initial", "alpha_RT")


@dataclass(frozen=True)
class FixedParameters:
    """Treatment-response constants shared across patients.

    beta_RT is always derived as alpha_RT / alpha_beta_ratio.
    """

    chemo_surviving_fraction: float = 0.82
    alpha_beta_ratio: float = 10.0

    def __post_init__(self) -> None:
        if not 0.0 < self.chemo_surviving_fraction <= 1.0:
            raise ValueError("chemo_surviving_fraction must be in (0, 1]")
        if self.alpha_beta_ratio <= 0:
            raise ValueError("alpha_beta_ratio must be positive")

    def to_dict(self) -> dict:
        return {
            "chemo_surviving_fraction": self.chemo_surviving_fraction,
            "alpha_beta_ratio": self.alpha_beta_ratio,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FixedParameters":
        return cls(**d)


@dataclass(frozen=True)
class TreatmentRegimen:
    """Six weekly dose levels, delivered on consecutive treatment days.

    Week k applies weekly_doses[k-1] Gy on each of the first
    treatment_days_per_week days of that week. The first week is pinned to
    the standard-of-care 2 Gy/day; the remaining weeks may each be set
    anywhere in [0, 10] Gy/day. Chemotherapy accompanies every treatment
    day of all six weeks, including zero-dose days.
    """

    weekly_doses: tuple[float, ...]
    treatment_start_day: int = 20
    treatment_days_per_week: int = 5

    def __post_init__(self) -> None:
        doses = tuple(float(u) for u in self.weekly_doses)
        object.__setattr__(self, "weekly_doses", doses)
        if len(doses) != N_TREATMENT_WEEKS:
            raise ValueError(f"expected {N_TREATMENT_WEEKS} weekly doses, got {len(doses)}")
        if doses[0] != FIRST_WEEK_DOSE_GY:
            raise ValueError(f"first-week dose is fixed at {FIRST_WEEK_DOSE_GY} Gy/day, got {doses[0]}")
        for u in doses[1:]:
            if not 0.0 <= u <= MAX_DAILY_DOSE_GY:
                raise ValueError(f"weekly dose {u} outside [0, {MAX_DAILY_DOSE_GY}] Gy/day")
        if self.treatment_start_day < 0:
            raise ValueError("treatment_start_day must be nonnegative")
        if not 1 <= self.treatment_days_per_week <= 7:
            raise ValueError("treatment_days_per_week must be in 1..7")

    def total_dose(self) -> float:
        """Total delivered dose in Gy (days/week times the weekly levels)."""
        return self.treatment_days_per_week * float(sum(self.weekly_doses))

    @property
    def end_day(self) -> int:
        return self.treatment_start_day + 7 * N_TREATMENT_WEEKS

    def to_dict(self) -> dict:
        return {
            "weekly_doses": list(self.weekly_doses),
            "treatment_start_day": self.treatment_start_day,
            "treatment_days_per_week": self.treatment_days_per_week,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreatmentRegimen":
        return cls(
            weekly_doses=tuple(d["weekly_doses"]),
            treatment_start_day=d.get("treatment_start_day", 20),
            treatment_days_per_week=d.get("treatment_days_per_week", 5),
        )


def standard_of_care(treatment_start_day: int = 20) -> TreatmentRegimen:
    """The 30 x 2 Gy reference regimen (60 Gy total over six weeks)."""
    return TreatmentRegimen(
        weekly_doses=(2.0,) * N_TREATMENT_WEEKS,
        treatment_start_day=treatment_start_day,
    )


@dataclass(frozen=True)
class SimulationGrid:
    """Uniform time grid; dt must divide one day so day boundaries are grid points."""

    dt: float = 0.2
    t_end: float = 152.0

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        spd = round(1.0 / self.dt)
        if spd < 1 or abs(spd * self.dt - 1.0) > 1e-9:
            raise ValueError(f"dt={self.dt} does not evenly divide one day")
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")
        if abs(self.t_end - round(self.t_end)) > 1e-9:
            raise ValueError("t_end must be a whole number of days")

    @property
    def steps_per_day(self) -> int:
        return round(1.0 / self.dt)

    @property
    def n_steps(self) -> int:
        return round(self.t_end) * self.steps_per_day

    @property
    def n_days(self) -> int:
        return round(self.t_end)

    def times(self) -> np.ndarray:
        # i / steps_per_day keeps day boundaries exactly integral
        return np.arange(self.n_steps + 1, dtype=float) / self.steps_per_day

    def day_index(self, day: int) -> int:
        return day * self.steps_per_day

    def to_dict(self) -> dict:
        return {"dt": self.dt, "t_end": self.t_end}

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationGrid":
        return cls(**d)


@dataclass(frozen=True)
class TreatmentEvent:
    day: int
    dose: float
    chemo: bool


@dataclass(frozen=True)
class Trajectory:
    """Cell counts on the simulation grid; day-boundary values are post-event."""

    times: np.ndarray
    values: np.ndarray

    def at_day(self, day: int) -> float:
        spd = round(1.0 / (self.times[1] - self.times[0]))
        return float(self.values[day * spd])

    def day_boundaries(self) -> tuple[np.ndarray, np.ndarray]:
        spd = round(1.0 / (self.times[1] - self.times[0]))
        idx = np.arange(0, len(self.times), spd)
        return self.times[idx], self.values[idx]

    def write_csv(self, path: Path | str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t_days", "N_cells"])
            for t, n in zip(self.times, self.values):
                writer.writerow([repr(float(t)), repr(float(n))])


def surviving_fraction(
    dose,
    alpha_RT,
    fixed: FixedParameters,
    chemo_active: bool,
):
    """Fraction of cells surviving one treatment event.

    Linear-quadratic radiation response exp(-alpha*u - beta*u^2) with
    beta = alpha / alpha_beta_ratio, multiplied by the chemotherapy factor
    when chemo is active. Zero dose with chemo returns the chemo factor.
    """
    dose = np.asarray(dose, dtype=float)
    if np.any(dose < 0):
        raise ValueError("dose must be nonnegative")
    alpha = np.asarray(alpha_RT, dtype=float)
    beta = alpha / fixed.alpha_beta_ratio
    s = np.exp(-alpha * dose - beta * dose * dose)
    if chemo_active:
        s = s * fixed.chemo_surviving_fraction
    return s if s.ndim else float(s)


def event_schedule(
    regimen: TreatmentRegimen,
    grid: SimulationGrid | None = None,
) -> list[TreatmentEvent]:
    """Expand a regimen into its per-day treatment calendar.

    Each week contributes treatment_days_per_week consecutive events at that
    week's dose; chemo accompanies every event, including zero-dose days.
    """
    events = []
    for week, dose in enumerate(regimen.weekly_doses):
        week_start = regimen.treatment_start_day + 7 * week
        for offset in range(regimen.treatment_days_per_week):
            events.append(TreatmentEvent(day=week_start + offset, dose=dose, chemo=True))
    return events


def _validate_theta(theta: PatientParameters, allow_boundary: bool) -> None:
    if allow_boundary:
        return
    if theta.rho <= 0 or theta.alpha_RT <= 0:
        raise ValueError(
            "rho and alpha_RT must be strictly positive outside test mode "
            "(pass allow_boundary=True for boundary values)"
        )


def _event_arrays(
    regimen: TreatmentRegimen | None,
    alpha_RT: np.ndarray,
    fixed: FixedParameters,
    grid: SimulationGrid,
) -> dict[int, np.ndarray]:
    """Map grid step index -> surviving-fraction multiplier array."""
    if regimen is None:
        return {}
    multipliers: dict[int, np.ndarray] = {}
    for ev in event_schedule(regimen, grid):
        if ev.day > grid.n_days:
            continue
        s = surviving_fraction(ev.dose, alpha_RT, fixed, chemo_active=ev.chemo)
        multipliers[grid.day_index(ev.day)] = np.asarray(s, dtype=float)
    return multipliers


def _logistic_flow(values: np.ndarray, K: np.ndarray, decay: np.ndarray) -> np.ndarray:
    # exact one-step solution of dN/dt = rho*N*(1 - N/K); decay = exp(-rho*dt)
    return K * values / (values + (K - values) * decay)


def simulate(
    theta: PatientParameters,
    fixed: FixedParameters,
    regimen: TreatmentRegimen | None,
    grid: SimulationGrid,
    allow_boundary: bool = False,
) -> Trajectory:
    """Integrate the growth model over [0, t_end] under a treatment regimen.

    Treatment events fire at the first grid point of each treated day: the
    cell count is multiplied by the surviving fraction before that day's
    growth, so day-boundary trajectory values are post-treatment. Pass
    regimen=None for untreated growth. allow_boundary admits rho=0 or
    alpha_RT=0 for analytic checks; production callers leave it off.
    """
    _validate_theta(theta, allow_boundary)
    values = _simulate_batch(
        rho=np.array([theta.rho]),
        K=np.array([theta.K]),
        N_initial=np.array([theta.N_initial]),
        alpha_RT=np.array([theta.alpha_RT]),
        fixed=fixed,
        regimen=regimen,
        grid=grid,
    )
    return Trajectory(times=grid.times(), values=values[:, 0])


def _simulate_batch(
    rho: np.ndarray,
    K: np.ndarray,
    N_initial: np.ndarray,
    alpha_RT: np.ndarray,
    fixed: FixedParameters,
    regimen: TreatmentRegimen | None,
    grid: SimulationGrid,
) -> np.ndarray:
    """Full-grid trajectories for a batch of parameter vectors, shape (n_times, n)."""
    n = len(rho)
    events = _event_arrays(regimen, alpha_RT, fixed, grid)
    decay = np.exp(-rho * grid.dt)
    out = np.empty((grid.n_steps + 1, n), dtype=float)
    values = N_initial.astype(float).copy()
    for i in range(grid.n_steps + 1):
        mult = events.get(i)
        if mult is not None:
            values = values * mult
        out[i] = values
        if i < grid.n_steps:
            values = _logistic_flow(values, K, decay)
    return out


def observed_days_values(
    theta: PatientParameters,
    fixed: FixedParameters,
    regimen: TreatmentRegimen | None,
    days: Sequence[int],
    grid: SimulationGrid,
    allow_boundary: bool = False,
) -> np.ndarray:
    """Model cell counts at imaging days.

    A scan on the treatment start day (or earlier) reads the count before
    any fraction has been delivered; later scans read the post-treatment
    count of that day.
    """
    _validate_theta(theta, allow_boundary)
    vals = observed_days_values_batch(
        rho=np.array([theta.rho]),
        K=np.array([theta.K]),
        N_initial=np.array([theta.N_initial]),
        alpha_RT=np.array([theta.alpha_RT]),
        fixed=fixed,
        regimen=regimen,
        days=days,
        grid=grid,
    )
    return vals[:, 0]


def observed_days_values_batch(
    rho: np.ndarray,
    K: np.ndarray,
    N_initial: np.ndarray,
    alpha_RT: np.ndarray,
    fixed: FixedParameters,
    regimen: TreatmentRegimen | None,
    days: Sequence[int],
    grid: SimulationGrid,
) -> np.ndarray:
    """Batch of model counts at imaging days, shape (len(days), n).

    Integrates only as far as the last requested day.
    """
    days = list(days)
    if any(d < 0 or d > grid.n_days for d in days):
        raise ValueError(f"observation days {days} outside the grid horizon {grid.n_days}")
    if any(b <= a for a, b in zip(days, days[1:])):
        raise ValueError("observation days must be strictly increasing")
    start = regimen.treatment_start_day if regimen is not None else None
    events = _event_arrays(regimen, np.asarray(alpha_RT, dtype=float), fixed, grid)
    decay = np.exp(-np.asarray(rho, dtype=float) * grid.dt)
    K = np.asarray(K, dtype=float)
    values = np.asarray(N_initial, dtype=float).copy()
    out = np.empty((len(days), len(values)), dtype=float)
    spd = grid.steps_per_day
    last_step = days[-1] * spd if days else 0
    day_to_slot = {d: j for j, d in enumerate(days)}
    for i in range(last_step + 1):
        day, rem = divmod(i, spd)
        at_boundary = rem == 0
        slot = day_to_slot.get(day) if at_boundary else None
        pre_event = slot is not None and (start is None or day <= start)
        if pre_event:
            out[slot] = values
        mult = events.get(i) if at_boundary else None
        if mult is not None:
            values = values * mult
        if slot is not None and not pre_event:
            out[slot] = values
        if i <= last_step - 1:
            values = _logistic_flow(values, K, decay)
    return out


def closed_form_untreated(theta: PatientParameters, t) -> np.ndarray:
    """Analytic logistic solution for untreated growth (rho may be zero)."""
    t = np.asarray(t, dtype=float)
    if theta.rho == 0:
        return np.full_like(t, theta.N_initial)
    ratio = theta.K / theta.N_initial - 1.0
    return theta.K / (1.0 + ratio * np.exp(-theta.rho * t))
