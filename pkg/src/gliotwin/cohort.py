"""Virtual patient generation: population priors, noisy observations, grouping.

Ground-truth parameters are drawn from independent truncated-normal
population priors and then hidden behind an oracle accessor: calibration
and optimization must only ever see the noisy observations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from gliotwin.growth import (
    FixedParameters,
    PatientParameters,
    SimulationGrid,
    TreatmentRegimen,
    observed_days_values,
)
from gliotwin.truncated import TruncatedNormal

# Population-level priors for (rho, K, N_initial, alpha_RT): truncated
# normals with (mean, std, lower, upper) taken from published clinical
# estimates of high-grade glioma growth and radiation response.
DEFAULT_PRIOR_TABLE = {
    "rho": (0.09, 0.15, 0.007, 0.25),
    "K": (1e11, 2e10, 9e10, 1.8e11),
    "N_initial": (1.9e10, 1.2e10, 4.7e9, 4.7e10),
    "alpha_RT": (0.05, 0.025, 0.001, 0.1),
}


@dataclass(frozen=True)
class PriorSpec:
    """Independent truncated-normal priors on the four model parameters."""

    rho: TruncatedNormal
    K: TruncatedNormal
    N_initial: TruncatedNormal
    alpha_RT: TruncatedNormal

    @classmethod
    def default(cls) -> "PriorSpec":
        return cls(**{k: TruncatedNormal(*v) for k, v in DEFAULT_PRIOR_TABLE.items()})

    def marginals(self) -> tuple[TruncatedNormal, TruncatedNormal, TruncatedNormal, TruncatedNormal]:
        return (self.rho, self.K, self.N_initial, self.alpha_RT)

    def contains(self, theta: PatientParameters) -> bool:
        return all(m.contains(v) for m, v in zip(self.marginals(), theta.as_array()))

    def to_dict(self) -> dict:
        return {
            "rho": self.rho.to_dict(),
            "K": self.K.to_dict(),
            "N_initial": self.N_initial.to_dict(),
            "alpha_RT": self.alpha_RT.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PriorSpec":
        return cls(**{k: TruncatedNormal.from_dict(d[k]) for k in DEFAULT_PRIOR_TABLE})


@dataclass(frozen=True)
class ObservationModel:
    """Additive truncated-normal measurement noise at scheduled imaging days.

    sigma defaults to 10% of the population-mean initial burden. The noise
    at time t is truncated below at -N(t) so observations stay nonnegative.
    """

    sigma: float = 2e9
    schedule: tuple[int, ...] = (0, 20, 27)

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if any(b <= a for a, b in zip(self.schedule, self.schedule[1:])):
            raise ValueError("observation schedule must be strictly increasing")

    def to_dict(self) -> dict:
        return {"sigma": self.sigma, "schedule": list(self.schedule)}

    @classmethod
    def from_dict(cls, d: dict) -> "ObservationModel":
        return cls(sigma=d["sigma"], schedule=tuple(d["schedule"]))


@dataclass(frozen=True)
class ObservationSet:
    """Timestamped noisy tumor-burden measurements, (day, cells) pairs."""

    entries: tuple[tuple[int, float], ...]

    def __post_init__(self) -> None:
        days = [t for t, _ in self.entries]
        if any(b <= a for a, b in zip(days, days[1:])):
            raise ValueError("observation times must be strictly increasing")
        if any(o < 0 for _, o in self.entries):
            raise ValueError("observations must be nonnegative")

    def days(self) -> list[int]:
        return [t for t, _ in self.entries]

    def value_at(self, day: int) -> float:
        for t, o in self.entries:
            if t == day:
                return o
        raise KeyError(f"no observation at day {day}")

    def subset(self, days: Sequence[int]) -> "ObservationSet":
        return ObservationSet(tuple((t, o) for t, o in self.entries if t in set(days)))

    def to_list(self) -> list[dict]:
        return [{"t": t, "o": o} for t, o in self.entries]

    @classmethod
    def from_list(cls, rows: list[dict]) -> "ObservationSet":
        return cls(tuple((int(r["t"]), float(r["o"])) for r in rows))


class VirtualPatient:
    """A simulated patient: hidden true parameters plus their noisy scans.

    The true parameters exist only to score the pipeline afterwards. They
    are reachable solely through oracle_theta_true(); calibration and
    optimization code must never call it (enforced by a source-level guard
    in the test suite).
    """

    def __init__(self, patient_id: str, theta_true: PatientParameters, observations: ObservationSet):
        self.id = patient_id
        self._theta_true = theta_true
        self.observations = observations

    def oracle_theta_true(self) -> PatientParameters:
        """Ground truth for oracle scoring only; never feed this to the twin."""
        return self._theta_true

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "oracle": {"theta_true": self._theta_true.to_dict()},
            "observations": self.observations.to_list(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VirtualPatient":
        return cls(
            patient_id=d["id"],
            theta_true=PatientParameters.from_dict(d["oracle"]["theta_true"]),
            observations=ObservationSet.from_list(d["observations"]),
        )


def patient_seed_streams(master_seed: int, n_patients: int) -> list[np.random.SeedSequence]:
    """Per-patient child streams split from one master seed.

    Splitting uses numpy's SeedSequence.spawn, so patient i gets the same
    stream regardless of generation order or thread count.
    """
    return np.random.SeedSequence(master_seed).spawn(n_patients)


def sample_cohort(prior: PriorSpec, n_patients: int, seed: int) -> list[PatientParameters]:
    """Independent ground-truth parameter draws from the population priors."""
    if n_patients < 1:
        raise ValueError("n_patients must be >= 1")
    out = []
    for stream in patient_seed_streams(seed, n_patients):
        gen = np.random.Generator(np.random.PCG64(stream))
        draws = [m.sample(gen) for m in prior.marginals()]
        out.append(PatientParameters(*draws))
    return out


def observe(
    theta_true: PatientParameters,
    fixed: FixedParameters,
    regimen: TreatmentRegimen,
    model: ObservationModel,
    seed: int | np.random.SeedSequence,
    grid: SimulationGrid | None = None,
) -> ObservationSet:
    """Generate noisy scans of a ground-truth trajectory.

    The scan on the treatment start day is taken before that day's fraction;
    later scans are post-treatment. Noise is truncated below at -N(t), so
    no scan is negative.
    """
    grid = grid or SimulationGrid()
    days = list(model.schedule)
    clean = observed_days_values(theta_true, fixed, regimen, days, grid)
    gen = np.random.Generator(np.random.PCG64(seed))
    entries = []
    for day, n_model in zip(days, clean):
        noise = TruncatedNormal(0.0, model.sigma, -float(n_model), np.inf).sample(gen)
        entries.append((day, float(n_model + noise)))
    return ObservationSet(tuple(entries))


def make_virtual_patient(
    patient_id: str,
    theta_true: PatientParameters,
    fixed: FixedParameters,
    regimen: TreatmentRegimen,
    model: ObservationModel,
    seed: int | np.random.SeedSequence,
    grid: SimulationGrid | None = None,
) -> VirtualPatient:
    obs = observe(theta_true, fixed, regimen, model, seed, grid)
    return VirtualPatient(patient_id, theta_true, obs)


PROGRESSOR_GROUPS = ("early", "intermediate", "late")

# Grouping thresholds in days past the end of radiotherapy; one month is
# taken as 30 days.
EARLY_MAX_DAYS_PAST_RT = 30.0
LATE_MIN_DAYS_PAST_RT = 90.0


def classify_progressor(days_past_rt: float) -> str:
    """Group a patient by how long past the end of RT progression is expected.

    The input is the tail-risk time-to-progression expressed in days after
    the end of the six-week course: at or below one month is "early", at or
    beyond three months is "late", otherwise "intermediate".
    """
    if not 0.0 <= days_past_rt <= 132.0:
        raise ValueError(f"days_past_rt {days_past_rt} outside [0, 132]")
    if days_past_rt <= EARLY_MAX_DAYS_PAST_RT:
        return "early"
    if days_past_rt >= LATE_MIN_DAYS_PAST_RT:
        return "late"
    return "intermediate"


def write_cohort(
    path: Path | str,
    patients: list[VirtualPatient],
    prior: PriorSpec,
    model: ObservationModel,
    seed: int,
    config_hash: str = "",
) -> None:
    payload = {
        "config_hash": config_hash,
        "seed": seed,
        "prior": prior.to_dict(),
        "observation_model": model.to_dict(),
        "patients": [p.to_dict() for p in patients],
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))


def read_cohort(path: Path | str) -> tuple[list[VirtualPatient], PriorSpec, ObservationModel, int, str]:
    payload = json.loads(Path(path).read_text())
    patients = [VirtualPatient.from_dict(d) for d in payload["patients"]]
    prior = PriorSpec.from_dict(payload["prior"])
    model = ObservationModel.from_dict(payload["observation_model"])
    return patients, prior, model, payload["seed"], payload.get("config_hash", "")
