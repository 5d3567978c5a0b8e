"""Request/response models of the twin HTTP API."""

from __future__ import annotations

from pydantic import BaseModel, Field, field_validator

from gliotwin.growth import FIRST_WEEK_DOSE_GY, MAX_DAILY_DOSE_GY

MAX_EVALUATE_N_MC = 20_000


class PatientSummary(BaseModel):
    id: str
    observation_days: list[int]
    has_posterior: bool
    has_pareto: bool
    converged: bool | None = None


class MarginalHistogram(BaseModel):
    parameter: str
    bin_edges: list[float]
    counts: list[int]
    mean: float
    std: float


class DiagnosticsModel(BaseModel):
    r_hat: dict[str, float]
    ess: dict[str, float]
    acceptance: list[float]
    converged: bool


class PosteriorSummary(BaseModel):
    patient_id: str
    n_samples: int
    marginals: list[MarginalHistogram]
    diagnostics: DiagnosticsModel


class RegimenModel(BaseModel):
    weekly_doses: list[float]
    treatment_start_day: int
    treatment_days_per_week: int


class ParetoPointModel(BaseModel):
    d_max: float
    regimen: RegimenModel
    total_dose: float
    objective: float
    ttp_superquantile: float
    ttp_quantile: float
    alpha: float
    report_seed: int
    report_n_mc: int


class ParetoFrontModel(BaseModel):
    patient_id: str
    points: list[ParetoPointModel]
    soc_reference: ParetoPointModel


class EvaluateRequest(BaseModel):
    """What-if evaluation of the five free weekly doses (week 1 is pinned)."""

    u: list[float] = Field(description="Weekly doses u2..u6 in Gy/day")
    alpha: float = Field(default=0.95, gt=0.0, lt=1.0)
    n_mc: int = Field(default=2000, ge=100, le=MAX_EVALUATE_N_MC)
    seed: int = Field(default=0, ge=0)

    @field_validator("u")
    @classmethod
    def _check_doses(cls, u: list[float]) -> list[float]:
        if len(u) != 5:
            raise ValueError("u must have exactly 5 entries (weeks 2..6)")
        for value in u:
            if not 0.0 <= value <= MAX_DAILY_DOSE_GY:
                raise ValueError(f"dose {value} outside [0, {MAX_DAILY_DOSE_GY}] Gy/day")
        return u

    def full_doses(self) -> tuple[float, ...]:
        return (FIRST_WEEK_DOSE_GY, *self.u)


class TTPHistogram(BaseModel):
    """1-day bins over [0, 132) plus a terminal bin for censored maxima."""

    bin_start_days: list[int]
    counts: list[int]
    end_of_simulation_count: int


class EvaluateResponse(BaseModel):
    patient_id: str
    ttp_samples_histogram: TTPHistogram
    ttp_superquantile: float
    ttp_quantile: float
    total_dose: float
    alpha: float
    n_mc: int
    seed: int


class OptimizeRequest(BaseModel):
    d_max: float = Field(ge=10.0)
    alpha: float = Field(default=0.95, gt=0.0, lt=1.0)
    restarts: int | None = Field(default=None, ge=1, le=50, description="Override the configured restart count")


class JobHandle(BaseModel):
    job_id: str
    status: str


class JobStatus(BaseModel):
    job_id: str
    status: str
    result: ParetoPointModel | None = None
    error: str | None = None


class ErrorBody(BaseModel):
    error: str
    detail: str
