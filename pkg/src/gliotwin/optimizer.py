"""Risk-aware weekly dose optimization and the dose/risk Pareto front.

For each total-dose cap the optimizer minimizes the tail risk of early
progression plus a small dose penalty, subject to the cap, the fixed first
week, and per-week box bounds. The risk term is evaluated on a parameter
sample set frozen once per run (common random numbers), which makes the
objective deterministic inside a run; reported tail-TTP values are then
re-evaluated on an independent fresh sample set.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from gliotwin.calibration import PosteriorEnsemble
from gliotwin.growth import (
    FIRST_WEEK_DOSE_GY,
    MAX_DAILY_DOSE_GY,
    N_TREATMENT_WEEKS,
    FixedParameters,
    SimulationGrid,
    TreatmentRegimen,
    standard_of_care,
)
from gliotwin.risk import (
    RiskConfig,
    TTPConfig,
    draw_theta_matrix,
    pretreatment_threshold_batch,
    propagate,
    quantile,
    superquantile,
    ttp_batch,
)

DOSE_TOLERANCE_GY = 1e-9
SOC_TOTAL_DOSE_GY = 60.0


@dataclass(frozen=True)
class OptimizationConfig:
    d_max_grid: tuple[float, ...] = (40.0, 50.0, 60.0, 70.0, 80.0, 100.0)
    lam: float = 0.001
    restarts: int = 20
    max_evals_per_restart: int = 200
    n_mc: int = 5000
    n_mc_report: int = 10_000
    alpha: float = 0.95
    seed: int = 0

    def __post_init__(self) -> None:
        if any(d < 10.0 for d in self.d_max_grid):
            raise ValueError("dose caps below 10 Gy are infeasible: the fixed first week delivers 10 Gy")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.restarts < 1 or self.max_evals_per_restart < 1:
            raise ValueError("restarts and max_evals_per_restart must be positive")

    def to_dict(self) -> dict:
        return {
            "d_max_grid": list(self.d_max_grid),
            "lam": self.lam,
            "restarts": self.restarts,
            "max_evals_per_restart": self.max_evals_per_restart,
            "n_mc": self.n_mc,
            "n_mc_report": self.n_mc_report,
            "alpha": self.alpha,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizationConfig":
        d = dict(d)
        d["d_max_grid"] = tuple(d["d_max_grid"])
        return cls(**d)


@dataclass(frozen=True)
class FrozenThetaSet:
    """A fixed parameter sample with cached pre-treatment thresholds."""

    theta_matrix: np.ndarray  # (n, 4)
    threshold: np.ndarray  # (n,)
    seed: int

    @classmethod
    def draw(
        cls,
        ensemble: PosteriorEnsemble,
        n_mc: int,
        seed: int,
        cfg: TTPConfig,
        grid: SimulationGrid,
    ) -> "FrozenThetaSet":
        matrix = draw_theta_matrix(ensemble, n_mc, seed)
        threshold = pretreatment_threshold_batch(matrix[:, 0], matrix[:, 1], matrix[:, 2], cfg, grid)
        return cls(theta_matrix=matrix, threshold=threshold, seed=seed)


@dataclass(frozen=True)
class ParetoPoint:
    d_max: float
    regimen: TreatmentRegimen
    total_dose: float
    objective: float
    ttp_superquantile: float
    ttp_quantile: float
    alpha: float
    frozen_seed: int
    report_seed: int
    report_n_mc: int
    n_restarts: int
    n_evaluations: int
    soc_objective: float | None = None  # frozen-set objective at SOC, when feasible

    def __post_init__(self) -> None:
        if self.total_dose > self.d_max + DOSE_TOLERANCE_GY:
            raise ValueError(f"total dose {self.total_dose} exceeds cap {self.d_max}")

    def to_dict(self) -> dict:
        return {
            "d_max": self.d_max,
            "regimen": self.regimen.to_dict(),
            "total_dose": self.total_dose,
            "objective": self.objective,
            "ttp_superquantile": self.ttp_superquantile,
            "ttp_quantile": self.ttp_quantile,
            "alpha": self.alpha,
            "frozen_seed": self.frozen_seed,
            "report_seed": self.report_seed,
            "report_n_mc": self.report_n_mc,
            "n_restarts": self.n_restarts,
            "n_evaluations": self.n_evaluations,
            "soc_objective": self.soc_objective,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParetoPoint":
        d = dict(d)
        d["regimen"] = TreatmentRegimen.from_dict(d["regimen"])
        return cls(**d)


@dataclass(frozen=True)
class ParetoFront:
    points: tuple[ParetoPoint, ...]  # ordered by d_max
    soc_reference: ParetoPoint

    def point_at(self, d_max: float) -> ParetoPoint:
        for p in self.points:
            if p.d_max == d_max:
                return p
        raise KeyError(f"no front point at d_max={d_max}")

    def to_dict(self) -> dict:
        return {
            "points": [p.to_dict() for p in self.points],
            "soc_reference": self.soc_reference.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParetoFront":
        return cls(
            points=tuple(ParetoPoint.from_dict(p) for p in d["points"]),
            soc_reference=ParetoPoint.from_dict(d["soc_reference"]),
        )


@dataclass(frozen=True)
class DoseReduction:
    """Dose saved relative to the reference while holding tail TTP."""

    reduction_gy: float
    matched_d_max: float | None
    flagged: bool

    def to_dict(self) -> dict:
        return {
            "reduction_gy": self.reduction_gy,
            "matched_d_max": self.matched_d_max,
            "flagged": self.flagged,
        }


def child_seeds(master: int | np.random.SeedSequence, n: int) -> list[int]:
    """Deterministic plain-int child seeds derived from one master seed."""
    seq = master if isinstance(master, np.random.SeedSequence) else np.random.SeedSequence(master)
    return [int(s) for s in seq.generate_state(n, dtype=np.uint64)]


def _risk_term(
    u: np.ndarray,
    frozen: FrozenThetaSet,
    fixed: FixedParameters,
    ttp_cfg: TTPConfig,
    grid: SimulationGrid,
    alpha: float,
    start_day: int,
) -> float:
    regimen = TreatmentRegimen(weekly_doses=tuple(u), treatment_start_day=start_day)
    ttp = ttp_batch(
        frozen.theta_matrix[:, 0],
        frozen.theta_matrix[:, 1],
        frozen.theta_matrix[:, 2],
        frozen.theta_matrix[:, 3],
        fixed,
        regimen,
        ttp_cfg,
        grid,
        threshold=frozen.threshold,
    )
    return superquantile(-ttp, alpha)


def objective(
    regimen: TreatmentRegimen,
    frozen: FrozenThetaSet,
    cfg: OptimizationConfig,
    fixed: FixedParameters | None = None,
    ttp_cfg: TTPConfig | None = None,
    grid: SimulationGrid | None = None,
) -> float:
    """Penalized tail-risk objective on the frozen sample set.

    Deterministic within a run because the sample set is fixed; the regimen
    type enforces the box bounds and the pinned first week.
    """
    fixed = fixed or FixedParameters()
    ttp_cfg = ttp_cfg or TTPConfig()
    grid = grid or SimulationGrid()
    u = np.asarray(regimen.weekly_doses)
    risk = _risk_term(u, frozen, fixed, ttp_cfg, grid, cfg.alpha, regimen.treatment_start_day)
    return risk + cfg.lam * float(np.abs(u).sum())


def _truncate_soc_to_budget(week_budget: float) -> np.ndarray:
    """SOC later weeks cut from the tail until the weekly-sum budget fits."""
    doses = np.zeros(N_TREATMENT_WEEKS - 1)
    remaining = week_budget
    for i in range(N_TREATMENT_WEEKS - 1):
        doses[i] = min(FIRST_WEEK_DOSE_GY, remaining)
        remaining -= doses[i]
        if remaining <= 0:
            break
    return doses


def optimize_regimen(
    ensemble: PosteriorEnsemble,
    d_max: float,
    cfg: OptimizationConfig,
    fixed: FixedParameters | None = None,
    ttp_cfg: TTPConfig | None = None,
    grid: SimulationGrid | None = None,
    treatment_start_day: int = 20,
    seed_context: int = 0,
) -> ParetoPoint:
    """Multi-start constrained minimization of the penalized tail risk.

    Restart 1 starts from SOC truncated to the budget; the rest start from
    uniform draws projected into the feasible set. Every feasible evaluated
    point is a candidate, so the result can never be worse than the start.
    Ties prefer lower total dose, then the lexicographically earlier vector.
    """
    if d_max < 10.0:
        raise ValueError("d_max below 10 Gy is infeasible with the fixed first week")
    fixed = fixed or FixedParameters()
    ttp_cfg = ttp_cfg or TTPConfig()
    grid = grid or SimulationGrid()

    days_per_week = 5
    week_budget = d_max / days_per_week - FIRST_WEEK_DOSE_GY  # budget for sum(u_2..u_6)
    n_free = N_TREATMENT_WEEKS - 1

    frozen_seed, starts_seed, report_seed = child_seeds(
        np.random.SeedSequence([cfg.seed, seed_context]), 3
    )
    frozen = FrozenThetaSet.draw(ensemble, cfg.n_mc, frozen_seed, ttp_cfg, grid)
    start_gen = np.random.Generator(np.random.PCG64(starts_seed))

    best: tuple[float, float, tuple[float, ...]] | None = None
    n_evals = 0

    def evaluate(x: np.ndarray) -> float:
        nonlocal best, n_evals
        n_evals += 1
        clipped = np.clip(x, 0.0, MAX_DAILY_DOSE_GY)
        u = np.concatenate(([FIRST_WEEK_DOSE_GY], clipped))
        value = _risk_term(u, frozen, fixed, ttp_cfg, grid, cfg.alpha, treatment_start_day)
        value += cfg.lam * float(u.sum())
        # the clipped vector is what was actually simulated, so it is the
        # candidate; it only needs to respect the budget
        if clipped.sum() <= week_budget + DOSE_TOLERANCE_GY:
            key = (value, days_per_week * float(u.sum()), tuple(u))
            if best is None or key < best:
                best = key
        return value

    constraints = [{"type": "ineq", "fun": lambda x: week_budget - np.sum(x)}]
    for j in range(n_free):
        constraints.append({"type": "ineq", "fun": lambda x, j=j: x[j]})
        constraints.append({"type": "ineq", "fun": lambda x, j=j: MAX_DAILY_DOSE_GY - x[j]})

    for restart in range(cfg.restarts):
        if restart == 0:
            x0 = _truncate_soc_to_budget(week_budget)
        else:
            x0 = start_gen.uniform(0.0, MAX_DAILY_DOSE_GY, size=n_free)
            total = x0.sum()
            if total > week_budget:
                x0 *= week_budget / total
        minimize(
            evaluate,
            x0,
            method="COBYLA",
            constraints=constraints,
            options={"maxiter": cfg.max_evals_per_restart, "rhobeg": 1.0},
        )

    assert best is not None  # restart starts are always feasible
    _, total_dose, u_best = best
    regimen = TreatmentRegimen(weekly_doses=u_best, treatment_start_day=treatment_start_day)
    frozen_objective = best[0]

    soc_objective = None
    if d_max >= SOC_TOTAL_DOSE_GY - DOSE_TOLERANCE_GY:
        soc = standard_of_care(treatment_start_day)
        soc_objective = objective(soc, frozen, cfg, fixed, ttp_cfg, grid)

    report = propagate(
        ensemble,
        fixed,
        regimen,
        ttp_cfg,
        RiskConfig(alpha=cfg.alpha, n_mc=cfg.n_mc_report),
        grid,
        seed=report_seed,
    )
    return ParetoPoint(
        d_max=float(d_max),
        regimen=regimen,
        total_dose=total_dose,
        objective=frozen_objective,
        ttp_superquantile=-superquantile(report.values, cfg.alpha),
        ttp_quantile=-quantile(report.values, cfg.alpha),
        alpha=cfg.alpha,
        frozen_seed=frozen_seed,
        report_seed=report_seed,
        report_n_mc=cfg.n_mc_report,
        n_restarts=cfg.restarts,
        n_evaluations=n_evals,
        soc_objective=soc_objective,
    )


def evaluate_soc_reference(
    ensemble: PosteriorEnsemble,
    cfg: OptimizationConfig,
    fixed: FixedParameters | None = None,
    ttp_cfg: TTPConfig | None = None,
    grid: SimulationGrid | None = None,
    treatment_start_day: int = 20,
) -> ParetoPoint:
    """SOC evaluated exactly like an optimized point (fresh frozen set, no solver)."""
    fixed = fixed or FixedParameters()
    ttp_cfg = ttp_cfg or TTPConfig()
    grid = grid or SimulationGrid()
    frozen_seed, report_seed = child_seeds(np.random.SeedSequence([cfg.seed, 987654321]), 2)
    frozen = FrozenThetaSet.draw(ensemble, cfg.n_mc, frozen_seed, ttp_cfg, grid)
    soc = standard_of_care(treatment_start_day)
    obj = objective(soc, frozen, cfg, fixed, ttp_cfg, grid)
    report = propagate(
        ensemble,
        fixed,
        soc,
        ttp_cfg,
        RiskConfig(alpha=cfg.alpha, n_mc=cfg.n_mc_report),
        grid,
        seed=report_seed,
    )
    return ParetoPoint(
        d_max=SOC_TOTAL_DOSE_GY,
        regimen=soc,
        total_dose=soc.total_dose(),
        objective=obj,
        ttp_superquantile=-superquantile(report.values, cfg.alpha),
        ttp_quantile=-quantile(report.values, cfg.alpha),
        alpha=cfg.alpha,
        frozen_seed=frozen_seed,
        report_seed=report_seed,
        report_n_mc=cfg.n_mc_report,
        n_restarts=0,
        n_evaluations=1,
        soc_objective=obj,
    )


def pareto_sweep(
    ensemble: PosteriorEnsemble,
    cfg: OptimizationConfig,
    fixed: FixedParameters | None = None,
    ttp_cfg: TTPConfig | None = None,
    grid: SimulationGrid | None = None,
    treatment_start_day: int = 20,
) -> ParetoFront:
    """Optimal point per dose cap plus the SOC reference evaluation."""
    points = []
    for i, d_max in enumerate(sorted(cfg.d_max_grid)):
        points.append(
            optimize_regimen(
                ensemble,
                d_max,
                cfg,
                fixed,
                ttp_cfg,
                grid,
                treatment_start_day,
                seed_context=i + 1,
            )
        )
    soc_reference = evaluate_soc_reference(ensemble, cfg, fixed, ttp_cfg, grid, treatment_start_day)
    return ParetoFront(points=tuple(points), soc_reference=soc_reference)


def matched_control_dose_reduction(front: ParetoFront, tolerance_days: float = 1.0) -> DoseReduction:
    """Dose saved by the cheapest front point whose tail TTP keeps up with SOC.

    Qualification is one-sided: a point qualifies when its tail TTP is at
    least SOC's minus the tolerance. Returns zero with a flag when nothing
    at or below the reference dose qualifies.
    """
    if not front.points:
        raise ValueError("front has no points")
    ref = front.soc_reference
    candidates = [p for p in front.points if p.ttp_superquantile >= ref.ttp_superquantile - tolerance_days]
    if not candidates:
        return DoseReduction(reduction_gy=0.0, matched_d_max=None, flagged=True)
    best = min(candidates, key=lambda p: (p.total_dose, p.d_max))
    reduction = ref.total_dose - best.total_dose
    if reduction < 0:
        return DoseReduction(reduction_gy=0.0, matched_d_max=best.d_max, flagged=True)
    return DoseReduction(reduction_gy=reduction, matched_d_max=best.d_max, flagged=False)


def write_front_json(path: Path | str, patient_id: str, front: ParetoFront, config_hash: str = "") -> None:
    payload = {"patient_id": patient_id, "config_hash": config_hash, **front.to_dict()}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))


def read_front_json(path: Path | str) -> tuple[str, ParetoFront, str]:
    payload = json.loads(Path(path).read_text())
    return payload["patient_id"], ParetoFront.from_dict(payload), payload.get("config_hash", "")


def write_front_csv(path: Path | str, rows: list[tuple[str, ParetoFront]]) -> None:
    """Flat CSV of front points across patients."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["patient_id", "d_max_gy"]
            + [f"u{i}" for i in range(1, N_TREATMENT_WEEKS + 1)]
            + ["total_dose_gy", "ttp_superquantile_days", "objective"]
        )
        for patient_id, front in rows:
            for p in front.points:
                writer.writerow(
                    [patient_id, p.d_max]
                    + [repr(u) for u in p.regimen.weekly_doses]
                    + [repr(p.total_dose), repr(p.ttp_superquantile), repr(p.objective)]
                )
