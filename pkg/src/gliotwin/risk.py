"""Uncertainty propagation to time-to-progression and tail-risk measures.

Time to progression (TTP) is measured from the pre-treatment reference day:
the first grid time after the end of radiotherapy at which the cell count
strictly exceeds its pre-treatment level, capped at the simulation horizon.
Risk is summarized by the alpha-superquantile (CVaR) of the negated TTP, so
larger risk values mean earlier expected progression in the worst tail.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from gliotwin.calibration import PosteriorEnsemble
from gliotwin.growth import (
    FixedParameters,
    PatientParameters,
    SimulationGrid,
    TreatmentRegimen,
    _event_arrays,
    _logistic_flow,
)


@dataclass(frozen=True)
class TTPConfig:
    """Day conventions for the progression clock.

    threshold_day fixes the reference burden, post_rt_day opens the scan
    window (six weeks after treatment start), horizon_day closes it.
    """

    threshold_day: int = 20
    post_rt_day: int = 62
    horizon_day: int = 152

    def __post_init__(self) -> None:
        if not 0 <= self.threshold_day < self.post_rt_day < self.horizon_day:
            raise ValueError("need threshold_day < post_rt_day < horizon_day")

    @property
    def max_ttp(self) -> float:
        return float(self.horizon_day - self.threshold_day)

    def to_dict(self) -> dict:
        return {
            "threshold_day": self.threshold_day,
            "post_rt_day": self.post_rt_day,
            "horizon_day": self.horizon_day,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TTPConfig":
        return cls(**d)


@dataclass(frozen=True)
class RiskConfig:
    """Risk level and Monte Carlo budget for tail estimation."""

    alpha: float = 0.95
    n_mc: int = 5000

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if self.n_mc * (1.0 - self.alpha) < 20 - 1e-9:
            raise ValueError("tail must contain at least 20 samples; raise n_mc or lower alpha")

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "n_mc": self.n_mc}

    @classmethod
    def from_dict(cls, d: dict) -> "RiskConfig":
        return cls(**d)


@dataclass(frozen=True)
class QoISamples:
    """Monte Carlo samples of the tumor-control quantity (negated TTP, days)."""

    values: np.ndarray
    n_mc: int
    seed: int | None

    def ttp_days(self) -> np.ndarray:
        return -self.values

    def write_csv(self, path: Path | str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample_index", "ttp_days"])
            for i, v in enumerate(self.values):
                writer.writerow([i, repr(float(-v))])


def pretreatment_threshold_batch(
    rho: np.ndarray,
    K: np.ndarray,
    N_initial: np.ndarray,
    cfg: TTPConfig,
    grid: SimulationGrid,
) -> np.ndarray:
    """Cell count at the threshold day before any treatment, per parameter set.

    Regimen-independent because the threshold day precedes treatment; cache
    it per parameter set when sweeping regimens.
    """
    decay = np.exp(-np.asarray(rho, dtype=float) * grid.dt)
    K = np.asarray(K, dtype=float)
    values = np.asarray(N_initial, dtype=float).copy()
    for _ in range(grid.day_index(cfg.threshold_day)):
        values = _logistic_flow(values, K, decay)
    return values


def ttp_batch(
    rho: np.ndarray,
    K: np.ndarray,
    N_initial: np.ndarray,
    alpha_RT: np.ndarray,
    fixed: FixedParameters,
    regimen: TreatmentRegimen | None,
    cfg: TTPConfig,
    grid: SimulationGrid,
    threshold: np.ndarray | None = None,
) -> np.ndarray:
    """Time to progression in days for a batch of parameter vectors.

    Scans grid points strictly after post_rt_day for the first count
    strictly above the pre-treatment threshold; parameter sets that never
    cross are censored at the maximum (horizon - threshold day).
    """
    rho = np.asarray(rho, dtype=float)
    K = np.asarray(K, dtype=float)
    N_initial = np.asarray(N_initial, dtype=float)
    alpha_RT = np.asarray(alpha_RT, dtype=float)
    if threshold is None:
        threshold = pretreatment_threshold_batch(rho, K, N_initial, cfg, grid)

    spd = grid.steps_per_day
    thr_idx = grid.day_index(cfg.threshold_day)
    post_rt_idx = grid.day_index(cfg.post_rt_day)
    end_idx = grid.day_index(cfg.horizon_day)
    events = _event_arrays(regimen, alpha_RT, fixed, grid)
    decay = np.exp(-rho * grid.dt)

    values = N_initial.copy()
    cross_idx = np.full(len(values), -1, dtype=int)
    for i in range(end_idx + 1):
        mult = events.get(i)
        if mult is not None:
            values = values * mult
        if i > post_rt_idx:
            hit = (cross_idx < 0) & (values > threshold)
            if hit.any():
                cross_idx[hit] = i
        if i < end_idx:
            values = _logistic_flow(values, K, decay)

    ttp = (cross_idx - thr_idx) / spd
    ttp[cross_idx < 0] = (end_idx - thr_idx) / spd
    return ttp


def time_to_progression(
    theta: PatientParameters,
    fixed: FixedParameters,
    regimen: TreatmentRegimen | None,
    cfg: TTPConfig,
    grid: SimulationGrid,
    allow_boundary: bool = False,
) -> float:
    """TTP in days for one parameter vector (censored at the maximum)."""
    if not allow_boundary and (theta.rho <= 0 or theta.alpha_RT <= 0):
        raise ValueError("rho and alpha_RT must be strictly positive outside test mode")
    out = ttp_batch(
        np.array([theta.rho]),
        np.array([theta.K]),
        np.array([theta.N_initial]),
        np.array([theta.alpha_RT]),
        fixed,
        regimen,
        cfg,
        grid,
    )
    return float(out[0])


def quantile(values: np.ndarray, alpha: float) -> float:
    """Empirical alpha-quantile as the ceil(alpha*n)-th ascending order statistic."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n < 1:
        raise ValueError("need at least one sample")
    rank = _ceil_with_tolerance(alpha * n)
    return float(np.sort(values)[rank - 1])


def superquantile(values: np.ndarray, alpha: float) -> float:
    """Tail-average risk: quantile plus the mean excess above it over (1-alpha).

    Coincides with the average of the worst (1-alpha)*n samples whenever
    that count is an integer.
    """
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n * (1.0 - alpha) < 1.0:
        raise ValueError(f"need at least {math.ceil(1.0 / (1.0 - alpha))} samples at alpha={alpha}")
    q = quantile(values, alpha)
    excess = np.maximum(values - q, 0.0)
    return float(q + excess.mean() / (1.0 - alpha))


def _ceil_with_tolerance(x: float, eps: float = 1e-9) -> int:
    # ceil that forgives float error when alpha*n is an exact integer
    return int(math.ceil(x - eps))


def superquantile_stderr(
    values: np.ndarray,
    alpha: float,
    n_boot: int = 200,
    seed: int = 0,
) -> float:
    """Bootstrap standard error of the superquantile estimator."""
    values = np.asarray(values, dtype=float)
    gen = np.random.Generator(np.random.PCG64(seed))
    n = len(values)
    stats = np.empty(n_boot)
    for b in range(n_boot):
        stats[b] = superquantile(values[gen.integers(0, n, size=n)], alpha)
    return float(stats.std(ddof=1))


def draw_theta_matrix(ensemble: PosteriorEnsemble, n_mc: int, seed: int) -> np.ndarray:
    """Resample parameter vectors from the ensemble with replacement, (n_mc, 4)."""
    if len(ensemble) == 0:
        raise ValueError("ensemble is empty")
    gen = np.random.Generator(np.random.PCG64(seed))
    idx = gen.integers(0, len(ensemble), size=n_mc)
    return ensemble.samples[idx]


def propagate(
    ensemble: PosteriorEnsemble,
    fixed: FixedParameters,
    regimen: TreatmentRegimen | None,
    cfg: TTPConfig,
    risk: RiskConfig,
    grid: SimulationGrid,
    seed: int,
    theta_matrix: np.ndarray | None = None,
    threshold: np.ndarray | None = None,
) -> QoISamples:
    """Monte Carlo samples of negated TTP under a regimen.

    Draws risk.n_mc parameter sets from the ensemble (seeded, with
    replacement) unless a frozen theta_matrix is supplied, in which case
    exactly those rows are used in order (common-random-number evaluation).
    """
    if theta_matrix is None:
        theta_matrix = draw_theta_matrix(ensemble, risk.n_mc, seed)
    ttp = ttp_batch(
        theta_matrix[:, 0],
        theta_matrix[:, 1],
        theta_matrix[:, 2],
        theta_matrix[:, 3],
        fixed,
        regimen,
        cfg,
        grid,
        threshold=threshold,
    )
    return QoISamples(values=-ttp, n_mc=len(theta_matrix), seed=seed)


def ttp_superquantile(
    ensemble: PosteriorEnsemble,
    fixed: FixedParameters,
    regimen: TreatmentRegimen | None,
    cfg: TTPConfig,
    risk: RiskConfig,
    grid: SimulationGrid,
    seed: int,
) -> float:
    """Conservative-tail TTP: negated superquantile of the negated TTP."""
    samples = propagate(ensemble, fixed, regimen, cfg, risk, grid, seed)
    return -superquantile(samples.values, risk.alpha)
