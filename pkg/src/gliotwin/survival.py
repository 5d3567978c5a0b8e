"""Cohort survival analysis of progression times.

Each patient contributes one number: their tail-risk time to progression,
right-censored at the simulation maximum of 132 days. The product-limit
estimator builds the survival curve, uncertainty bands come from
bootstrap-resampled per-patient Monte Carlo samples (not a closed-form
variance approximation), and arms are compared with the logrank test.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import chi2

from gliotwin.risk import QoISamples, superquantile

MAX_TTP_DAYS = 132.0


@dataclass(frozen=True)
class SurvivalEntry:
    patient_id: str
    ttp: float
    censored: bool


@dataclass(frozen=True)
class SurvivalInput:
    entries: tuple[SurvivalEntry, ...]

    def __post_init__(self) -> None:
        for e in self.entries:
            if not 0.0 < e.ttp <= MAX_TTP_DAYS:
                raise ValueError(f"ttp {e.ttp} outside (0, {MAX_TTP_DAYS}]")
            if e.censored != (e.ttp == MAX_TTP_DAYS):
                raise ValueError("entries are censored exactly when ttp reaches the maximum")

    @classmethod
    def from_ttps(cls, pairs: list[tuple[str, float]]) -> "SurvivalInput":
        return cls(tuple(SurvivalEntry(pid, ttp, ttp == MAX_TTP_DAYS) for pid, ttp in pairs))


@dataclass(frozen=True)
class SurvivalCurve:
    """Right-continuous step function of survival probability."""

    times: np.ndarray  # event times, starting at 0
    probabilities: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray
    band_std: np.ndarray | None = None

    def probability_at(self, t: float) -> float:
        idx = np.searchsorted(self.times, t, side="right") - 1
        return float(self.probabilities[max(idx, 0)])

    def write_csv(self, path: Path | str) -> None:
        std = self.band_std if self.band_std is not None else np.zeros_like(self.probabilities)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t_days", "survival_prob", "band_lo", "band_hi"])
            for t, p, s in zip(self.times, self.probabilities, std):
                writer.writerow([repr(float(t)), repr(float(p)), repr(max(0.0, float(p - s))), repr(min(1.0, float(p + s)))])


def kaplan_meier(data: SurvivalInput) -> SurvivalCurve:
    """Product-limit survival estimate over distinct uncensored event times.

    Censored subjects leave the risk set without stepping the curve; ties
    at an event time are counted jointly.
    """
    if not data.entries:
        raise ValueError("survival input is empty")
    ttps = np.array([e.ttp for e in data.entries])
    censored = np.array([e.censored for e in data.entries])
    event_times = np.unique(ttps[~censored])
    times = [0.0]
    probs = [1.0]
    at_risk = [len(ttps)]
    events = [0]
    surv = 1.0
    for t in event_times:
        m = int(np.sum(ttps >= t))
        d = int(np.sum((ttps == t) & ~censored))
        surv *= 1.0 - d / m
        times.append(float(t))
        probs.append(surv)
        at_risk.append(m)
        events.append(d)
    return SurvivalCurve(
        times=np.array(times),
        probabilities=np.array(probs),
        at_risk=np.array(at_risk),
        events=np.array(events),
    )


def survival_variance_band(
    per_patient_samples: list[QoISamples],
    alpha: float,
    n_boot: int,
    seed: int,
    patient_ids: list[str] | None = None,
    times: np.ndarray | None = None,
) -> SurvivalCurve:
    """Survival curve with a pointwise bootstrap standard-deviation band.

    Each replicate resamples every patient's Monte Carlo progression-time
    samples, recomputes their tail value, and rebuilds the curve; the band
    is the pointwise standard deviation across replicates. Curves are
    evaluated on a time grid (daily by default) so the band resolves the
    transition windows around each event time.
    """
    if n_boot < 1:
        raise ValueError("n_boot must be >= 1")
    ids = patient_ids or [f"p{i}" for i in range(len(per_patient_samples))]
    base_ttps = np.array([_tail_ttp(s.values, alpha) for s in per_patient_samples])
    base = kaplan_meier(SurvivalInput.from_ttps(list(zip(ids, base_ttps))))
    if times is None:
        times = np.arange(0.0, MAX_TTP_DAYS + 1.0)
    times = np.asarray(times, dtype=float)

    streams = np.random.SeedSequence(seed).spawn(n_boot)
    curves = np.empty((n_boot, len(times)))
    for b, stream in enumerate(streams):
        gen = np.random.Generator(np.random.PCG64(stream))
        ttps = []
        for s in per_patient_samples:
            n = len(s.values)
            resampled = s.values[gen.integers(0, n, size=n)]
            ttps.append(_tail_ttp(resampled, alpha))
        curve = kaplan_meier(SurvivalInput.from_ttps(list(zip(ids, ttps))))
        curves[b] = [curve.probability_at(t) for t in times]
    band = curves.std(axis=0, ddof=0)
    return SurvivalCurve(
        times=times,
        probabilities=np.array([base.probability_at(t) for t in times]),
        at_risk=np.array([int(np.sum(base_ttps >= t)) for t in times]),
        events=np.array([int(np.sum(base_ttps == t)) for t in times]),
        band_std=band,
    )


def _tail_ttp(qoi_values: np.ndarray, alpha: float) -> float:
    ttp = -superquantile(qoi_values, alpha)
    return min(ttp, MAX_TTP_DAYS)


def logrank(group_a: SurvivalInput, group_b: SurvivalInput) -> tuple[float, float]:
    """Two-group logrank test: chi-square statistic (1 dof) and p-value.

    Pooled distinct event times; censored subjects stay in the risk set
    through their censoring time. Two groups with no events at all (or no
    variance) give statistic 0 and p = 1.
    """
    if not group_a.entries or not group_b.entries:
        raise ValueError("both groups must be nonempty")
    t_a = np.array([e.ttp for e in group_a.entries])
    c_a = np.array([e.censored for e in group_a.entries])
    t_b = np.array([e.ttp for e in group_b.entries])
    c_b = np.array([e.censored for e in group_b.entries])
    pooled = np.unique(np.concatenate([t_a[~c_a], t_b[~c_b]]))
    observed_a = 0.0
    expected_a = 0.0
    variance = 0.0
    for t in pooled:
        n_a = int(np.sum(t_a >= t))
        n_b = int(np.sum(t_b >= t))
        n = n_a + n_b
        d_a = int(np.sum((t_a == t) & ~c_a))
        d_b = int(np.sum((t_b == t) & ~c_b))
        d = d_a + d_b
        if n == 0 or d == 0:
            continue
        observed_a += d_a
        expected_a += d * n_a / n
        if n > 1:
            variance += d * (n_a / n) * (1.0 - n_a / n) * (n - d) / (n - 1)
    if variance == 0.0:
        return 0.0, 1.0
    statistic = (observed_a - expected_a) ** 2 / variance
    p_value = float(chi2.sf(statistic, df=1))
    return float(statistic), p_value


def write_logrank_json(path: Path | str, statistic: float, p_value: float, n_a: int, n_b: int) -> None:
    Path(path).write_text(
        json.dumps(
            {"statistic": statistic, "p_value": p_value, "n_a": n_a, "n_b": n_b},
            indent=2,
            sort_keys=True,
        )
    )
