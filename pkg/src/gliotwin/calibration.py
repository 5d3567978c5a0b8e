"""Two-step Bayesian calibration of the growth model to a patient's scans.

Step 1 turns the day-0 scan into a truncated-normal distribution for the
initial burden. Step 2 assimilates the later scans with MCMC over
(rho, K, N_initial, alpha_RT), using the step-1 distribution as the
N_initial prior. The sampler is an adaptive random-walk Metropolis run in
logit-transformed bounded space: four chains adapt their proposal
covariance during a burn-in window, then sample with the proposal frozen.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit, log_ndtr

from gliotwin.cohort import ObservationSet, PriorSpec
from gliotwin.growth import (
    PARAMETER_NAMES,
    FixedParameters,
    PatientParameters,
    SimulationGrid,
    TreatmentRegimen,
    observed_days_values_batch,
    standard_of_care,
)
from gliotwin.truncated import TruncatedNormal

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

RHAT_CONVERGENCE_LIMIT = 1.05


@dataclass(frozen=True)
class LikelihoodSpec:
    """Measurement-noise model for calibration.

    sigma matches the observation model; days selects which scans the MCMC
    stage assimilates (the day-0 scan is consumed by step 1 instead).
    """

    sigma: float = 2e9
    days: tuple[int, ...] = (20, 27)

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class MCMCConfig:
    n_chains: int = 4
    n_samples: int = 10_000
    burn_in_fraction: float = 0.2
    n_retained: int = 4_000
    target_acceptance: float = 0.234
    adapt_start: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_chains < 2:
            raise ValueError("need at least 2 chains for convergence diagnostics")
        if not 0.0 < self.burn_in_fraction < 1.0:
            raise ValueError("burn_in_fraction must be in (0, 1)")
        post_burn = self.n_samples - int(self.n_samples * self.burn_in_fraction)
        if self.n_retained > self.n_chains * post_burn:
            raise ValueError("n_retained exceeds available post-burn-in samples")

    @property
    def burn_in(self) -> int:
        return int(self.n_samples * self.burn_in_fraction)


@dataclass(frozen=True)
class Diagnostics:
    r_hat: dict[str, float]
    ess: dict[str, float]
    acceptance: tuple[float, ...]
    n_chains: int
    n_samples_per_chain: int
    burn_in: int
    seed: int

    @property
    def converged(self) -> bool:
        return all(r <= RHAT_CONVERGENCE_LIMIT for r in self.r_hat.values())

    def to_dict(self) -> dict:
        return {
            "r_hat": self.r_hat,
            "ess": self.ess,
            "acceptance": list(self.acceptance),
            "n_chains": self.n_chains,
            "n_samples_per_chain": self.n_samples_per_chain,
            "burn_in": self.burn_in,
            "seed": self.seed,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Diagnostics":
        return cls(
            r_hat=dict(d["r_hat"]),
            ess=dict(d["ess"]),
            acceptance=tuple(d["acceptance"]),
            n_chains=d["n_chains"],
            n_samples_per_chain=d["n_samples_per_chain"],
            burn_in=d["burn_in"],
            seed=d["seed"],
        )


@dataclass(frozen=True)
class PosteriorEnsemble:
    """Equal-weight posterior samples over (rho, K, N_initial, alpha_RT)."""

    samples: np.ndarray  # shape (n, 4), columns ordered as PARAMETER_NAMES
    diagnostics: Diagnostics

    def __len__(self) -> int:
        return self.samples.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.samples[:, PARAMETER_NAMES.index(name)]

    def mean(self) -> dict[str, float]:
        return {n: float(self.samples[:, j].mean()) for j, n in enumerate(PARAMETER_NAMES)}

    def variance(self) -> dict[str, float]:
        return {n: float(self.samples[:, j].var(ddof=1)) for j, n in enumerate(PARAMETER_NAMES)}

    def save(self, samples_path: Path | str, diagnostics_path: Path | str, extra: dict | None = None) -> None:
        np.save(samples_path, self.samples)
        payload = dict(self.diagnostics.to_dict())
        if extra:
            payload.update(extra)
        Path(diagnostics_path).write_text(json.dumps(payload, indent=2, sort_keys=True))

    @classmethod
    def load(cls, samples_path: Path | str, diagnostics_path: Path | str) -> "PosteriorEnsemble":
        samples = np.load(samples_path)
        diag = Diagnostics.from_dict(json.loads(Path(diagnostics_path).read_text()))
        return cls(samples=samples, diagnostics=diag)


def step1_update_initial_burden(o_day0: float, sigma: float) -> TruncatedNormal:
    """Distribution of the initial burden implied by the day-0 scan.

    Centered on the scan with the measurement variance, truncated two
    standard deviations either side, and clamped at zero below.
    """
    if o_day0 < 0:
        raise ValueError("day-0 observation must be nonnegative")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return TruncatedNormal(
        mu=float(o_day0),
        sigma=float(sigma),
        lower=max(0.0, float(o_day0) - 2.0 * sigma),
        upper=float(o_day0) + 2.0 * sigma,
    )


def effective_prior(prior: PriorSpec, step1: TruncatedNormal) -> tuple[TruncatedNormal, ...]:
    """Priors used by the MCMC stage: step 1 replaces the N_initial marginal."""
    return (prior.rho, prior.K, step1, prior.alpha_RT)


def _noise_logpdf(residual: np.ndarray, n_model: np.ndarray, sigma: float) -> np.ndarray:
    # density of TruncatedNormal(0, sigma^2, -n_model, inf) at the residual;
    # the normalizer is Phi(n_model/sigma), evaluated in log space
    z = residual / sigma
    return -0.5 * z * z - math.log(sigma) - _LOG_SQRT_2PI - log_ndtr(n_model / sigma)


def log_likelihood_batch(
    params: np.ndarray,
    obs: ObservationSet,
    spec: LikelihoodSpec,
    fixed: FixedParameters,
    regimen: TreatmentRegimen,
    grid: SimulationGrid,
) -> np.ndarray:
    """Data log-likelihood for an array of parameter vectors, shape (n, 4)."""
    days = [d for d in spec.days]
    if not days:
        return np.zeros(params.shape[0])
    observed = np.array([obs.value_at(d) for d in days])
    n_model = observed_days_values_batch(
        rho=params[:, 0],
        K=params[:, 1],
        N_initial=params[:, 2],
        alpha_RT=params[:, 3],
        fixed=fixed,
        regimen=regimen,
        days=days,
        grid=grid,
    )
    total = np.zeros(params.shape[0])
    for j in range(len(days)):
        total += _noise_logpdf(observed[j] - n_model[j], n_model[j], spec.sigma)
    return total


def log_posterior(
    theta: PatientParameters,
    obs: ObservationSet,
    prior_marginals: tuple[TruncatedNormal, ...],
    spec: LikelihoodSpec | None = None,
    fixed: FixedParameters | None = None,
    regimen: TreatmentRegimen | None = None,
    grid: SimulationGrid | None = None,
) -> float:
    """Unnormalized log posterior density at one parameter vector.

    Returns -inf outside the prior truncation bounds.
    """
    spec = spec or LikelihoodSpec()
    fixed = fixed or FixedParameters()
    regimen = regimen or standard_of_care()
    grid = grid or SimulationGrid()
    x = theta.as_array()
    lp = 0.0
    for marginal, value in zip(prior_marginals, x):
        term = marginal.logpdf(value)
        if not np.isfinite(term):
            return -np.inf
        lp += float(term)
    lp += float(log_likelihood_batch(x[None, :], obs, spec, fixed, regimen, grid)[0])
    return lp


def metropolis_log_accept_prob(log_target_current: float, log_target_proposed: float) -> float:
    """Log acceptance probability of a symmetric-proposal Metropolis step."""
    return min(0.0, log_target_proposed - log_target_current)


class _LogitTransform:
    """Bijection between bounded parameters and unconstrained space."""

    def __init__(self, marginals: tuple[TruncatedNormal, ...]):
        self.lower = np.array([m.lower for m in marginals])
        self.upper = np.array([m.upper for m in marginals])
        self.span = self.upper - self.lower
        self.log_span = np.log(self.span)

    def to_unconstrained(self, x: np.ndarray) -> np.ndarray:
        frac = (x - self.lower) / self.span
        frac = np.clip(frac, 1e-12, 1.0 - 1e-12)
        return np.log(frac) - np.log1p(-frac)

    def to_bounded(self, z: np.ndarray) -> np.ndarray:
        return self.lower + self.span * expit(z)

    def log_jacobian(self, z: np.ndarray) -> np.ndarray:
        # dx/dz = span * s * (1 - s); log terms written with softplus for stability
        softplus_pos = np.logaddexp(0.0, z)
        softplus_neg = np.logaddexp(0.0, -z)
        return np.sum(self.log_span - softplus_pos - softplus_neg, axis=-1)


def _prior_logpdf_batch(x: np.ndarray, marginals: tuple[TruncatedNormal, ...]) -> np.ndarray:
    out = np.zeros(x.shape[0])
    for j, marginal in enumerate(marginals):
        out += marginal.logpdf(x[:, j])
    return out


def run_mcmc(
    obs: ObservationSet,
    prior: PriorSpec,
    step1: TruncatedNormal,
    config: MCMCConfig,
    likelihood: LikelihoodSpec | None = None,
    fixed: FixedParameters | None = None,
    regimen: TreatmentRegimen | None = None,
    grid: SimulationGrid | None = None,
) -> PosteriorEnsemble:
    """Sample the calibrated posterior with adaptive random-walk Metropolis.

    Chains start at independent prior draws and run in lockstep with
    per-chain seed streams, so the result is identical to running them
    sequentially. Non-convergence (any R-hat above 1.05) is flagged in the
    diagnostics, never raised.
    """
    likelihood = likelihood or LikelihoodSpec()
    fixed = fixed or FixedParameters()
    regimen = regimen or standard_of_care()
    grid = grid or SimulationGrid()
    for day in likelihood.days:
        obs.value_at(day)  # KeyError if a required scan is missing

    marginals = effective_prior(prior, step1)
    transform = _LogitTransform(marginals)
    n_chains, n_samples = config.n_chains, config.n_samples
    n_params = len(marginals)
    gens = [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(config.seed).spawn(n_chains)]

    def log_target(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = transform.to_bounded(z)
        lp = _prior_logpdf_batch(x, marginals)
        if likelihood.days:
            lp = lp + log_likelihood_batch(x, obs, likelihood, fixed, regimen, grid)
        return lp + transform.log_jacobian(z), x

    # chains start at independent prior draws
    x0 = np.stack([[m.sample(g) for m in marginals] for g in gens])
    z = transform.to_unconstrained(x0)
    lp, x = log_target(z)

    history = np.empty((n_samples, n_chains, n_params))
    accept_post_burn = np.zeros(n_chains)
    burn_in = config.burn_in

    # per-chain adaptive proposal state
    log_scale = np.full(n_chains, math.log(2.38 / math.sqrt(n_params)))
    chol = [0.5 * np.eye(n_params) for _ in range(n_chains)]
    run_mean = z.copy()
    run_cov = np.stack([0.25 * np.eye(n_params)] * n_chains)

    for t in range(n_samples):
        step = np.empty((n_chains, n_params))
        log_u = np.empty(n_chains)
        for c, g in enumerate(gens):
            step[c] = math.exp(log_scale[c]) * (chol[c] @ g.standard_normal(n_params))
            log_u[c] = math.log(g.random())
        z_prop = z + step
        lp_prop, x_prop = log_target(z_prop)
        log_alpha = np.minimum(0.0, lp_prop - lp)
        accepted = log_u < log_alpha
        z[accepted] = z_prop[accepted]
        x[accepted] = x_prop[accepted]
        lp[accepted] = lp_prop[accepted]
        history[t] = x
        if t >= burn_in:
            accept_post_burn += accepted
        else:
            # Robbins-Monro scale adaptation plus running covariance update
            gamma = (t + 1) ** -0.6
            log_scale += gamma * (np.exp(log_alpha) - config.target_acceptance)
            delta = z - run_mean
            run_mean += delta / (t + 2)
            run_cov += gamma * (np.einsum("ci,cj->cij", delta, z - run_mean) - run_cov)
            if t >= config.adapt_start:
                for c in range(n_chains):
                    try:
                        chol[c] = np.linalg.cholesky(run_cov[c] + 1e-10 * np.eye(n_params))
                    except np.linalg.LinAlgError:
                        pass  # keep the previous factor until the estimate recovers

    post_burn = history[burn_in:]  # (m, c, p)
    m = post_burn.shape[0]
    chains = np.moveaxis(post_burn, 1, 0)  # (c, m, p)

    r_hat = {name: _split_r_hat(chains[:, :, j]) for j, name in enumerate(PARAMETER_NAMES)}
    ess = {name: _effective_sample_size(chains[:, :, j]) for j, name in enumerate(PARAMETER_NAMES)}

    per_chain = config.n_retained // n_chains
    counts = [per_chain + (1 if c < config.n_retained % n_chains else 0) for c in range(n_chains)]
    kept = []
    for c, count in enumerate(counts):
        idx = np.floor(np.arange(count) * (m / count)).astype(int)
        kept.append(chains[c][idx])
    samples = np.concatenate(kept, axis=0)

    diag = Diagnostics(
        r_hat=r_hat,
        ess=ess,
        acceptance=tuple(float(a / m) for a in accept_post_burn),
        n_chains=n_chains,
        n_samples_per_chain=n_samples,
        burn_in=burn_in,
        seed=config.seed,
    )
    return PosteriorEnsemble(samples=samples, diagnostics=diag)


def _split_r_hat(chains: np.ndarray) -> float:
    """Potential scale reduction factor with each chain split in half."""
    c, m = chains.shape
    half = m // 2
    seqs = np.concatenate([chains[:, :half], chains[:, half : 2 * half]], axis=0)
    n_seq, length = seqs.shape
    means = seqs.mean(axis=1)
    within = seqs.var(axis=1, ddof=1).mean()
    between = length * means.var(ddof=1)
    if within == 0:
        return 1.0
    var_plus = (length - 1) / length * within + between / length
    return float(math.sqrt(var_plus / within))


def _effective_sample_size(chains: np.ndarray) -> float:
    """Multi-chain effective sample size via averaged autocovariance."""
    c, m = chains.shape
    acov = np.stack([_autocovariance(chains[i]) for i in range(c)])
    mean_acov = acov.mean(axis=0)
    within = acov[:, 0].mean() * m / (m - 1)
    between = chains.mean(axis=1).var(ddof=1) if c > 1 else 0.0
    var_plus = within * (m - 1) / m + between
    if var_plus == 0:
        return float(c * m)
    rho = 1.0 - (within - mean_acov) / var_plus
    # Geyer initial-positive-sequence truncation over lag pairs
    total = 0.0
    t = 1
    while t + 1 < m:
        pair = rho[t] + rho[t + 1]
        if pair <= 0:
            break
        total += pair
        t += 2
    ess = c * m / (1.0 + 2.0 * total)
    return float(min(ess, c * m))


def _autocovariance(x: np.ndarray) -> np.ndarray:
    n = len(x)
    centered = x - x.mean()
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(centered, size)
    acov = np.fft.irfft(f * np.conjugate(f), size)[:n].real / n
    return acov
