"""End-to-end study pipeline: cohort, calibration, optimization, survival.

Artifacts are flat JSON/CSV/npy files in a run directory, each stamped with
a hash of the run configuration; stages refuse to consume artifacts written
under a different configuration. All randomness is derived from one master
seed through named seed streams, so results are bitwise reproducible and
independent of thread count.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from gliotwin.calibration import (
    LikelihoodSpec,
    MCMCConfig,
    PosteriorEnsemble,
    run_mcmc,
    step1_update_initial_burden,
)
from gliotwin.cohort import (
    ObservationModel,
    PriorSpec,
    VirtualPatient,
    classify_progressor,
    make_virtual_patient,
    patient_seed_streams,
    read_cohort,
    sample_cohort,
    write_cohort,
)
from gliotwin.growth import (
    FixedParameters,
    SimulationGrid,
    standard_of_care,
)
from gliotwin.optimizer import (
    OptimizationConfig,
    ParetoFront,
    matched_control_dose_reduction,
    pareto_sweep,
    read_front_json,
    write_front_csv,
    write_front_json,
)
from gliotwin.risk import RiskConfig, TTPConfig, propagate
from gliotwin.survival import (
    SurvivalInput,
    logrank,
    survival_variance_band,
    write_logrank_json,
)

SCALE_PRESETS = {
    "desk": {
        "n_patients": 20,
        "mcmc_samples": 10_000,
        "mcmc_retained": 4_000,
        "restarts": 5,
        "max_evals_per_restart": 100,
        "n_mc": 1000,
        "n_mc_report": 2000,
    },
    "paper": {
        "n_patients": 100,
        "mcmc_samples": 100_000,
        "mcmc_retained": 100_000,
        "restarts": 20,
        "max_evals_per_restart": 200,
        "n_mc": 5000,
        "n_mc_report": 10_000,
    },
}

DEFAULT_MASTER_SEED = 20260809

# stage tags for named seed streams
_SEED_COHORT = 1
_SEED_CALIBRATE = 2
_SEED_OPTIMIZE = 3
_SEED_SURVIVAL = 4

ARM_SOC = "SOC"


class ConfigHashMismatch(RuntimeError):
    def __init__(self, expected: str, found: str, diff: list[str]):
        lines = "\n".join(diff) or "(configs differ only in unlisted fields)"
        super().__init__(
            f"artifact was produced under config {found}, current config is {expected}; differences:\n{lines}"
        )
        self.diff = diff


@dataclass(frozen=True)
class RunConfig:
    """Everything a full study run depends on, hashable for artifact binding."""

    scale: str = "desk"
    n_patients: int = 20
    master_seed: int = DEFAULT_MASTER_SEED
    prior: PriorSpec = dataclasses.field(default_factory=PriorSpec.default)
    observation_model: ObservationModel = dataclasses.field(default_factory=ObservationModel)
    fixed: FixedParameters = dataclasses.field(default_factory=FixedParameters)
    grid: SimulationGrid = dataclasses.field(default_factory=SimulationGrid)
    ttp: TTPConfig = dataclasses.field(default_factory=TTPConfig)
    mcmc: MCMCConfig = dataclasses.field(default_factory=MCMCConfig)
    optimization: OptimizationConfig = dataclasses.field(default_factory=OptimizationConfig)
    survival_n_boot: int = 200

    def to_dict(self) -> dict:
        return {
            "scale": self.scale,
            "n_patients": self.n_patients,
            "master_seed": self.master_seed,
            "prior": self.prior.to_dict(),
            "observation_model": self.observation_model.to_dict(),
            "fixed": self.fixed.to_dict(),
            "grid": self.grid.to_dict(),
            "ttp": self.ttp.to_dict(),
            "mcmc": {
                "n_chains": self.mcmc.n_chains,
                "n_samples": self.mcmc.n_samples,
                "burn_in_fraction": self.mcmc.burn_in_fraction,
                "n_retained": self.mcmc.n_retained,
                "target_acceptance": self.mcmc.target_acceptance,
                "adapt_start": self.mcmc.adapt_start,
            },
            "optimization": self.optimization.to_dict(),
            "survival_n_boot": self.survival_n_boot,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return cls(
            scale=d["scale"],
            n_patients=d["n_patients"],
            master_seed=d["master_seed"],
            prior=PriorSpec.from_dict(d["prior"]),
            observation_model=ObservationModel.from_dict(d["observation_model"]),
            fixed=FixedParameters.from_dict(d["fixed"]),
            grid=SimulationGrid.from_dict(d["grid"]),
            ttp=TTPConfig.from_dict(d["ttp"]),
            mcmc=MCMCConfig(**d["mcmc"]),
            optimization=OptimizationConfig.from_dict(d["optimization"]),
            survival_n_boot=d["survival_n_boot"],
        )

    def hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def make_run_config(
    scale: str = "desk",
    master_seed: int = DEFAULT_MASTER_SEED,
    n_patients: int | None = None,
    **overrides,
) -> RunConfig:
    """Build a RunConfig from a scale preset with optional field overrides."""
    if scale not in SCALE_PRESETS:
        raise ValueError(f"unknown scale {scale!r}; expected one of {sorted(SCALE_PRESETS)}")
    p = SCALE_PRESETS[scale]
    mcmc = MCMCConfig(
        n_samples=p["mcmc_samples"],
        n_retained=p["mcmc_retained"],
    )
    optimization = OptimizationConfig(
        restarts=p["restarts"],
        max_evals_per_restart=p["max_evals_per_restart"],
        n_mc=p["n_mc"],
        n_mc_report=p["n_mc_report"],
    )
    cfg = RunConfig(
        scale=scale,
        n_patients=n_patients if n_patients is not None else p["n_patients"],
        master_seed=master_seed,
        mcmc=overrides.pop("mcmc", mcmc),
        optimization=overrides.pop("optimization", optimization),
        **overrides,
    )
    return cfg


def _stage_seed(config: RunConfig, stage: int, index: int = 0) -> int:
    seq = np.random.SeedSequence([config.master_seed, stage, index])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def _patient_id(i: int) -> str:
    return f"patient_{i:03d}"


def _arm_name(d_max: float) -> str:
    return f"OUU:{d_max:g}"


class ArtifactStore:
    """Flat-file layout of one run directory, keyed by the config hash."""

    def __init__(self, out_dir: Path | str, config: RunConfig):
        self.root = Path(out_dir)
        self.config = config
        self.config_hash = config.hash()

    # --- paths ---
    @property
    def config_path(self) -> Path:
        return self.root / "config.json"

    @property
    def cohort_path(self) -> Path:
        return self.root / "cohort.json"

    def posterior_paths(self, patient_id: str) -> tuple[Path, Path]:
        d = self.root / "posteriors"
        return d / f"{patient_id}.npy", d / f"{patient_id}.json"

    def front_path(self, patient_id: str) -> Path:
        return self.root / "fronts" / f"{patient_id}.json"

    @property
    def fronts_csv_path(self) -> Path:
        return self.root / "fronts" / "fronts.csv"

    def survival_paths(self, arm: str) -> tuple[Path, Path]:
        d = self.root / "survival"
        safe = arm.replace(":", "_")
        return d / f"curve_{safe}.csv", d / f"logrank_{safe}.json"

    @property
    def summary_path(self) -> Path:
        return self.root / "summary.json"

    @property
    def twins_path(self) -> Path:
        return self.root / "twins.json"

    @property
    def timings_path(self) -> Path:
        return self.root / "timings.json"

    # --- config binding ---
    def write_config(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        payload = {"config_hash": self.config_hash, "config": self.config.to_dict()}
        self.config_path.write_text(json.dumps(payload, indent=2, sort_keys=True))

    def check_hash(self, found: str) -> None:
        if found != self.config_hash:
            stored = {}
            if self.config_path.exists():
                stored = json.loads(self.config_path.read_text()).get("config", {})
            diff = diff_configs(self.config.to_dict(), stored)
            raise ConfigHashMismatch(self.config_hash, found, diff)

    # --- artifact round trips ---
    def load_patients(self) -> list[VirtualPatient]:
        patients, _, _, _, found_hash = read_cohort(self.cohort_path)
        self.check_hash(found_hash)
        return patients

    def load_ensemble(self, patient_id: str) -> PosteriorEnsemble:
        npy, meta = self.posterior_paths(patient_id)
        payload = json.loads(meta.read_text())
        self.check_hash(payload.get("config_hash", ""))
        return PosteriorEnsemble.load(npy, meta)

    def load_front(self, patient_id: str) -> ParetoFront:
        pid, front, found_hash = read_front_json(self.front_path(patient_id))
        self.check_hash(found_hash)
        return front


def diff_configs(current: dict, stored: dict, prefix: str = "") -> list[str]:
    """Human-readable list of leaf-level config differences."""
    lines = []
    keys = sorted(set(current) | set(stored))
    for k in keys:
        path = f"{prefix}.{k}" if prefix else k
        a, b = current.get(k), stored.get(k)
        if isinstance(a, dict) and isinstance(b, dict):
            lines.extend(diff_configs(a, b, path))
        elif a != b:
            lines.append(f"  {path}: current={a!r} stored={b!r}")
    return lines


def stage_cohort(config: RunConfig, store: ArtifactStore) -> list[VirtualPatient]:
    """Draw ground-truth parameters and generate each patient's noisy scans."""
    store.write_config()
    cohort_seed = _stage_seed(config, _SEED_COHORT)
    thetas = sample_cohort(config.prior, config.n_patients, cohort_seed)
    soc = standard_of_care(config.ttp.threshold_day)
    obs_streams = patient_seed_streams(_stage_seed(config, _SEED_COHORT, 1), config.n_patients)
    patients = [
        make_virtual_patient(
            _patient_id(i),
            theta,
            config.fixed,
            soc,
            config.observation_model,
            stream,
            config.grid,
        )
        for i, (theta, stream) in enumerate(zip(thetas, obs_streams))
    ]
    write_cohort(
        store.cohort_path,
        patients,
        config.prior,
        config.observation_model,
        cohort_seed,
        config_hash=store.config_hash,
    )
    return patients


def calibrate_patient(config: RunConfig, patient: VirtualPatient, seed: int) -> PosteriorEnsemble:
    obs = patient.observations
    step1 = step1_update_initial_burden(obs.value_at(0), config.observation_model.sigma)
    mcmc = dataclasses.replace(config.mcmc, seed=seed)
    likelihood = LikelihoodSpec(sigma=config.observation_model.sigma)
    return run_mcmc(
        obs,
        config.prior,
        step1,
        mcmc,
        likelihood=likelihood,
        fixed=config.fixed,
        regimen=standard_of_care(config.ttp.threshold_day),
        grid=config.grid,
    )


def stage_calibrate(
    config: RunConfig,
    store: ArtifactStore,
    threads: int = 1,
    patient_ids: list[str] | None = None,
) -> dict[str, PosteriorEnsemble]:
    """Run the two-step calibration for cohort patients (all by default)."""
    patients = _select_patients(store.load_patients(), patient_ids)
    seeds = [_stage_seed(config, _SEED_CALIBRATE, i) for i, _ in patients]
    patients = [p for _, p in patients]

    def job(args):
        patient, seed = args
        return calibrate_patient(config, patient, seed)

    ensembles = _parallel_map(job, list(zip(patients, seeds)), threads)
    out = {}
    for patient, ensemble in zip(patients, ensembles):
        npy, meta = store.posterior_paths(patient.id)
        npy.parent.mkdir(parents=True, exist_ok=True)
        ensemble.save(npy, meta, extra={"config_hash": store.config_hash, "patient_id": patient.id})
        out[patient.id] = ensemble
    return out


def stage_optimize(
    config: RunConfig,
    store: ArtifactStore,
    threads: int = 1,
    patient_ids: list[str] | None = None,
) -> dict[str, ParetoFront]:
    """Sweep the dose caps for each patient's calibrated twin (all by default)."""
    patients = _select_patients(store.load_patients(), patient_ids)

    def job(args):
        i, patient = args
        ensemble = store.load_ensemble(patient.id)
        opt = dataclasses.replace(config.optimization, seed=_stage_seed(config, _SEED_OPTIMIZE, i))
        return pareto_sweep(
            ensemble,
            opt,
            fixed=config.fixed,
            ttp_cfg=config.ttp,
            grid=config.grid,
            treatment_start_day=config.ttp.threshold_day,
        )

    fronts = _parallel_map(job, patients, threads)
    out = {}
    for (_, patient), front in zip(patients, fronts):
        path = store.front_path(patient.id)
        path.parent.mkdir(parents=True, exist_ok=True)
        write_front_json(path, patient.id, front, config_hash=store.config_hash)
        out[patient.id] = front
    rows = [
        (p.id, out.get(p.id) or store.load_front(p.id))
        for p in store.load_patients()
        if p.id in out or store.front_path(p.id).exists()
    ]
    write_front_csv(store.fronts_csv_path, rows)
    return out


def _select_patients(patients: list[VirtualPatient], patient_ids: list[str] | None):
    """Indexed patient subset; seeds stay tied to the cohort position."""
    if patient_ids is None:
        return list(enumerate(patients))
    by_id = {p.id: (i, p) for i, p in enumerate(patients)}
    missing = [pid for pid in patient_ids if pid not in by_id]
    if missing:
        raise KeyError(f"unknown patient ids: {missing}")
    return [by_id[pid] for pid in patient_ids]


def stage_survival(config: RunConfig, store: ArtifactStore, arms: list[str] | None = None) -> dict:
    """Per-arm survival curves with bootstrap bands and logrank tests vs SOC."""
    patients = store.load_patients()
    fronts = {p.id: store.load_front(p.id) for p in patients}
    ensembles = {p.id: store.load_ensemble(p.id) for p in patients}
    all_arms = [ARM_SOC] + [_arm_name(d) for d in sorted(config.optimization.d_max_grid)]
    if arms is None:
        arms = all_arms
    else:
        unknown = [a for a in arms if a not in all_arms]
        if unknown:
            raise KeyError(f"unknown arms {unknown}; expected a subset of {all_arms}")
        if ARM_SOC not in arms:
            arms = [ARM_SOC] + arms  # SOC is the logrank reference

    def arm_point(front: ParetoFront, arm: str):
        if arm == ARM_SOC:
            return front.soc_reference
        return front.point_at(float(arm.split(":")[1]))

    inputs: dict[str, SurvivalInput] = {}
    results: dict = {"arms": {}, "logrank_p_vs_soc": {}}
    for arm in arms:
        pairs = []
        samples = []
        for p in patients:
            point = arm_point(fronts[p.id], arm)
            # regenerate the reporting sample set deterministically from the
            # seed recorded on the front point
            qoi = propagate(
                ensembles[p.id],
                config.fixed,
                point.regimen,
                config.ttp,
                RiskConfig(alpha=point.alpha, n_mc=point.report_n_mc),
                config.grid,
                seed=point.report_seed,
            )
            pairs.append((p.id, min(point.ttp_superquantile, config.ttp.max_ttp)))
            samples.append(qoi)
        inputs[arm] = SurvivalInput.from_ttps(pairs)
        curve = survival_variance_band(
            samples,
            alpha=config.optimization.alpha,
            n_boot=config.survival_n_boot,
            seed=_stage_seed(config, _SEED_SURVIVAL, all_arms.index(arm)),
            patient_ids=[p.id for p in patients],
        )
        curve_path, logrank_path = store.survival_paths(arm)
        curve_path.parent.mkdir(parents=True, exist_ok=True)
        curve.write_csv(curve_path)
        results["arms"][arm] = {pid: ttp for pid, ttp in pairs}
        if arm != ARM_SOC:
            stat, p_value = logrank(inputs[arm], inputs[ARM_SOC])
            write_logrank_json(logrank_path, stat, p_value, len(inputs[arm].entries), len(inputs[ARM_SOC].entries))
            results["logrank_p_vs_soc"][arm] = p_value
    return results


def _median(values: list[float]) -> float | None:
    return float(np.median(values)) if values else None


def build_summary(config: RunConfig, store: ArtifactStore, survival_results: dict) -> dict:
    """Cohort summary: grouping, per-arm TTP deltas, dose reductions, p-values."""
    patients = store.load_patients()
    fronts = {p.id: store.load_front(p.id) for p in patients}
    rt_days = config.ttp.post_rt_day - config.ttp.threshold_day

    soc_ttp = {pid: fronts[pid].soc_reference.ttp_superquantile for pid in fronts}
    groups: dict[str, list[str]] = {"early": [], "intermediate": [], "late": []}
    for pid, ttp in sorted(soc_ttp.items()):
        groups[classify_progressor(min(max(ttp - rt_days, 0.0), config.ttp.max_ttp))].append(pid)

    arm_names = [_arm_name(d) for d in sorted(config.optimization.d_max_grid)]
    delta: dict[str, dict] = {}
    for arm in arm_names:
        d_max = float(arm.split(":")[1])
        per_patient = {
            pid: fronts[pid].point_at(d_max).ttp_superquantile - soc_ttp[pid] for pid in sorted(fronts)
        }
        delta[arm] = {
            "overall": _median(list(per_patient.values())),
            **{g: _median([per_patient[pid] for pid in groups[g]]) for g in groups},
        }

    reductions = {pid: matched_control_dose_reduction(fronts[pid]).to_dict() for pid in sorted(fronts)}
    reduction_medians = {
        "overall": _median([r["reduction_gy"] for r in reductions.values()]),
        **{
            g: _median([reductions[pid]["reduction_gy"] for pid in groups[g]])
            for g in groups
        },
    }

    summary = {
        "config_hash": store.config_hash,
        "scale": config.scale,
        "master_seed": config.master_seed,
        "n_patients": config.n_patients,
        "groups": groups,
        "arms": {
            ARM_SOC: {"ttp_superquantile": {pid: soc_ttp[pid] for pid in sorted(soc_ttp)}},
            **{
                arm: {
                    "ttp_superquantile": {
                        pid: fronts[pid].point_at(float(arm.split(":")[1])).ttp_superquantile
                        for pid in sorted(fronts)
                    }
                }
                for arm in arm_names
            },
        },
        "median_delta_ttp_vs_soc": delta,
        "dose_reduction": {"per_patient": reductions, "median": reduction_medians},
        "logrank_p_vs_soc": survival_results["logrank_p_vs_soc"],
    }
    return summary


def write_twin_records(store: ArtifactStore, patients: list[VirtualPatient]) -> None:
    now = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    records = []
    for p in patients:
        npy, meta = store.posterior_paths(p.id)
        records.append(
            {
                "patient_id": p.id,
                "observation_days": p.observations.days(),
                "posterior_samples": str(npy.relative_to(store.root)),
                "posterior_diagnostics": str(meta.relative_to(store.root)),
                "pareto_front": str(store.front_path(p.id).relative_to(store.root)),
                "created_utc": now,
                "config_hash": store.config_hash,
            }
        )
    store.twins_path.write_text(json.dumps(records, indent=2, sort_keys=True))


def reproduce(config: RunConfig, out_dir: Path | str, threads: int = 1) -> dict:
    """Run the full study and write the deterministic summary JSON.

    Stage wall times land in a separate timings file so the summary stays
    bitwise reproducible.
    """
    store = ArtifactStore(out_dir, config)
    timings = {}

    t0 = time.perf_counter()
    patients = stage_cohort(config, store)
    timings["cohort_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    stage_calibrate(config, store, threads=threads)
    timings["calibrate_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    stage_optimize(config, store, threads=threads)
    timings["optimize_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    survival_results = stage_survival(config, store)
    timings["survival_s"] = time.perf_counter() - t0

    summary = build_summary(config, store, survival_results)
    store.summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True))
    write_twin_records(store, patients)
    store.timings_path.write_text(json.dumps(timings, indent=2, sort_keys=True))
    return summary


def _parallel_map(fn, items: list, threads: int) -> list:
    """Order-preserving map; results do not depend on the thread count."""
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
