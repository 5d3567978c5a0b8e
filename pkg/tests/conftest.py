import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gliotwin.calibration import MCMCConfig, run_mcmc, step1_update_initial_burden
from gliotwin.cohort import ObservationModel, PriorSpec, observe
from gliotwin.growth import (
    FixedParameters,
    PatientParameters,
    SimulationGrid,
    standard_of_care,
)
from gliotwin.optimizer import OptimizationConfig
from gliotwin.pipeline import make_run_config, reproduce

# the three case-study parameter sets used throughout the checks
CASE_STUDY = {
    1: PatientParameters(rho=1.14e-1, K=1.17e11, N_initial=1.54e10, alpha_RT=1.05e-3),
    2: PatientParameters(rho=1.09e-1, K=1.09e11, N_initial=2.60e10, alpha_RT=4.58e-2),
    3: PatientParameters(rho=2.25e-1, K=1.40e11, N_initial=2.62e10, alpha_RT=3.90e-2),
}


@pytest.fixture(scope="session")
def fixed():
    return FixedParameters()


@pytest.fixture(scope="session")
def grid():
    return SimulationGrid()


@pytest.fixture(scope="session")
def soc():
    return standard_of_care()


@pytest.fixture(scope="session")
def prior():
    return PriorSpec.default()


@pytest.fixture(scope="session")
def obs_model():
    return ObservationModel()


@pytest.fixture(scope="session")
def case_study():
    return CASE_STUDY


@pytest.fixture(scope="session")
def small_ensemble(fixed, grid, soc, prior, obs_model):
    """Quick calibrated posterior for patient 2, shared across test modules."""
    obs = observe(CASE_STUDY[2], fixed, soc, obs_model, seed=42, grid=grid)
    step1 = step1_update_initial_burden(obs.value_at(0), obs_model.sigma)
    cfg = MCMCConfig(n_samples=2500, n_retained=1000, seed=7)
    return run_mcmc(obs, prior, step1, cfg, fixed=fixed, regimen=soc, grid=grid)


@pytest.fixture(scope="session")
def mini_config():
    """Tiny but complete run configuration for pipeline-level tests."""
    return make_run_config(
        scale="desk",
        master_seed=123,
        n_patients=3,
        mcmc=MCMCConfig(n_samples=4000, n_retained=800),
        optimization=OptimizationConfig(
            d_max_grid=(40.0, 60.0),
            restarts=2,
            max_evals_per_restart=40,
            n_mc=500,
            n_mc_report=500,
        ),
        survival_n_boot=50,
    )


@pytest.fixture(scope="session")
def mini_run(mini_config, tmp_path_factory):
    """One completed mini pipeline run shared by pipeline/CLI/service tests."""
    out_dir = tmp_path_factory.mktemp("mini_run")
    summary = reproduce(mini_config, out_dir, threads=1)
    return {"config": mini_config, "out_dir": out_dir, "summary": summary}
