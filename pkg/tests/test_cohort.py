import math
from pathlib import Path

import numpy as np
import pytest

from gliotwin.cohort import (
    ObservationModel,
    ObservationSet,
    PriorSpec,
    classify_progressor,
    make_virtual_patient,
    observe,
    read_cohort,
    sample_cohort,
    write_cohort,
)
from gliotwin.growth import observed_days_values
from oracles import tn_moment_numeric


class TestPrior:
    def test_default_table(self, prior):
        assert (prior.rho.mu, prior.rho.sigma, prior.rho.lower, prior.rho.upper) == (0.09, 0.15, 0.007, 0.25)
        assert (prior.K.mu, prior.K.sigma) == (1e11, 2e10)
        assert (prior.K.lower, prior.K.upper) == (9e10, 1.8e11)
        assert (prior.N_initial.mu, prior.N_initial.sigma) == (1.9e10, 1.2e10)
        assert (prior.N_initial.lower, prior.N_initial.upper) == (4.7e9, 4.7e10)
        assert (prior.alpha_RT.mu, prior.alpha_RT.sigma) == (0.05, 0.025)
        assert (prior.alpha_RT.lower, prior.alpha_RT.upper) == (0.001, 0.1)

    def test_round_trip(self, prior):
        assert PriorSpec.from_dict(prior.to_dict()) == prior


class TestSampleCohort:
    def test_draws_inside_bounds(self, prior):
        for theta in sample_cohort(prior, 100, seed=5):
            assert prior.contains(theta)

    def test_empirical_mean_matches_numeric_integration(self, prior):
        thetas = sample_cohort(prior, 100_000, seed=6)
        rho = np.array([t.rho for t in thetas])
        ref = tn_moment_numeric(0.09, 0.15, 0.007, 0.25)
        stderr = rho.std(ddof=1) / math.sqrt(len(rho))
        assert abs(rho.mean() - ref) < 3 * stderr

    def test_reproducible_per_seed(self, prior):
        a = sample_cohort(prior, 10, seed=42)
        b = sample_cohort(prior, 10, seed=42)
        assert all(x.as_array().tolist() == y.as_array().tolist() for x, y in zip(a, b))

    def test_prefix_stability(self, prior):
        # per-patient streams: the first k patients are unaffected by cohort size
        a = sample_cohort(prior, 5, seed=42)
        b = sample_cohort(prior, 10, seed=42)
        assert all(x.as_array().tolist() == y.as_array().tolist() for x, y in zip(a, b[:5]))

    def test_rejects_empty(self, prior):
        with pytest.raises(ValueError):
            sample_cohort(prior, 0, seed=1)


class TestObserve:
    def test_all_observations_nonnegative(self, case_study, fixed, soc, grid, obs_model):
        for seed in range(30):
            obs = observe(case_study[3], fixed, soc, obs_model, seed=seed, grid=grid)
            assert all(o >= 0 for _, o in obs.entries)

    def test_tiny_sigma_recovers_model_values(self, case_study, fixed, soc, grid):
        model = ObservationModel(sigma=1.0)
        obs = observe(case_study[2], fixed, soc, model, seed=0, grid=grid)
        clean = observed_days_values(case_study[2], fixed, soc, [0, 20, 27], grid)
        for (_, o), n in zip(obs.entries, clean):
            assert o == pytest.approx(n, rel=1e-8)

    def test_noise_mean_matches_numeric_integration(self, case_study, fixed, soc, grid):
        # repeated draws at one observation day vs the truncated-normal mean
        model = ObservationModel(sigma=2e9, schedule=(0,))
        clean = case_study[2].N_initial
        noise = np.array(
            [observe(case_study[2], fixed, soc, model, seed=s, grid=grid).value_at(0) - clean for s in range(10_000)]
        )
        ref = tn_moment_numeric(0.0, 2e9, -clean, np.inf)
        stderr = noise.std(ddof=1) / math.sqrt(len(noise))
        assert abs(noise.mean() - ref) < 3 * stderr

    def test_deterministic_per_seed(self, case_study, fixed, soc, grid, obs_model):
        a = observe(case_study[1], fixed, soc, obs_model, seed=9, grid=grid)
        b = observe(case_study[1], fixed, soc, obs_model, seed=9, grid=grid)
        assert a.entries == b.entries


class TestObservationSet:
    def test_rejects_decreasing_times(self):
        with pytest.raises(ValueError):
            ObservationSet(((20, 1e10), (0, 1e10)))

    def test_rejects_negative_values(self):
        with pytest.raises(ValueError):
            ObservationSet(((0, -1.0),))


class TestClassifyProgressor:
    def test_one_month_boundary_is_early(self):
        assert classify_progressor(30.0) == "early"

    def test_two_months_is_intermediate(self):
        assert classify_progressor(60.0) == "intermediate"

    def test_maximum_is_late(self):
        assert classify_progressor(132.0) == "late"

    def test_three_month_boundary_is_late(self):
        assert classify_progressor(90.0) == "late"

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            classify_progressor(-1.0)
        with pytest.raises(ValueError):
            classify_progressor(133.0)


class TestHiddenTruth:
    def test_oracle_truth_not_referenced_by_twin_code(self):
        # static guard: calibration/risk/optimizer/service never touch the oracle
        import gliotwin

        root = Path(gliotwin.__file__).parent
        guarded = ["calibration.py", "risk.py", "optimizer.py", "service/app.py", "service/schemas.py"]
        for rel in guarded:
            source = (root / rel).read_text()
            assert "theta_true" not in source, f"{rel} references the hidden ground truth"
            assert "oracle_theta_true" not in source

    def test_cohort_file_segregates_oracle_section(self, tmp_path, case_study, fixed, soc, grid, obs_model, prior):
        patient = make_virtual_patient("p0", case_study[1], fixed, soc, obs_model, seed=1, grid=grid)
        path = tmp_path / "cohort.json"
        write_cohort(path, [patient], prior, obs_model, seed=1)
        payload = path.read_text()
        loaded, *_ = read_cohort(path)
        assert '"oracle"' in payload
        assert loaded[0].oracle_theta_true().to_dict() == case_study[1].to_dict()
        assert loaded[0].observations.entries == patient.observations.entries
