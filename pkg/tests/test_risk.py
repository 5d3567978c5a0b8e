import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gliotwin.calibration import Diagnostics, PosteriorEnsemble
from gliotwin.growth import PatientParameters, TreatmentRegimen
from gliotwin.risk import (
    RiskConfig,
    TTPConfig,
    propagate,
    quantile,
    superquantile,
    superquantile_stderr,
    time_to_progression,
    ttp_superquantile,
)
from oracles import bootstrap_superquantile_stderr, tail_average_superquantile


def point_mass_ensemble(theta: PatientParameters) -> PosteriorEnsemble:
    diag = Diagnostics(
        r_hat={"rho": 1.0, "K": 1.0, "N_initial": 1.0, "alpha_RT": 1.0},
        ess={"rho": 1.0, "K": 1.0, "N_initial": 1.0, "alpha_RT": 1.0},
        acceptance=(1.0,),
        n_chains=2,
        n_samples_per_chain=1,
        burn_in=0,
        seed=0,
    )
    return PosteriorEnsemble(samples=np.tile(theta.as_array(), (4, 1)), diagnostics=diag)


class TestTTPConfig:
    def test_defaults(self):
        cfg = TTPConfig()
        assert (cfg.threshold_day, cfg.post_rt_day, cfg.horizon_day) == (20, 62, 152)
        assert cfg.max_ttp == 132.0

    def test_ordering_enforced(self):
        with pytest.raises(ValueError):
            TTPConfig(threshold_day=70, post_rt_day=62)


class TestRiskConfig:
    def test_tail_sample_floor(self):
        with pytest.raises(ValueError):
            RiskConfig(alpha=0.999, n_mc=1000)

    def test_alpha_range(self):
        with pytest.raises(ValueError):
            RiskConfig(alpha=1.0)


class TestTimeToProgression:
    def test_eradicating_regimen_hits_maximum(self, fixed, grid):
        theta = PatientParameters(rho=0.02, K=1e11, N_initial=1e10, alpha_RT=0.1)
        heavy = TreatmentRegimen(weekly_doses=(2.0, 10, 10, 10, 10, 10))
        assert time_to_progression(theta, fixed, heavy, TTPConfig(), grid) == 132.0

    def test_untreated_growth_crosses_at_first_scan_point(self, fixed, grid):
        # growing tumor with no treatment: first grid time past the RT window
        theta = PatientParameters(rho=0.09, K=1e11, N_initial=1.9e10, alpha_RT=0.05)
        ttp = time_to_progression(theta, fixed, None, TTPConfig(), grid)
        assert ttp == pytest.approx(42.2, abs=1e-12)

    def test_carrying_capacity_start_never_progresses(self, fixed, grid):
        theta = PatientParameters(rho=0.1, K=1e11, N_initial=1e11, alpha_RT=0.05)
        assert time_to_progression(theta, fixed, None, TTPConfig(), grid) == 132.0

    def test_monotone_in_dose(self, case_study, fixed, grid):
        cfg = TTPConfig()
        doses = [(2.0, 0, 0, 0, 0, 0), (2.0, 2, 2, 2, 2, 2), (2.0, 5, 5, 5, 5, 5), (2.0, 10, 10, 10, 10, 10)]
        for theta in case_study.values():
            ttps = [
                time_to_progression(theta, fixed, TreatmentRegimen(weekly_doses=d), cfg, grid) for d in doses
            ]
            assert all(a <= b + 1e-12 for a, b in zip(ttps, ttps[1:]))

    def test_values_are_grid_aligned(self, case_study, fixed, grid, soc):
        ttp = time_to_progression(case_study[3], fixed, soc, TTPConfig(), grid)
        assert 42.2 <= ttp <= 132.0
        assert (ttp * 5) == pytest.approx(round(ttp * 5), abs=1e-9)


class TestSuperquantile:
    def test_textbook_case(self):
        assert superquantile(np.arange(1.0, 101.0), 0.95) == 98.0
        assert quantile(np.arange(1.0, 101.0), 0.95) == 95.0

    def test_degenerate_distribution(self):
        values = np.full(50, 3.25)
        for alpha in (0.5, 0.8, 0.9):
            assert superquantile(values, alpha) == 3.25

    def test_dominates_quantile_and_mean(self):
        gen = np.random.default_rng(0)
        values = gen.normal(size=500)
        sq = superquantile(values, 0.9)
        assert sq >= quantile(values, 0.9)
        assert sq >= values.mean()

    def test_matches_tail_average_oracle_exactly_when_integral(self):
        gen = np.random.default_rng(1)
        for n in (100, 250, 1000):
            values = gen.exponential(size=n) * 40
            for alpha in (0.8, 0.9, 0.95):
                if abs((1 - alpha) * n - round((1 - alpha) * n)) < 1e-9:
                    oracle = tail_average_superquantile(values, alpha)
                    assert superquantile(values, alpha) == pytest.approx(oracle, rel=1e-12)

    def test_within_one_gap_otherwise(self):
        gen = np.random.default_rng(2)
        values = np.sort(gen.normal(size=103))
        alpha = 0.9
        est = superquantile(values, alpha)
        descending = values[::-1]
        k = int(np.ceil((1 - alpha) * len(values)))
        lo = descending[: k + 1].mean()
        hi = descending[:k].mean()
        gap = np.max(np.abs(np.diff(values)))
        assert lo - gap <= est <= hi + gap

    def test_insufficient_samples_rejected(self):
        with pytest.raises(ValueError):
            superquantile(np.array([1.0, 2.0]), 0.95)

    @given(
        data=st.lists(st.floats(-100, 100), min_size=20, max_size=200),
        shift=st.floats(-50, 50),
        scale=st.floats(0.01, 10),
        alpha=st.sampled_from([0.5, 0.8, 0.9]),
    )
    @settings(max_examples=80, deadline=None)
    def test_coherence_properties(self, data, shift, scale, alpha):
        values = np.array(data)
        base = superquantile(values, alpha)
        assert superquantile(values + shift, alpha) == pytest.approx(base + shift, rel=1e-9, abs=1e-9)
        assert superquantile(values * scale, alpha) == pytest.approx(base * scale, rel=1e-9, abs=1e-9)
        bumped = values.copy()
        bumped[0] += abs(shift)
        assert superquantile(bumped, alpha) >= base - 1e-12


class TestPropagate:
    def test_point_mass_gives_constant_qoi(self, case_study, fixed, grid, soc):
        ens = point_mass_ensemble(case_study[1])
        out = propagate(ens, fixed, soc, TTPConfig(), RiskConfig(alpha=0.5, n_mc=64), grid, seed=3)
        assert len(np.unique(out.values)) == 1

    def test_seed_reproducibility(self, small_ensemble, fixed, grid, soc):
        risk = RiskConfig(alpha=0.9, n_mc=300)
        a = propagate(small_ensemble, fixed, soc, TTPConfig(), risk, grid, seed=12)
        b = propagate(small_ensemble, fixed, soc, TTPConfig(), risk, grid, seed=12)
        assert np.array_equal(a.values, b.values)

    def test_two_seeds_agree_within_bootstrap_stderr(self, small_ensemble, fixed, grid, soc):
        risk = RiskConfig(alpha=0.95, n_mc=10_000)
        a = propagate(small_ensemble, fixed, soc, TTPConfig(), risk, grid, seed=1)
        b = propagate(small_ensemble, fixed, soc, TTPConfig(), risk, grid, seed=2)
        sq_a = superquantile(a.values, 0.95)
        sq_b = superquantile(b.values, 0.95)
        stderr = bootstrap_superquantile_stderr(
            a.values, 0.95, lambda v, al: float(np.sort(v)[int(np.ceil(al * len(v))) - 1 :].mean())
        )
        assert abs(sq_a - sq_b) < 3 * max(stderr, 1e-6) + 1e-9

    def test_qoi_range(self, small_ensemble, fixed, grid, soc):
        out = propagate(small_ensemble, fixed, soc, TTPConfig(), RiskConfig(alpha=0.9, n_mc=500), grid, seed=5)
        ttp = out.ttp_days()
        assert np.all(ttp >= 42.2 - 1e-9)
        assert np.all(ttp <= 132.0)

    def test_qoi_csv_dump(self, tmp_path, small_ensemble, fixed, grid, soc):
        out = propagate(small_ensemble, fixed, soc, TTPConfig(), RiskConfig(alpha=0.9, n_mc=200), grid, seed=5)
        path = tmp_path / "qoi.csv"
        out.write_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "sample_index,ttp_days"
        assert len(lines) == 201


class TestTTPSuperquantile:
    def test_point_mass_eradicated(self, fixed, grid):
        theta = PatientParameters(rho=0.02, K=1e11, N_initial=1e10, alpha_RT=0.1)
        heavy = TreatmentRegimen(weekly_doses=(2.0, 10, 10, 10, 10, 10))
        ens = point_mass_ensemble(theta)
        value = ttp_superquantile(ens, fixed, heavy, TTPConfig(), RiskConfig(alpha=0.5, n_mc=50), grid, seed=1)
        assert value == 132.0

    def test_range_bound_under_zero_dose(self, small_ensemble, fixed, grid):
        value = ttp_superquantile(
            small_ensemble, fixed, None, TTPConfig(), RiskConfig(alpha=0.95, n_mc=1000), grid, seed=1
        )
        assert 0.2 <= value <= 132.0

    def test_dominance_on_frozen_set(self, small_ensemble, fixed, grid):
        # elementwise-larger regimen never decreases tail TTP on the same draws
        from gliotwin.risk import draw_theta_matrix, ttp_batch

        matrix = draw_theta_matrix(small_ensemble, 400, seed=9)
        low = TreatmentRegimen(weekly_doses=(2.0, 1, 1, 1, 1, 1))
        high = TreatmentRegimen(weekly_doses=(2.0, 4, 4, 4, 4, 4))
        cfg = TTPConfig()
        t_low = ttp_batch(matrix[:, 0], matrix[:, 1], matrix[:, 2], matrix[:, 3], fixed, low, cfg, grid)
        t_high = ttp_batch(matrix[:, 0], matrix[:, 1], matrix[:, 2], matrix[:, 3], fixed, high, cfg, grid)
        assert np.all(t_low <= t_high + 1e-12)
        assert -superquantile(-t_low, 0.95) <= -superquantile(-t_high, 0.95) + 1e-12

    def test_alpha_monotonicity(self, small_ensemble, fixed, grid, soc):
        samples = propagate(
            small_ensemble, fixed, soc, TTPConfig(), RiskConfig(alpha=0.95, n_mc=2000), grid, seed=4
        )
        ttp_95 = -superquantile(samples.values, 0.95)
        ttp_50 = -superquantile(samples.values, 0.5)
        assert ttp_95 <= ttp_50


def test_superquantile_stderr_positive(small_ensemble, fixed, grid, soc):
    samples = propagate(small_ensemble, fixed, soc, TTPConfig(), RiskConfig(alpha=0.9, n_mc=500), grid, seed=8)
    se = superquantile_stderr(samples.values, 0.9, n_boot=100, seed=1)
    assert se >= 0.0
