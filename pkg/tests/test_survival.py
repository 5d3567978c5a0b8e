import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gliotwin.risk import QoISamples
from gliotwin.survival import (
    SurvivalEntry,
    SurvivalInput,
    kaplan_meier,
    logrank,
    survival_variance_band,
)
from oracles import chi2_sf_1dof, logrank_statistic_by_hand, permutation_logrank_pvalue


def make_input(ttps):
    return SurvivalInput.from_ttps([(f"p{i}", t) for i, t in enumerate(ttps)])


class TestSurvivalInput:
    def test_censoring_is_tied_to_maximum(self):
        with pytest.raises(ValueError):
            SurvivalInput((SurvivalEntry("a", 100.0, True),))
        with pytest.raises(ValueError):
            SurvivalInput((SurvivalEntry("a", 132.0, False),))

    def test_range(self):
        with pytest.raises(ValueError):
            SurvivalInput((SurvivalEntry("a", 0.0, False),))
        with pytest.raises(ValueError):
            SurvivalInput((SurvivalEntry("a", 140.0, False),))


class TestKaplanMeier:
    def test_all_censored_stays_at_one(self):
        curve = kaplan_meier(make_input([132.0, 132.0, 132.0]))
        assert np.all(curve.probabilities == 1.0)

    def test_four_subject_hand_example(self):
        curve = kaplan_meier(make_input([10.0, 20.0, 132.0, 132.0]))
        assert curve.probability_at(10.0) == pytest.approx(0.75, abs=1e-12)
        assert curve.probability_at(20.0) == pytest.approx(0.5, abs=1e-12)
        assert curve.probability_at(131.0) == pytest.approx(0.5, abs=1e-12)

    def test_tied_events_step_once(self):
        curve = kaplan_meier(make_input([10.0, 10.0, 132.0, 132.0]))
        assert len(curve.times) == 2  # t=0 and the tied event time
        assert curve.probability_at(10.0) == pytest.approx(0.5, abs=1e-12)

    def test_starts_at_one_and_never_increases(self):
        curve = kaplan_meier(make_input([50.0, 60.0, 70.0, 132.0]))
        assert curve.probabilities[0] == 1.0
        assert np.all(np.diff(curve.probabilities) <= 0)

    def test_final_value_positive_iff_largest_time_censored(self):
        censored_last = kaplan_meier(make_input([50.0, 132.0]))
        assert censored_last.probabilities[-1] > 0
        event_last = kaplan_meier(make_input([50.0, 60.0]))
        assert event_last.probabilities[-1] == 0.0

    @given(st.lists(st.sampled_from([44.0, 50.0, 77.0, 90.0, 132.0]), min_size=1, max_size=12))
    @settings(max_examples=60, deadline=None)
    def test_step_count_bounded_by_subjects(self, ttps):
        curve = kaplan_meier(make_input(ttps))
        assert len(curve.times) <= len(ttps) + 1
        assert np.all((curve.probabilities >= 0) & (curve.probabilities <= 1))


class TestVarianceBand:
    def _samples(self, ttp_values):
        return QoISamples(values=-np.asarray(ttp_values, dtype=float), n_mc=len(ttp_values), seed=0)

    def test_point_mass_gives_zero_band(self):
        per_patient = [self._samples([60.0] * 50), self._samples([90.0] * 50)]
        curve = survival_variance_band(per_patient, alpha=0.8, n_boot=30, seed=1)
        assert np.all(curve.band_std == 0.0)

    def test_single_replicate_band_is_degenerate(self):
        per_patient = [self._samples([60.0] * 50), self._samples([90.0] * 50)]
        curve = survival_variance_band(per_patient, alpha=0.8, n_boot=1, seed=1)
        assert np.all(curve.band_std == 0.0)

    def test_band_shrinks_with_sample_size(self):
        def cohort(n_mc):
            gen = np.random.default_rng(5)
            return [
                self._samples(np.clip(gen.normal(70 + 10 * i, 15, size=n_mc), 43, 132))
                for i in range(6)
            ]

        fine = np.arange(0.0, 132.5, 0.25)
        small = survival_variance_band(cohort(250), alpha=0.9, n_boot=150, seed=2, times=fine)
        large = survival_variance_band(cohort(1000), alpha=0.9, n_boot=150, seed=2, times=fine)
        width_small = np.trapezoid(small.band_std, small.times)
        width_large = np.trapezoid(large.band_std, large.times)
        ratio = width_small / width_large
        assert 1.3 < ratio < 3.2  # ~2 expected for a 4x sample-count increase

    def test_curve_csv(self, tmp_path):
        per_patient = [self._samples([60.0] * 50), self._samples([132.0] * 50)]
        curve = survival_variance_band(per_patient, alpha=0.8, n_boot=10, seed=3)
        path = tmp_path / "curve.csv"
        curve.write_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "t_days,survival_prob,band_lo,band_hi"


class TestLogrank:
    def test_identical_groups(self):
        group = make_input([50.0, 70.0, 132.0])
        stat, p = logrank(group, group)
        assert stat == 0.0
        assert p == 1.0

    def test_all_censored_both_groups(self):
        a = make_input([132.0, 132.0])
        b = make_input([132.0, 132.0, 132.0])
        assert logrank(a, b) == (0.0, 1.0)

    def test_six_subject_hand_example(self):
        # group A: events at 1 and 3, censored-at-max third subject
        # group B: events at 2, 4, 6
        a_times, a_cens = [1.0, 3.0, 132.0], [False, False, True]
        b_times, b_cens = [2.0, 4.0, 6.0], [False, False, False]
        a = SurvivalInput(tuple(SurvivalEntry(f"a{i}", t, c) for i, (t, c) in enumerate(zip(a_times, a_cens))))
        b = SurvivalInput(tuple(SurvivalEntry(f"b{i}", t, c) for i, (t, c) in enumerate(zip(b_times, b_cens))))
        stat, p = logrank(a, b)
        # censored-at-max subject stays in the risk set through every event:
        # O_A = 2, E_A = 1/2 + 2/5 + 1/2 + 1/3 + 1/2 = 67/30,
        # V = 1/4 + 6/25 + 1/4 + 2/9 + 1/4 = 1091/900
        expected_stat = (2.0 - 67.0 / 30.0) ** 2 / (1091.0 / 900.0)
        assert stat == pytest.approx(expected_stat, abs=1e-10)
        assert expected_stat == pytest.approx(49.0 / 1091.0, abs=1e-12)
        assert stat == pytest.approx(logrank_statistic_by_hand(a_times, a_cens, b_times, b_cens), abs=1e-12)
        assert p == pytest.approx(chi2_sf_1dof(expected_stat), abs=1e-10)

    def test_symmetry(self):
        a = make_input([44.0, 70.0, 132.0])
        b = make_input([50.0, 55.0, 90.0, 132.0])
        stat_ab, p_ab = logrank(a, b)
        stat_ba, p_ba = logrank(b, a)
        assert stat_ab == pytest.approx(stat_ba, abs=1e-12)
        assert p_ab == pytest.approx(p_ba, abs=1e-12)

    def test_agrees_with_exhaustive_permutation_on_small_cohorts(self):
        cases = [
            ([44.0, 50.0, 70.0], [60.0, 80.0, 132.0]),
            ([44.0, 46.0, 48.0, 50.0], [70.0, 90.0, 110.0, 132.0]),
            ([50.0, 132.0, 132.0], [60.0, 70.0, 80.0, 90.0]),
        ]
        for ttps_a, ttps_b in cases:
            a, b = make_input(ttps_a), make_input(ttps_b)
            _, p_chi2 = logrank(a, b)
            p_perm = permutation_logrank_pvalue(
                ttps_a, [t == 132.0 for t in ttps_a], ttps_b, [t == 132.0 for t in ttps_b]
            )
            assert abs(p_chi2 - p_perm) < 0.1

    def test_empty_group_rejected(self):
        with pytest.raises(ValueError):
            logrank(make_input([50.0]), SurvivalInput(()))


def test_chi2_tail_against_continued_fraction_oracle():
    from scipy.stats import chi2

    for x in np.linspace(0.01, 30.0, 40):
        assert chi2.sf(x, df=1) == pytest.approx(chi2_sf_1dof(x), abs=1e-10)
