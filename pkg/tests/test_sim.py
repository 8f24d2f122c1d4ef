from fractions import Fraction

import pytest
from scipy.stats import chisquare

from codedpir import analysis, derive_params
from codedpir import sim
from codedpir.sim import exact_expectation_by_enumeration, run_trials, sweep


class TestRunTrials:
    def test_deterministic(self):
        params = derive_params(5, 3, 3, 257)
        a = run_trials(params, 200, seed=42)
        b = run_trials(params, 200, seed=42)
        assert a == b

    def test_seed_changes_outcome(self):
        params = derive_params(5, 3, 3, 257)
        assert run_trials(params, 200, seed=1) != run_trials(params, 200, seed=2)

    def test_single_trial(self):
        params = derive_params(4, 2, 2, 257)
        stats = run_trials(params, 1, seed=0)
        assert stats.trials == 1
        assert stats.total_download == sum(stats.per_server_load)

    def test_uniform_theta_policy(self):
        params = derive_params(3, 2, 3, 257)
        stats = run_trials(params, 300, seed=5, theta_policy="uniform")
        assert stats.trials == 300

    def test_bad_args(self):
        params = derive_params(3, 2, 2, 257)
        with pytest.raises(ValueError):
            run_trials(params, 0, seed=0)
        with pytest.raises(ValueError):
            run_trials(params, 1, seed=0, theta_policy="nope")

    def test_per_server_load_symmetry(self):
        # expected load is identical across servers; chi-square on totals
        params = derive_params(5, 3, 3, 257)
        stats = run_trials(params, 5000, seed=7)
        assert chisquare(stats.per_server_load).pvalue >= 0.01

    def test_mean_approaches_formula(self):
        params = derive_params(5, 3, 3, 257)
        stats = run_trials(params, 20_000, seed=11)
        exact = analysis.expected_download(params)
        assert abs(stats.mean_download / exact - 1) < Fraction(1, 50)


class TestEnumeration:
    def test_tiny(self):
        params = derive_params(2, 1, 2, 257)
        assert exact_expectation_by_enumeration(params) == Fraction(3, 2)

    def test_three_two_two(self):
        params = derive_params(3, 2, 2, 257)
        assert exact_expectation_by_enumeration(params) == analysis.expected_download(params)

    def test_five_three_two(self):
        params = derive_params(5, 3, 2, 257)
        value = exact_expectation_by_enumeration(params)
        assert value == Fraction(48, 5)
        assert value == analysis.expected_download(params)

    def test_theta_invariance(self):
        params = derive_params(3, 2, 2, 257)
        assert exact_expectation_by_enumeration(params, theta=0) == \
            exact_expectation_by_enumeration(params, theta=1)

    def test_budget(self):
        params = derive_params(5, 3, 3, 7)
        with pytest.raises(analysis.BudgetExceededError):
            exact_expectation_by_enumeration(params, budget=10)


class TestSweep:
    def test_single_point(self):
        rows = sweep([(5, 3, 3)], trials=0, seed=0)
        (row,) = rows
        assert row["L"] == 6
        assert row["capacity"] == Fraction(25, 49)
        assert row["exact_download"] == Fraction(294, 25)
        assert row["bound"] == 6 and row["tight"]
        assert row["L_prev_best"] == 3 * 25
        assert row["L_original"] == 3 * 125

    def test_empty_grid(self):
        assert sweep([], trials=0, seed=0) == []

    def test_invalid_point_recorded(self):
        rows = sweep([(3, 3, 2), (5, 3, 3)], trials=0, seed=0)
        assert "error" in rows[0]
        assert rows[1]["L"] == 6

    def test_with_trials(self):
        rows = sweep([(4, 2, 2)], trials=100, seed=3)
        assert rows[0]["mean_download"] is not None
        assert rows[0]["empirical_rate"] is not None

    def test_csv_and_json(self):
        rows = sweep([(5, 3, 3), (3, 3, 2)], trials=0, seed=0)
        csv_text = sim.rows_to_csv(rows)
        lines = csv_text.strip().splitlines()
        assert lines[0] == ",".join(sim.CSV_COLUMNS)
        assert len(lines) == 2  # error row skipped in CSV
        assert "25/49" in lines[1]
        json_text = sim.rows_to_json(rows)
        assert "error" in json_text
