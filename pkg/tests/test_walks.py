from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

import oracles
from conftest import syllables_to_letters, to_element
from endlab.convolution import convolution_sequence, convolve_tables, exact_convolution, total_variation
from endlab.errors import BudgetExceeded, PreconditionError, SpecificationError
from endlab.estimators import (batch_means, drift_estimate, entropy_estimate, growth_rate_estimate,
                               guivarch_check, EstimateWithError, tracking_diagnostic)
from endlab.walks import StepDistribution, sample_trajectory, simulate


@pytest.fixture(scope="module")
def delta_a(f2):
    return StepDistribution.from_words(f2, [("a", 1)], strict=False)


def test_point_mass_walk_is_deterministic(f2, delta_a):
    traj = sample_trajectory(delta_a, 5, seed=9)
    assert [str(g) for g in traj.positions] == ["1", "a", "a^2", "a^3", "a^4", "a^5"]


def test_non_admissible_measure_rejected(f2):
    with pytest.raises(SpecificationError) as info:
        StepDistribution.from_words(f2, [("a", 1)])
    assert "b" in info.value.violations[0]
    cert = StepDistribution.from_words(f2, [("a", 1)], strict=False).certificate
    assert not cert.admissible and "b" in cert.missing


def test_admissibility_through_products(f2):
    # a^-1 and b^-1 are only reached as products of support elements
    measure = StepDistribution.from_words(f2, [("a", "1/3"), ("b", "1/3"), ("a^-1 b^-1", "1/3")])
    assert measure.admissible and measure.certificate.depth >= 2


def test_probabilities_validated(f2):
    with pytest.raises(SpecificationError):
        StepDistribution.from_words(f2, [("a", 0.5), ("b", 0.4), ("a^-1", 0.05)])
    with pytest.raises(SpecificationError):
        StepDistribution.from_words(f2, [("a", -0.5), ("b", 1.5)])


def test_trajectory_reproducible(f2):
    measure = StepDistribution.simple_random_walk(f2)
    t1 = sample_trajectory(measure, 10_000, seed=3, walk_index=2)
    t2 = sample_trajectory(measure, 10_000, seed=3, walk_index=2)
    assert t1.positions == t2.positions
    assert t1.positions != sample_trajectory(measure, 10_000, seed=3, walk_index=3).positions
    for n in (0, 17, 9999):
        assert t1.positions[n + 1] == t1.positions[n] * measure.elements[t1.increments[n]]


def test_first_step_uniform(f2):
    measure = StepDistribution.simple_random_walk(f2)
    batch = simulate(measure, 1, 11, 100_000, key_steps=[1])
    keys = [str(f2.element(k)) for k in batch.keys[1]]
    labels = [str(g) for g in measure.elements]
    counts = np.array([keys.count(s) for s in labels])
    assert counts.sum() == 100_000
    sd = math.sqrt(100_000 * 0.25 * 0.75)
    assert np.all(np.abs(counts - 25_000) <= 3 * sd)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_batch_engine_matches_scalar_path(z2z):
    measure = StepDistribution.simple_random_walk(z2z)
    batch = simulate(measure, 300, 5, 40, checkpoints=[50, 150], key_steps=[300])
    for i in (0, 7, 39):
        traj = sample_trajectory(measure, 300, 5, walk_index=i)
        assert z2z.element(batch.keys[300][i]) == traj.end
        assert batch.lengths[i, batch.column(150)] == traj.positions[150].length


def test_worker_count_does_not_change_results(f2):
    measure = StepDistribution.simple_random_walk(f2)
    a = simulate(measure, 200, 4, 600, checkpoints=[50, 100], tracking_radius=2, workers=1, chunk=128)
    b = simulate(measure, 200, 4, 600, checkpoints=[50, 100], tracking_radius=2, workers=3, chunk=97)
    for name in ("lengths", "projections", "tracking"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_convolution_small_cases(f2):
    measure = StepDistribution.simple_random_walk(f2)
    t1 = exact_convolution(measure, 1)
    assert {str(g): p for g, p in t1.masses.items()} == {"a": 0.25, "a^-1": 0.25, "b": 0.25, "b^-1": 0.25}
    t2 = exact_convolution(measure, 2)
    # 16 equally likely increment pairs: 4 cancel, 1 gives ab
    assert t2.mass(f2.identity) == pytest.approx(4 / 16, abs=1e-15)
    assert t2.mass(f2.parse("a b")) == pytest.approx(1 / 16, abs=1e-15)


@pytest.mark.parametrize("name,n", [("f2", 6), ("z3z3", 7), ("z2z", 4)])
def test_convolution_matches_brute_force(name, n, request):
    spec = request.getfixturevalue(name)
    oracle = request.getfixturevalue(f"oracle_{name}")
    measure = StepDistribution.simple_random_walk(spec)
    letters = oracle.letters
    step = {x: 1 / len(letters) for x in letters}
    brute = oracles.brute_force_convolution(oracle, step, n)
    conv = lambda w: syllables_to_letters(w) if name == "z2z" else w
    expected = {to_element(spec, conv(w)): p for w, p in brute.items()}
    table = exact_convolution(measure, n)
    got = table.masses
    assert set(got) == set(expected)
    assert max(abs(got[g] - expected[g]) for g in got) < 1e-14
    assert abs(table.total() - 1) < 1e-9 * n
    assert table.entropy() == pytest.approx(oracles.entropy(brute), abs=1e-12)
    assert all(g.length <= n * measure.max_step_length for g in got)


def test_convolution_semigroup_and_subadditivity(z3z3):
    measure = StepDistribution.simple_random_walk(z3z3)
    seq, kept = convolution_sequence(measure, 9, keep={4, 5, 9})
    lhs = kept[9].masses
    rhs = convolve_tables(kept[4].masses, kept[5].masses)
    assert total_variation(lhs, rhs) <= 1e-8
    entropies, mean_lens = seq.entropies, seq.mean_lengths
    for n in range(1, 5):
        for m in range(1, 10 - n):
            assert entropies[n + m] <= entropies[n] + entropies[m] + 1e-12
            assert mean_lens[n + m] <= mean_lens[n] + mean_lens[m] + 1e-12


def test_convolution_budget_names_feasible_n(f2):
    measure = StepDistribution.simple_random_walk(f2)
    with pytest.raises(BudgetExceeded) as info:
        exact_convolution(measure, 8, budget=2000)
    assert info.value.feasible == 6  # 1 + 4 + ... + 4*3^5 = 1457 <= 2000 < 4373


def test_point_mass_estimates(delta_a):
    d = drift_estimate(delta_a, 50, 10, seed=1)
    assert d.value == 1.0 and d.stderr == 0.0
    entropy = entropy_estimate(delta_a, 10, 5, 4, seed=1)
    assert entropy.value == 0.0
    table = tracking_diagnostic(delta_a, 40, 3, seed=1, checkpoints=[5, 10, 20])
    assert all(r.tracking == 0.0 for r in table.rows)


def test_drift_z3z3_matches_length_chain(z3z3):
    # word length: up 1/2 (other factor), stay 1/4 (same factor, new element), down 1/4 (cancel)
    measure = StepDistribution.simple_random_walk(z3z3)
    est = drift_estimate(measure, 2000, 10_000, seed=17)
    exact = oracles.birth_death_mean(2000, 0.5, 0.25, 0.25) / 2000
    assert abs(est.value - exact) <= 3 * est.stderr
    assert 0 <= est.value <= measure.max_step_length


def test_drift_reports_subadditive_bounds(f2):
    measure = StepDistribution.simple_random_walk(f2)
    est = drift_estimate(measure, 100, 200, seed=2, exact_depth=6)
    ub = est.extras["upper_bounds"]
    exact = [oracles.birth_death_mean(n, 0.75, 0.25) / n for n in range(1, 7)]
    assert ub == pytest.approx(exact, abs=1e-12)


def test_entropy_z3z3_estimators_reconcile(z3z3):
    measure = StepDistribution.simple_random_walk(z3z3)
    entropy = entropy_estimate(measure, 12, 5000, 12, seed=8)
    ex = entropy.extras
    # the sampled mean of minus the log table mass, per step, estimates the exact entropy rate of the n-th power, which brackets the entropy from above
    assert abs(ex["smb"] - ex["exact_rate"]) <= 3 * ex["smb_stderr"]
    assert ex["smb_consistent"]
    assert entropy.value <= ex["exact_rate"] + 3 * ex["smb_stderr"]
    assert all(d >= -1e-12 for d in ex["differences"])
    assert entropy.value >= 0


def test_growth_rates(f2, z3z3):
    g = growth_rate_estimate(f2, 14)
    assert abs(g.value - math.log(3)) < 1e-6
    assert abs(growth_rate_estimate(z3z3, 14).value - math.log(2)) < 1e-6


def test_growth_z2z_stable_and_above_log3(z2z, oracle_z2z):
    a = growth_rate_estimate(z2z, 14)
    b = growth_rate_estimate(z2z, 14, n_min=8)
    assert abs(a.value - b.value) / b.value < 0.02
    counts = oracles.sphere_sizes(oracle_z2z, 7)
    assert z2z.sphere_counts(7) == counts
    # BFS counts grow like (2 + sqrt 5)^n, so the rate lies above log 3, not between log 2 and log 3
    assert a.value == pytest.approx(math.log(2 + math.sqrt(5)), rel=1e-3)
    assert a.value > math.log(3)


def test_guivarch_check_arithmetic():
    entropy = EstimateWithError(0.5, 0.01, 10, "t")
    drift = EstimateWithError(0.5, 0.001, 10, "t")
    growth = EstimateWithError(math.log(3), 0.0, 1, "t")
    assert guivarch_check(entropy, drift, growth).passed
    assert not guivarch_check(EstimateWithError(0.7, 0.01, 10, "t"), drift, growth).passed


def test_estimate_rejects_bad_inputs(f2):
    measure = StepDistribution.simple_random_walk(f2)
    with pytest.raises(PreconditionError):
        entropy_estimate(measure, 10, 10, 1, seed=0)
    with pytest.raises(PreconditionError):
        tracking_diagnostic(measure, 100, 10, seed=0, checkpoints=[80])


def test_batch_means_constant_series():
    assert batch_means(np.full(100, 2.5)) == (2.5, 0.0)
