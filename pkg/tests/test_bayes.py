import os

import numpy as np
import pytest

import driftmc_absorb
import driftmc_bayes
from driftmc_bayes import ChainSchedule, Observation
from driftmc_grid import StateRoles
from driftmc_ulam import TransitionMatrix
from driftmc_util import DriftConfigError, DriftNumericalError

import oracles
from conftest import SAMPLE_DIR

CRASH = '2014-03-08'


def corridor_schedule():
    P = TransitionMatrix([[0, 1, 0], [0, 0, 1], [0, 0, 1]], 5.0, 'pooled')
    roles = StateRoles(3, sticky={2: 0.5}, debris=[(2, 1)])
    return ChainSchedule.constant(driftmc_absorb.augment(P, roles))

def seasonal_schedule(rng, T=30.0, n=3, crash_date=CRASH):
    roles = StateRoles(n, range(n), {0: 0.3, 2: 0.6}, [(2, 1), (0, 2)],
            range(n))
    chains = {}
    for season in ('W', 'S', 'SF'):
        P = TransitionMatrix(oracles.random_substochastic(rng, n,
            density=1.0), T, season)
        chains[season] = driftmc_absorb.augment(P, roles)
    return ChainSchedule.seasonal(chains, crash_date)

def oracle_pmfs(schedule, K):
    mats = schedule.chains_for(K)
    n = schedule.n_transient
    targets = [n + m for m in range(1, schedule.n_targets + 1)]
    pmfs = []
    for c in range(n):
        cdf = oracles.path_sum_cdfs(mats, c, targets, K)
        pmfs.append(np.diff(cdf, axis=0, prepend=0.0))
    return np.array(pmfs)

def random_instance(rng):
    """Seasonal chain of at most six states (transient, cemetery, targets)"""
    n = int(rng.integers(2, 4))
    sticky = rng.choice(n, size=2 if n == 3 else 1, replace=False)
    debris = [(int(s), m + 1) for m, s in enumerate(sticky)]
    roles = StateRoles(n, range(n), {int(s): float(rng.uniform(0.1, 0.9))
        for s in sticky}, debris, range(n))
    chains = {}
    for season in ('W', 'S', 'SF'):
        P = TransitionMatrix(oracles.random_substochastic(rng, n,
            density=1.0), 30.0, season)
        chains[season] = driftmc_absorb.augment(P, roles)
    return ChainSchedule.seasonal(chains, CRASH)

def test_pmf_from_cdf():
    pmf = driftmc_bayes.first_absorption_pmf([0.0, 0.2, 0.5, 0.5])
    assert np.allclose(pmf, [0.0, 0.2, 0.3, 0.0])

def test_pmf_rejects_bad_cdf():
    with pytest.raises(DriftNumericalError):
        driftmc_bayes.first_absorption_pmf([0.0, 0.5, 0.4])
    with pytest.raises(DriftNumericalError):
        driftmc_bayes.first_absorption_pmf([0.1, 0.5])

def test_corridor_cdf_and_sticky_surface():
    schedule = corridor_schedule()
    cdf = driftmc_bayes.absorption_cdf(schedule, 0, 1, 4)
    assert np.allclose(cdf, [0, 0, 0, 0.5, 0.75])

    states, surface = driftmc_bayes.sticky_fit_map(schedule, 0, 4)
    assert list(states) == [2]
    assert np.allclose(surface[0], [0, 0, 0.5, 0.25])

def test_bad_candidate_and_target():
    schedule = corridor_schedule()
    with pytest.raises(DriftConfigError):
        driftmc_bayes.absorption_cdfs(schedule, 3, 4)
    with pytest.raises(DriftConfigError):
        driftmc_bayes.absorption_cdf(schedule, 0, 2, 4)

def test_season_schedule():
    schedule = seasonal_schedule(np.random.default_rng(1))
    assert schedule.seasons(6) == ['W', 'SF', 'SF', 'SF', 'S', 'S']
    chains = schedule.chains_for(6)
    assert chains[0] is schedule.chains['W']
    assert chains[5] is schedule.chains['S']

def test_schedule_needs_every_season(rng):
    schedule = seasonal_schedule(rng)
    with pytest.raises(DriftConfigError):
        ChainSchedule.seasonal({'W': schedule.chains['W']}, CRASH)

def test_cdfs_match_path_enumeration(rng):
    schedule = seasonal_schedule(rng)
    K = 6
    expected = oracle_pmfs(schedule, K)
    for c in range(3):
        cdf = driftmc_bayes.absorption_cdfs(schedule, c, K)
        pmf = driftmc_bayes.first_absorption_pmf(cdf)
        assert np.allclose(pmf, expected[c], atol=1e-14)

def test_posterior_matches_enumeration(rng):
    schedule = seasonal_schedule(rng)
    K = 6
    observations = [Observation(1, 90.0, 'a', 3), Observation(2, 150.0,
        'b', 5)]
    pmfs = np.array([driftmc_bayes.first_absorption_pmf(
        driftmc_bayes.absorption_cdfs(schedule, c, K)) for c in range(3)])
    logL = driftmc_bayes.joint_likelihood(pmfs, observations)
    result = driftmc_bayes.posterior(logL)

    expected = oracle_pmfs(schedule, K)
    weight = expected[:, 3, 0] * expected[:, 5, 1]
    assert np.allclose(result.posterior, weight / weight.sum(), atol=1e-12)
    assert result.posterior.sum() == pytest.approx(1.0)

def test_posterior_matches_enumeration_on_random_chains():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        schedule = random_instance(rng)
        K = int(rng.integers(3, 7))
        observations = [Observation(b, 0.0, '', int(rng.integers(2, K + 1)))
                for b in range(1, schedule.n_targets + 1)]

        pmfs = np.array([driftmc_bayes.first_absorption_pmf(
            driftmc_bayes.absorption_cdfs(schedule, c, K))
            for c in range(schedule.n_transient)])
        result = driftmc_bayes.posterior(
                driftmc_bayes.joint_likelihood(pmfs, observations))

        expected = oracle_pmfs(schedule, K)
        weight = np.prod([expected[:, o.steps, o.target - 1]
            for o in observations], axis=0)
        assert np.allclose(result.posterior, weight / weight.sum(),
                rtol=0, atol=1e-12), seed

def test_season_order_matters(rng):
    schedule = seasonal_schedule(rng)
    swapped = ChainSchedule.seasonal({'W': schedule.chains['S'],
        'S': schedule.chains['W'], 'SF': schedule.chains['SF']}, CRASH)
    observations = [Observation(1, 120.0, '', 4), Observation(2, 150.0,
        '', 5)]

    def post(sched):
        pmfs = np.array([driftmc_bayes.first_absorption_pmf(
            driftmc_bayes.absorption_cdfs(sched, c, 6)) for c in range(3)])
        return driftmc_bayes.posterior(
                driftmc_bayes.joint_likelihood(pmfs, observations)).posterior

    assert not np.allclose(post(schedule), post(swapped), atol=1e-6)

def test_posterior_normalizes_likelihood():
    result = driftmc_bayes.posterior(np.log([0.1, 0.2, 0.3, 0.4]))
    assert np.allclose(result.posterior, [0.1, 0.2, 0.3, 0.4])
    assert result.c_max_index == 3

def test_posterior_with_prior_and_impossible_candidate():
    with np.errstate(divide='ignore'):
        logL = np.log([0.5, 0.0, 0.5])
    result = driftmc_bayes.posterior(logL, prior=[1.0, 1.0, 3.0])
    assert np.allclose(result.posterior, [0.25, 0.0, 0.75])

def test_zero_evidence():
    with pytest.raises(DriftNumericalError):
        driftmc_bayes.posterior(np.full(3, -np.inf))
    with pytest.raises(DriftConfigError):
        driftmc_bayes.posterior(np.zeros(3), prior=[0.0, 0.0, 0.0])

def test_central_interval():
    post = np.array([0.01, 0.02, 0.9, 0.05, 0.02])
    result = driftmc_bayes.posterior(np.log(post), level=0.95,
            lats=np.arange(5.0))
    assert result.cpi == (1.0, 3.0)
    assert result.c_max_index == 2

def test_tie_goes_to_first_candidate():
    result = driftmc_bayes.posterior(np.array([0.0, 1.0, 1.0, 0.0]),
            candidates=[10, 11, 12, 13])
    assert result.c_max == 11

def test_single_and_joint_likelihoods():
    pmfs = np.zeros((2, 5, 2))
    pmfs[0, 2, 0] = 0.5
    pmfs[0, 3, 1] = 0.25
    pmfs[1, 3, 0] = 0.4
    pmfs[1, 3, 1] = 0.1
    observations = [Observation(1, 10.0, '', 2), Observation(2, 15.0, '', 3)]

    single = driftmc_bayes.single_likelihoods(pmfs, observations)
    assert single[0, 0] == pytest.approx(np.log(0.5))
    assert single[1, 0] == -np.inf

    joint = driftmc_bayes.joint_likelihood(pmfs, observations)
    assert joint[0] == pytest.approx(np.log(0.125))
    assert joint[1] == -np.inf

    windowed = driftmc_bayes.joint_likelihood(pmfs, observations, window=1)
    assert windowed[1] == pytest.approx(np.log(0.4 * 0.1))

    excluded = driftmc_bayes.joint_likelihood(pmfs, observations,
            exclude=[1])
    assert np.allclose(excluded, np.log([0.25, 0.1]))
    with pytest.raises(DriftConfigError):
        driftmc_bayes.joint_likelihood(pmfs, observations, exclude=[1, 2])

def test_unobserved_target_is_nan():
    pmfs = np.full((1, 3, 2), 0.1)
    single = driftmc_bayes.single_likelihoods(pmfs,
            [Observation(2, 5.0, '', 1)])
    assert np.isnan(single[0, 0])

def test_observation_beyond_horizon():
    with pytest.raises(DriftConfigError):
        driftmc_bayes.single_likelihoods(np.zeros((1, 3, 1)),
                [Observation(1, 20.0, '', 4)])

def test_load_sample_observations():
    roles = StateRoles(1, sticky={0: 0.5},
            debris=[(0, m) for m in range(1, 9)])
    observations = driftmc_bayes.load_observations(
            os.path.join(SAMPLE_DIR, 'table1_observations.csv'), 5.0, roles)
    assert [o.steps for o in observations] == \
            [102, 131, 132, 144, 151, 162, 165, 168]
    assert observations[0].name == 'Reunion'
    assert observations[-1].days == 838.0

def test_load_observations_rejects(write_file):
    dup = write_file('dup.csv', "target_label,days_since_crash,name\n"
            "1,100,a\n1,200,b\n")
    with pytest.raises(DriftConfigError):
        driftmc_bayes.load_observations(dup, 5.0)

    neg = write_file('neg.csv', "target_label,days_since_crash\n1,-3\n")
    with pytest.raises(DriftConfigError):
        driftmc_bayes.load_observations(neg, 5.0)

    roles = StateRoles(1, sticky={0: 0.5}, debris=[(0, 1)])
    unknown = write_file('unknown.csv', "target_label,days_since_crash\n"
            "2,100\n")
    with pytest.raises(DriftConfigError):
        driftmc_bayes.load_observations(unknown, 5.0, roles)

def test_load_prior(write_file, square_grid):
    path = write_file('prior.csv', "0,0,1\n1,0,3\n3,3,5\n")
    prior = driftmc_bayes.load_prior(path, square_grid, [0, 1, 2])
    assert np.allclose(prior, [0.25, 0.75, 0.0])

def test_candidates_sorted_by_latitude(square_grid):
    roles = StateRoles(16, candidates=[12, 1, 6])
    candidates, lons, lats = driftmc_bayes.candidates_by_latitude(
            square_grid, roles)
    assert list(candidates) == [1, 6, 12]
    assert np.allclose(lats, [0.125, 0.375, 0.875])
