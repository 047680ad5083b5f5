import math

import numpy as np
import pytest

from islandmc.kernels import (
    HmcConfig,
    KernelStats,
    PcnConfig,
    Population,
    adapt_step_size,
    estimate_scaling,
    gradient_cost_per_step,
    hmc_step,
    leapfrog,
    likelihood_cost_per_step,
    mutate,
    needs_gradient,
    pcn_step,
    population_step,
)
from islandmc.targets import EvalCounter, GaussianLinearModel, make_gaussian_target


class FlatTarget:
    """Zero potential everywhere: leapfrog must reduce to free flight."""

    dim = 3

    def grad_log_likelihood(self, theta, counter=None):
        return np.zeros_like(theta)

    def grad_log_prior(self, theta):
        return np.zeros_like(theta)


def prior_only(d):
    return GaussianLinearModel(np.zeros((0, d)), np.zeros(0), sigma=1.0)


def hamiltonian(target, theta, momentum, lam, mass):
    pot = -(lam * target.log_likelihood(theta) + target.log_prior(theta))
    return pot + 0.5 * np.sum(momentum**2 / mass)


def test_config_validation():
    with pytest.raises(ValueError):
        PcnConfig(beta=0.0)
    with pytest.raises(ValueError):
        PcnConfig(beta=1.5)
    with pytest.raises(ValueError):
        PcnConfig(target_accept=1.0)
    with pytest.raises(ValueError):
        HmcConfig(step_size=0.0)
    with pytest.raises(ValueError):
        HmcConfig(leapfrog_steps=0)
    with pytest.raises(ValueError):
        HmcConfig(mass=[1.0, -1.0])


def test_cost_helpers():
    pcn, hmc = PcnConfig(), HmcConfig(leapfrog_steps=7)
    assert not needs_gradient(pcn) and needs_gradient(hmc)
    assert likelihood_cost_per_step(pcn) == likelihood_cost_per_step(hmc) == 1
    assert gradient_cost_per_step(pcn) == 0
    assert gradient_cost_per_step(hmc) == 7


def test_leapfrog_free_flight():
    cfg = HmcConfig(step_size=0.2, leapfrog_steps=5, mass=2.0)
    theta0 = np.array([1.0, -2.0, 0.5])
    q0 = np.array([0.4, 0.0, -1.0])
    theta, q, _ = leapfrog(theta0, q0, 1.0, cfg, FlatTarget())
    assert theta == pytest.approx(theta0 + 5 * 0.2 * q0 / 2.0, abs=1e-12)
    assert q == pytest.approx(q0, abs=1e-12)


def test_leapfrog_harmonic_oscillator():
    # standard Gaussian potential: exact flow is a rotation by t = L dt
    target = prior_only(1)
    cfg = HmcConfig(step_size=0.01, leapfrog_steps=100)
    theta, q, _ = leapfrog(np.array([1.0]), np.array([0.0]), 1.0, cfg, target)
    assert theta[0] == pytest.approx(math.cos(1.0), abs=1e-3)
    assert q[0] == pytest.approx(-math.sin(1.0), abs=1e-3)


def test_leapfrog_reversibility():
    target = make_gaussian_target(4, 8, 0.8, seed=3)
    cfg = HmcConfig(step_size=0.05, leapfrog_steps=30)
    rng = np.random.default_rng(5)
    theta0, q0 = rng.standard_normal(4), rng.standard_normal(4)
    theta1, q1, _ = leapfrog(theta0, q0, 1.0, cfg, target)
    theta2, q2, _ = leapfrog(theta1, -q1, 1.0, cfg, target)
    assert theta2 == pytest.approx(theta0, abs=1e-10)
    assert -q2 == pytest.approx(q0, abs=1e-10)


def test_leapfrog_energy_error_second_order():
    # fixed trajectory time: halving dt should shrink |dH| by about 4x
    target = make_gaussian_target(4, 8, 0.8, seed=3)
    rng = np.random.default_rng(9)
    theta0, q0 = rng.standard_normal(4), rng.standard_normal(4)
    mass = np.ones(4)
    errs = []
    for dt, steps in [(0.1, 20), (0.05, 40)]:
        cfg = HmcConfig(step_size=dt, leapfrog_steps=steps)
        theta, q, _ = leapfrog(theta0, q0, 1.0, cfg, target)
        h0 = hamiltonian(target, theta0, q0, 1.0, mass)
        h1 = hamiltonian(target, theta, q, 1.0, mass)
        errs.append(abs(h1 - h0))
    assert 3.0 < errs[0] / errs[1] < 5.0


def test_leapfrog_gradient_count():
    target = make_gaussian_target(3, 5, 1.0, seed=1)
    cfg = HmcConfig(step_size=0.1, leapfrog_steps=6)
    theta = np.zeros(3)
    q = np.ones(3)
    counter = EvalCounter()
    _, _, grad = leapfrog(theta, q, 1.0, cfg, target, counter)
    assert counter.gradient == 7  # cold start costs one extra
    counter = EvalCounter()
    leapfrog(theta, q, 1.0, cfg, target, counter, grad_ll=target.grad_log_likelihood(theta))
    assert counter.gradient == 6


def test_pcn_beta_to_zero_is_identity():
    target = make_gaussian_target(2, 4, 1.0, seed=2)
    cfg = PcnConfig(beta=1e-12)
    theta0 = np.array([0.3, -0.8])
    rng = np.random.default_rng(0)
    for _ in range(5):
        theta, accepted, _ = pcn_step(theta0, 1.0, cfg, np.ones(2), target, rng)
        assert accepted
        assert theta == pytest.approx(theta0, abs=1e-10)


def test_pcn_lambda_zero_always_accepts():
    target = make_gaussian_target(2, 4, 1.0, seed=2)
    cfg = PcnConfig(beta=1.0)
    rng = np.random.default_rng(1)
    theta = np.array([100.0, -100.0])
    for _ in range(10):
        theta, accepted, _ = pcn_step(theta, 0.0, cfg, np.ones(2), target, rng)
        assert accepted


def test_pcn_full_refresh_is_prior_draw():
    # beta=1, D=1: the proposal is an independent prior draw
    target = prior_only(3)
    cfg = PcnConfig(beta=1.0)
    rng = np.random.default_rng(7)
    expected = np.random.default_rng(7).standard_normal(3)
    theta, accepted, _ = pcn_step(np.full(3, 9.0), 0.0, cfg, np.ones(3), target, rng)
    assert accepted
    assert np.array_equal(theta, expected)


def test_pcn_scaling_bound_enforced():
    target = prior_only(2)
    cfg = PcnConfig(beta=1.0)
    with pytest.raises(ValueError, match="beta"):
        pcn_step(np.zeros(2), 1.0, cfg, np.array([2.0, 1.0]), target, np.random.default_rng(0))


def test_pcn_step_matches_manual_proposal():
    # replay the exact proposal and accept decision by hand
    target = make_gaussian_target(3, 6, 0.9, seed=4)
    cfg = PcnConfig(beta=0.4)
    scaling = np.array([1.0, 0.5, 0.25])
    theta0 = np.array([0.2, -0.1, 0.7])
    lam = 0.6
    rng = np.random.default_rng(21)
    theta, accepted, loglik = pcn_step(theta0, lam, cfg, scaling, target, rng)
    ref = np.random.default_rng(21)
    delta = ref.standard_normal(3)
    log_u = math.log(ref.random())
    u = target.whiten(theta0)
    keep = np.sqrt(1.0 - cfg.beta**2 * scaling)
    prop = target.unwhiten(keep * u + cfg.beta * np.sqrt(scaling) * delta)
    want = log_u <= lam * (target.log_likelihood(prop) - target.log_likelihood(theta0))
    assert accepted == want
    assert np.array_equal(theta, prop if want else theta0)
    assert loglik == pytest.approx(float(target.log_likelihood(theta)), abs=1e-10)


def test_hmc_identity_limit():
    target = make_gaussian_target(2, 4, 1.0, seed=6)
    cfg = HmcConfig(step_size=1e-10, leapfrog_steps=1)
    theta0 = np.array([0.5, -0.5])
    theta, accepted, _, _ = hmc_step(theta0, 1.0, cfg, target, np.random.default_rng(3))
    assert accepted
    assert theta == pytest.approx(theta0, abs=1e-8)


def test_hmc_nonfinite_trajectory_rejects():
    target = make_gaussian_target(2, 4, 0.1, seed=6)
    cfg = HmcConfig(step_size=1e150, leapfrog_steps=2)
    theta0 = np.array([0.5, -0.5])
    theta, accepted, _, _ = hmc_step(theta0, 1.0, cfg, target, np.random.default_rng(3))
    assert not accepted
    assert np.array_equal(theta, theta0)


def test_hmc_matches_manual_replay():
    target = make_gaussian_target(3, 6, 0.9, seed=4)
    cfg = HmcConfig(step_size=0.15, leapfrog_steps=8, mass=2.0)
    theta0 = np.array([0.2, -0.1, 0.7])
    lam = 0.8
    rng = np.random.default_rng(33)
    theta, accepted, loglik, grad = hmc_step(theta0, lam, cfg, target, rng)
    ref = np.random.default_rng(33)
    z = ref.standard_normal(3)
    log_u = math.log(ref.random())
    mass = np.full(3, 2.0)
    q0 = np.sqrt(mass) * z
    prop, q1, _ = leapfrog(theta0, q0, lam, cfg, target)
    h0 = hamiltonian(target, theta0, q0, lam, mass)
    h1 = hamiltonian(target, prop, q1, lam, mass)
    want = log_u <= h0 - h1
    assert accepted == want
    assert np.array_equal(theta, prop if want else theta0)
    assert loglik == pytest.approx(float(target.log_likelihood(theta)), abs=1e-12)
    assert grad == pytest.approx(target.grad_log_likelihood(theta), abs=1e-12)


def test_population_step_eval_counts():
    target = make_gaussian_target(3, 5, 1.0, seed=1)
    rng = np.random.default_rng(0)
    for cfg, lik, grad in [(PcnConfig(), 8, 0), (HmcConfig(leapfrog_steps=4), 8, 8 + 8 * 4)]:
        counter = EvalCounter()
        pop = Population.initialize(target, rng, 8, counter, needs_grad=needs_gradient(cfg))
        population_step(
            pop, 0.7, cfg, target, rng.standard_normal((8, 3)),
            np.log(rng.random(8)), counter,
        )
        assert counter.likelihood == lik + 8
        assert counter.gradient == grad


def test_mutate_matches_scalar_steps_pcn():
    # the vectorized engine and the scalar wrapper must agree bit for bit
    target = make_gaussian_target(3, 6, 0.9, seed=4)
    cfg = PcnConfig(beta=0.3)
    scaling = np.array([1.0, 0.7, 0.2])
    seed, stage, lam, n = 17, 2, 0.45, 6
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0, 0)))
    pop = Population.initialize(target, rng, n)
    ref_theta = pop.theta.copy()
    ref_ll = pop.loglik.copy()
    mutate(pop, lam, 1, cfg, target, seed, stage, scaling=scaling)
    for i in range(n):
        rng_i = np.random.default_rng(np.random.SeedSequence((seed, stage, i + 1)))
        theta, _, ll = pcn_step(ref_theta[i], lam, cfg, scaling, target, rng_i, loglik=ref_ll[i])
        # proposals are elementwise, so positions agree bit for bit; the
        # cached loglik may differ in the last ulps (batched vs single matmul)
        assert np.array_equal(pop.theta[i], theta)
        assert pop.loglik[i] == pytest.approx(ll, abs=1e-12)


def test_mutate_matches_scalar_steps_hmc():
    target = make_gaussian_target(3, 6, 0.9, seed=4)
    cfg = HmcConfig(step_size=0.2, leapfrog_steps=5)
    seed, stage, lam, n = 23, 3, 0.85, 6
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0, 0)))
    pop = Population.initialize(target, rng, n, needs_grad=True)
    ref_theta = pop.theta.copy()
    ref_ll = pop.loglik.copy()
    ref_grad = pop.grad_ll.copy()
    mutate(pop, lam, 1, cfg, target, seed, stage)
    for i in range(n):
        rng_i = np.random.default_rng(np.random.SeedSequence((seed, stage, i + 1)))
        theta, _, ll, _ = hmc_step(
            ref_theta[i], lam, cfg, target, rng_i, loglik=ref_ll[i], grad_ll=ref_grad[i]
        )
        # trajectories pass through matmuls, so agreement is to ulp level only
        assert pop.theta[i] == pytest.approx(theta, abs=1e-12)
        assert pop.loglik[i] == pytest.approx(ll, abs=1e-10)


def test_mutate_multi_step_noise_layout():
    # per-particle streams: an (n_steps, d) normal block then n_steps uniforms
    target = prior_only(2)
    cfg = PcnConfig(beta=1.0)
    seed, stage, n, steps = 5, 1, 3, 4
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0, 0)))
    pop = Population.initialize(target, rng, n)
    mutate(pop, 0.0, steps, cfg, target, seed, stage)
    # at beta=1 and lam=0 the final state is the last normal draw of each stream
    for i in range(n):
        rng_i = np.random.default_rng(np.random.SeedSequence((seed, stage, i + 1)))
        block = rng_i.standard_normal((steps, 2))
        assert np.array_equal(pop.theta[i], block[-1])


def test_mutate_accept_count_and_stats():
    target = make_gaussian_target(2, 4, 1.0, seed=0)
    cfg = PcnConfig(beta=0.5)
    rng = np.random.default_rng(np.random.SeedSequence((1, 0, 0)))
    pop = Population.initialize(target, rng, 16)
    stats = KernelStats()
    accepted = mutate(pop, 1.0, 3, cfg, target, 1, 1, stats=stats, scaling=np.ones(2))
    assert stats.proposals == 48
    assert stats.accepts == accepted
    assert 0 <= accepted <= 48
    assert stats.last_rate == accepted / 48


def test_population_take_reindexes_all_caches():
    target = make_gaussian_target(2, 4, 1.0, seed=0)
    rng = np.random.default_rng(1)
    pop = Population.initialize(target, rng, 4, needs_grad=True)
    theta = pop.theta.copy()
    pop.take(np.array([2, 2, 0, 1]))
    assert np.array_equal(pop.theta, theta[[2, 2, 0, 1]])
    assert pop.loglik == pytest.approx(
        np.atleast_1d(target.log_likelihood(pop.theta)), abs=1e-12
    )


def test_adapt_step_size_fixed_point_and_monotone():
    assert adapt_step_size(0.3, 0.65, 0.65, 4) == 0.3
    assert adapt_step_size(0.3, 1.0, 0.65, 0) > 0.3
    assert adapt_step_size(0.3, 0.0, 0.65, 0) < 0.3
    assert adapt_step_size(1e-10, 0.0, 0.65, 0) == 1e-10
    assert adapt_step_size(1e3, 1.0, 0.65, 0) == 1e3


def test_adapt_step_size_converges_to_target_rate():
    # repeated adaptation on a Gaussian target settles near 0.65 acceptance
    target = make_gaussian_target(4, 8, 1.0, seed=12)
    cfg = HmcConfig(step_size=1.0, leapfrog_steps=10)
    rng = np.random.default_rng(np.random.SeedSequence((3, 0, 0)))
    n = 128
    pop = Population.initialize(target, rng, n, needs_grad=True)
    step = cfg.step_size
    rates = []
    for t in range(50):
        stats = KernelStats()
        population_step(
            pop, 1.0, cfg, target, rng.standard_normal((n, 4)),
            np.log(rng.random(n)), stats=stats, step_size=step,
        )
        rates.append(stats.last_rate)
        step = adapt_step_size(step, stats.last_rate, 0.65, t)
    tail = float(np.mean(rates[-10:]))
    assert 0.55 < tail < 0.75
    assert abs(tail - 0.65) < 0.08


def test_estimate_scaling_hand_cases():
    assert np.array_equal(estimate_scaling(np.array([[0.0], [2.0]])), [1.0])
    d = estimate_scaling(np.array([[0.0, 0.0], [2.0, 0.0]]))
    assert d[0] == 1.0
    assert d[1] == pytest.approx(1e-8 / 2.0, rel=1e-12)
    same = estimate_scaling(np.ones((5, 3)))
    assert np.array_equal(same, np.ones(3))


def test_estimate_scaling_permutation_invariant():
    pop = np.random.default_rng(2).standard_normal((10, 3))
    perm = np.random.default_rng(3).permutation(10)
    assert estimate_scaling(pop) == pytest.approx(estimate_scaling(pop[perm]), rel=1e-12)


def test_estimate_scaling_needs_two_particles():
    with pytest.raises(ValueError):
        estimate_scaling(np.zeros((1, 2)))
