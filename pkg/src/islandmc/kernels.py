"""Markov transition kernels invariant on tempered posteriors.

Two kernels are provided: a preconditioned Crank-Nicolson proposal that
uses the Gaussian prior as reference measure, and Hamiltonian Monte
Carlo with a leapfrog integrator.  Both leave
``prior * likelihood^lambda`` invariant for any tempering exponent
``lambda`` in [0, 1].

All kernel math lives in population-level functions that act on every
particle at once; the single-state functions ``pcn_step`` and
``hmc_step`` are thin wrappers around a population of one.  States
carry cached log-likelihood (and, for HMC, gradient) values so that one
pCN step costs exactly one fresh likelihood evaluation and one HMC step
costs exactly ``leapfrog_steps`` gradient evaluations plus one
likelihood evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .targets import EvalCounter


@dataclass(frozen=True)
class PcnConfig:
    """Preconditioned Crank-Nicolson settings.

    Parameters
    ----------
    beta : float
        Step size in (0, 1].  ``beta = 1`` with unit scaling proposes
        fresh prior draws; ``beta -> 0`` degenerates to the identity.
    use_scaling : bool
        Whether samplers should re-estimate the diagonal proposal
        scaling from the particle population each tempering stage.
        Standalone chains always use unit scaling.
    scaling_floor : float
        Lower bound applied to estimated coordinate variances.
    target_accept : float
        Acceptance rate targeted by step-size adaptation.
    """

    beta: float = 0.5
    use_scaling: bool = True
    scaling_floor: float = 1e-8
    target_accept: float = 0.234

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")
        if not self.scaling_floor > 0.0:
            raise ValueError("scaling_floor must be positive")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")


@dataclass(frozen=True)
class HmcConfig:
    """Hamiltonian Monte Carlo settings.

    Parameters
    ----------
    step_size : float
        Leapfrog step size, positive.
    leapfrog_steps : int
        Number of leapfrog steps per proposal, positive.
    mass : float or sequence of float
        Diagonal of the mass matrix, a positive scalar or per-coordinate
        vector.
    target_accept : float
        Acceptance rate targeted by step-size adaptation.
    """

    step_size: float = 0.1
    leapfrog_steps: int = 10
    mass: float = 1.0
    target_accept: float = 0.65

    def __post_init__(self):
        if not self.step_size > 0.0:
            raise ValueError("step_size must be positive")
        if self.leapfrog_steps < 1:
            raise ValueError("leapfrog_steps must be at least 1")
        if np.any(np.asarray(self.mass, dtype=float) <= 0.0):
            raise ValueError("mass entries must be positive")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")


@dataclass
class KernelStats:
    """Accept/reject tallies accumulated across kernel steps."""

    proposals: int = 0
    accepts: int = 0

    @property
    def last_rate(self) -> float:
        if self.proposals == 0:
            return 0.0
        return self.accepts / self.proposals

    def record(self, proposals: int, accepts: int) -> None:
        self.proposals += int(proposals)
        self.accepts += int(accepts)


@dataclass
class Population:
    """Particle states with cached likelihood values.

    ``logprior`` and ``grad_ll`` are populated only when the HMC kernel
    is in use; pCN needs neither.
    """

    theta: np.ndarray
    loglik: np.ndarray
    logprior: np.ndarray | None = None
    grad_ll: np.ndarray | None = None

    @classmethod
    def initialize(cls, target, rng, n, counter=None, needs_grad=False):
        """Draw n prior particles and fill every cache the kernel needs."""
        theta = target.prior_sample(rng, n)
        loglik = np.atleast_1d(target.log_likelihood(theta, counter))
        logprior = grad_ll = None
        if needs_grad:
            logprior = np.atleast_1d(target.log_prior(theta))
            grad_ll = target.grad_log_likelihood(theta, counter)
        return cls(theta, loglik, logprior, grad_ll)

    def take(self, idx) -> None:
        """Reindex every array in place (resampling)."""
        self.theta = self.theta[idx]
        self.loglik = self.loglik[idx]
        if self.logprior is not None:
            self.logprior = self.logprior[idx]
        if self.grad_ll is not None:
            self.grad_ll = self.grad_ll[idx]


def needs_gradient(cfg) -> bool:
    return isinstance(cfg, HmcConfig)


def likelihood_cost_per_step(cfg) -> int:
    """Fresh likelihood evaluations per kernel step with warm caches."""
    return 1


def gradient_cost_per_step(cfg) -> int:
    """Fresh gradient evaluations per kernel step with warm caches."""
    return cfg.leapfrog_steps if isinstance(cfg, HmcConfig) else 0


def _mass_vector(cfg, d):
    mass = np.asarray(cfg.mass, dtype=float)
    if mass.ndim == 0:
        return np.full(d, float(mass))
    if mass.shape != (d,):
        raise ValueError(f"mass has shape {mass.shape}, expected ({d},)")
    return mass


def leapfrog(theta, momentum, lam, cfg, target, counter=None, grad_ll=None):
    """Integrate Hamiltonian dynamics for ``cfg.leapfrog_steps`` steps.

    Uses the kick-drift-kick scheme: a half momentum update, a full
    position update, and another half momentum update per step, with
    the gradient shared between adjacent steps.  Costs exactly
    ``leapfrog_steps`` gradient evaluations when the starting
    log-likelihood gradient ``grad_ll`` is supplied, one more otherwise.

    Returns
    -------
    (theta, momentum, grad_ll)
        End state plus the likelihood gradient at the end position, for
        reuse as the next call's starting gradient.
    """
    theta = np.asarray(theta, dtype=float)
    momentum = np.asarray(momentum, dtype=float)
    mass = _mass_vector(cfg, theta.shape[-1])
    dt = cfg.step_size
    steps = cfg.leapfrog_steps
    if grad_ll is None:
        grad_ll = target.grad_log_likelihood(theta, counter)
    grad = lam * grad_ll + target.grad_log_prior(theta)
    momentum = momentum + 0.5 * dt * grad
    for step in range(steps):
        theta = theta + dt * (momentum / mass)
        grad_ll = target.grad_log_likelihood(theta, counter)
        grad = lam * grad_ll + target.grad_log_prior(theta)
        momentum = momentum + (dt if step < steps - 1 else 0.5 * dt) * grad
    return theta, momentum, grad_ll


def _pcn_population_step(pop, lam, cfg, scaling, target, delta, log_u, counter, stats):
    """One pCN sweep over the population with pre-drawn noise."""
    beta = cfg.beta
    keep = 1.0 - beta**2 * scaling
    if np.any(keep < -1e-12):
        raise ValueError("scaling entries must satisfy beta^2 * D <= 1")
    keep = np.maximum(keep, 0.0)
    u = target.whiten(pop.theta)
    u_new = np.sqrt(keep) * u + beta * np.sqrt(scaling) * delta
    theta_new = target.unwhiten(u_new)
    ll_new = np.atleast_1d(target.log_likelihood(theta_new, counter))
    if lam == 0.0:
        accept = np.ones(pop.theta.shape[0], dtype=bool)
    else:
        with np.errstate(invalid="ignore"):
            log_ratio = lam * (ll_new - pop.loglik)
        accept = log_u <= log_ratio
    pop.theta[accept] = theta_new[accept]
    pop.loglik[accept] = ll_new[accept]
    if stats is not None:
        stats.record(accept.size, accept.sum())
    return int(accept.sum())


def _hmc_population_step(pop, lam, cfg, target, z, log_u, counter, stats):
    """One HMC sweep over the population with pre-drawn noise.

    ``z`` holds standard-normal draws; momenta are ``sqrt(mass) * z``.
    Non-finite trajectories reject rather than raise.
    """
    n, d = pop.theta.shape
    mass = _mass_vector(cfg, d)
    momentum = np.sqrt(mass) * z
    kinetic0 = 0.5 * np.sum(momentum * momentum / mass, axis=-1)
    h0 = -(lam * pop.loglik + pop.logprior) + kinetic0
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        theta_new, momentum_new, grad_new = leapfrog(
            pop.theta, momentum, lam, cfg, target, counter, grad_ll=pop.grad_ll
        )
        ll_new = np.atleast_1d(target.log_likelihood(theta_new, counter))
        lp_new = np.atleast_1d(target.log_prior(theta_new))
        kinetic1 = 0.5 * np.sum(momentum_new * momentum_new / mass, axis=-1)
        log_ratio = h0 - (-(lam * ll_new + lp_new) + kinetic1)
    accept = log_u <= log_ratio
    pop.theta[accept] = theta_new[accept]
    pop.loglik[accept] = ll_new[accept]
    pop.logprior[accept] = lp_new[accept]
    pop.grad_ll[accept] = grad_new[accept]
    if stats is not None:
        stats.record(accept.size, accept.sum())
    return int(accept.sum())


def population_step(pop, lam, cfg, target, normals, log_u, counter=None, stats=None, scaling=None, step_size=None):
    """Dispatch one kernel sweep; ``step_size`` overrides the config value."""
    if step_size is not None:
        if isinstance(cfg, PcnConfig):
            cfg = PcnConfig(step_size, cfg.use_scaling, cfg.scaling_floor, cfg.target_accept)
        else:
            cfg = HmcConfig(step_size, cfg.leapfrog_steps, cfg.mass, cfg.target_accept)
    if isinstance(cfg, PcnConfig):
        if scaling is None:
            scaling = np.ones(pop.theta.shape[1])
        return _pcn_population_step(pop, lam, cfg, scaling, target, normals, log_u, counter, stats)
    return _hmc_population_step(pop, lam, cfg, target, normals, log_u, counter, stats)


def mutate(pop, lam, n_steps, cfg, target, seed, stage, counter=None, stats=None, scaling=None, step_size=None):
    """Apply ``n_steps`` kernel sweeps to the whole population.

    Particle ``i`` consumes noise from its own stream seeded by
    ``(seed, stage, i + 1)``: first an ``(n_steps, d)`` standard-normal
    block, then ``n_steps`` uniforms.  Results therefore do not depend
    on the order particles are processed in.

    Returns the number of accepted proposals (out of ``n * n_steps``).
    """
    n, d = pop.theta.shape
    normals = np.empty((n_steps, n, d))
    log_u = np.empty((n_steps, n))
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence((seed, stage, i + 1)))
        normals[:, i, :] = rng.standard_normal((n_steps, d))
        log_u[:, i] = np.log(rng.random(n_steps))
    accepted = 0
    for s in range(n_steps):
        accepted += population_step(
            pop, lam, cfg, target, normals[s], log_u[s], counter, stats, scaling, step_size
        )
    return accepted


def pcn_step(theta, lam, cfg, scaling, target, rng, counter=None, loglik=None, stats=None):
    """One preconditioned Crank-Nicolson step for a single state.

    The proposal whitens ``theta`` against the prior, applies the
    autoregression ``sqrt(1 - beta^2 D) u + beta sqrt(D) delta`` with
    ``delta`` standard normal, and accepts with probability
    ``min(1, (L(theta') / L(theta))^lambda)``.  The prior is invariant
    under the proposal, so only the likelihood ratio enters.

    Parameters
    ----------
    scaling : ndarray (d,)
        Diagonal proposal scaling ``D`` with entries in (0, 1/beta^2].
        Pass ``numpy.ones(d)`` for a standalone chain.
    loglik : float, optional
        Cached log-likelihood at ``theta``.  Evaluated (and charged)
        when omitted.

    Returns
    -------
    (theta, accepted, loglik)
        New state, acceptance flag, and its log-likelihood.
    """
    theta = np.asarray(theta, dtype=float)
    if loglik is None:
        loglik = target.log_likelihood(theta, counter)
    pop = Population(theta[None, :].copy(), np.atleast_1d(np.float64(loglik)))
    delta = rng.standard_normal(theta.shape[0])
    log_u = np.log(rng.random())
    n_acc = _pcn_population_step(
        pop, lam, cfg, np.asarray(scaling, dtype=float), target,
        delta[None, :], np.atleast_1d(log_u), counter, stats,
    )
    return pop.theta[0], bool(n_acc), float(pop.loglik[0])


def hmc_step(theta, lam, cfg, target, rng, counter=None, loglik=None, grad_ll=None, stats=None):
    """One Hamiltonian Monte Carlo step for a single state.

    Draws momentum from N(0, mass), integrates with :func:`leapfrog`,
    and accepts with probability ``min(1, exp(H - H'))`` where ``H`` is
    the Hamiltonian of the tempered target.  With cached ``loglik`` and
    ``grad_ll`` the step charges exactly ``leapfrog_steps`` gradient and
    one likelihood evaluation; cold caches add one of each.

    Returns
    -------
    (theta, accepted, loglik, grad_ll)
        New state, acceptance flag, and its cached values.
    """
    theta = np.asarray(theta, dtype=float)
    if loglik is None:
        loglik = target.log_likelihood(theta, counter)
    if grad_ll is None:
        grad_ll = target.grad_log_likelihood(theta, counter)
    pop = Population(
        theta[None, :].copy(),
        np.atleast_1d(np.float64(loglik)),
        np.atleast_1d(target.log_prior(theta)),
        np.asarray(grad_ll, dtype=float)[None, :].copy(),
    )
    z = rng.standard_normal(theta.shape[0])
    log_u = np.log(rng.random())
    n_acc = _hmc_population_step(
        pop, lam, cfg, target, z[None, :], np.atleast_1d(log_u), counter, stats
    )
    return pop.theta[0], bool(n_acc), float(pop.loglik[0]), pop.grad_ll[0]


def adapt_step_size(current, observed_rate, target_rate, iteration):
    """Robbins-Monro update of a kernel step size on the log scale.

    ``log s`` moves by ``gamma_t (observed - target)`` with gain
    ``gamma_t = 1 / (1 + t)^0.6``, clamped to [1e-10, 1e3].  Rates above
    target grow the step size, rates below shrink it.
    """
    gamma = 1.0 / (1.0 + iteration) ** 0.6
    new = current * np.exp(gamma * (observed_rate - target_rate))
    return float(np.clip(new, 1e-10, 1e3))


def estimate_scaling(population, floor=1e-8):
    """Diagonal pCN proposal scaling from a particle population.

    Coordinate-wise sample variances (ddof 1), floored below by
    ``floor`` and normalized so the largest entry is exactly 1.
    """
    population = np.asarray(population, dtype=float)
    if population.ndim != 2 or population.shape[0] < 2:
        raise ValueError("need at least two particles to estimate scaling")
    var = population.var(axis=0, ddof=1)
    var = np.maximum(var, floor)
    return var / var.max()
