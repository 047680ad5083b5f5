"""Markov chain Monte Carlo at the full posterior (exponent 1).

Two execution modes share one config.  Serial mode runs a single chain
with burn-in and thinning: the first retained sample is the state right
after burn-in and later samples follow every ``thin`` steps, so with
``burn_in = 0`` and ``thin = 1`` the output is exactly the raw chain
including the prior draw.  Parallel mode runs one short chain per seed
and keeps only final states, trading bias (controlled by burn-in
length) for wall-clock time.

Cost accounting (fresh evaluations, caches warm after the one-time
initialization): a serial chain takes ``B + (n - 1) * thin`` kernel
steps, so its likelihood tally is ``steps + 1`` and, for HMC, its
gradient tally is ``steps * leapfrog_steps + 1``.  A parallel chain is
the ``n = 1``, ``thin`` irrelevant case: ``B + 1`` likelihood
evaluations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .kernels import HmcConfig, KernelStats, PcnConfig, Population
from .targets import EvalCounter


@dataclass(frozen=True)
class McmcConfig:
    """MCMC settings.

    Parameters
    ----------
    n_samples : int
        Retained samples (serial mode); parallel mode takes the chain
        count from the seed list instead.
    burn_in : int
        Kernel steps discarded before retaining anything.
    thin : int
        Steps between retained samples in serial mode.
    kernel : PcnConfig or HmcConfig
        Transition kernel; standalone chains always use unit pCN
        scaling.
    mode : str
        ``"serial"`` or ``"parallel"``.
    """

    n_samples: int
    burn_in: int = 0
    thin: int = 1
    kernel: PcnConfig | HmcConfig = field(default_factory=PcnConfig)
    mode: str = "serial"

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        if self.burn_in < 0:
            raise ValueError("burn_in must be non-negative")
        if self.thin < 1:
            raise ValueError("thin must be positive")
        if self.mode not in ("serial", "parallel"):
            raise ValueError(f"unknown mode {self.mode!r}")


def burn_in_steps(multiplier, iact_estimate) -> int:
    """Burn-in length as a multiple of an autocorrelation-time estimate."""
    if multiplier < 0 or iact_estimate <= 0:
        raise ValueError("multiplier must be >= 0 and iact_estimate > 0")
    return math.ceil(multiplier * iact_estimate)


def run_chain_serial(cfg, target, seed, stats=None):
    """Run a single chain and return ``(samples, epochs)``.

    The chain starts from a prior draw, burns in ``cfg.burn_in`` steps,
    retains the current state, then retains every ``cfg.thin``-th state
    until ``cfg.n_samples`` are collected.  All randomness comes from
    ``numpy.random.default_rng(seed)``.
    """
    seed = _check_seed(seed)
    rng = np.random.default_rng(seed)
    counter = EvalCounter()
    if stats is None:
        stats = KernelStats()
    use_hmc = isinstance(cfg.kernel, HmcConfig)
    unit_scaling = np.ones(target.dim)
    theta = target.prior_sample(rng)
    loglik = target.log_likelihood(theta, counter)
    grad_ll = target.grad_log_likelihood(theta, counter) if use_hmc else None

    def step(theta, loglik, grad_ll):
        if use_hmc:
            theta, _, loglik, grad_ll = kernels.hmc_step(
                theta, 1.0, cfg.kernel, target, rng, counter, loglik, grad_ll, stats
            )
        else:
            theta, _, loglik = kernels.pcn_step(
                theta, 1.0, cfg.kernel, unit_scaling, target, rng, counter, loglik, stats
            )
        return theta, loglik, grad_ll

    for _ in range(cfg.burn_in):
        theta, loglik, grad_ll = step(theta, loglik, grad_ll)
    samples = np.empty((cfg.n_samples, target.dim))
    samples[0] = theta
    for i in range(1, cfg.n_samples):
        for _ in range(cfg.thin):
            theta, loglik, grad_ll = step(theta, loglik, grad_ll)
        samples[i] = theta
    return samples, counter


def run_chains_parallel(cfg, target, seeds, stats=None):
    """Run one chain per seed for ``cfg.burn_in`` steps, keep final states.

    Chains never communicate: chain ``c`` derives every draw from
    ``numpy.random.default_rng(seeds[c])``, consuming first the prior
    draw, then its standard-normal block for all steps, then its
    uniforms.  Outputs are exchangeable under permutation of the seeds.

    Returns
    -------
    (samples, epochs_per_chain)
        Final states ``(len(seeds), d)`` and one EvalCounter per chain.
    """
    seeds = [_check_seed(s) for s in seeds]
    if len(set(seeds)) != len(seeds):
        raise ValueError("seeds must be distinct")
    n = len(seeds)
    if n == 0:
        raise ValueError("need at least one seed")
    d = target.dim
    b = cfg.burn_in
    use_hmc = isinstance(cfg.kernel, HmcConfig)
    counter = EvalCounter()
    if stats is None:
        stats = KernelStats()
    theta0 = np.empty((n, d))
    normals = np.empty((b, n, d))
    log_u = np.empty((b, n))
    for c, s in enumerate(seeds):
        rng = np.random.default_rng(s)
        theta0[c] = target.prior_sample(rng)
        normals[:, c, :] = rng.standard_normal((b, d))
        log_u[:, c] = np.log(rng.random(b))
    loglik = np.atleast_1d(target.log_likelihood(theta0, counter))
    logprior = grad_ll = None
    if use_hmc and b > 0:
        logprior = np.atleast_1d(target.log_prior(theta0))
        grad_ll = target.grad_log_likelihood(theta0, counter)
    pop = Population(theta0, loglik, logprior, grad_ll)
    for step in range(b):
        kernels.population_step(
            pop, 1.0, cfg.kernel, target, normals[step], log_u[step], counter, stats
        )
    per_chain_lik = b * kernels.likelihood_cost_per_step(cfg.kernel) + 1
    per_chain_grad = b * kernels.gradient_cost_per_step(cfg.kernel)
    if use_hmc and b > 0:
        per_chain_grad += 1
    assert counter.likelihood == n * per_chain_lik
    assert counter.gradient == n * per_chain_grad
    per_chain = [EvalCounter(per_chain_lik, per_chain_grad) for _ in range(n)]
    return pop.theta, per_chain


def _check_seed(seed):
    seed = int(seed)
    if seed < 0:
        raise ValueError("seeds must be non-negative integers")
    return seed
