"""Communication-free parallel islands and their weighted combination.

Each island is a full, independently seeded sampler run (SMC or MCMC).
Islands never exchange state; afterward their posterior averages are
combined with weights proportional to each island's evidence estimate.
For MCMC islands every evidence estimate is identically 1, so the
combination degenerates to the plain average of island means.
"""

from __future__ import annotations

import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import mcmc as mcmc_mod
from . import smc as smc_mod
from .kernels import KernelStats
from .smc import DegenerateWeightsError, IslandResult, LogZAccumulator, SmcConfig
from .targets import EvalCounter


@dataclass
class IslandEnsemble:
    """Results of P independent island runs plus their derived seeds."""

    results: list
    seeds: list
    method_tag: str

    def logz_totals(self) -> np.ndarray:
        return np.array([r.logz.total for r in self.results])


def island_seed(master_seed, index) -> int:
    """Derive island ``index``'s seed by hash-splitting the master seed.

    Uses ``numpy.random.SeedSequence((master_seed, index))``, whose
    entropy mixing is documented and stable, so the same master seed
    always yields the same island seeds.
    """
    ss = np.random.SeedSequence((int(master_seed), int(index)))
    return int(ss.generate_state(2, np.uint64)[0])


def _run_island(cfg, target, seed):
    if isinstance(cfg, SmcConfig):
        return smc_mod.run_smc(cfg, target, seed)
    stats = KernelStats()
    if cfg.mode == "serial":
        samples, counter = mcmc_mod.run_chain_serial(cfg, target, seed, stats=stats)
    else:
        chain_seeds = [
            int(np.random.SeedSequence((seed, 1, c)).generate_state(2, np.uint64)[0])
            for c in range(cfg.n_samples)
        ]
        samples, per_chain = mcmc_mod.run_chains_parallel(cfg, target, chain_seeds, stats=stats)
        counter = EvalCounter()
        for c in per_chain:
            counter.merge(c)
    # MCMC targets the posterior directly; its evidence estimate is defined as 1
    return IslandResult(samples, LogZAccumulator(), [1.0], counter, stats)


def _island_worker(args):
    cfg, target, seed, path = args
    result = _run_island(cfg, target, seed)
    write_island_json(result, seed, path)
    return path


def run_islands(n_islands, island_cfg, target, master_seed, parallelism=1, mode="thread", workdir=None):
    """Run ``n_islands`` independent islands and collect their results.

    Island ``p`` runs with the derived seed :func:`island_seed`
    ``(master_seed, p)``, so the ensemble is reproducible and identical
    for every ``parallelism`` level.  ``mode="thread"`` runs islands in
    process with a bounded thread pool; ``mode="process"`` runs one
    island per OS process, each writing its result as JSON into
    ``workdir`` (a temporary directory by default) before the parent
    merges them.
    """
    if n_islands < 1:
        raise ValueError("n_islands must be positive")
    if parallelism < 1:
        raise ValueError("parallelism must be positive")
    seeds = [island_seed(master_seed, p) for p in range(n_islands)]
    tag = "smc" if isinstance(island_cfg, SmcConfig) else "mcmc"
    if mode == "thread":
        if parallelism == 1:
            results = [_run_island(island_cfg, target, s) for s in seeds]
        else:
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                results = list(pool.map(lambda s: _run_island(island_cfg, target, s), seeds))
    elif mode == "process":
        own_dir = workdir is None
        workdir = tempfile.mkdtemp(prefix="islands_") if own_dir else workdir
        paths = [os.path.join(workdir, f"island_{p}.json") for p in range(n_islands)]
        args = [(island_cfg, target, s, p) for s, p in zip(seeds, paths)]
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            list(pool.map(_island_worker, args))
        results = []
        for path in paths:
            result, _ = read_island_json(path)
            results.append(result)
            if own_dir:
                os.unlink(path)
        if own_dir:
            os.rmdir(workdir)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return IslandEnsemble(results, seeds, tag)


def island_weights(logz_totals):
    """Normalized island weights proportional to exp(log evidence).

    The maximum finite log evidence is subtracted before exponentiating,
    so only ratios matter.  Islands with log evidence of -infinity get
    weight exactly 0; if every island is degenerate an error is raised.
    """
    z = np.asarray(logz_totals, dtype=float)
    if z.ndim != 1 or z.size == 0:
        raise ValueError("logz_totals must be a non-empty vector")
    finite = np.isfinite(z)
    if not finite.any():
        raise DegenerateWeightsError("every island evidence is zero")
    w = np.exp(z - z[finite].max())
    return w / w.sum()


def log_mean_evidence(logz_totals):
    """Stable log of the average island evidence, log((1/P) sum Z_p)."""
    z = np.asarray(logz_totals, dtype=float)
    finite = np.isfinite(z)
    if not finite.any():
        return -np.inf
    m = z[finite].max()
    return float(m + np.log(np.mean(np.exp(z - m))))


def combine_weighted(ensemble, phi=None):
    """Evidence-weighted combination of island posterior averages.

    Computes ``sum_p omega_p * mean_i phi(theta_p[i])`` where the
    weights are :func:`island_weights` of the island log evidences.
    ``phi`` maps a batch of samples ``(n, d)`` to ``(n,)`` or
    ``(n, k)``; the default is the identity (posterior mean).
    """
    means = _island_means(ensemble, phi)
    w = island_weights(ensemble.logz_totals())
    return np.tensordot(w, means, axes=1)


def combine_unweighted(ensemble, phi=None):
    """Plain average of island posterior averages, ignoring evidence."""
    means = _island_means(ensemble, phi)
    return means.mean(axis=0)


def _island_means(ensemble, phi):
    means = []
    for r in ensemble.results:
        values = r.samples if phi is None else np.asarray(phi(r.samples))
        means.append(np.mean(values, axis=0))
    return np.asarray(means)


def island_to_json(result, seed) -> dict:
    """Serialize one island result to the JSON wire schema."""
    return {
        "seed": int(seed),
        "schedule": [float(v) for v in result.schedule],
        "logz_offset": float(result.logz.offset_sum),
        "logz_residual": float(result.logz.residual_log),
        "samples": np.asarray(result.samples).tolist(),
        "epochs": {
            "likelihood": int(result.epochs.likelihood),
            "gradient": int(result.epochs.gradient),
        },
    }


def island_from_json(payload):
    """Rebuild ``(IslandResult, seed)`` from the JSON wire schema."""
    result = IslandResult(
        samples=np.asarray(payload["samples"], dtype=float),
        logz=LogZAccumulator(payload["logz_offset"], payload["logz_residual"]),
        schedule=list(payload["schedule"]),
        epochs=EvalCounter(payload["epochs"]["likelihood"], payload["epochs"]["gradient"]),
        kernel_stats=KernelStats(),
    )
    return result, int(payload["seed"])


def write_island_json(result, seed, path) -> None:
    with open(path, "w") as fh:
        json.dump(island_to_json(result, seed), fh)


def read_island_json(path):
    with open(path) as fh:
        return island_from_json(json.load(fh))
