import math

import numpy as np
import pytest

from islandmc.islands import (
    IslandEnsemble,
    combine_unweighted,
    combine_weighted,
    island_from_json,
    island_seed,
    island_to_json,
    island_weights,
    log_mean_evidence,
    read_island_json,
    run_islands,
    write_island_json,
)
from islandmc.kernels import KernelStats, PcnConfig
from islandmc.mcmc import McmcConfig
from islandmc.smc import (
    DegenerateWeightsError,
    IslandResult,
    LogZAccumulator,
    SmcConfig,
    run_smc,
)
from islandmc.targets import EvalCounter, make_gaussian_target


def stub_ensemble(sample_sets, logzs):
    results = [
        IslandResult(np.asarray(s, dtype=float), LogZAccumulator(z, 0.0), [1.0],
                     EvalCounter(), KernelStats())
        for s, z in zip(sample_sets, logzs)
    ]
    return IslandEnsemble(results, list(range(len(results))), "smc")


def test_island_seed_deterministic_and_spread():
    seeds = [island_seed(123, p) for p in range(64)]
    assert seeds == [island_seed(123, p) for p in range(64)]
    assert len(set(seeds)) == 64
    assert all(s >= 0 for s in seeds)


def test_island_weights_equal_logz():
    w = island_weights(np.full(4, -3.2))
    assert w == pytest.approx(np.full(4, 0.25), abs=1e-12)


def test_island_weights_hand_softmax():
    w = island_weights(np.array([0.0, math.log(3.0)]))
    assert w == pytest.approx([0.25, 0.75], abs=1e-12)


def test_island_weights_shift_invariant():
    w = island_weights(np.array([-1000.0, -1000.0 + math.log(3.0)]))
    assert w == pytest.approx([0.25, 0.75], abs=1e-12)


def test_island_weights_degenerate_island_gets_zero():
    w = island_weights(np.array([0.0, -np.inf, 0.0]))
    assert w == pytest.approx([0.5, 0.0, 0.5], abs=1e-12)
    with pytest.raises(DegenerateWeightsError):
        island_weights(np.full(3, -np.inf))


def test_log_mean_evidence_hand_value():
    value = log_mean_evidence(np.array([0.0, math.log(3.0)]))
    assert value == pytest.approx(math.log(2.0), abs=1e-12)
    assert log_mean_evidence(np.full(2, -np.inf)) == -np.inf


def test_combine_weighted_hand_case():
    ens = stub_ensemble([[[1.0]], [[2.0]]], [0.0, math.log(3.0)])
    assert combine_weighted(ens) == pytest.approx([1.75], abs=1e-12)
    assert combine_unweighted(ens) == pytest.approx([1.5], abs=1e-12)


def test_combine_single_island_is_island_mean():
    ens = stub_ensemble([[[1.0, 2.0], [3.0, 4.0]]], [-5.0])
    assert combine_weighted(ens) == pytest.approx([2.0, 3.0], abs=1e-12)


def test_combine_equal_weights_match_unweighted():
    rng = np.random.default_rng(0)
    sets = [rng.standard_normal((4, 2)) for _ in range(3)]
    ens = stub_ensemble(sets, [1.7, 1.7, 1.7])
    assert combine_weighted(ens) == pytest.approx(combine_unweighted(ens), abs=1e-12)


def test_combine_constant_statistic_ignores_weights():
    ens = stub_ensemble([[[2.0]], [[2.0]]], [0.0, 5.0])
    assert combine_weighted(ens) == pytest.approx([2.0], abs=1e-12)


def test_combine_with_custom_statistic():
    ens = stub_ensemble([[[1.0]], [[2.0]]], [0.0, math.log(3.0)])
    value = combine_weighted(ens, phi=lambda s: s**2)
    assert value == pytest.approx([0.25 * 1.0 + 0.75 * 4.0], abs=1e-12)


def test_run_islands_single_island_matches_direct_run():
    target = make_gaussian_target(2, 4, 1.0, seed=1)
    cfg = SmcConfig(n_particles=16, mutation_steps=2)
    ens = run_islands(1, cfg, target, master_seed=77)
    direct = run_smc(cfg, target, island_seed(77, 0))
    assert np.array_equal(ens.results[0].samples, direct.samples)
    assert ens.results[0].logz == direct.logz


def test_run_islands_parallelism_invariant():
    target = make_gaussian_target(2, 4, 1.0, seed=1)
    cfg = SmcConfig(n_particles=16, mutation_steps=2)
    a = run_islands(4, cfg, target, master_seed=5, parallelism=1)
    b = run_islands(4, cfg, target, master_seed=5, parallelism=4)
    for ra, rb in zip(a.results, b.results):
        assert np.array_equal(ra.samples, rb.samples)
        assert ra.logz == rb.logz
        assert ra.schedule == rb.schedule


def test_run_islands_process_mode_matches_thread_mode(tmp_path):
    target = make_gaussian_target(2, 4, 1.0, seed=1)
    cfg = SmcConfig(n_particles=16, mutation_steps=1)
    a = run_islands(3, cfg, target, master_seed=8, mode="thread")
    b = run_islands(3, cfg, target, master_seed=8, parallelism=3, mode="process",
                    workdir=str(tmp_path))
    for ra, rb in zip(a.results, b.results):
        assert np.allclose(ra.samples, rb.samples, atol=0, rtol=0)
        assert ra.logz.total == pytest.approx(rb.logz.total, abs=1e-15)
    assert sorted(p.name for p in tmp_path.iterdir()) == [
        "island_0.json", "island_1.json", "island_2.json",
    ]


def test_run_islands_smoke_many_islands():
    target = make_gaussian_target(4, 8, 1.0, seed=6)
    cfg = SmcConfig(n_particles=32, mutation_steps=2)
    ens = run_islands(16, cfg, target, master_seed=3, parallelism=4)
    totals = ens.logz_totals()
    assert totals.shape == (16,)
    assert np.all(np.isfinite(totals))
    assert len(set(totals.tolist())) == 16


def test_run_islands_mcmc_serial_islands():
    target = make_gaussian_target(2, 4, 1.0, seed=2)
    cfg = McmcConfig(n_samples=10, burn_in=5, kernel=PcnConfig(beta=0.5))
    ens = run_islands(3, cfg, target, master_seed=4)
    assert ens.method_tag == "mcmc"
    # MCMC islands carry unit evidence, so weighting degenerates to the mean
    assert np.all(ens.logz_totals() == 0.0)
    assert combine_weighted(ens) == pytest.approx(combine_unweighted(ens), abs=1e-12)
    assert ens.results[0].samples.shape == (10, 2)
    assert ens.results[0].epochs.likelihood == 5 + 9 + 1


def test_run_islands_mcmc_parallel_islands():
    target = make_gaussian_target(2, 4, 1.0, seed=2)
    cfg = McmcConfig(n_samples=8, burn_in=12, kernel=PcnConfig(beta=0.5), mode="parallel")
    ens = run_islands(2, cfg, target, master_seed=4)
    assert ens.results[0].samples.shape == (8, 2)
    assert ens.results[0].epochs.likelihood == 8 * 13
    a = run_islands(2, cfg, target, master_seed=4)
    assert np.array_equal(a.results[1].samples, ens.results[1].samples)


def test_run_islands_validation():
    target = make_gaussian_target(2, 4, 1.0, seed=2)
    cfg = SmcConfig(n_particles=4, mutation_steps=1)
    with pytest.raises(ValueError):
        run_islands(0, cfg, target, master_seed=1)
    with pytest.raises(ValueError):
        run_islands(1, cfg, target, master_seed=1, parallelism=0)
    with pytest.raises(ValueError):
        run_islands(1, cfg, target, master_seed=1, mode="mpi")


def test_island_json_round_trip(tmp_path):
    target = make_gaussian_target(3, 6, 1.0, seed=5)
    cfg = SmcConfig(n_particles=8, mutation_steps=1)
    result = run_smc(cfg, target, seed=13)
    path = tmp_path / "island.json"
    write_island_json(result, 13, path)
    loaded, seed = read_island_json(path)
    assert seed == 13
    assert np.array_equal(loaded.samples, result.samples)
    assert loaded.logz == result.logz
    assert loaded.schedule == result.schedule
    assert loaded.epochs.likelihood == result.epochs.likelihood
    assert loaded.epochs.gradient == result.epochs.gradient


def test_island_json_schema_fields():
    result = IslandResult(np.zeros((1, 2)), LogZAccumulator(1.5, -0.5), [1.0],
                          EvalCounter(7, 3), KernelStats())
    payload = island_to_json(result, 99)
    assert payload == {
        "seed": 99,
        "schedule": [1.0],
        "logz_offset": 1.5,
        "logz_residual": -0.5,
        "samples": [[0.0, 0.0]],
        "epochs": {"likelihood": 7, "gradient": 3},
    }
    rebuilt, seed = island_from_json(payload)
    assert seed == 99
    assert rebuilt.logz.total == 1.0
