"""Config-driven sweep to CSV, then a rate fit over the rows.

The same sweep can be run from the shell:

    python -m islandmc run --config sweep.json --out islands.csv
    python -m islandmc fit --csv islands.csv --x NP --y mse
"""
import numpy as np

from islandmc.harness import fit_rate, parse_config, read_csv, run_experiment, write_csv

config = parse_config({
    "target": {"kind": "gaussian", "d": 8, "m": 16, "sigma": 1.0, "seed": 0},
    "method": {"kind": "smc_par", "kernel": {"kind": "hmc", "step_size": 0.2, "leapfrog_steps": 10}},
    "sweep": [
        {"N": 32, "P": 1, "M": 8},
        {"N": 32, "P": 2, "M": 8},
        {"N": 32, "P": 4, "M": 8},
        {"N": 32, "P": 8, "M": 8},
    ],
    "replicates": 8,
    "master_seed": 11,
})

rows = run_experiment(config)
write_csv(rows, "islands.csv")
print(f"wrote {len(rows)} rows to islands.csv")

fit = fit_rate(read_csv("islands.csv"), "NP", "mse")
print(f"mse ~ (NP)^{fit.slope:.3f}   (r2 {fit.r2:.3f})")

logzs = np.array([float(r["logZ"]) for r in rows])
print(f"logZ across rows: mean {logzs.mean():.3f}, sd {logzs.std():.3f}")
