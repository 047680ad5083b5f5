"""Tempered SMC evidence estimate against the conjugate closed form."""
import numpy as np

from islandmc.kernels import PcnConfig
from islandmc.smc import SmcConfig, run_smc
from islandmc.targets import make_gaussian_target

target = make_gaussian_target(4, 16, 1.0, seed=0)
_, _, logz_true = target.analytic_posterior()

cfg = SmcConfig(n_particles=256, mutation_steps=3, kernel=PcnConfig(beta=0.5))
res = run_smc(cfg, target, seed=42)

print(f"analytic log Z : {logz_true:.4f}")
print(f"estimated log Z: {res.logz.total:.4f}")
print(f"stages         : {len(res.schedule)}")
print("schedule       :", np.round(res.schedule, 4))
print(f"accept rate    : {res.kernel_stats.accepts / res.kernel_stats.proposals:.3f}")
print(f"epochs         : {res.epochs.likelihood} likelihood evals")

# repeat over seeds to see the spread of the estimator
logzs = [run_smc(cfg, target, seed=s).logz.total for s in range(20)]
print(f"20 seeds       : mean {np.mean(logzs):.4f}, sd {np.std(logzs):.4f}")
