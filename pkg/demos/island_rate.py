"""Error of the weighted island estimator falls like 1/(N P).

Runs independent SMC islands, combines posterior-mean estimates with
evidence weights, and fits the log-log MSE-vs-P slope (ideal: -1).
"""
import numpy as np

from islandmc.islands import combine_weighted, run_islands
from islandmc.kernels import HmcConfig
from islandmc.smc import SmcConfig
from islandmc.targets import make_gaussian_target

target = make_gaussian_target(16, 32, 1.0, seed=0, theta_star=np.ones(16))
mu, _, _ = target.analytic_posterior()
cfg = SmcConfig(n_particles=32, mutation_steps=16,
                kernel=HmcConfig(step_size=0.1, leapfrog_steps=10))

ps = [1, 2, 4, 8]
seeds = range(12)
mses = []
for p in ps:
    errs = []
    for s in seeds:
        est = combine_weighted(run_islands(p, cfg, target, master_seed=1000 * p + s))
        errs.append(np.mean((est - mu) ** 2))
    mses.append(np.mean(errs))
    print(f"P={p:2d}  mse={mses[-1]:.5f}")

slope = np.polyfit(np.log(ps), np.log(mses), 1)[0]
print(f"log-log slope: {slope:.3f}  (ideal -1)")
