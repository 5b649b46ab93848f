#!/usr/bin/env python3
"""Config sweep for the mountain-car qualitative-ordering experiment.

Searches (sigma, dt, eta0) for a setting where the fixed-scale Cauchy policy
reliably reaches rolling-100 return > 400 within 1000 episodes while the
matched fixed-scale Gaussian stays below 50.  The chosen config is frozen
into configs/pmc_fixed_sigma.json.
"""

import math
import sys
import time

import numpy as np

from heavypg.environments import EnvConfig
from heavypg.policies import PolicyConfig
from heavypg.trainer import StepSchedule, TrainConfig, train


def run(family, sigma, seed, dt, eta0, episodes=1000):
    env = EnvConfig("pmc", dt=dt, horizon_cap=500, init=2.26).build()
    y0 = math.log(sigma) if family == "cauchy" else math.log(sigma**2)
    pol = PolicyConfig(
        family=family, feature_map="polynomial", degree=1,
        x0=(0.0, 0.0), y0=y0, variable_scale=False,
    )
    cfg = TrainConfig(
        gamma=0.97, episodes=episodes, batch_size=5,
        schedule=StepSchedule(kind="geometric_decay", eta0=eta0, eta_min=eta0 * 1e-4),
        seed=seed, record_coords=False,
    )
    params, log = train(env, pol, cfg)
    roll = log.rolling_mean_return(100)
    return roll, params


def main():
    seeds = range(4)
    for dt in (0.4,):
        for sigma in (0.2, 0.3):
            for eta0 in (1e-4, 3e-4):
                for family in ("cauchy", "gaussian"):
                    t0 = time.time()
                    finals, maxes = [], []
                    for seed in seeds:
                        roll, params = run(family, sigma, seed, dt, eta0)
                        finals.append(roll[-1])
                        maxes.append(roll.max())
                    print(
                        f"dt={dt} sig={sigma} eta0={eta0} {family}: "
                        f"final={np.round(finals).astype(int).tolist()} "
                        f"max={np.round(maxes).astype(int).tolist()} "
                        f"({time.time() - t0:.0f}s)",
                        flush=True,
                    )


if __name__ == "__main__":
    sys.exit(main())
