"""
Langevin sampling of a one-dimensional conjugate posterior
==========================================================

Prior N(0, 1), one observation y = 2 with unit noise: the posterior is
N(1, 1/2). Both discretizations should reproduce it up to an O(gamma) bias.
"""

import numpy as np

from pnpmc import ChainConfig, GaussianLinearLikelihood, GaussianMixture, ScoreModel, run_batch

lik = GaussianLinearLikelihood([[1.0]], [2.0], beta=1.0)
score = ScoreModel(GaussianMixture([1.0], [[0.0]], [1.0]))

for disc in ("pnp", "red"):
    cfg = ChainConfig(gamma=1e-2, n_iters=2000, batch=2000, seed=0, discretization=disc,
                      init_box=(-3.0, 3.0))
    x = run_batch(cfg, lik, score).samples[:, 0]
    print(f"{disc}: mean {x.mean():.3f} (exact 1.0), variance {x.var():.3f} (exact 0.5)")

# smaller step; pool the second half of every chain instead of only the last iterate
cfg = ChainConfig(gamma=1e-3, n_iters=10_000, batch=1000, seed=0, init_box=(-3.0, 3.0),
                  record_every=500)
traj = run_batch(cfg, lik, score).trajectory[10:, :, 0]
print(f"gamma=1e-3, pooled: mean {traj.mean():.4f}, variance {traj.var():.4f}")
