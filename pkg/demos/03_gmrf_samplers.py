"""Four posterior samplers for a Gaussian lattice field, compared by ACF.

The field has strong pairwise coupling, so single-site moves mix slowly.
Conditional-SMC kernels update many sites jointly: partially blocked over
two interleaved spiral chains, or fully blocked over the whole field.  The
tree sampler draws the same two chain blocks exactly and is the gold
standard the partially blocked kernel approximates.
"""

import numpy as np

from graphsmc.experiments import compute_acf, run_gmrf_chain
from graphsmc.models.gmrf import GMRFModel, exact_posterior, simulate_observations

rows = cols = 6
y = simulate_observations(rows, cols, 1.0, 0.1, np.random.default_rng(0))
model = GMRFModel(rows, cols, 1.0, 0.1, y)
post = exact_posterior(model)
track = 14
iters = 4000

print(f"{rows}x{cols} field, sigma_obs=1, sigma_pair=0.1, tracking x_{track}")
print(f"{'sampler':10s} {'lag-1':>8s} {'lag-5':>8s} {'mean err':>10s}")
for sampler in ("gibbs", "tree", "pgas-pb", "pgas"):
    chain = run_gmrf_chain(
        model, sampler, iters, 20, np.random.default_rng(1), track=[track], init=post.mean.copy()
    )
    kept = chain[iters // 10:, 0]
    rho = compute_acf(kept, post.mean[track], 5)
    print(f"{sampler:10s} {rho[1]:8.3f} {rho[5]:8.3f} {kept.mean() - post.mean[track]:10.4f}")
print("(joint updates decorrelate faster; the fully blocked kernel wins, at "
      "the highest cost per sweep)")
