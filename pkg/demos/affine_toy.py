"""Momentum vs plain iteration on a small averaged affine map.

Run:  python demos/affine_toy.py
"""
import numpy as np

from tkma import Algorithm, SolverConfig, run
from tkma.rng import gaussian_array, rng_new
from tkma.theory import affine_problem, affine_rate_problem, tkma_rate_run

rng = rng_new(1, 0)
prob = affine_problem(rng, d=6, alpha=0.5)
x0 = prob.xhat + 5.0 * gaussian_array(rng, 6)

# same budget of 60 operator evaluations for everyone
for algo in (Algorithm.PICARD, Algorithm.KM, Algorithm.TKMA):
    tr = run(prob.T, x0, SolverConfig(algorithm=algo, max_t_applies=60))
    last = tr.records[-1]
    print(f"{algo.value:8s} evals={last.t_applies:3d}  residual={last.residual:.3e}")

# --- the momentum coefficient settles down ---
tr = run(prob.T, x0, SolverConfig(algorithm=Algorithm.TKMA, max_t_applies=60))
theta = tr.column("theta")
print("theta, first 6 steps:", np.round(theta[:6], 4))
print("theta, last 3 steps: ", np.round(theta[-3:], 4))

# --- k * ||x^{k+1} - x^k||^2 on a 50-d rotation-type problem ---
big = affine_rate_problem(50, alpha=0.5, seed=0)
diag = tkma_rate_run(big.T, big.xhat + gaussian_array(rng_new(0, 8), 50), 2001)
for k in (10, 100, 200, 1000, 2000):
    print(f"k={k:5d}  k*|dx|^2 = {diag.scaled_at(k):.3e}")
print("share of theta variation in the final quarter:", f"{diag.final_quartile_share():.2e}")
