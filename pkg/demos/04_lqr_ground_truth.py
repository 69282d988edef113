"""
LQR ground truth and nominal control
====================================

The benchmark system is slightly unstable. With the model known, the
Riccati equation gives the optimal gain; with only data, nominal control
fits the model by least squares and plugs the fit into the same equation.
"""

import numpy as np

from arsearch import (
    average_cost,
    evaluate_gain,
    make_lqr_paper_instance,
    nominal_synthesis,
    solve_riccati,
    spectral_radius,
)
from arsearch.lqr import collect_transitions, optimal_cost

inst = make_lqr_paper_instance()
print("spectral radius of A: %.6f" % spectral_radius(inst.A))

sol = solve_riccati(inst)
print("Riccati converged in", sol.iterations_used, "iterations, residual %.1e" % sol.residual)
print("optimal gain\n", sol.K_opt.round(4))
ref = optimal_cost(inst)
print("optimal average cost %.5f" % ref)

# doing nothing is not an option: the cost of K = 0 is infinite
print("cost of K = 0:", average_cost(inst, np.zeros((3, 3))))

# relative cost grows quickly as the gain moves away from the optimum
rng = np.random.default_rng(1)
for eps in (0.002, 0.005, 0.01, 0.02):
    K = sol.K_opt + eps * rng.standard_normal((3, 3))
    print("gain error %.3f -> relative cost %.3f" % (eps, evaluate_gain(inst, K, ref).relative_cost))

# nominal control from a few short random-input rollouts
for rollouts in (10, 30, 100):
    stable = []
    for t in range(50):
        data = collect_transitions(inst, rollouts, 10, np.random.default_rng(t))
        stable.append(nominal_synthesis(data, inst, ref).stable)
    print("%4d timesteps of data: %.0f%% of fits stabilizing" % (rollouts * 10, 100 * np.mean(stable)))
