"""
Random search on small problems
===============================

Basic random search on a plain function, then ARS on the deterministic
quadratic toy and on the point mass, whose survival bonus is removed during
training only.
"""

import numpy as np

from arsearch import ArsConfig, StopCondition, brs_step, build_table, make_env, train
from arsearch.rng import make_generator

# basic random search: the oracle is any function of the parameters
target = np.array([1.0, -2.0, 0.5])
oracle = lambda theta: -float(np.sum((theta - target) ** 2))  # noqa: E731
theta = np.zeros(3)
table, stream = build_table(0, 10_000), make_generator(0)
config = ArsConfig(alpha=0.5, nu=0.05, num_directions=8)
for j in range(60):
    theta = brs_step(theta, config, oracle, table, stream)
print("BRS after 60 iterations", theta.round(3), "target", target)

# ARS V1 on the quadratic toy; the best achievable reward is 0
config = ArsConfig(alpha=0.02, nu=0.02, num_directions=8, table_length=10**6)
result = train(config, make_env("quadratic"), StopCondition(max_iterations=200), eval_every=50)
for point in result.curve:
    print("quadratic  iter %3d  episodes %5d  reward %.5f" % (point.iteration, point.episodes, point.eval_reward))

# V1-t and V2-t on the point mass with its default reward
env = make_env("point-mass")
for version in ("V1t", "V2t"):
    config = ArsConfig(alpha=0.02, nu=0.03, num_directions=8, top_b=4, version=version, table_length=10**6)
    result = train(config, env, StopCondition(max_iterations=60), eval_every=20)
    rewards = ", ".join("%.1f" % p.eval_reward for p in result.curve)
    print(f"point mass {version}: eval rewards {rewards}")

# Removing the survival bonus during training only helps when the task reward
# can be positive. Here it never is, so without the bonus an early exit looks
# attractive and the default-reward evaluation gets worse.
config = ArsConfig(alpha=0.02, nu=0.03, num_directions=8, table_length=10**6)
result = train(config, make_env("point-mass", subtract_bonus=True), StopCondition(max_iterations=60), eval_every=20)
rewards = ", ".join("%.1f" % p.eval_reward for p in result.curve)
print(f"point mass V1, bonus removed in training: eval rewards {rewards}")
