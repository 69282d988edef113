"""
Linear policies and state whitening
===================================

V1 policies act with ``M x``. V2 policies first whiten the state with a
running mean and variance, which are refreshed once per iteration.
"""

import numpy as np

from arsearch import PolicyParams, RunningStat, Version, act, freeze_stats, push_state

M = np.array([[1.0, 0.5]])
plain = PolicyParams.zeros(1, 2, Version.V1).with_gain(M)
print("V1 action", act(plain, None, 0, [2.0, 4.0]))

# perturbed copies M + nu*delta and M - nu*delta
delta = np.array([[0.3, -1.0]])
print("plus ", act(plain, delta, +1, [2.0, 4.0], nu=0.1))
print("minus", act(plain, delta, -1, [2.0, 4.0], nu=0.1))

# collect some states with very different scales
rng = np.random.default_rng(0)
states = rng.normal([10.0, -3.0], [100.0, 0.01], size=(5000, 2))
stat = RunningStat.empty(2)
for x in states:
    push_state(stat, x)
mu, var = freeze_stats(stat)
print("running mean", mu, "running variance", var)

whitened = PolicyParams(np.eye(2), mu, var, Version.V2)
w = np.array([act(whitened, None, 0, x) for x in states])
print("whitened mean", w.mean(0).round(6), "whitened std", w.std(0).round(6))

# a coordinate that never moves is switched off instead of dividing by zero
frozen = whitened.with_stats(mu, np.array([var[0], 0.0]))
print("constant coordinate ignored:", act(frozen, None, 0, [mu[0] + 1.0, 123.0]))
