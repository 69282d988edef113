"""
ARS on the LQR benchmark
========================

A handful of seeds of ARS V1 with the tuned step size and noise. The gain
is read off after every iteration and scored against the Riccati optimum.
A small noise scale matters here: larger ones bias the search toward gains
that are more aggressive than optimal.
"""

from arsearch import ArsConfig, make_lqr_paper_instance
from arsearch.harness import lqr_report, run_ars_lqr

inst = make_lqr_paper_instance()
config = ArsConfig(alpha=0.0015, nu=0.01, num_directions=4, table_length=10**6)
runs = run_ars_lqr(inst, config, seeds=range(5), max_timesteps=200_000)

budgets = [24_000, 48_000, 72_000, 100_000, 150_000, 200_000]
print("timesteps  stable  median relative cost")
for row in lqr_report(runs, budgets, inst):
    print("%9d  %5.0f%%  %.3f" % (row["timesteps"], 100 * row["stable_fraction"], row["p50"]))
