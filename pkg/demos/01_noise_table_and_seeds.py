"""
Shared noise and seeds
======================

Every random number in a run comes from one integer. Perturbations are
slices of a fixed Gaussian table, so workers only need to exchange an index.
"""

import numpy as np

from arsearch import SeedHierarchy, build_table, draw_direction_index, slice_perturbation

seeds = SeedHierarchy(2024)
table = build_table(seeds.table_seed, 1_000_000)
print("table length", len(table), "mean %.4f var %.4f" % (table.values.mean(), table.values.var()))

# a 2x3 perturbation is six consecutive table entries, read row-major
stream = seeds.direction_stream(0)
index = draw_direction_index(stream, 6, table)
delta = slice_perturbation(table, index, 2, 3)
print("index", index)
print(delta)
assert np.array_equal(delta.ravel(), table.values[index:index + 6])

# the same iteration stream always yields the same indices
again = seeds.direction_stream(0)
assert draw_direction_index(again, 6, table) == index

# rollout and evaluation seeds are separate pure functions of the master seed
print("rollout seed (j=0, k=0, +)", seeds.rollout_seed(0, 0, 1))
print("rollout seed (j=0, k=0, -)", seeds.rollout_seed(0, 0, -1))
print("evaluation seed (j=0, e=0)", seeds.eval_seed(0, 0))
