# %% [markdown]
# # Lower bounds for K-means
#
# With all multipliers set to their analytic values, the partition bound of
# K-means is just the sum of exact K-means optima on blocks of points.

# %%
from pbskit.instances import gen_points
from pbskit.kmeans import (KMeansProblem, det_partition, export_miqcp, gap_closed, kmeans_lower_bound, lloyd,
                           rand_partition)

prob = KMeansProblem(gen_points(100, 2, 3, seed=9), 3)
warm = lloyd(prob, replications=100, seed=9)
print(f"Lloyd upper bound {warm.sse:.4f}")

# %% [markdown]
# Dealing each warm-start cluster across the blocks keeps every block
# representative of the whole; random blocks are the baseline.

# %%
for name, part in [("round-robin", det_partition(warm, 5)), ("random", rand_partition(100, 20, seed=9))]:
    lb = kmeans_lower_bound(prob, part).lb
    print(f"{name:12s} lb {lb:.4f}  gap closed {gap_closed(lb, warm.sse):.3f}")

# %% [markdown]
# The same problem as MIQCP text, for an external solver.

# %%
small = KMeansProblem(prob.points[:10], 3)
for fmt in ("bigm", "hull"):
    print(fmt, export_miqcp(small, fmt, symmetry=True).stats)
