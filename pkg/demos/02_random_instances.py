# %% [markdown]
# # How much of a basic step does the cheap bound recover?
#
# Random ellipsoidal programs with 10 variables, 8 disjunctions and 5
# disjuncts each.  For a random grouping of the disjunctions we compare the
# partition bound L_P with the dual after really merging each group.

# %%
from pbskit.dual import DualConfig, dual_ascent
from pbskit.instances import GenSpec, gen_cqdp, gen_random_partition
from pbskit.model import InfeasibleProgram
from pbskit.partition import corollary2_report, solve_to_optimality

rows = []
seed = 0
while len(rows) < 3:
    seed += 1
    prog = gen_cqdp(GenSpec(n=10, K=8, D=5, seed=seed))
    try:
        z = solve_to_optimality(prog).value
    except InfeasibleProgram:
        continue  # many draws have no common point
    trace = dual_ascent(prog, DualConfig(max_iter=500))
    part = gen_random_partition(8, min_merges=4, max_block=5, seed=seed)
    rep = corollary2_report(prog, trace.best_multipliers, part, dual=DualConfig(max_iter=500),
                            lr_hull=trace.best_value, with_z_star=False)
    rows.append((seed, part.blocks, z, rep))

# %%
for seed, blocks, z, rep in rows:
    frac = rep.improvement_fraction
    print(f"seed {seed}: blocks {blocks}")
    print(f"   z* {z:.2f}  post-step dual {rep.z_post_bs_dual:.2f}  L_P {rep.l_partition:.2f}  "
          f"LR {rep.lr_plain:.2f}  recovered {'n/a' if frac is None else f'{100 * frac:.0f}%'}")
