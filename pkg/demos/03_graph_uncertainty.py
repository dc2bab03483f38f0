"""How an unoriented mediator edge turns one indirect effect into an average over DAGs.

Run with ``python3 demos/03_graph_uncertainty.py``.
"""

import numpy as np

from qrmed import cpdag_of_dag, enumerate_mec, gen_scenario, ols_mediator_effects, random_er_truth

# A chain M0 -> M1 -> M2 has no v-structure, so only its skeleton is identified.
chain = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]], dtype=np.int8)
cpdag = cpdag_of_dag(chain)
members = enumerate_mec(cpdag)
print(f"the chain's equivalence class has {len(members)} DAGs:")
for g in members:
    edges = [f"M{i}->M{k}" for i, k in zip(*np.nonzero(g))]
    print("  ", ", ".join(edges))

truth = random_er_truth(3, 3, seed=2)
ds = gen_scenario(truth, "all_correct", n=3000, seed=4)
eff = ols_mediator_effects(ds, 1, members=members)
print("\nM1 indirect effect under each member:", np.round(eff.per_dag_im, 3))
print(f"average {eff.im.point:+.3f} with 95% interval [{eff.im.ci_low:+.3f}, {eff.im.ci_high:+.3f}]")
