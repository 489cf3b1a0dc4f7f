# Write the MILP and CP models for a toy corpus, then score every
# two-state machine against both and against the exact search.
import itertools

import numpy as np

from lrm.models import export_cp, export_milp, substitute_and_score
from lrm.objective import machine_of
from lrm.rm import Alphabet
from lrm.search import exact_enumerate
from lrm.traces import LabelledTrace, build_prefix_tree

ab = Alphabet(["a", "b", "c"])
a, b, c = (ab.encode([n]) for n in "abc")
tree = build_prefix_tree([LabelledTrace(t) for t in [(a, b, a, c), (a, c, a, b), (b, c, b)]])

lp = export_milp(tree, 2, alphabet=ab)
cp = export_cp(tree, 2, alphabet=ab)
print(lp[:600], "...\n")
print(cp[:600], "...\n")

sigma = tree.observations
best = None
for flat in itertools.product(range(2), repeat=2 * len(sigma)):
    rm = machine_of(np.array(flat).reshape(2, len(sigma)), sigma)
    m, k = substitute_and_score(lp, rm), substitute_and_score(cp, rm)
    assert abs(m.objective - k.objective) < 1e-9
    if best is None or m.objective < best[0]:
        best = (m.objective, rm)

print("best by substitution:", round(best[0], 6))
print("exact search        :", round(exact_enumerate(tree, 2).best_cost, 6))
