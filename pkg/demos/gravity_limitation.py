# In the gravity room the hidden force only matters for "up" moves, and
# the labels never show it.  The machine that tracks the force predicts
# the labels no better than one state, so minimising prediction cost
# cannot prefer it.
from lrm.envs.fixtures import perfect_gravity_rm
from lrm.envs.rollout import collect
from lrm.objective import evaluate
from lrm.rm import single_state_rm, to_dot
from lrm.search import exact_enumerate
from lrm.traces import build_prefix_tree

traces = collect("gravity", 10_000, seed=0)
tree = build_prefix_tree(traces)

print("force-tracking machine", evaluate(perfect_gravity_rm(traces.alphabet), tree).total)
print("single state          ", evaluate(single_state_rm(), tree).total)

best = exact_enumerate(tree, 2)
print("best with two states  ", best.best_cost)
print(to_dot(best.best_rm, traces.alphabet))
