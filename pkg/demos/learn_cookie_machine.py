# Learn a reward machine for the cookie domain from random play and
# compare it with the hand-built machine and the one-state machine.
from lrm.envs.fixtures import perfect_cookie_rm
from lrm.envs.rollout import collect
from lrm.objective import evaluate
from lrm.rm import estimate_delta_r, single_state_rm, to_dot
from lrm.search import SearchConfig, local_search
from lrm.traces import build_prefix_tree

traces = collect("cookie", 50_000, seed=0)
print(len(traces), "episodes,", traces.num_observations, "observations")

# dropping repeated labels shrinks the corpus a lot
small = traces.compress()
print("compressed:", small.num_observations, "observations")

tree = build_prefix_tree(small)
res = local_search(tree, SearchConfig(u_max=6, t_max=100, seed=0, compressed_mode=True))

print("learned     ", round(res.best_cost, 2))
print("hand-built  ", round(evaluate(perfect_cookie_rm(small.alphabet), tree).total, 2))
print("single state", round(evaluate(single_state_rm(), tree).total, 2))

# edge labels show the mean reward seen on each transition;
# pipe into `dot -Tpng` to draw it
rm = res.best_rm.with_rewards(estimate_delta_r(res.best_rm, small))
print(to_dot(rm, small.alphabet))
