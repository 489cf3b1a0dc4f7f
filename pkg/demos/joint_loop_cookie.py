# Learn the machine and the policy together on the cookie domain.
# Takes about half a minute; compare the totals with random play.
import logging

from lrm.agent import LoopConfig, run_joint_loop
from lrm.envs.rollout import collect

logging.basicConfig(level=logging.INFO)

cfg = LoopConfig(t_w=20_000, t_train=300_000, seed=0)
res = run_joint_loop("cookie", cfg)

print(res.reward_csv())
print("relearns:", res.relearns, " adopted:", len(res.adoptions), " states:", res.rm.num_states)

learned = sum(row[1] for row in res.reward_log)
random_play = sum(t.total_reward for t in collect("cookie", cfg.t_train, seed=1000))
print(f"reward {learned:.0f} vs {random_play:.0f} for random play")
