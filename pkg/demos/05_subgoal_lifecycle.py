"""The subgoal lifecycle, narrated.

Rolls an untrained curious-subgoal agent for a few hundred steps and
prints every lifecycle event: proposals (with their human-readable
descriptions), reached goals, and abandonments, then runs the grammar
validator over the whole rollout.
"""

from csg import agent as ag
from csg import learner as ln

cfg = ln.TrainConfig(algo="csg", n=5, m=5, total_steps=0, actors=1,
                     t_roll=300, hidden=16, emb=4, deterministic=True,
                     seed=2, abandon_limit=12)
trainer = ln.Trainer(cfg)
traj = trainer.collector.collect(cfg.t_roll)

names = {ln.EVENT_PROPOSED: "proposed", ln.EVENT_REACHED: "reached",
         ln.EVENT_ABANDONED: "abandoned"}
for t in range(cfg.t_roll):
    ev = int(traj.sg_events[t, 0])
    if ev == ln.EVENT_NONE:
        continue
    pos, value = traj.goals[t, 0]
    goal = ag.SubGoal(pos=int(pos), value=int(value))
    text = ag.describe_subgoal(goal, cfg.m)
    extra = ""
    if ev == ln.EVENT_PROPOSED and traj.r_g[t, 0] > 0:
        extra = "  (satisfied on proposal)"
    print(f"step {t:3d}  {names[ev]:9s}  {text}{extra}")
    if traj.dones[t, 0]:
        print(f"step {t:3d}  episode ended (r_e={traj.r_e[t, 0]:.3f})")

ok, msg = ln.validate_lifecycle(traj, abandon_limit=cfg.abandon_limit)
print("lifecycle grammar valid:", ok, msg or "")
print(f"mean curiosity reward this rollout: {traj.r_c.mean():.4f}")
