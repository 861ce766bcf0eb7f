"""Off-policy V-trace return targets, concretely.

Shows the targets on a short hand-made sequence, and that with unit clip
thresholds and on-policy data they reduce exactly to n-step returns.
"""

import numpy as np

from csg.vtrace import VtraceConfig, vtrace_targets

T, B = 5, 1
rewards = np.array([[0.0], [0.0], [1.0], [0.0], [0.5]])
values = np.array([[0.1], [0.2], [0.6], [0.3], [0.4]])
boot = np.array([0.25])
discounts = np.full((T, B), 0.9)

# behavior and target log-probs of the taken actions
mu = np.log(np.full((T, B), 0.25))
pi_off = mu + np.array([[0.3], [-0.5], [0.2], [0.0], [-0.1]])

cfg = VtraceConfig(rho_bar=1.0, c_bar=1.0, gamma=0.9)
vs, adv = vtrace_targets(mu, pi_off, rewards, values, boot, discounts, cfg)
print("off-policy targets vs raw values:")
for t in range(T):
    print(f"  t={t}  V={values[t, 0]:.3f}  vs={vs[t, 0]:.3f}  "
          f"adv={adv[t, 0]:+.3f}")

# ------------------------------------------------- on-policy degenerates
vs_on, _ = vtrace_targets(mu, mu, rewards, values, boot, discounts, cfg)
nstep = np.zeros(T)
acc = float(boot[0])
for t in range(T - 1, -1, -1):
    acc = rewards[t, 0] + 0.9 * acc
    nstep[t] = acc
print("on-policy vs equals the n-step return:",
      np.allclose(vs_on[:, 0], nstep, atol=1e-12))
