"""How the policy-feedback discount reacts to the policy's confidence.

The discount is ``clip(score, eta, 1)`` where the score measures how typical
the executed action is under the policy. Three scores are available; this
script prints each one for actions drawn from Poisson-sized ensembles.
"""
import math

import numpy as np

from reachppo.netcore import diag_gaussian_log_prob
from reachppo.ppo import feedback_score, policy_feedback_gamma

rng = np.random.default_rng(1)
eta = 0.55

for spread in (0.5, 0.1, 0.02):
    ls = np.full(6, math.log(spread))
    print(f"\nspread {spread}")
    for i in (1, 3, 6, 11):
        # averaging i draws shrinks the deviation from the mean by sqrt(i)
        a = spread * rng.standard_normal((2000, i, 6)).mean(axis=1)
        logp = diag_gaussian_log_prob(np.zeros(6), ls, a)
        row = []
        for scale in ("joint", "relative", "density"):
            g = policy_feedback_gamma(feedback_score(logp, ls, scale), eta)
            row.append(f"{scale} {g.mean():.3f}")
        print(f"  ensemble {i:2d}: mean discount  " + "   ".join(row))

# the raw density changes with the spread's units, so at small spreads it sits
# above 1 and the clip pins the discount; the ratio-to-peak scores do not drift
