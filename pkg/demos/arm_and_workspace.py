"""A tour of the arm model, the target workspace and the reward.

Run with ``python3 demos/arm_and_workspace.py``; takes about a second.
"""
import math

import numpy as np

from reachppo.env import ReachEnv, reward
from reachppo.kinematics import UR5E_HOME_EE, ArmModel, Workspace, forward_kinematics, sample_target

arm = ArmModel()
print("link lengths (m):", arm.link_lengths().round(4))

# all joints at zero: the arm lies flat, reaching along -x
home = forward_kinematics(arm, np.zeros(6))
print("home end-effector:", home.ee_position.round(4), "azimuth %.0f deg" %
      math.degrees(math.atan2(UR5E_HOME_EE[1], UR5E_HOME_EE[0])))

# turning the base joint swings the whole arm about z, so the distance from z stays put
turned = forward_kinematics(arm, np.array([0.5, 0, 0, 0, 0, 0]))
print("radius before/after base turn: %.4f %.4f" % (np.hypot(*home.ee_position[:2]),
                                                    np.hypot(*turned.ee_position[:2])))

# targets come from the quarter shell that faces the home reach direction
ws = Workspace()
rng = np.random.default_rng(0)
targets = np.array([sample_target(ws, rng) for _ in range(2000)])
r = np.linalg.norm(targets, axis=1)
print("sampled radius mean %.3f, analytic %.3f" % (r.mean(), ws.mean_radius()))

# the log term dominates close to the target: each factor of 10 in error costs about 4.6
for e in (1.0, 0.1, 0.01, 0.001):
    print("error %6.3f m -> reward %7.3f" % (e, reward(e)))

# a short episode with the home pose held fixed
env = ReachEnv()
obs = env.reset(rng)
for t in range(3):
    obs, r_t, done, info = env.step(np.zeros(6))
    print("step", t, "error %.3f m, reward %.3f" % (info["error"], r_t))
