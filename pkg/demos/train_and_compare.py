"""Train the three variants briefly on one seed and compare them.

This is a scaled-down version of the comparison the ``reachppo compare`` CLI
runs (default there: 3e5 steps per seed). Here each variant trains for
30k steps, roughly 20 s apiece on one core. Outputs land in ./runs-demo.
"""
import numpy as np

from reachppo.harness import RunConfig, compare

cfg = RunConfig(mode="compare", seeds=(0,), total_timesteps=30_000, eval_episodes=50,
                checkpoint_every=1000, out_dir="runs-demo")
out = compare(cfg)

print("variant    final-100 reward   success@5cm  success@10cm")
for variant, res in out.items():
    run = res["results"][0]
    s = res["success"]
    print(f"{variant:9s}  {run.final_reward():15.1f}   {s[4]:10.0%}  {s[9]:11.0%}")

# learning curves for plotting live in runs-demo/obstacle-free/compare_curves.csv
curves = np.genfromtxt("runs-demo/obstacle-free/compare_curves.csv", delimiter=",", names=True, dtype=None,
                       encoding="utf-8")
print("curve rows:", len(curves))
