"""Per-tick prediction entropy in the two-human crossing scenario."""
import argparse
import math
import tempfile

import numpy as np

from crowdnav.config import load_scenario
from crowdnav.sim import run_scenario
from crowdnav.trace import read_trace

ap = argparse.ArgumentParser()
ap.add_argument("--seeds", type=int, default=10)
args = ap.parse_args()

for seed in range(args.seeds):
    cfg = load_scenario("crossing_humans", {"seed": seed})
    with tempfile.TemporaryDirectory() as tmp:
        ticks = read_trace(run_scenario(cfg, tmp).trace_path)[1:]
    ent = np.array([np.mean(r["entropy"]) for r in ticks])
    dist = np.array([math.dist(*r["humans"]) for r in ticks])
    inter = np.flatnonzero(dist < cfg.pedestrians.repulse_radius)
    if not inter.size:
        print(f"seed {seed}: humans never interact")
        continue
    a, b = inter[0], inter[-1]
    print(f"seed {seed}: before {ent[:a].mean():.3f}  interaction peak {ent[a:b + 1].max():.3f}"
          f"  after {ent[b + 1:].mean() if b + 1 < len(ent) else float('nan'):.3f}")
