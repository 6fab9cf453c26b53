"""Horizon entropy for goal-conforming vs. deviating scripted walks."""
import argparse
import statistics

from crowdnav.experiments import confidence_pair

ap = argparse.ArgumentParser()
ap.add_argument("--seeds", type=int, default=20)
args = ap.parse_args()

gaps = []
print("seed  conforming  deviating  gap")
for seed in range(args.seeds):
    r = confidence_pair(seed)
    gaps.append(r["gap"])
    print(f"{seed:4d}  {r['conforming']:10.3f}  {r['deviating']:9.3f}  {r['gap']:.3f}")
print(f"gap min {min(gaps):.3f} mean {statistics.fmean(gaps):.3f} nats")
