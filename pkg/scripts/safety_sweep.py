"""Run shipped scenarios over several seeds and tabulate safety metrics."""
import argparse
import statistics

from crowdnav.config import load_scenario
from crowdnav.sim import run_scenario

ap = argparse.ArgumentParser()
ap.add_argument("--scenarios", nargs="+", default=["symmetric_crossing", "default"])
ap.add_argument("--seeds", type=int, default=10)
ap.add_argument("--pth", type=float, default=None)
args = ap.parse_args()

print("scenario            seed  complete  tube  pth  blocked  min_h_dist  plan_ms(med)")
for name in args.scenarios:
    for seed in range(args.seeds):
        over = {"seed": seed} if args.pth is None else {"seed": seed, "p_th": args.pth}
        m = run_scenario(load_scenario(name, over)).metrics
        print(f"{name:18s}  {seed:4d}  {str(m.complete):8s}  {m.tube_violations:4d}  "
              f"{m.pth_violations:3d}  {m.blocked_events:7d}  {m.min_robot_human_distance:10.3f}  "
              f"{1e3 * statistics.median(m.plan_times):.1f}")
