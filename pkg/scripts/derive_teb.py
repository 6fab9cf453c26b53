"""Search the smallest TEB the tracker holds under both disturbance policies."""
import argparse
import json

from crowdnav.core import TrackingErrorBound
from crowdnav.tracking import TrackerParams, derive_teb, validate_teb

ap = argparse.ArgumentParser()
ap.add_argument("--duration", type=float, default=100.0)
ap.add_argument("--shrink", type=float, default=0.8)
args = ap.parse_args()

params = TrackerParams()
teb = derive_teb(params, args.duration)
shipped = TrackingErrorBound(0.45, 0.45)
out = {"derived": [teb.half_width_x, teb.half_width_y]}
for name, box in (("derived", teb), ("shipped", shipped), ("shrunk", teb.scaled(args.shrink))):
    out[name + "_reports"] = {pol: validate_teb(params, box, args.duration, pol).to_dict()
                              for pol in ("greedy", "random")}
print(json.dumps(out, indent=2))
