"""Record a flight, then replay its sensor streams through the estimator.

Replaying unchanged reproduces the estimate bit for bit. Removing the camera
after a few seconds of object-relative flight leaves only the IMU, and the
position covariance grows from then on.
"""

import numpy as np

from objnav.config import hover_config
from objnav.harness import run_closed_loop, run_offline

cfg = hover_config(run__object_relative_duration="10")
log = run_closed_loop(cfg)
same = run_offline(cfg, log)
print("replay identical:", np.array_equal(same.arrays()["est_p"], log.arrays()["est_p"]))

a = log.arrays()
t0 = a["t"][a["phase"] == "ObjectRelative"][0] + 3.0
blind = run_offline(cfg, log, drop_landmarks_after=t0).arrays()
for t in (t0 - 1.0, t0, t0 + 2.0, t0 + 4.0, t0 + 6.0):
    i = np.searchsorted(blind["t"], t)
    sd_with = np.sqrt(a["cov"][i, :3].sum())
    sd_without = np.sqrt(blind["cov"][i, :3].sum())
    print(f"t = {blind['t'][i]:6.2f} s  position sigma with camera {sd_with:.3f} m, camera dropped {sd_without:.3f} m")
