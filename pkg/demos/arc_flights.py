"""Ten closed-loop arc flights around the pole with the over-bounding 20 cm / 10 deg tuning.

Waypoints are placed on a 3.3 m circle around the anchor estimate and the
controller flies the state estimate, so estimation error shows up in the path.
"""

import sys

import numpy as np

from objnav.config import arc_config
from objnav.harness import compute_metrics, run_closed_loop

seeds = range(1, int(sys.argv[1]) + 1 if len(sys.argv) > 1 else 11)
rows = []
print(f"{'seed':>4} {'RMSE [m]':>9} {'RMSE [deg]':>10} {'max PE [m]':>10} {'done':>5}")
for seed in seeds:
    log = run_closed_loop(arc_config(run__seed=str(seed)))
    m = compute_metrics(log)
    rows.append((m.rmse_pos, m.rmse_rot, m.max_pe))
    print(f"{seed:>4} {m.rmse_pos:9.3f} {m.rmse_rot:10.2f} {m.max_pe:10.3f} {str(log.completed):>5}")
mean, std = np.mean(rows, axis=0), np.std(rows, axis=0)
print(f"{'mean':>4} {mean[0]:9.3f} {mean[1]:10.2f} {mean[2]:10.3f}")
print(f"{'std':>4} {std[0]:9.3f} {std[1]:10.2f} {std[2]:10.3f}")
