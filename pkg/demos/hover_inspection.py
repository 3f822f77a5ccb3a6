"""Closed-loop hover in front of the insulator mock-up.

The UAV takes off under global navigation, hovers until the pose estimator has
seen the objects for five consecutive frames, then navigates relative to them
for 30 s before switching back. Metrics cover the object-relative part only.
"""

from objnav.config import hover_config
from objnav.harness import compute_metrics, run_closed_loop

log = run_closed_loop(hover_config(run__object_relative_duration="30"))
for t, event in log.events:
    print(f"{t:7.3f} s  {event}")

m = compute_metrics(log)
print(f"object-relative samples: {m.n}")
print(f"position error mean {m.mean_pe:.3f} m, RMSE {m.rmse_pos:.3f} m, max {m.max_pe:.3f} m")
print(f"rotation error mean {m.mean_re:.2f} deg, RMSE {m.rmse_rot:.2f} deg")
for k, te in m.landmark_te.items():
    print(f"  raw measurements of object {k}: mean translation error {te.mean():.3f} m over {te.size} frames")
