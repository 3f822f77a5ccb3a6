"""Map detections from a deployment camera into the camera the pose network was trained on.

The pose estimator expects images from its training camera. An intrinsics-only
homography warps pixels from another camera so that both see the same rays,
re-centred on the training camera's principal point.
"""

import numpy as np

from objnav.homography import CameraIntrinsics, compute_homography, map_pixel

training = CameraIntrinsics(fx=615.0, fy=615.0, cx=320.0, cy=240.0, width=640, height=480)
deployed = CameraIntrinsics(fx=1250.0, fy=1245.0, cx=655.0, cy=470.0, width=1280, height=960)

h = compute_homography(training, deployed)
print("H =\n", np.array2string(h.H, precision=4, suppress_small=True))
print(f"centring offset (u_o, v_o) = ({h.u_o:.1f}, {h.v_o:.1f}) px")

# a point 4 m in front of the camera, slightly up and to the right
X = np.array([0.4, -0.2, 4.0])
seen = deployed.project(X)
warped = map_pixel(h, seen)
expected = training.project(X) + [h.u_o, h.v_o]
print(f"deployed pixel {seen.round(2)} -> training pixel {warped.round(2)}")
print(f"difference to direct projection: {np.abs(warped - expected).max():.1e} px")
