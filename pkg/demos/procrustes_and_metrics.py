"""Protocol 1 versus Protocol 2 on a hand-made prediction.

Protocol 1 (MPJPE) is the mean joint distance in millimetres. Protocol 2
first aligns the prediction to the ground truth with the best similarity
transform (scale, rotation, translation), so it ignores global pose errors.
"""

import numpy as np

from poselift.data import h36m_skeleton
from poselift.geometry import procrustes_align
from poselift.metrics import mpjpe, pa_mpjpe

gt = h36m_skeleton().rest_pose()

# A prediction that is right up to scale, a 30 degree twist and an offset...
c, s = np.cos(np.pi / 6), np.sin(np.pi / 6)
twist = np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
pred = 0.9 * gt @ twist.T + np.array([20.0, -10.0, 50.0])
print(f"P1 {mpjpe(gt, pred):7.2f} mm   P2 {pa_mpjpe(gt, pred):.2e} mm")

# ...and one with genuine articulation error on top.
noisy = pred + np.random.default_rng(0).normal(0, 15, pred.shape)
print(f"P1 {mpjpe(gt, noisy):7.2f} mm   P2 {pa_mpjpe(gt, noisy):7.2f} mm")

fit = procrustes_align(noisy, gt)
print("recovered scale", round(fit.scale, 3), "(true inverse 1/0.9 =", round(1 / 0.9, 3), ")")
