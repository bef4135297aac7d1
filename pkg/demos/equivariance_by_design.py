"""Which lifters respect in-plane rotations without being taught?

Rotating a 2D skeleton in the image plane by theta should rotate the lifted
3D pose about the camera axis by the same theta and leave depth alone.
Here we check that property on freshly initialized (untrained) models.
"""

import numpy as np

from poselift.data import Camera, generate_dataset, h36m_skeleton
from poselift.metrics import equivariance_error
from poselift.models import ModelSpec, build_model, count_parameters

# A handful of synthetic upright poses; they only set the normalization constants.
ds = generate_dataset(h36m_skeleton(), Camera(), 64, seed=0)
x = ds.inputs[:8]

rng = np.random.default_rng(0)
thetas = rng.uniform(0, 2 * np.pi, 5)

for kind in ("vanilla", "fully_equivariant", "hybrid"):
    model = build_model(ModelSpec(kind), seed=1)
    model.fit_normalization(ds.inputs, ds.targets)
    rms = np.sqrt(np.mean(model.predict(x) ** 2))
    full = max(np.max(equivariance_error(model, x, t)) for t in thetas)
    xy = max(np.max(equivariance_error(model, x, t, "xy")) for t in thetas)
    print(f"{kind:18s} params={count_parameters(model):6d}  "
          f"full residual / RMS = {full / rms:.1e}   xy residual / RMS = {xy / rms:.1e}")

# Expected: the vanilla MLP is far from equivariant; the fully equivariant
# model sits at round-off; the hybrid model is exact in xy only, because
# its depth branch is an ordinary MLP.
