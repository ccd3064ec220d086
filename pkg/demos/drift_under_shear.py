"""Shear a circle for one time unit and watch what happens to |grad phi|.

Plain transport of the level-set function stretches its gradient by up to
e^t. The characteristic tube solver transports the extended velocity instead,
so the initial signed distance stays a signed distance.

    python demos/drift_under_shear.py
"""

import numpy as np

from velext.baselines import linear_transport
from velext.levelsets import circle
from velext.tube import solve_tube
from velext.velocity import Shear

profile = circle((0.0, 0.0), 0.5)
v = Shear(1.0)
rng = np.random.default_rng(0)

sol = solve_tube(profile, v, 1.0, ([-1.5, -1.5], [1.5, 1.5]), 1 / 64)
print(f"tube solver: {len(sol.legs)} legs, tube half-width {float(sol.eps_at(1.0)):.4f}")

print(" t     | transport max||grad|-1| | tube max||grad|-1|")
for t in np.linspace(0.25, 1.0, 4):
    x = sol.sample_tube(t, 400, rng, fraction=0.9)
    _, grad, inside = sol.evaluate(t, x)
    _, g_lt = linear_transport(profile, v, t, x[inside])
    lt = np.abs(np.linalg.norm(g_lt, axis=-1) - 1).max()
    moc = np.abs(np.linalg.norm(grad[inside], axis=-1) - 1).max()
    print(f" {t:.2f}  | {lt:23.4f} | {moc:.2e}")
