"""
Back to finite type by a gauge
==============================

Gauging a finite-type solution by an SU(2)-valued map gives a solution that
is only of quasi-finite type. The gauge pipeline recovers the inverse gauge
from the frames and the polynomial loop alone.
"""

# %%
import numpy as np

from loopflow.cli import hand_built_quasi_finite, su2_generator
from loopflow.frame_geometry import gauge_to_finite_type, quasi_finite_defect
from loopflow.lax_flow import random_admissible_state

S = su2_generator(0.4, -0.5j)
family, grid, conn, G0 = hand_built_quasi_finite(random_admissible_state(0, seed=1), 65, S)

# %%
# The defect between the connection and the one induced by ``xi`` is a
# constant sl(2) matrix here.
bx, by = quasi_finite_defect(grid, conn)
print("defect x", np.round(bx[10, 10], 6))

# %%
# Run the pipeline and compare with the gauge that was applied.
res = gauge_to_finite_type(family, grid, conn)
print("finite type residual", res.residual)
print("distance to G0^-1", np.abs(res.G - np.conj(np.swapaxes(G0, -1, -2))).max())
print("Lax residual", res.lax_residual)
