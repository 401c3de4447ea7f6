"""
The homogeneous tori
====================

The simplest Hamiltonian stationary tori are orbits of a two-torus of
diagonal unitary matrices. Their Lagrangian angle is affine, so they make
exact fixtures for everything else in the package.
"""

# %%
# Build the lift of the torus with squared radii (1/2, 1/4) on a grid.
import numpy as np

from loopflow import HomogeneousParams, homogeneous_frames, maslov_class, legendrian_closure
from loopflow.frame_geometry import harmonicity_residual
from loopflow.homogeneous import closure_from_holonomy, holonomy

params = HomogeneousParams("1/2", "1/4")
F, imm = homogeneous_frames(params, 64, 64)
print("grid", imm.shape, "spacing", imm.hx)

# %%
# The lift is Legendrian and the frame is unitary up to roundoff.
print("legendrian residual", imm.residual_max("legendrian"))
print("unitarity", np.abs(np.conj(np.swapaxes(F, -1, -2)) @ F - np.eye(3)).max())

# %%
# The angle is ``x (1 - 3 r1^2) + y (1 - 3 r2^2) + pi``; its Laplacian
# vanishes up to the rounding of the grid values.
print("beta at the far corner", imm.beta[-1, -1])
print("harmonicity", harmonicity_residual(imm.beta, imm.hx, imm.hy))

# %%
# The Maslov class counts how often the angle winds around the two period
# loops. The lift closes after ``k`` periods where ``k`` clears the
# denominators; the holonomy of the horizontal lift confirms this.
print("Maslov class", maslov_class(params))
print("closure", legendrian_closure(params))
print("holonomy x, y", holonomy(params, "x"), holonomy(params, "y"))
print("closure from holonomy", closure_from_holonomy(params))

# %%
# A small scan over rational radii.
for r1, r2 in [("1/3", "1/3"), ("1/6", "1/6"), ("1/5", "2/5"), ("1/12", "7/12")]:
    p = HomogeneousParams(r1, r2)
    print(r1, r2, "maslov", [str(m) for m in maslov_class(p)], "closure", legendrian_closure(p))
