"""
Formal Killing fields
=====================

For a connection whose leading term is ``lam^-2 i a pi`` the equation
``dY = [Y, A]`` has a formal solution conjugate to the leading term. The
coefficients come from a recursion that only inverts ``ad pi``.
"""

# %%
# Constant data: a homogeneous torus written in conformal coordinates.
import numpy as np

from loopflow import HomogeneousParams, killing_recursion, polynomial_candidate
from loopflow.homogeneous import conformal_connection, flatness_all_lambda
from loopflow.killing_field import killing_residual_by_degree

field, data = conformal_connection(HomogeneousParams("1/6", "1/6"))
print("flat for all lam:", flatness_all_lambda(field))
print("a =", data.a)

# %%
# Run the recursion. Only odd coefficients survive, and they grow quickly.
series = killing_recursion(data, N=12)
print([f"{np.abs(w).max():.2g}" for w in series.W])
print(series.invariants())

# %%
# The residual of the Killing equation, degree by degree.
rz, rzb = killing_residual_by_degree(series)
print("dz   ", {m: f"{v:.1e}" for m, v in rz.items()})
print("dzbar", {m: f"{v:.1e}" for m, v in rzb.items()})

# %%
# Truncating ``P(lam^-4) Y`` gives a polynomial candidate whose defect
# lives in four Fourier modes only.
cand = polynomial_candidate([1.0, 0.5], series)
print("agreement", cand.agreement, "out of band", cand.out_of_band)
for m, (rz_, rzb_) in cand.R.items():
    print(m, np.abs(rz_).max(), np.abs(rzb_).max())
