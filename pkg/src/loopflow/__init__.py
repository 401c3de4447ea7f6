"""Finite-type Hamiltonian stationary Lagrangian tori in CP2.

Twisted loop algebra kernels, the commuting Lax flows, extended frames and
the immersions they carry, formal Killing fields and the homogeneous tori.
"""
from . import errors
from .frame_geometry import (ConnectionField, FrameFamily, ImmersionData, based_loop_transform,
                             conserved_loop, extract_immersion, flatness_residual,
                             gauge_to_finite_type, harmonicity_residual, integrate_frame,
                             integrate_frame_family, legendrian_residual)
from .homogeneous import (HomogeneousParams, closure_from_holonomy, conformal_connection,
                          homogeneous_frames, homogeneous_immersion, lagrangian_angle_homogeneous,
                          legendrian_closure, maslov_class)
from .killing_field import (ConnectionData, KillingSeries, killing_recursion, killing_residual,
                            polynomial_candidate, v_decompose)
from .lax_flow import (LaxState, StateGrid, connection_from_state, conserved_diagnostics,
                       integrate_flow, random_admissible_state, vacuum_state, vector_field)
from .loop_algebra import (BorelElement, LaurentLoop, eigenspace_project, iwasawa_group_su2,
                           loop_split_based, loop_split_twisted, split_su_b, tau_alg, tau_group)
from .matrix_core import bracket, mexp_skew, polar_unitarize

__version__ = "0.1.0"
