"""Orientation-aware functional maps between triangle meshes.

Real functional maps (``C``) transport functions through Laplace-Beltrami
eigenbases; complex functional maps (``Q``) transport tangent vector fields
through connection-Laplacian eigenbases and only admit orientation-preserving
correspondences.
"""
from .errors import *  # noqa: F401,F403
from .mesh import (SelfSymmetry, TriangleMesh, generate_blob, generate_icosphere,
                   generate_symmetric_blob)
from .io import load_mesh, save_mesh
from .operators import (build_tangent_frames, connection_laplacian, cotan_laplacian,
                        divergence_operator, gradient_operator)
from .spectral import K_C, K_Q, eigensolve_connection, eigensolve_lb
from .descriptors import WksParams, orientation_channels, wks
from .fmap import FmapOptions, estimate_C_plain, estimate_C_regularized, loss_iso_C, loss_ortho_C
from .qmap import (complex_spectral_coeffs, estimate_Q_plain, estimate_Q_regularized, loss_iso_Q,
                   loss_ortho_Q, verify_pushforward_relation)
from .shape import ShapeData, prepare_shape
from .refine import LinearProbe, TrainConfig, grad_total_loss, make_pair, optimize, total_loss
from .convert_eval import (PointMap, evaluate, orientation_sign, p2p_from_C, p2p_from_Q,
                           symmetry_ambiguity_probe)

__version__ = "0.1.0"
