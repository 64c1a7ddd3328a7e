"""Virtual element methods for elliptic interface problems on cut-cuboid meshes."""
__version__ = "0.1.0"

from .geometry import GeometryError, Plane, Polyhedron, cut_by_plane, inscribed_ball_radius
from .mesh import Mesh, build_mesh, plane_levelset, sphere, squircle
from .boundary_tri import check_A2, check_A2prime, kappa, poincare_probe, triangulate_faces
from .spaces import IfeFrame, WhFunction, ife_frame, quasi_interpolant_JK
from .vem_core import assemble, local_projector, local_stabilization, local_stiffness, prepare_element
from .solve_analyze import ErrorRecord, compute_errors, convergence_rates, run_level, run_study, solve

__all__ = [
    "GeometryError", "Plane", "Polyhedron", "cut_by_plane", "inscribed_ball_radius",
    "Mesh", "build_mesh", "plane_levelset", "sphere", "squircle",
    "check_A2", "check_A2prime", "kappa", "poincare_probe", "triangulate_faces",
    "IfeFrame", "WhFunction", "ife_frame", "quasi_interpolant_JK",
    "assemble", "local_projector", "local_stabilization", "local_stiffness", "prepare_element",
    "ErrorRecord", "compute_errors", "convergence_rates", "run_level", "run_study", "solve",
]
