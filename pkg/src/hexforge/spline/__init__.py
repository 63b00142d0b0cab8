"""Tricubic blending-function splines on hex meshes."""

from .bernstein import bernstein, bernstein3, bernstein3_grad
from .emit import bezier_mesh, to_bext, write_spline
from .extraction import BezierElement, Extraction, boundary_extraction, interior_extraction
from .hierarchy import HierarchicalSpline, build_hierarchy
from .subdivision import Subdivision, subdivide

__all__ = [
    "bernstein", "bernstein3", "bernstein3_grad", "BezierElement", "Extraction",
    "interior_extraction", "boundary_extraction", "Subdivision", "subdivide",
    "HierarchicalSpline", "build_hierarchy", "to_bext", "bezier_mesh", "write_spline",
]
