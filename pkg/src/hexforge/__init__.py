"""hexforge: polycube all-hex meshing, quality improvement and hierarchical spline extraction."""

from .errors import HexforgeError
from .mesh import HexMesh, QuadSurface, TriMesh

__version__ = "0.1.0"

__all__ = ["HexMesh", "QuadSurface", "TriMesh", "HexforgeError", "__version__"]
