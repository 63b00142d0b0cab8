"""Exception types raised across hexforge."""


class HexforgeError(Exception):
    """Base class for all hexforge errors."""


class ParseError(HexforgeError, ValueError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
        if line is not None:
            where = f"{where}:{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class MixedElementError(ParseError):
    pass


class UnsupportedCellType(ParseError):
    pass


class ValidationError(HexforgeError, ValueError):
    pass


class DegenerateTriangle(ValidationError):
    pass


class NonManifold(ValidationError):
    pass


class IndexOutOfRange(HexforgeError, IndexError):
    pass


class EmptyRegionWarning(UserWarning):
    """A Voronoi generator lost all of its members."""


# polycube
class PatchCornerCount(HexforgeError, ValueError):
    def __init__(self, patch, count):
        self.patch = patch
        self.count = count
        super().__init__(
            f"patch {patch} has {count} corners on its boundary, expected 4; "
            "re-segment the surface or add an override"
        )


class NonConformal(HexforgeError, ValueError):
    pass


class UncoveredBoundary(HexforgeError, ValueError):
    pass


class UnknownCorner(HexforgeError, KeyError):
    pass


# parametric mapping
class SolveFailure(HexforgeError, RuntimeError):
    pass


class FlippedTriangles(HexforgeError, RuntimeError):
    def __init__(self, patch, count):
        self.patch = patch
        self.count = count
        super().__init__(f"patch {patch}: {count} parametric triangles are inverted")


class LocationFailure(HexforgeError, ValueError):
    pass


# spline
class InactiveElement(HexforgeError, KeyError):
    pass


class InvalidRefineList(HexforgeError, ValueError):
    pass


class MissingNeighbor(HexforgeError, ValueError):
    pass


class UsageError(HexforgeError):
    pass


class StageError(HexforgeError):
    def __init__(self, stage, artifact, cause):
        self.stage = stage
        self.artifact = artifact
        self.cause = cause
        super().__init__(f"stage '{stage}' failed ({artifact}): {cause}")
