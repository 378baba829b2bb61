"""Exception types shared across the package."""


class EMLError(Exception):
    """Base class."""


class GridMismatchError(EMLError, ValueError):
    pass


class RangeError(EMLError, ValueError):
    """Dyadic or operator index outside the admissible window."""


class LocalizationError(EMLError, ValueError):
    """Field has too much mass near the box boundary for rotation fields."""


class ConstraintError(EMLError, ValueError):
    """Constraint, mean-free or divergence-free requirement violated."""


class VacuumError(EMLError, ValueError):
    """``1 + n <= 0`` somewhere."""


class GeometryError(EMLError, RuntimeError):
    """Root bracketing or resonance search failed."""


class BreakdownError(EMLError, RuntimeError):
    """Non-finite values appeared during time stepping."""


class ConfigError(EMLError, ValueError):
    pass
