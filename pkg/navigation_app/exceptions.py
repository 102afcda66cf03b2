class NavigationError(Exception):
    """Base class for errors raised by the navigation library."""


class MapFormatError(NavigationError):
    """A map or scenario file could not be parsed."""

    def __init__(self, message, line=None, path=None):
        self.reason = message
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f"{':' if where else 'line '}{line}"
        super().__init__(f"{where}: {message}" if where else message)


class NoFreeCellError(NavigationError):
    """Breadth-first search ran out of cells without finding an eligible one."""


class NoPathError(NavigationError):
    """The goal cannot be reached at the requested clearance."""


class ScenarioGenerationError(NavigationError):
    """Rejection sampling could not place the requested start/goal pairs."""


class PlanValidationError(NavigationError):
    """A MAPF plan produced by the solver failed its own validation."""
