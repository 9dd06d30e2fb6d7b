"""Exception hierarchy shared by all modules."""


class LumpError(Exception):
    """Base class for every error raised by this package."""


class InvalidGraph(LumpError):
    pass


class CycleDetected(InvalidGraph):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("edges contain the cycle " + " -> ".join(self.cycle))


class UnknownVertex(LumpError, KeyError):
    def __str__(self):
        return f"unknown vertex {self.args[0]!r}"


class UnknownSymbol(LumpError, KeyError):
    def __str__(self):
        return " ".join(str(a) for a in self.args)


class OverlappingSets(LumpError, ValueError):
    pass


class InvalidDistribution(LumpError, ValueError):
    pass


class DimensionMismatch(LumpError, ValueError):
    pass


class IncompatibleLumping(LumpError, ValueError):
    pass


class ModelTooLarge(LumpError):
    pass


class StructuralPreconditionViolated(LumpError):
    pass


class InternalInconsistency(LumpError, AssertionError):
    """A proven implication was violated; indicates a bug, not a model property."""


class InvalidModelFile(LumpError, ValueError):
    """Model file rejected; ``path`` is a JSON pointer to the offending node."""

    def __init__(self, path: str, message: str):
        self.path = path or "/"
        self.message = message
        super().__init__(f"{self.path}: {message}")
