"""Exception hierarchy shared by every module."""


class ResilientNCSError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(ResilientNCSError, ValueError):
    pass


class NonFinite(ResilientNCSError, ValueError):
    pass


class MissingVariable(ResilientNCSError, KeyError):
    pass


class BadMode(ResilientNCSError, IndexError):
    pass


class RankDeficient(ResilientNCSError, ValueError):
    pass


class PreconditionFailed(ResilientNCSError, ValueError):
    pass


class Infeasible(ResilientNCSError):
    """The conditions could not be met with the requested margin.

    ``diagnostic`` names the most violated constraint at the best iterate and
    ``margin`` is the best minimum margin the solver reached.
    """

    def __init__(self, diagnostic: str, margin: float | None = None):
        super().__init__(diagnostic)
        self.diagnostic = diagnostic
        self.margin = margin


class IterationLimit(ResilientNCSError):
    """The solver stopped without a verdict (distinct from :class:`Infeasible`)."""

    def __init__(self, message: str, margin: float | None = None):
        super().__init__(message)
        self.margin = margin


class SingularXi(ResilientNCSError):
    pass


class ValidationError(ResilientNCSError, ValueError):
    def __init__(self, findings):
        self.findings = list(findings)
        super().__init__("; ".join(str(f) for f in self.findings))


class ParseError(ResilientNCSError, ValueError):
    pass
