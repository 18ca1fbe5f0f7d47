"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: configuration problems
exit 2, solver nonconvergence exits 3, broken numerical assembly exits 4.
"""


class OrliczEigError(Exception):
    """Base class for package-specific failures."""


class ConfigError(OrliczEigError, ValueError):
    """Invalid configuration value, catalog name or input file."""


class UnboundedConjugateError(OrliczEigError, ArithmeticError):
    """The density never reaches the requested level, so the conjugate
    transform has no finite optimizer at this point."""


class AssemblyError(OrliczEigError, RuntimeError):
    """A quadrature or matrix assembly produced structurally invalid data
    (e.g. an indefinite mass matrix)."""


class NonconvergenceError(OrliczEigError, RuntimeError):
    """No solver restart reached the requested residual tolerance.

    Carries the best iterate seen so the caller can inspect diagnostics.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
