"""
Exception hierarchy shared by every numerical tool.
The agent layer maps ConfigError to exit status 2 and every other
SimplexDiffError to exit status 3.
"""


class SimplexDiffError(Exception):
    """Root of all library errors."""


class ConfigError(SimplexDiffError):
    """Experiment configuration is malformed or violates a precondition."""


class NumericalError(SimplexDiffError):
    """A numerical routine could not deliver a result."""


# ---------- reaction_network ----------
class BadQMatrix(SimplexDiffError):
    """Negative off-diagonal rates or nonzero row sums."""


class NotConnected(SimplexDiffError):
    """Rate graph is not strongly connected; no unique positive x^s."""


class NotDetailedBalanced(SimplexDiffError):
    """omega_ij != omega_ji beyond tolerance."""


class InvalidState(SimplexDiffError):
    """A state is not on the simplex (or not on the lattice)."""


# ---------- jump_process / fokker_planck_1d ----------
class LatticeTooLarge(SimplexDiffError):
    """CME lattice exceeds the size cap."""


class UnstableTimestep(NumericalError):
    """Explicit time step violates its stability bound."""


class ZeroPropensityDeadlock(NumericalError):
    """All propensities vanished during a jump simulation."""


# ---------- geometry / ODE / SDE ----------
class BoundarySingular(NumericalError):
    """A quantity that needs an interior point was evaluated on the boundary."""


class NearSingularMetric(NumericalError):
    """An Onsager eigenvalue is below the metric's singularity threshold."""


class StepLeftSimplex(NumericalError):
    """An integrator iterate left the simplex."""


class EigenNotConverged(NumericalError):
    """Jacobi sweeps did not reach the off-diagonal tolerance."""


# ---------- special functions / profiles ----------
class DomainError(SimplexDiffError):
    """Argument outside the function's domain."""


class QuadratureError(NumericalError):
    """Adaptive quadrature failed to converge within its evaluation budget."""


class NonIntegrableTheta(NumericalError):
    """theta^(-1/2) is not integrable on (0, 1)."""


# ---------- comparisons ----------
class SupportMismatch(SimplexDiffError):
    """Histogram and density do not live on the same support."""


class TruncationWarning(UserWarning):
    """Series truncated before its tail fell below the target tolerance."""
