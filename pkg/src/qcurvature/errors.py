"""Exception hierarchy shared by all qcurvature modules."""


class QCurvatureError(Exception):
    """Base class for every error raised by the package."""


class PhysicsDomainError(QCurvatureError):
    """A physically meaningless request (CLI exit code 2)."""


class GapClosure(PhysicsDomainError):
    def __init__(self, k, norm):
        self.k = tuple(float(x) for x in k)
        self.norm = float(norm)
        super().__init__(
            f"gap closes at k=({self.k[0]:.6g}, {self.k[1]:.6g}): |d(k)|={self.norm:.3e}"
        )


class NonIntegerChern(PhysicsDomainError):
    def __init__(self, value, residual):
        self.value = value
        self.residual = residual
        super().__init__(
            f"plaquette sum {value!r} is {residual:.3e} away from an integer"
        )


class DomainError(QCurvatureError, ValueError):
    """Argument outside the domain of a function (e.g. tau outside [0, beta])."""


class EmptyDensity(PhysicsDomainError):
    """The spectral density carries no weight."""


class ZeroNoise(PhysicsDomainError):
    """Equal-time correlator vanishes, so normalized curvature is undefined."""


class NotConverged(QCurvatureError):
    """An accelerated Matsubara sum failed its self-consistency check."""


class DimensionTooLarge(QCurvatureError):
    """Resource guard for exact diagonalization (CLI exit code 3)."""


class ZeroCurrentNorm(PhysicsDomainError):
    """The Kubo-Mori norm of the current vanishes."""


class ChainTerminated(QCurvatureError):
    """The Mori recursion hit an exhausted Krylov space.

    ``level`` is the index k of the first vanishing b_k^2 and ``chain`` holds
    the coefficients computed up to and including that level.
    """

    def __init__(self, level, chain):
        self.level = level
        self.chain = chain
        super().__init__(f"Mori chain terminated at level {level}")
