class SoftSwimError(Exception):
    """Base class of every error raised by the package."""


class InvalidDesignError(SoftSwimError, ValueError):
    """Swimmer design or mesh request cannot be realized."""


class DegenerateTriangleError(SoftSwimError, ValueError):
    def __init__(self, element: int, ratio: float) -> None:
        """Instantiates the error.

        Args:
            element: Index of the collapsed triangle.
            ratio: Current over reference area of that triangle.
        """
        self.element = element
        self.ratio = ratio
        super().__init__(
            f"Triangle {element} degenerated "
            f"(area ratio {ratio:.3e} to its reference)"
        )


class DimensionMismatchError(SoftSwimError, ValueError): ...


class UndefinedFieldError(SoftSwimError, ValueError): ...


class EmptyProbeSetError(SoftSwimError, ValueError): ...


class ResumeMismatchError(SoftSwimError, ValueError): ...


class MobilityCapacityError(SoftSwimError, MemoryError): ...


class SubstepUnderflowError(SoftSwimError, RuntimeError): ...


class StaticSolveError(SoftSwimError, RuntimeError): ...


class NotConvergedError(SoftSwimError, RuntimeError): ...
