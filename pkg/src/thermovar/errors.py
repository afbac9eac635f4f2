"""Exception hierarchy shared by all model stacks."""


class ThermovarError(Exception):
    """Base class for all solver errors."""


class NonPositiveJacobian(ThermovarError):
    """Deformation gradient or metric with non-positive determinant."""

    def __init__(self, message: str = "non-positive Jacobian", element: int | None = None):
        if element is not None:
            message = f"{message} (element {element})"
        super().__init__(message)
        self.element = element


class NonPositiveTemperature(ThermovarError):
    """Temperature left the admissible range theta > 0."""


class ConcentrationOutOfRange(ThermovarError):
    """Concentration left the open interval (0, 1)."""


class NewtonDivergence(ThermovarError):
    """Newton iteration failed to reduce the residual within the budget."""


class LocalNewtonDivergence(NewtonDivergence):
    """Quadrature-point Newton iteration failed."""


class StepSizeFloor(ThermovarError):
    """Time step halving reached the minimum admissible step."""


class SingularMatrix(ThermovarError):
    """Factorization encountered a (numerically) zero pivot."""

    def __init__(self, message: str, dof: int | None = None):
        if dof is not None:
            message = f"{message} (smallest pivot at dof {dof})"
        super().__init__(message)
        self.dof = dof


class ActiveSetCycling(ThermovarError):
    """Primal active-set iteration oscillated without settling."""


class ZeroNormDirection(ThermovarError):
    """Plastic flow requested along a zero-norm driving force."""


class ConfigError(ThermovarError):
    """Scenario configuration violates the schema."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class SimulationError(ThermovarError):
    """Failure during a simulation, tagged with the step index."""

    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step}: {type(cause).__name__}: {cause}")
        self.step = step
        self.cause = cause
