"""Exception hierarchy shared across the toolkit."""


class FairvecError(Exception):
    """Base class for all toolkit errors."""


# --- checkpoint container ---

class CheckpointError(FairvecError):
    pass


class MalformedHeader(CheckpointError):
    pass


class OverlappingOffsets(CheckpointError):
    pass


class TruncatedData(CheckpointError):
    pass


class UnsupportedDtype(CheckpointError):
    pass


class IoFailure(CheckpointError):
    pass


# --- weight-space algebra ---

class ArithmeticError_(FairvecError):
    pass


class NameSetMismatch(ArithmeticError_):
    def __init__(self, missing, extra):
        self.missing = sorted(missing)
        self.extra = sorted(extra)
        super().__init__(
            f"tensor name sets differ: missing={self.missing} extra={self.extra}"
        )


class ShapeMismatch(ArithmeticError_):
    def __init__(self, name, a_shape, b_shape):
        self.name = name
        super().__init__(f"shape mismatch for tensor {name!r}: {a_shape} vs {b_shape}")


class NonFiniteCoefficient(ArithmeticError_):
    pass


class ZeroVector(ArithmeticError_):
    pass


# --- fairness metrics ---

class MetricsError(FairvecError):
    pass


class EmptyGroup(MetricsError):
    pass


class InsufficientGroups(MetricsError):
    pass


# --- toy lab ---

class ToyLabError(FairvecError):
    pass


class InvalidSpec(ToyLabError):
    pass


class DivergedTraining(ToyLabError):
    pass


class IncompatibleCheckpoint(ToyLabError):
    pass
