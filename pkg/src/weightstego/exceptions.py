class WeightStegoError(Exception):
    """Base class for all errors raised by weightstego."""


class ContainerError(WeightStegoError):
    """Malformed or inconsistent model container."""


class HeaderError(ContainerError):
    """Header length, encoding or JSON structure is invalid."""


class OffsetError(ContainerError):
    """Tensor data offsets are out of range, overlapping or leave gaps."""


class DtypeError(ContainerError):
    """A tensor uses a dtype other than F32."""


class UnknownTensorError(WeightStegoError, KeyError):
    def __init__(self, name):
        super().__init__(name)
        self.name = name

    def __str__(self):
        return f"unknown tensor: {self.name!r}"


class PayloadLengthError(WeightStegoError, ValueError):
    """Chunk length does not match the method's bytes per parameter."""


class CapacityExceeded(WeightStegoError):
    def __init__(self, available, required):
        super().__init__(f"payload does not fit: available {available} bytes, required {required} bytes")
        self.available = available
        self.required = required


class PlanError(WeightStegoError):
    """Embedding plan or manifest does not match the container."""


class ManifestError(WeightStegoError):
    """Manifest JSON is missing keys or carries invalid values."""


class DivergenceError(WeightStegoError):
    """Training produced a non-finite loss."""
