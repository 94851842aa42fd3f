"""Exception hierarchy shared by all seetrack modules."""


class SeeError(Exception):
    """Base class for all seetrack errors."""


class ArgumentError(SeeError, ValueError):
    pass


class ShapeError(ArgumentError):
    pass


class ConfigError(ArgumentError):
    pass


class RangeError(ArgumentError):
    pass


class ContractError(SeeError):
    """A caller violated a documented precondition."""


class ParseError(SeeError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class GeometryError(SeeError):
    def __init__(self, message: str, record: int):
        super().__init__(f"{message} (record {record})")
        self.record = record


class OrderingError(SeeError):
    def __init__(self, message: str, record: int):
        super().__init__(f"{message} (record {record})")
        self.record = record


class LoadError(SeeError):
    """Weight container does not match its model spec."""

    def __init__(self, message: str, layer: str | None = None):
        if layer is not None:
            message = f"layer {layer}: {message}"
        super().__init__(message)
        self.layer = layer
