"""Exception hierarchy shared by every module.

Each class carries a short ``kind`` slug that the command-line front end
prints as a machine-parseable error prefix.
"""


class AirbridgeError(Exception):
    kind = "error"


class InvalidInputError(AirbridgeError, ValueError):
    kind = "invalid-input"


class DomainError(AirbridgeError, ValueError):
    kind = "domain"


class InsufficientDataError(AirbridgeError, ValueError):
    kind = "insufficient-data"


class UnsupportedGeometryError(AirbridgeError, ValueError):
    kind = "unsupported-geometry"


class MissingCalibrationError(AirbridgeError, LookupError):
    kind = "missing-calibration"

    def __init__(self, material: str, context: str = ""):
        self.material = material
        msg = f"no calibration loaded for material {material!r}"
        if context:
            msg += f" ({context})"
        super().__init__(msg)


class CompileError(AirbridgeError):
    kind = "compile"


class GeometryError(AirbridgeError):
    kind = "geometry"


class GdsRangeError(AirbridgeError, OverflowError):
    kind = "gds-range"


class GdsParseError(AirbridgeError):
    kind = "gds-parse"

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} at byte offset {offset}")


class ConfigError(AirbridgeError):
    kind = "config"
