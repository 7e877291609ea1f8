from typing import Any, NoReturn

from pydantic import ValidationError

from ...settings.logging import logger

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_INTERNAL = 3


class PipelineError(Exception):
    """Base error of the phenotyping pipeline.

    Attributes:
        exit_code (int): Process exit code used by the command line.
        details (dict): Extra context attached by the raising site.
    """

    exit_code = EXIT_INTERNAL

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details


class ParameterError(PipelineError):
    exit_code = EXIT_VALIDATION


class EmptyInputError(PipelineError):
    exit_code = EXIT_VALIDATION


class InvalidTransformError(PipelineError):
    exit_code = EXIT_VALIDATION


class InvalidDisparityError(PipelineError):
    exit_code = EXIT_VALIDATION


class ConfigurationError(PipelineError):
    exit_code = EXIT_VALIDATION


class CountsValidationError(PipelineError):
    exit_code = EXIT_VALIDATION


class InsufficientPointsError(PipelineError):
    exit_code = EXIT_VALIDATION


class DegenerateGeometryError(PipelineError):
    """Raised for coplanar or too small point sets; the volume is 0."""

    exit_code = EXIT_VALIDATION
    value = 0.0


class FileFormatError(PipelineError):
    exit_code = EXIT_IO


class PlyParseError(FileFormatError):
    def __init__(
        self,
        message: str,
        line: int | None = None,
        offset: int | None = None,
    ):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte offset {offset}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(f"{message}{suffix}", line=line, offset=offset)
        self.line = line
        self.offset = offset


class ClassifierError(PipelineError):
    def __init__(self, message: str, patch_id: int):
        super().__init__(f"patch {patch_id}: {message}", patch_id=patch_id)
        self.patch_id = patch_id


def handle_error_helper(
    error_type: type[PipelineError], message: str, **details: Any
) -> NoReturn:
    """
    Logs an error message and raises the given pipeline error.

    Args:
        error_type (type[PipelineError]): The error class to raise.
        message (str): The error message to be logged and included in the
                                                                exception.
        **details: Extra keyword arguments forwarded to the error.

    Raises:
        PipelineError: An instance of `error_type`.
    """
    logger.error(f"{error_type.__name__}: {message}")
    raise error_type(message, **details)


def format_validation_error_msg(e: ValidationError) -> str:
    """Lists every offending field of a pydantic validation error."""
    parts = []
    for error in e.errors():
        loc = ".".join(str(item) for item in error["loc"]) or "<root>"
        parts.append(f"`{loc}`: {error["msg"]} ({error["type"]})")
    return "; ".join(parts)
