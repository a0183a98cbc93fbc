"""
Custom exceptions and error handling for the application.
"""

import logging
from typing import Dict, Any, Optional

from fastapi import FastAPI, Request, status
from fastapi.responses import JSONResponse
from fastapi.exceptions import RequestValidationError
from starlette.exceptions import HTTPException as StarletteHTTPException

logger = logging.getLogger(__name__)


class WienerLabError(Exception):
    """Base exception for all library errors."""

    def __init__(
        self,
        message: str,
        error_code: Optional[str] = None,
        module: Optional[str] = None,
    ):
        self.message = message
        self.error_code = error_code or "WIENERLAB_ERROR"
        self.module = module or "wienerlab"
        super().__init__(self.message)


class InvalidArgumentError(WienerLabError):
    """Exception raised when an argument violates an operation's precondition."""

    def __init__(self, message: str, module: Optional[str] = None):
        super().__init__(message, "INVALID_ARGUMENT", module)


class DataFormatError(WienerLabError):
    """Exception raised for malformed model JSON or dataset CSV input."""

    def __init__(self, message: str, module: Optional[str] = None):
        super().__init__(message, "DATA_FORMAT_ERROR", module)


class NonInvertibleError(WienerLabError):
    """Exception raised when a sensor is not strictly monotone on a bracket."""

    def __init__(self, message: str, module: Optional[str] = "sensor"):
        super().__init__(message, "NON_INVERTIBLE", module)


class OutOfRangeError(WienerLabError):
    """Exception raised when a value lies outside the image of a bracket."""

    def __init__(self, message: str, module: Optional[str] = "sensor"):
        super().__init__(message, "OUT_OF_RANGE", module)


class SingularLikelihoodError(WienerLabError):
    """Exception raised when the marginal likelihood has no density (zero noise)."""

    def __init__(self, message: str, module: Optional[str] = "likelihood"):
        super().__init__(message, "SINGULAR_LIKELIHOOD", module)


class LikelihoodOverflowError(WienerLabError):
    """Exception raised when every quadrature term underflows after stabilization."""

    def __init__(self, message: str, module: Optional[str] = "likelihood"):
        super().__init__(message, "LIKELIHOOD_OVERFLOW", module)


class DegenerateDistributionError(WienerLabError):
    """Exception raised when a predictive distribution has zero variance."""

    def __init__(self, message: str, module: Optional[str] = "moments"):
        super().__init__(message, "DEGENERATE_DISTRIBUTION", module)


class SingularInformationError(WienerLabError):
    """Exception raised when an information matrix cannot be inverted safely."""

    def __init__(self, message: str, module: Optional[str] = "fisher"):
        super().__init__(message, "SINGULAR_INFORMATION", module)


class EvaluationError(WienerLabError):
    """Exception raised when a cost or objective cannot be evaluated."""

    def __init__(
        self,
        message: str,
        module: Optional[str] = None,
        sample_index: Optional[int] = None,
    ):
        self.sample_index = sample_index
        super().__init__(message, "EVALUATION_ERROR", module)


class HarnessError(WienerLabError):
    """Exception raised when too many Monte Carlo fits fail."""

    def __init__(self, message: str, failures: int, total: int):
        self.failures = failures
        self.total = total
        super().__init__(message, "HARNESS_ERROR", "experiments")


def create_error_response(
    status_code: int,
    message: str,
    error_code: Optional[str] = None,
    details: Optional[Dict[str, Any]] = None,
) -> JSONResponse:
    """
    Create standardized error response.

    Args:
        status_code: HTTP status code
        message: Error message
        error_code: Application-specific error code
        details: Additional error details

    Returns:
        JSONResponse: Formatted error response
    """
    content = {
        "error": {
            "message": message,
            "code": error_code or "UNKNOWN_ERROR",
            "status_code": status_code,
        }
    }

    if details:
        content["error"]["details"] = details

    return JSONResponse(status_code=status_code, content=content)


def handle_exceptions(app: FastAPI) -> None:
    """
    Register exception handlers for the FastAPI application.

    Args:
        app: FastAPI application instance
    """

    @app.exception_handler(InvalidArgumentError)
    async def invalid_argument_handler(request: Request, exc: InvalidArgumentError):
        """Handle precondition violations."""
        logger.warning(f"Invalid argument in {exc.module}: {exc.message}")

        return create_error_response(
            status_code=status.HTTP_400_BAD_REQUEST,
            message=exc.message,
            error_code=exc.error_code,
            details={"module": exc.module},
        )

    @app.exception_handler(DataFormatError)
    async def data_format_handler(request: Request, exc: DataFormatError):
        """Handle malformed input data."""
        logger.warning(f"Data format error: {exc.message}")

        return create_error_response(
            status_code=status.HTTP_400_BAD_REQUEST,
            message=exc.message,
            error_code=exc.error_code,
        )

    @app.exception_handler(WienerLabError)
    async def computation_error_handler(request: Request, exc: WienerLabError):
        """Handle numerical failures raised by the library."""
        logger.error(f"Computation error in {exc.module}: {exc.message}")

        details: Dict[str, Any] = {"module": exc.module}
        sample_index = getattr(exc, "sample_index", None)
        if sample_index is not None:
            details["sample_index"] = sample_index

        return create_error_response(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            message=exc.message,
            error_code=exc.error_code,
            details=details,
        )

    @app.exception_handler(RequestValidationError)
    async def validation_exception_handler(
        request: Request, exc: RequestValidationError
    ):
        """Handle request validation errors."""
        logger.warning(f"Validation error: {exc.errors()}")

        return create_error_response(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            message="Request validation failed",
            error_code="VALIDATION_ERROR",
            details={"validation_errors": jsonable_errors(exc)},
        )

    @app.exception_handler(StarletteHTTPException)
    async def http_exception_handler(request: Request, exc: StarletteHTTPException):
        """Handle HTTP exceptions."""
        logger.warning(f"HTTP error {exc.status_code}: {exc.detail}")

        return create_error_response(
            status_code=exc.status_code, message=exc.detail, error_code="HTTP_ERROR"
        )

    @app.exception_handler(Exception)
    async def general_exception_handler(request: Request, exc: Exception):
        """Handle unexpected errors."""
        logger.error(f"Unexpected error: {str(exc)}", exc_info=True)

        return create_error_response(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            message="An unexpected error occurred",
            error_code="INTERNAL_ERROR",
        )


def jsonable_errors(exc: RequestValidationError) -> list:
    """Strip non-serializable context (e.g. raised exceptions) from validation errors."""
    return [
        {key: value for key, value in error.items() if key in ("loc", "msg", "type")}
        for error in exc.errors()
    ]
