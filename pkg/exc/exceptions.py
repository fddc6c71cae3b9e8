# pyright: reportUnusedFunction=false
from pydantic import ValidationError
from typing import Callable, TypeVar
import logging
import click

logger: logging.Logger = logging.getLogger(__name__)

EXIT_OK: int = 0
EXIT_USAGE: int = 1
EXIT_RUNTIME: int = 2


# --------------------------------------------------------------------------


class MwqError(Exception):
    """Root of every error raised by the library."""

    hint: str = "No hint found"

    def __init__(self, message: str, hint: str | None = None) -> None:
        super().__init__(message)
        if hint is not None:
            self.hint = hint


class ShapeError(MwqError):
    """Operand shapes are incompatible."""


class InvalidShapeError(ShapeError):
    """An extent list contains a zero or negative extent."""


class InvalidLengthError(ShapeError):
    """A signal length or spatial extent does not fit the transform."""


class UnsupportedBasisError(MwqError):
    pass


class QuantizerError(MwqError):
    pass


class NonFiniteInputError(QuantizerError):
    pass


class UnsupportedBitsError(QuantizerError):
    pass


class NotQuantizedError(QuantizerError):
    """A value is not on the grid of its subband quantizer."""


class ConfigError(MwqError):
    pass


class ContractViolationError(MwqError):
    """A caller broke an API contract (e.g. reused a stale forward cache)."""


class FormatError(MwqError):
    """A file or byte stream does not follow its declared format."""


class EmptyPackageError(FormatError):
    pass


class TrainingDivergedError(MwqError):
    def __init__(
        self, message: str, layer: str, step: int, hint: str | None = None
    ) -> None:
        super().__init__(message, hint)
        self.layer = layer
        self.step = step


# --------------------------------------------------------------------------

ExcT = TypeVar("ExcT", bound=BaseException)
Handler = Callable[[BaseException], int]


class ErrorRegistry:
    """Maps exception types to handlers returning a process exit code."""

    def __init__(self) -> None:
        self._handlers: dict[type[BaseException], Handler] = {}

    def exception_handler(
        self, exc_type: type[BaseException]
    ) -> Callable[[Handler], Handler]:
        def register(func: Handler) -> Handler:
            self._handlers[exc_type] = func
            return func

        return register

    def handle(self, exc: BaseException) -> int:
        # Most specific registered class wins
        for klass in type(exc).__mro__:
            handler = self._handlers.get(klass)
            if handler is not None:
                return handler(exc)
        raise exc


def add_exception_handlers(registry: ErrorRegistry) -> None:
    """Registers the global exception handlers of the command line.

    This function maps the library's exception families (shapes, quantizers,
    file formats, training) to exit codes. Usage problems exit with 1 and
    are reported with click's usage text, runtime and data problems exit
    with 2 after being logged at a level matching their severity.

    Args:
        registry (ErrorRegistry): The registry used by the CLI dispatcher.
    """

    # --- USAGE ERRORS ---
    @registry.exception_handler(click.UsageError)
    def usage_handler(exc: BaseException) -> int:
        assert isinstance(exc, click.UsageError)
        exc.show()
        return EXIT_USAGE

    @registry.exception_handler(click.Abort)
    def abort_handler(exc: BaseException) -> int:
        click.echo("Aborted!", err=True)
        return EXIT_USAGE

    @registry.exception_handler(ValidationError)
    def validation_handler(exc: BaseException) -> int:
        assert isinstance(exc, ValidationError)
        # Flattens the nested pydantic errors
        errors = {
            ".".join(str(part) for part in err["loc"]) or "config": err["msg"]
            for err in exc.errors()
        }
        logger.error(f"Invalid configuration: {errors}")
        return EXIT_USAGE

    @registry.exception_handler(ConfigError)
    def config_handler(exc: BaseException) -> int:
        logger.error(f"Configuration Error: {exc} | Hint: {getattr(exc, 'hint', 'No hint found')}")
        return EXIT_USAGE

    # --- CLICK RUNTIME ERRORS (unreadable files...) ---
    @registry.exception_handler(click.ClickException)
    def click_runtime_handler(exc: BaseException) -> int:
        assert isinstance(exc, click.ClickException)
        exc.show()
        return EXIT_RUNTIME

    # --- NUMERICAL CONTRACT ERRORS ---
    @registry.exception_handler(ShapeError)
    @registry.exception_handler(UnsupportedBasisError)
    def shape_handler(exc: BaseException) -> int:
        logger.error(
            f"Transform Error: {type(exc).__name__}: {exc} | Hint: {getattr(exc, 'hint', 'No hint found')}"
        )
        return EXIT_RUNTIME

    @registry.exception_handler(QuantizerError)
    def quantizer_handler(exc: BaseException) -> int:
        logger.error(
            f"Quantizer Error: {type(exc).__name__}: {exc} | Hint: {getattr(exc, 'hint', 'No hint found')}"
        )
        return EXIT_RUNTIME

    # --- DATA & FORMAT ERRORS ---
    @registry.exception_handler(FormatError)
    def format_handler(exc: BaseException) -> int:
        logger.error(
            f"Format Error: {type(exc).__name__}: {exc} | Hint: {getattr(exc, 'hint', 'No hint found')}"
        )
        return EXIT_RUNTIME

    @registry.exception_handler(OSError)
    def os_handler(exc: BaseException) -> int:
        logger.error(f"I/O Error: {exc}")
        return EXIT_RUNTIME

    # --- TRAINING ERRORS ---
    @registry.exception_handler(TrainingDivergedError)
    def diverged_handler(exc: BaseException) -> int:
        assert isinstance(exc, TrainingDivergedError)
        logger.critical(
            f"Training aborted: {exc} | Layer: {exc.layer} | Step: {exc.step} | Hint: {exc.hint}"
        )
        return EXIT_RUNTIME

    # We log this as CRITICAL because it means the calling code is broken
    @registry.exception_handler(ContractViolationError)
    def contract_handler(exc: BaseException) -> int:
        logger.critical(f"Contract Violation: {exc}", exc_info=True)
        return EXIT_RUNTIME

    @registry.exception_handler(MwqError)
    def mwq_handler(exc: BaseException) -> int:
        logger.error(
            f"Error: {type(exc).__name__}: {exc} | Hint: {getattr(exc, 'hint', 'No hint found')}"
        )
        return EXIT_RUNTIME

    # --- UNIVERSAL CATCH-ALL (The Ultimate Parent) ---
    @registry.exception_handler(Exception)
    def universal_handler(exc: BaseException) -> int:
        logger.error(f"Uncaught Exception: {exc}", exc_info=True)
        return EXIT_RUNTIME
