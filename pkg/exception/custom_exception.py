import sys
import traceback
from typing import Optional, cast


class RelationCPException(Exception):
    """Base error of the toolkit; remembers where the underlying failure happened."""

    def __init__(self, error_message: object, error_details: Optional[object] = None):
        norm_msg = str(error_message)

        # Resolve exc_info (supports: sys module, Exception object, or current context)
        exc_type = exc_value = exc_tb = None
        if error_details is None:
            exc_type, exc_value, exc_tb = sys.exc_info()
        elif hasattr(error_details, "exc_info"):
            exc_info_obj = cast(sys, error_details)
            exc_type, exc_value, exc_tb = exc_info_obj.exc_info()
        elif isinstance(error_details, BaseException):
            exc_type, exc_value, exc_tb = type(error_details), error_details, error_details.__traceback__
        else:
            exc_type, exc_value, exc_tb = sys.exc_info()

        # Walk to the last frame to report the most relevant information
        last_tb = exc_tb
        while last_tb and last_tb.tb_next:
            last_tb = last_tb.tb_next

        self.file_name = last_tb.tb_frame.f_code.co_filename if last_tb else "<unknown>"
        self.line_number = last_tb.tb_lineno if last_tb else -1
        self.error_message = norm_msg
        self.cause = exc_value

        if exc_type and exc_tb:
            self.traceback_str = "".join(traceback.format_exception(exc_type, exc_value, exc_tb))
        else:
            self.traceback_str = ""

        super().__init__(norm_msg)

    def __str__(self) -> str:
        if self.cause is not None and str(self.cause) and str(self.cause) not in self.error_message:
            return f"{self.error_message}: {self.cause}"
        return self.error_message

    def describe(self) -> str:
        """Long form with location and traceback, for logs and CLI failures."""
        base = f"Error in [{self.file_name}] at line [{self.line_number}]\nMessage: {self}"
        if self.traceback_str:
            return f"{base}\nTraceback:\n{self.traceback_str}"
        return base

    def __repr__(self) -> str:
        return f"{type(self).__name__}(file={self.file_name!r}, line={self.line_number}, message={self.error_message!r})"


class ConfigError(RelationCPException):
    """Invalid configuration or a missing input path. CLI exit code 2."""


class CorpusFormatError(RelationCPException):
    """Malformed corpus/triple/pair record."""

    def __init__(self, error_message: object, line_number: Optional[int] = None, error_details: Optional[object] = None):
        self.record_line = line_number
        if line_number is not None:
            error_message = f"line {line_number}: {error_message}"
        super().__init__(error_message, error_details)


class SamplingError(RelationCPException):
    """Not enough data to draw the requested pairs, batches or episodes."""


class EncodingError(RelationCPException):
    """Marker structure, length or shape violations while encoding inputs."""


class NumericalError(RelationCPException):
    """Non-finite loss or gradient values."""
