"""
Exceptions for the GraphSurgeon engine
"""

from typing import Optional, Sequence, Tuple


class SurgeonError(Exception):
    """Base class for GraphSurgeon errors"""
    pass


class SurgeonUsageError(SurgeonError):
    """Invalid command-line usage"""
    pass


class SurgeonInputError(SurgeonError):
    """Invalid input data or configuration"""

    def __init__(self, message, path=None, line=None):
        if path is not None and line is not None:
            message = f"{path}:{line}: {message}"
        elif path is not None:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path
        self.line = line


class GraphError(SurgeonInputError):
    """Invalid graph construction or sampling request"""

    def __init__(self, message, pair: Optional[Tuple[int, int]] = None, **kwargs):
        super().__init__(message, **kwargs)
        self.pair = pair


class DatasetFormatError(SurgeonInputError):
    """Malformed or inconsistent dataset, embedding or checkpoint file"""
    pass


class ConfigError(SurgeonInputError):
    """Invalid configuration value"""
    pass


class ModeMismatchError(SurgeonInputError):
    """Model, configuration or dataset kinds disagree"""
    pass


class ShapeError(SurgeonError):
    """Operand shapes are incompatible for an operation"""

    def __init__(self, op: str, shapes: Sequence[Tuple[int, ...]], detail: str = ""):
        shape_text = " and ".join(str(tuple(s)) for s in shapes)
        message = f"{op}: incompatible shapes {shape_text}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)
        self.op = op
        self.shapes = [tuple(s) for s in shapes]


class NumericalError(SurgeonError):
    """Non-finite values encountered during training or evaluation"""

    def __init__(self, message, epoch: Optional[int] = None, term: Optional[str] = None):
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)
        self.epoch = epoch
        self.term = term


class GradCheckFailure(NumericalError):
    """Analytic gradients disagree with finite differences"""

    def __init__(self, message, op: Optional[str] = None):
        super().__init__(message)
        self.op = op


# Process exit codes used by the command-line interface
EXIT_CODES = {
    SurgeonUsageError: 1,
    SurgeonInputError: 2,
    ShapeError: 2,
    NumericalError: 3,
    SurgeonError: 1,
}


def exit_code_for(error: BaseException) -> int:
    """
    Map an exception to the CLI exit code contract

    Args:
        error: The raised exception

    Returns:
        Exit code (1 usage, 2 input/validation, 3 numerical failure)
    """
    for cls in type(error).__mro__:
        if cls in EXIT_CODES:
            return EXIT_CODES[cls]
    return 1
