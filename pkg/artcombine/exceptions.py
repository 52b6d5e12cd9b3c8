from typing import Optional


class ArtCombineError(Exception):
    """Base error; carries the CLI exit code and a one-line detail"""

    exit_code: int = 1

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


class UsageError(ArtCombineError):
    """Invalid flags or argument combinations"""

    exit_code = 2


class DataError(ArtCombineError, ValueError):
    """Unreadable or invalid input data"""

    exit_code = 3


class DomainError(DataError):
    """Argument outside the domain of a special function"""


class NumericalError(ArtCombineError, ArithmeticError):
    """Numerical failure: non-PSD matrix, singular whitening, failed root search"""

    exit_code = 4
