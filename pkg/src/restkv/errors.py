"""Exception types shared across the package."""


class BudgetError(ValueError):
    """Raised when a cache budget cannot hold the positions a policy must keep.

    ``min_feasible`` is the smallest budget that would have been accepted.
    """

    def __init__(self, message: str, min_feasible: int):
        super().__init__(f"{message} (minimum feasible budget: {min_feasible})")
        self.min_feasible = min_feasible


class TraceFormatError(ValueError):
    """Raised when a trace file is malformed.

    ``offset`` is the byte offset at which parsing failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset
