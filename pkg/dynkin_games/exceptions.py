"""
Exception hierarchy for the Dynkin game toolkit

Every error raised on purpose by the package derives from DynkinError, so the
command-line front end can map failures onto exit codes without inspecting
messages.
"""

from typing import Optional


class DynkinError(Exception):
    """Base class for all toolkit errors"""


class GameValidationError(DynkinError, ValueError):
    """A tree, process or game violates a structural invariant"""

    def __init__(self, message: str, node_id: Optional[str] = None, field: Optional[str] = None):
        self.node_id = node_id
        self.field = field
        context = []
        if node_id is not None:
            context.append(f"node {node_id}")
        if field is not None:
            context.append(f"field {field}")
        if context:
            message = f"{message} ({', '.join(context)})"
        super().__init__(message)


class GameFileError(GameValidationError):
    """A game or lattice file cannot be parsed"""

    def __init__(self, message: str, node_id: Optional[str] = None, field: Optional[str] = None,
                 line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} at line {line}, column {column}"
        super().__init__(message, node_id=node_id, field=field)


class PreconditionError(DynkinError, ValueError):
    """An operation was called outside its domain"""


class EnumerationCapExceeded(DynkinError):
    """Exhaustive strategy enumeration would exceed the configured cap"""

    def __init__(self, cap: int, count: int, node_id: Optional[str] = None):
        self.cap = cap
        self.count = count
        self.node_id = node_id
        where = f" below node {node_id}" if node_id is not None else ""
        super().__init__(f"{count} stopping times{where} exceed the enumeration cap {cap}")


class BudgetExceeded(DynkinError):
    """A lattice or generated tree would exceed the node budget"""

    def __init__(self, budget: int, requested: int, what: str = "nodes"):
        self.budget = budget
        self.requested = requested
        super().__init__(f"{requested} {what} exceed the budget of {budget}")


class CertificationError(DynkinError):
    """A strategy pair failed a certification the caller required"""
