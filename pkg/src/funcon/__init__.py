"""funcon: constraint embedding via functional connections plus collocation DE solvers."""

from funcon import (
    basis,
    constraint_core,
    desolve,
    exprfn,
    multivar,
    problems,
    solvers,
)

__all__ = ["exprfn", "basis", "constraint_core", "multivar", "solvers",
           "desolve", "problems"]
__version__ = "0.1.0"
