"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line front end:
1 usage/config, 2 input, 3 numerical failure, 4 budget exceeded.
"""
from __future__ import annotations


class EvohomError(Exception):
    exit_code = 1

    def to_dict(self) -> dict:
        return {"error": type(self).__name__, "message": str(self), "exit_code": self.exit_code}


class ConfigError(EvohomError, ValueError):
    exit_code = 1

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.key = key
        self.line = line
        self._init = (message, key, line)

    def __reduce__(self):
        return type(self), self._init


class InputError(EvohomError):
    exit_code = 2


class PDBParseError(InputError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line
        self._init = (message, line)

    def __reduce__(self):
        return type(self), self._init


class NumericalError(EvohomError, ArithmeticError):
    exit_code = 3


class IntegrationDiverged(NumericalError):
    def __init__(self, time: float):
        super().__init__(f"non-finite state encountered at t={time!r}")
        self.time = time

    def __reduce__(self):
        return type(self), (self.time,)


class NotSynchronized(NumericalError):
    pass


class SimulationTooShort(NumericalError):
    pass


class DisconnectedGraph(NumericalError, ValueError):
    pass


class UndefinedCorrelation(NumericalError, ValueError):
    pass


class FiltrationError(EvohomError, AssertionError):
    """Monotonicity violated in a filtration; indicates an upstream bug."""

    exit_code = 3


class BudgetExceeded(EvohomError):
    exit_code = 4

    def __init__(self, required: int, budget: int):
        super().__init__(f"flag complex needs {required} simplices, budget is {budget}")
        self.required = required
        self.budget = budget

    def __reduce__(self):
        return type(self), (self.required, self.budget)


class ResidueError(EvohomError):
    """Wraps a failure from a single perturbation experiment with its node id."""

    def __init__(self, node, cause: EvohomError):
        super().__init__(f"residue {node}: {cause}")
        self.node = node
        self.cause = cause
        self.exit_code = cause.exit_code

    def __reduce__(self):
        return type(self), (self.node, self.cause)
