"""Exception types shared across the compiler pipeline.

Exit-code mapping used by the CLI: parse/validation problems exit with 2,
capacity problems with 3, and internal invariant breaches with 4.
"""


class SnnCompilerError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(SnnCompilerError):
    """Malformed input file; message carries line/field diagnostics."""


class ValidationError(SnnCompilerError):
    """Structurally parseable input that violates a model invariant."""


class ConsistencyError(ValidationError):
    """SDFG balance equations are unsolvable; names a violating channel."""


class CapacityError(SnnCompilerError):
    """Requested mapping does not fit the available hardware resources."""


class InfeasibleNeuronError(CapacityError):
    """A single neuron cannot fit any crossbar under the given constraints."""


class DeadlockError(SnnCompilerError):
    """A token-free cycle makes the graph unable to make progress."""

    def __init__(self, message, cycle=None):
        super().__init__(message)
        self.cycle = cycle if cycle is not None else []


class StallError(SnnCompilerError):
    """Self-timed execution reached a state where no actor can ever fire."""
