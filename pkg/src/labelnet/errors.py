"""Exception hierarchy shared by all labelnet modules."""

from __future__ import annotations


class LabelNetError(Exception):
    """Base class for every error raised by this package."""


class DataContractError(LabelNetError):
    """Input violates a documented contract (bad file, bad value, bad name)."""


class CycleError(DataContractError):
    """Entailment edges form a directed cycle among non-equivalent labels."""

    def __init__(self, cycle):
        self.cycle = tuple(cycle)
        path = " -> ".join(self.cycle + (self.cycle[0],))
        super().__init__(f"entailment cycle detected: {path}")


class MiningTimeout(LabelNetError):
    """Exclusion mining exceeded its deadline."""


class EscalationError(DataContractError):
    """No minimum support at or below the instance count satisfied the caps."""


class InfeasibleEvidenceError(DataContractError):
    """Evidence assigns zero probability to every constraint-consistent state."""


class InvariantError(LabelNetError):
    """An internal consistency guarantee failed; indicates a bug upstream."""
