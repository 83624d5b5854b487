"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A physical or configuration parameter is outside its admissible range."""


class AbortDomainError(ValueError):
    """CHSH value at or below the classical bound; the run must be discarded."""


class NoPositiveCapacityError(ValueError):
    """Capacity is already non-positive at zero distance."""


class NonPurifiableError(ValueError):
    """Fidelity too low for the recurrence to make progress."""


class InsufficientDataError(ValueError):
    """A tally cell needed by an estimator is empty."""


class CapacityError(ValueError):
    """Message does not fit in the available encoded pairs."""
