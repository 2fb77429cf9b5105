"""Exception types raised across the package."""


class SLError(Exception):
    """Base class for all package errors."""


class InvalidOpinion(SLError, ValueError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class DogmaticOpinion(SLError, ValueError):
    """Raised when an opinion with zero uncertainty must enter evidence space."""


class DomainMismatch(SLError, ValueError):
    pass


class FusionDomainMismatch(DomainMismatch):
    pass


class DogmaticOperand(SLError, ValueError):
    pass


class VacuousOperand(SLError, ValueError):
    pass


class InvalidProbabilityVector(SLError, ValueError):
    pass


class InsufficientReports(SLError, ValueError):
    pass


class DegenerateConflict(SLError):
    """All conflicts are equal, so revision weights are undefined."""


class SybilFlag(SLError):
    def __init__(self, true_id, topic, pseudonyms):
        super().__init__(f"agent {true_id!r} holds pseudonyms {sorted(pseudonyms)} on topic {topic!r}")
        self.true_id = true_id
        self.topic = topic
        self.pseudonyms = set(pseudonyms)


class RevokedAgent(SLError):
    pass


class NoMatchingWindow(SLError):
    pass


class ConfigError(SLError, ValueError):
    pass
