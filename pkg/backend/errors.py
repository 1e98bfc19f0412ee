"""Domain exceptions shared by the protocol layer, the harness and the API."""
from typing import Hashable


class DependencyMissing(LookupError):
    """An artifact references something not yet received; the caller must queue, not reject."""

    def __init__(self, key: Hashable, detail: str = "dependency not satisfied"):
        super().__init__(f"{detail}: {key!r}")
        self.key = key


class RegistryNotFinal(DependencyMissing):
    def __init__(self, needed_round: int, finalized_round: int):
        super().__init__(
            ("final", needed_round),
            f"registry not final (finalized through {finalized_round})",
        )
        self.needed_round = needed_round


class DKGError(RuntimeError):
    pass


class ScenarioError(ValueError):
    pass


class RegistrationRejected(ValueError):
    def __init__(self, reason: str):
        super().__init__(f"registration rejected: {reason}")
        self.reason = reason
