"""Exception types raised by the harness."""


class HarnessError(Exception):
    """Base class for all harness errors."""


class PolarOrigin(HarnessError):
    pass


class OutOfFrame(HarnessError):
    pass


class OutOfBounds(HarnessError):
    pass


class UnknownMap(HarnessError):
    pass


class MapParseError(HarnessError):
    pass


class SensorDisabled(HarnessError):
    pass


class NotLanded(HarnessError):
    pass


class InvalidRange(HarnessError):
    pass


class ScenarioError(HarnessError):
    """A scenario document failed to parse; ``errors`` holds every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        lines = "; ".join(f"{e.path}: {e.message}" for e in self.errors[:5])
        more = f" (+{len(self.errors) - 5} more)" if len(self.errors) > 5 else ""
        super().__init__(f"{len(self.errors)} scenario error(s): {lines}{more}")


class InvalidTarget(HarnessError):
    pass
