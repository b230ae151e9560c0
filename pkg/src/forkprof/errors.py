from __future__ import annotations


class ForkprofError(Exception):
    """Base class for runtime errors raised by forkprof."""


class InvalidArgument(ForkprofError, ValueError):
    pass


class ContractViolation(ForkprofError):
    """A collective construct was used in a way its contract forbids."""


class TeamAborted(ForkprofError):
    """Raised in team members blocked on a construct after a peer failed."""


class DeadlockError(ForkprofError):
    """The watchdog gave up waiting on a synchronization construct."""


class ScheduleParseError(InvalidArgument):
    pass
