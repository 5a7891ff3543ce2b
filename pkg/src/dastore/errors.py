"""Exception types shared across the package."""


class DASError(Exception):
    """Base class for every error raised by dastore."""

    # KeyError subclasses would otherwise repr() their message
    __str__ = Exception.__str__


class InvalidParams(DASError, ValueError):
    pass


class WidthMismatch(DASError, ValueError):
    pass


class ParamsMismatch(DASError, ValueError):
    pass


class MalformedBytes(DASError, ValueError):
    pass


class VersionMismatch(MalformedBytes):
    pass


class DuplicateKey(DASError, KeyError):
    pass


class KeyNotFound(DASError, KeyError):
    pass


class UnknownKey(KeyNotFound):
    """The client does not own the requested key."""


class EmptyTree(DASError):
    pass


class BadTag(DASError, ValueError):
    """A triple's tag does not verify against its key and block."""


class RecoveryFailure(DASError):
    """The server could not recover a block (peeling stalled)."""


class AuditRefused(DASError, ValueError):
    """An audit request exceeds the recovery bound delta."""


class StoreIOError(DASError, OSError):
    pass
