"""Exception hierarchy shared across the package."""


class VMuckleError(Exception):
    """Base class for every error raised by this package."""


class UnknownAlgorithm(VMuckleError):
    pass


class MalformedPublicKey(VMuckleError):
    pass


class DecapsFailure(VMuckleError):
    pass


class AeadAuthFailure(VMuckleError):
    pass


class FieldTooLong(VMuckleError):
    pass


class MalformedMessage(VMuckleError):
    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


class MissingPrefix(VMuckleError):
    pass


class WrongLength(VMuckleError):
    pass


class QkdUnavailable(VMuckleError):
    pass


class SeedTooShort(VMuckleError):
    pass


class IndexOutOfRange(VMuckleError):
    pass


class BadHex(VMuckleError):
    pass


class KeyReuse(VMuckleError):
    pass


class MissingKey(VMuckleError):
    pass


class BadLength(VMuckleError):
    pass


class EmptyMembership(VMuckleError):
    pass


class IcvMismatch(VMuckleError):
    pass


class HandshakeRejected(VMuckleError):
    """A session rejected the current stage.

    ``reason`` is one of the short names used throughout the handshake:
    MalformedMessage, DecapsFailure, AeadAuthFailure, CertInvalid,
    SignatureInvalid, MacInvalid, QkdUnavailable, ModeMismatch,
    UnexpectedMessage.
    """

    def __init__(self, reason, detail=""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason
        self.detail = detail
