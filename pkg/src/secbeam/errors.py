"""Exception types raised by secbeam."""


class SecbeamError(Exception):
    """Base class for all secbeam errors."""


class InvalidInputError(SecbeamError, ValueError):
    """An argument violates a documented precondition."""


class CkmDataError(SecbeamError, ValueError):
    """A channel-knowledge map is structurally incomplete (e.g. an empty cell)."""


class FormatError(SecbeamError, ValueError):
    """A scenario, CKM or experiment file could not be parsed.

    ``line`` is 1-based and may be ``None`` when the problem is not tied to a
    single line (e.g. a missing key).
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = str(path)
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
