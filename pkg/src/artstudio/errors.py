"""Exception hierarchy shared by all artstudio modules.

Two top-level families, mirroring the CLI exit codes: ValidationError
(bad values, bad shapes, bad configs; exit 1) and DataFormatError
(unreadable or malformed files on disk; exit 2).
"""


class StudioError(Exception):
    pass


class ValidationError(StudioError, ValueError):
    pass


class DataFormatError(StudioError, OSError):
    pass
