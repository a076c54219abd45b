"""Shared exception base for the toolkit.

Every domain error raised by this package derives from RtmEvalError so the
CLI can map "bad input" failures to exit code 1 while genuine bugs surface
as exit code 2.
"""


class RtmEvalError(Exception):
    """Base class for all errors raised by rtmeval."""
