"""The value domain R u {bottom}."""

from __future__ import annotations


class Bottom:
    """The undefined value (a specification is violated with positive probability)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "BOTTOM"

    def __str__(self):
        return "bottom"

    def __reduce__(self):
        return (Bottom, ())


BOTTOM = Bottom()


def is_bottom(value) -> bool:
    return value is BOTTOM


def format_value(value, digits: int = 6) -> str:
    if value is BOTTOM:
        return "bottom"
    return f"{float(value):.{digits}f}"
