"""Shared text helpers: CJK detection and character/Latin-run splitting."""

import re

_CJK_RANGES = (
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0xF900, 0xFAFF),
    (0x20000, 0x2FA1F),
)


def is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


_CJK_CLASS = "".join(
    f"\\U{lo:08x}-\\U{hi:08x}" for lo, hi in _CJK_RANGES
)
# one CJK ideograph, or a maximal run of anything that is neither CJK nor space
_UNIT_RE = re.compile(f"[{_CJK_CLASS}]|[^\\s{_CJK_CLASS}]+")


def split_units(text: str) -> list[str]:
    """Split into single CJK ideographs and maximal non-CJK, non-space runs."""
    return _UNIT_RE.findall(text)


def join_units(units: list[str]) -> str:
    """Inverse of :func:`split_units` for canonical text.

    CJK ideographs are concatenated; a space separates any pair of
    neighbours where at least one side is a Latin (non-CJK) token.
    """
    out = []
    prev_latin = None
    for u in units:
        latin = not (len(u) == 1 and is_cjk(u))
        if out and (latin or prev_latin):
            out.append(" ")
        out.append(u)
        prev_latin = latin
    return "".join(out)
