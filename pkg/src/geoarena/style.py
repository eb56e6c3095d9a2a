"""Response-style measurement: five deterministic features per response text.

These are the covariates used to separate formatting preferences from model
strength in the style-controlled fit. All parsing rules are fixed here and
intentionally simple; determinism matters more than markdown fidelity.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

FEATURE_NAMES = (
    "response_length",
    "lists_count",
    "headers_count",
    "emphasis_count",
    "gps_output_ratio",
)

_LIST_ITEM = re.compile(r"^\s*(?:[-*+]|\d+[.)])\s+")
_HEADER = re.compile(r"^\s*#{1,6}\s+")
# Bold spans are matched before italics so ** never parses as two italics.
_BOLD = re.compile(r"\*\*(.+?)\*\*|__(.+?)__", re.DOTALL)
_ITALIC = re.compile(r"\*([^*\s][^*]*?)\*|_([^_\s][^_]*?)_", re.DOTALL)

# Two decimal numbers with >=2 decimal places, comma-separated, optionally
# parenthesized; range-checked as (lat, lon) after matching.
_COORD_PAIR = re.compile(r"\(?\s*([+-]?\d{1,3}\.\d{2,})\s*,\s*([+-]?\d{1,3}\.\d{2,})\s*\)?")
_LAT_LABELED = re.compile(r"\blat(?:itude)?\b[^\d+-]{0,12}([+-]?\d{1,3}(?:\.\d+)?)", re.I)
_LON_LABELED = re.compile(r"\blong?(?:gitude|itude)?\b[^\d+-]{0,12}([+-]?\d{1,3}(?:\.\d+)?)", re.I)


@dataclass(frozen=True)
class StyleFeatures:
    """Counts extracted from one response; a pure function of the text."""

    response_length: int
    lists_count: int
    headers_count: int
    emphasis_count: int
    has_gps_output: bool

    def __post_init__(self) -> None:
        for name in ("response_length", "lists_count", "headers_count", "emphasis_count"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def as_vector(self) -> np.ndarray:
        """The five features as floats; the GPS flag becomes a 1.0/0.0 indicator."""
        return np.array(
            [
                float(self.response_length),
                float(self.lists_count),
                float(self.headers_count),
                float(self.emphasis_count),
                1.0 if self.has_gps_output else 0.0,
            ]
        )


def _count_emphasis(text: str) -> int:
    """Bold and italic spans, non-overlapping, longest delimiter first."""
    count = 0

    def _blank(m: re.Match) -> str:
        nonlocal count
        count += 1
        return " " * len(m.group(0))

    remainder = _BOLD.sub(_blank, text)
    _ITALIC.sub(_blank, remainder)
    return count


def _in_range(lat: float, lon: float) -> bool:
    return -90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0


def detect_gps(text: str) -> bool:
    """True when the text contains an explicit latitude/longitude prediction."""
    for m in _COORD_PAIR.finditer(text):
        if _in_range(float(m.group(1)), float(m.group(2))):
            return True
    lat = _LAT_LABELED.search(text)
    lon = _LON_LABELED.search(text)
    if lat and lon:
        try:
            if _in_range(float(lat.group(1)), float(lon.group(1))):
                return True
        except ValueError:
            pass
    return False


def extract_features(response: str) -> StyleFeatures:
    """Measure one response. Empty text yields all zeros and no GPS flag.

    Words are whitespace-separated tokens; markdown punctuation tokens count
    as words too. List items and headers are counted per matching line.
    """
    if not response:
        return StyleFeatures(0, 0, 0, 0, False)
    lines = response.splitlines()
    return StyleFeatures(
        response_length=len(response.split()),
        lists_count=sum(1 for ln in lines if _LIST_ITEM.match(ln)),
        headers_count=sum(1 for ln in lines if _HEADER.match(ln)),
        emphasis_count=_count_emphasis(response),
        has_gps_output=detect_gps(response),
    )


def feature_difference(a: StyleFeatures, b: StyleFeatures) -> np.ndarray:
    """Normalized per-feature difference (f_a - f_b) / (f_a + f_b).

    Zero when both sides are zero; every component lies in [-1, 1] and the
    vector negates exactly when the arguments swap. Order:
    [length, lists, headers, emphasis, gps].
    """
    va, vb = a.as_vector(), b.as_vector()
    total = va + vb
    diff = np.zeros(5)
    nonzero = total != 0.0
    diff[nonzero] = (va[nonzero] - vb[nonzero]) / total[nonzero]
    return diff
