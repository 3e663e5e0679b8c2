from __future__ import annotations

from enum import Enum


class Answer(str, Enum):
    YES = "Yes"
    NO = "No"


class Label(str, Enum):
    """Credibility of an image-caption pair."""

    REAL = "Real"
    FAKE = "Fake"
