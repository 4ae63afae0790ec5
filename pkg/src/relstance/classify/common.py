from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

from ..data_io import STANCES, Stance

# scores closer than this to the maximum count as tied
TIE_EPS = 1e-12


class Source(str, enum.Enum):
    RELATIONAL = "RELATIONAL"
    TEXTUAL = "TEXTUAL"
    TEXTUAL_BACKOFF = "TEXTUAL-BACKOFF"
    ENSEMBLE = "ENSEMBLE"


@dataclass(frozen=True)
class Prediction:
    label: Stance
    source: Source
    scores: Mapping[Stance, float] = field(default_factory=dict)


def argmax_label(scores: Mapping[Stance, float]) -> Stance:
    """Highest-scoring stance; ties go to the earliest of AGAINST, FAVOR, NONE."""
    if not scores:
        raise ValueError("no class scores to choose from")
    best = max(scores.values())
    for c in STANCES:
        if c in scores and scores[c] >= best - TIE_EPS:
            return c
    raise AssertionError("unreachable")
