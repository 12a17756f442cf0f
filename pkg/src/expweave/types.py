"""Closed enumerations shared by the weaving, pipeline, and judge layers."""

from __future__ import annotations

import enum


class Phase(enum.Enum):
    """The three improvement-loop phases that consume retrieved experience."""

    DETECTION = "Detection"
    REVISION = "Revision"
    SELF_CRITIQUE = "SelfCritique"

    def __str__(self) -> str:
        return self.value


class Dimension(enum.Enum):
    """The four feedback dimensions scored by the judge."""

    CORRECTNESS = "Correctness"
    FORMATTING = "Formatting"
    MEANINGFULNESS = "Meaningfulness"
    READABILITY = "Readability"

    def __str__(self) -> str:
        return self.value


# Feedback records are keyed by the same closed dimension set.
MetricName = Dimension

ALL_PHASES: tuple[Phase, ...] = (Phase.DETECTION, Phase.REVISION, Phase.SELF_CRITIQUE)
ALL_DIMENSIONS: tuple[Dimension, ...] = (
    Dimension.CORRECTNESS,
    Dimension.FORMATTING,
    Dimension.MEANINGFULNESS,
    Dimension.READABILITY,
)
