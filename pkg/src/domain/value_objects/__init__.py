"""Domain value objects."""
from __future__ import annotations

from enum import Enum


class Activation(Enum):
    """Layer activation."""

    RELU = "relu"
    IDENTITY = "identity"
    SOFTMAX_ROWS = "softmax-rows"


class Split(Enum):
    """Dataset split tag."""

    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class Method(Enum):
    """Pipeline method."""

    TAIDTM = "taidtm"
    TAIDTM_FT = "taidtm_ft"
    GLOBAL_ONLY = "global_only"
    MV = "mv"
    DS = "ds"

    @property
    def uses_transitions(self) -> bool:
        """Whether the method trains with forward loss correction."""
        return self in (Method.TAIDTM, Method.TAIDTM_FT, Method.GLOBAL_ONLY)


class HeadSource(Enum):
    """Which transition heads drive forward correction."""

    INTERDEPENDENT = "interdependent"
    INDIVIDUAL = "individual"
    GLOBAL = "global"


class SimilarityNorm(Enum):
    """Norm in the denominator of the head similarity."""

    L2 = "l2"
    L1 = "l1"


class FlipRateScope(Enum):
    """Granularity at which flip rates are drawn."""

    GROUP = "group"
    ANNOTATOR = "annotator"


METHOD_HEAD_SOURCE: dict[Method, HeadSource] = {
    Method.TAIDTM: HeadSource.INTERDEPENDENT,
    Method.TAIDTM_FT: HeadSource.INDIVIDUAL,
    Method.GLOBAL_ONLY: HeadSource.GLOBAL,
}
