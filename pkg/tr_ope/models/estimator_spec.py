"""Which estimator to run, with which hyperparameters, and what it returned."""
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from ..exceptions import ValidationError


class EstimatorKind(str, Enum):
    DM = "DM"
    IPS = "IPS"
    SnIPS = "SnIPS"
    DR = "DR"
    SnDR = "SnDR"
    DR_SWITCH = "DR_SWITCH"
    DR_SHRINK = "DR_SHRINK"
    DM_R = "DM_R"
    DM_I = "DM_I"
    TR = "TR"
    SnTR = "SnTR"
    TR_SWITCH = "TR_SWITCH"
    TR_SHRINK = "TR_SHRINK"

    @classmethod
    def parse(cls, name):
        """Case-insensitive lookup; accepts `dr-switch` as well as `DR_SWITCH`."""
        key = name.strip().replace("-", "_").upper()
        for kind in cls:
            if kind.value.upper() == key:
                return kind
        raise ValidationError(f"unknown estimator {name!r}")


BASELINE_FAMILY = "DM/IPS/DR"
ROBUST_FAMILY = "DM-R/TR"

SWITCH_KINDS = frozenset({EstimatorKind.DR_SWITCH, EstimatorKind.TR_SWITCH})
SHRINK_KINDS = frozenset({EstimatorKind.DR_SHRINK, EstimatorKind.TR_SHRINK})
ROBUST_KINDS = frozenset({
    EstimatorKind.DM_R,
    EstimatorKind.DM_I,
    EstimatorKind.TR,
    EstimatorKind.SnTR,
    EstimatorKind.TR_SWITCH,
    EstimatorKind.TR_SHRINK,
})
MODEL_FREE_KINDS = frozenset({EstimatorKind.IPS, EstimatorKind.SnIPS})


@dataclass(frozen=True)
class EstimatorSpec:
    """
    One estimator of the family plus its hyperparameters.

    `tau` is required exactly for the SWITCH kinds and `shrink_cap` exactly for
    the shrinkage kinds; both accept 0 and +inf.
    """

    kind: EstimatorKind
    tau: Optional[float] = None
    shrink_cap: Optional[float] = None

    def __post_init__(self):
        if not isinstance(self.kind, EstimatorKind):
            object.__setattr__(self, "kind", EstimatorKind.parse(str(self.kind)))
        if (self.tau is not None) != (self.kind in SWITCH_KINDS):
            raise ValidationError(f"tau is required iff the estimator is a SWITCH variant ({self.kind.value})")
        if (self.shrink_cap is not None) != (self.kind in SHRINK_KINDS):
            raise ValidationError(f"shrink_cap is required iff the estimator is a shrinkage variant ({self.kind.value})")
        for name in ("tau", "shrink_cap"):
            value = getattr(self, name)
            if value is not None and not value >= 0.0:
                raise ValidationError(f"{name} must be nonnegative, got {value}")

    @property
    def name(self):
        return self.kind.value

    @property
    def family(self):
        return ROBUST_FAMILY if self.kind in ROBUST_KINDS else BASELINE_FAMILY

    @property
    def reward_model_tag(self):
        """Tag of the reward model this estimator consumes (None for IPS/SnIPS)."""
        if self.kind in MODEL_FREE_KINDS:
            return None
        if self.kind is EstimatorKind.DM_I:
            return "robust_iid"
        if self.kind in ROBUST_KINDS:
            return "robust"
        return "direct"


@dataclass(frozen=True)
class EstimatorResult:
    spec: EstimatorSpec
    value: float


def default_estimator_specs(tau=0.5, shrink_cap=0.5, kinds=None):
    """Specs for `kinds` (default: every kind) with shared hyperparameters."""
    specs = []
    for kind in kinds or list(EstimatorKind):
        kind = kind if isinstance(kind, EstimatorKind) else EstimatorKind.parse(kind)
        specs.append(EstimatorSpec(
            kind=kind,
            tau=tau if kind in SWITCH_KINDS else None,
            shrink_cap=shrink_cap if kind in SHRINK_KINDS else None,
        ))
    return specs
