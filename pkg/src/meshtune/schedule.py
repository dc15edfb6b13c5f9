"""Geometric resource schedule shared by successive halving and its variants."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .errors import ConfigError, ContractViolation
from .space import Configuration

_EPS = 1e-9


@dataclass(frozen=True)
class Round:
    index: int
    resource: int


@dataclass(frozen=True)
class ResourceSchedule:
    r_min: int
    r_max: int
    eta: float
    s_max: int
    rounds: tuple[Round, ...]

    @property
    def resources(self) -> list[int]:
        return [r.resource for r in self.rounds]

    @property
    def n_rounds(self) -> int:
        return self.s_max + 1

    def level_of(self, resource: int) -> int:
        for r in self.rounds:
            if r.resource == resource:
                return r.index
        raise ContractViolation(f"resource {resource} is not a level of {self.resources}")

    def to_dict(self) -> dict:
        return {"r_min": self.r_min, "r_max": self.r_max, "eta": self.eta}


def build_schedule(r_min: int, r_max: int, eta: float) -> ResourceSchedule:
    if not r_min >= 1:
        raise ConfigError(f"r_min must be >= 1, got {r_min}")
    if not r_max >= r_min:
        raise ConfigError(f"r_max must be >= r_min, got r_max={r_max} r_min={r_min}")
    if not eta > 1:
        raise ConfigError(f"eta must be > 1, got {eta}")
    # floor(log_eta(r_max / r_min)) without trusting math.log at exact powers
    s_max = 0
    while r_min * eta ** (s_max + 1) <= r_max * (1 + _EPS):
        s_max += 1
    rounds = tuple(Round(i, int(math.floor(r_min * eta ** i + _EPS))) for i in range(s_max + 1))
    return ResourceSchedule(int(r_min), int(r_max), float(eta), s_max, rounds)


def cohort_sizes(n: int, sched: ResourceSchedule) -> list[int]:
    """Number of configurations evaluated at each round: floor(n * eta^-i)."""
    if n < sched.eta ** sched.s_max * (1 - _EPS):
        raise ContractViolation(
            f"n={n} < eta^s_max={sched.eta ** sched.s_max:g}; later rounds would be empty")
    return [int(math.floor(n / sched.eta ** i + _EPS)) for i in range(sched.s_max + 1)]


def schedule_budget(n: int, sched: ResourceSchedule) -> int:
    """Total resource of one SH bracket, sum of n_i * r_i."""
    return sum(k * r for k, r in zip(cohort_sizes(n, sched), sched.resources))


def equivalent_rs_budget(n: int, sched: ResourceSchedule) -> int:
    """How many max-resource evaluations fit in the budget of one SH bracket."""
    return schedule_budget(n, sched) // sched.r_max


@dataclass
class TrialRecord:
    """Validation-loss curve of one configuration on one dataset, keyed by round index."""

    dataset_id: str
    config: Configuration
    losses: dict[int, float] = field(default_factory=dict)
    resources: dict[int, int] = field(default_factory=dict)
    predicted: dict[int, float] = field(default_factory=dict)
    stopped_early_at: Optional[int] = None

    def record(self, round_index: int, resource: int, loss: float) -> None:
        if not math.isfinite(loss):
            raise ContractViolation(
                f"non-finite loss {loss} for config {self.config.id} at round {round_index}")
        self.losses[round_index] = float(loss)
        self.resources[round_index] = int(resource)

    def history(self) -> list[float]:
        return [self.losses[i] for i in sorted(self.losses)]

    def best(self) -> float:
        return min(self.losses.values())

    def to_dict(self) -> dict:
        return {"dataset_id": self.dataset_id, **self.config.to_dict(),
                "losses": {str(k): v for k, v in sorted(self.losses.items())},
                "resources": {str(k): v for k, v in sorted(self.resources.items())},
                "stopped_early_at": self.stopped_early_at}


def losses_by_resource(losses: Mapping[str, float]) -> dict[int, float]:
    return {int(k): float(v) for k, v in losses.items()}
