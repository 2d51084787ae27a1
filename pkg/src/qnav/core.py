"""Shared value types: evaluation states, navigator actions, transitions.

Everything here is an immutable value object, safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum

import numpy as np

# Aspect order is fixed everywhere: three correctness scores, two complexity
# scores, two completeness scores.
ASPECT_KEYS = ("A1", "A2", "A3", "B1", "B2", "C1", "C2")

STATE_DIM = 7
NUM_ACTIONS = 5
MAX_SCORE = 3


class EpisodeFailure(Exception):
    """An environment could not finish the current episode."""


class ActionKind(IntEnum):
    """The five logic blocks the navigator chooses between."""

    REASON_ONE_STEP = 0
    DECOMPOSE = 1
    DEBATE = 2
    REFINE = 3
    TERMINATE = 4


class DatasetKind(str, Enum):
    """Answer-format family of a question; drives prompting and extraction."""

    MATH_BOXED = "math_boxed"
    ELEMENTARY_MATH_NUMERIC = "elementary_math_numeric"
    MULTIPLE_CHOICE = "multiple_choice"
    YES_NO = "yes_no"


def action_index(action: ActionKind) -> int:
    """Stable integer index of an action (0..4)."""
    return int(action)


def action_from_index(index: int) -> ActionKind:
    if not 0 <= index < NUM_ACTIONS:
        raise ValueError(f"action index out of range: {index}")
    return ActionKind(index)


@dataclass(frozen=True)
class StateVector:
    """Seven self-evaluation scores, each in 0..3, ordered as ASPECT_KEYS."""

    scores: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.scores) != STATE_DIM:
            raise ValueError(f"expected {STATE_DIM} scores, got {len(self.scores)}")
        for s in self.scores:
            if not isinstance(s, int) or not 0 <= s <= MAX_SCORE:
                raise ValueError(f"score out of range 0..{MAX_SCORE}: {s!r}")

    @classmethod
    def from_mapping(cls, scores: dict[str, int]) -> "StateVector":
        return cls(tuple(int(scores.get(k, 0)) for k in ASPECT_KEYS))


def encode_state(state: StateVector) -> np.ndarray:
    """Network input: scores scaled to [0, 1] by the maximum score."""
    return np.asarray(state.scores, dtype=np.float64) / MAX_SCORE


@dataclass(frozen=True)
class ReasoningContext:
    """Accumulated reasoning for one question.

    ``steps`` holds only durable reasoning text; intermediate sub-pipeline
    chatter (subtask executions, debate plans) never lands here.
    """

    problem: str
    dataset_kind: DatasetKind
    steps: tuple[str, ...] = ()
    answer_present: bool = False
    actions_taken: int = 0

    def with_step(self, text: str, answer_present: bool) -> "ReasoningContext":
        return replace(
            self,
            steps=self.steps + (text,),
            answer_present=answer_present,
            actions_taken=self.actions_taken + 1,
        )

    def bump(self) -> "ReasoningContext":
        """Count an action that appended no step (terminal bookkeeping)."""
        return replace(self, actions_taken=self.actions_taken + 1)


@dataclass(frozen=True)
class Transition:
    """One replay-buffer entry."""

    state: StateVector
    action: ActionKind
    reward: float
    next_state: StateVector
    done: bool


@dataclass(frozen=True)
class Trajectory:
    """One finished episode: the transitions plus the extracted answer, if any."""

    question_id: str
    transitions: tuple[Transition, ...] = field(default_factory=tuple)
    final_answer: str | None = None
