"""Datasets, hard-problem mining, inference policies, and the eval harness.

Datasets are JSONL files, one record per line with fields id, question,
answer, kind. Mining keeps the questions a direct prompt gets wrong;
evaluation runs several independent trajectories per question and votes.
"""

from __future__ import annotations

import json
import logging
import random
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

from .answers import VoteResult, answers_equivalent, extract_answer, majority_vote
from .core import ActionKind, DatasetKind, EpisodeFailure, StateVector, Trajectory, encode_state
from .dqn import masked_argmax
from .env import EnvConfig, ReasoningEpisode
from .gateway import ChatBackend, ChatRequest, GatewayError, PrmBackend, Usage, UsageLog
from .net import DuelingNet
from .prompts import render_mining

log = logging.getLogger(__name__)

DATASET_FIELDS = ("id", "question", "answer", "kind")


class DatasetError(Exception):
    """A dataset file is malformed; the message carries the line number."""


@dataclass(frozen=True)
class QuestionRecord:
    id: str
    question: str
    answer: str
    kind: DatasetKind


def load_dataset(path: str | Path) -> list[QuestionRecord]:
    """Read a JSONL dataset, validating per line and rejecting duplicate ids."""
    records: list[QuestionRecord] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
            if not isinstance(doc, dict):
                raise DatasetError(f"{path}: line {lineno}: record is not an object")
            missing = [k for k in DATASET_FIELDS if k not in doc]
            if missing:
                raise DatasetError(f"{path}: line {lineno}: missing fields {missing}")
            try:
                kind = DatasetKind(doc["kind"])
            except ValueError as exc:
                raise DatasetError(f"{path}: line {lineno}: unknown kind {doc['kind']!r}") from exc
            qid = str(doc["id"])
            if qid in seen:
                raise DatasetError(f"{path}: line {lineno}: duplicate id {qid!r}")
            seen.add(qid)
            question = str(doc["question"])
            if not question.strip():
                raise DatasetError(f"{path}: line {lineno}: empty question")
            records.append(QuestionRecord(id=qid, question=question, answer=str(doc["answer"]), kind=kind))
    return records


def save_dataset(records: Sequence[QuestionRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(
                json.dumps(
                    {"id": r.id, "question": r.question, "answer": r.answer, "kind": r.kind.value},
                    sort_keys=True,
                )
                + "\n"
            )


# -- mining --------------------------------------------------------------------


@dataclass(frozen=True)
class MiningResult:
    """Hard subset plus bookkeeping; undetermined questions are excluded."""

    hard: tuple[QuestionRecord, ...]
    undetermined: tuple[str, ...]
    total: int

    @property
    def proportion(self) -> float:
        determined = self.total - len(self.undetermined)
        return len(self.hard) / determined if determined else 0.0


def mine_hard(
    dataset: Sequence[QuestionRecord],
    chat: ChatBackend,
    *,
    usage_log: UsageLog | None = None,
) -> MiningResult:
    """Keep the questions whose directly-prompted answer is wrong or missing."""
    hard: list[QuestionRecord] = []
    undetermined: list[str] = []
    for record in dataset:
        prompt = render_mining(record.question, record.kind)
        try:
            exchange = chat.complete(ChatRequest(prompt=prompt))
        except GatewayError as exc:
            log.warning("question %s undetermined: %s", record.id, exc)
            undetermined.append(record.id)
            continue
        if usage_log is not None:
            usage_log.record(exchange, record.id)
        extracted = extract_answer(exchange.text, record.kind)
        if extracted is None or not answers_equivalent(extracted, record.answer, record.kind):
            hard.append(record)
    return MiningResult(hard=tuple(hard), undetermined=tuple(undetermined), total=len(dataset))


# -- policies ------------------------------------------------------------------


class Policy(Protocol):
    def select(self, state: StateVector, legal: Sequence[ActionKind], actions_taken: int) -> ActionKind: ...


class NavigatorPolicy:
    """Greedy over the trained net's Q-values, masked to the legal set."""

    def __init__(self, net: DuelingNet):
        self.net = net

    def select(self, state: StateVector, legal: Sequence[ActionKind], actions_taken: int) -> ActionKind:
        return masked_argmax(self.net.forward(encode_state(state)), legal)


class FixedSequencePolicy:
    """Decompose, reason, refine, then terminate; masking overrides with Terminate."""

    SCRIPT = (ActionKind.DECOMPOSE, ActionKind.REASON_ONE_STEP, ActionKind.REFINE)

    def select(self, state: StateVector, legal: Sequence[ActionKind], actions_taken: int) -> ActionKind:
        wanted = self.SCRIPT[actions_taken] if actions_taken < len(self.SCRIPT) else ActionKind.TERMINATE
        return wanted if wanted in legal else ActionKind.TERMINATE


class RandomPolicy:
    """Uniform over the legal set, seeded."""

    def __init__(self, seed: int = 0):
        self.rng = random.Random(seed)

    def select(self, state: StateVector, legal: Sequence[ActionKind], actions_taken: int) -> ActionKind:
        ordered = sorted(legal, key=int)
        return ordered[self.rng.randrange(len(ordered))]


def run_episode(episode: ReasoningEpisode, policy: Policy) -> Trajectory:
    """Drive one question to termination under a policy."""
    state = episode.reset()
    done = False
    while not done:
        assert episode.ctx is not None
        action = policy.select(state, episode.legal_actions(), episode.ctx.actions_taken)
        state, _, done = episode.step(action)
    return episode.trajectory()


# -- evaluation ----------------------------------------------------------------


@dataclass(frozen=True)
class EvalConfig:
    trials: int = 3  # independent trajectories per question (self-consistency)
    seed: int = 0
    env: EnvConfig = EnvConfig()

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be positive")


@dataclass(frozen=True)
class QuestionResult:
    question_id: str
    final_answer: str | None
    correct: bool
    actions: tuple[str, ...]  # action names of the trial that produced the winner
    trial_answers: tuple[str | None, ...]
    tie_broken: bool
    input_tokens: int
    output_tokens: int
    wall_time_s: float


@dataclass(frozen=True)
class RunReport:
    results: tuple[QuestionResult, ...]
    correct: int
    total: int
    usage: Usage

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0

    def to_jsonable(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "correct": self.correct,
            "total": self.total,
            "usage": {
                "input_tokens": self.usage.input_tokens,
                "output_tokens": self.usage.output_tokens,
            },
            "questions": [
                {
                    "id": r.question_id,
                    "final_answer": r.final_answer,
                    "correct": r.correct,
                    "actions": list(r.actions),
                    "trial_answers": list(r.trial_answers),
                    "tie_broken": r.tie_broken,
                    "input_tokens": r.input_tokens,
                    "output_tokens": r.output_tokens,
                    "wall_time_s": r.wall_time_s,
                }
                for r in self.results
            ],
        }


def evaluate(
    policy: Policy,
    dataset: Sequence[QuestionRecord],
    chat: ChatBackend,
    prm: PrmBackend,
    cfg: EvalConfig = EvalConfig(),
    *,
    offline: bool = False,
) -> RunReport:
    """Run trials per question, vote over extracted answers, score accuracy.

    offline=True zeroes wall times so fully scripted runs produce
    byte-identical reports.
    """
    usage_log = UsageLog()
    results: list[QuestionResult] = []
    n_correct = 0
    for index, record in enumerate(dataset):
        started = time.monotonic()
        answers: list[str | None] = []
        action_names: list[tuple[str, ...]] = []
        for trial in range(cfg.trials):
            episode = ReasoningEpisode(
                problem=record.question,
                kind=record.kind,
                chat=chat,
                prm=prm,
                cfg=cfg.env,
                question_id=record.id,
                usage_log=usage_log,
            )
            try:
                trajectory = run_episode(episode, policy)
            except EpisodeFailure as exc:
                log.warning("question %s trial %d failed: %s", record.id, trial, exc)
                answers.append(None)
                action_names.append(())
                continue
            answers.append(trajectory.final_answer)
            action_names.append(tuple(t.action.name for t in trajectory.transitions))
        voted: VoteResult | None = None
        usable = [a for a in answers if a is not None]
        if usable:
            voted = majority_vote(usable, record.kind, seed=cfg.seed + index)
        winner = voted.winner if voted is not None else None
        correct = winner is not None and answers_equivalent(winner, record.answer, record.kind)
        n_correct += int(correct)
        winning_actions: tuple[str, ...] = ()
        for ans, acts in zip(answers, action_names):
            if winner is not None and ans is not None and answers_equivalent(ans, winner, record.kind):
                winning_actions = acts
                break
        else:
            for acts in action_names:
                if acts:
                    winning_actions = acts
                    break
        q_usage = usage_log.totals_for(record.id)
        results.append(
            QuestionResult(
                question_id=record.id,
                final_answer=winner,
                correct=correct,
                actions=winning_actions,
                trial_answers=tuple(answers),
                tie_broken=voted.tie_broken if voted is not None else False,
                input_tokens=q_usage.input_tokens,
                output_tokens=q_usage.output_tokens,
                wall_time_s=0.0 if offline else time.monotonic() - started,
            )
        )
    return RunReport(
        results=tuple(results),
        correct=n_correct,
        total=len(dataset),
        usage=usage_log.totals(),
    )
