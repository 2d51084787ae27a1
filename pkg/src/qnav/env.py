"""Reasoning environment: action masking, logic-block pipelines, PRM rewards.

A step executes one logic block against the chat backend, appends exactly one
durable reasoning step, scores the accumulated reasoning with the process
reward model, and self-evaluates the new context to produce the next state.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from . import prompts
from .answers import extract_answer
from .core import (
    ActionKind,
    DatasetKind,
    EpisodeFailure,
    ReasoningContext,
    StateVector,
    Trajectory,
    Transition,
)
from .gateway import (
    ChatBackend,
    ChatExchange,
    ChatRequest,
    GatewayError,
    PrmBackend,
    Usage,
    UsageLog,
    score_process,
)
from .prompts import MalformedEvaluationError, ParseFailure

log = logging.getLogger(__name__)

ALL_BLOCKS = frozenset(ActionKind)


class IllegalActionError(ValueError):
    """An action outside the current legal set was requested."""


class StepFailureError(EpisodeFailure):
    """A sub-pipeline parse failed even after its re-prompt."""


@dataclass(frozen=True)
class EnvConfig:
    """Knobs for one reasoning episode."""

    max_actions: int = 5
    enabled_blocks: frozenset[ActionKind] = ALL_BLOCKS
    self_eval_retry: int = 1
    subtask_cap: int = prompts.MAX_SUBTASKS
    temperature: float = 1.0
    max_output_tokens: int = 1024

    def __post_init__(self) -> None:
        if self.max_actions < 1:
            raise ValueError("max_actions must be positive")
        # The navigator must always be able to reason plainly and to stop.
        for required in (ActionKind.REASON_ONE_STEP, ActionKind.TERMINATE):
            if required not in self.enabled_blocks:
                raise ValueError(f"enabled_blocks must contain {required.name}")


@dataclass(frozen=True)
class SubCall:
    """One LLM exchange within a step, labeled by pipeline stage."""

    stage: str
    exchange: ChatExchange


@dataclass(frozen=True)
class StepOutcome:
    """Everything one environment step produced."""

    ctx: ReasoningContext
    state: StateVector
    reward: float
    done: bool
    action: ActionKind
    executed: ActionKind  # differs from action only for Refine remapped at step 0
    appended: str
    transcript: tuple[SubCall, ...]
    usage: Usage

    @property
    def block_calls(self) -> tuple[SubCall, ...]:
        """Sub-calls made by the logic block itself, self-evaluation excluded."""
        return tuple(c for c in self.transcript if c.stage != "self_eval")


def legal_action_set(
    answer_present: bool,
    actions_taken: int,
    max_actions: int = 5,
    enabled: frozenset[ActionKind] = ALL_BLOCKS,
) -> frozenset[ActionKind]:
    """Masking rules; Terminate is always available, and forced at the end."""
    if answer_present or actions_taken >= max_actions - 1:
        return frozenset({ActionKind.TERMINATE})
    legal = set(enabled) | {ActionKind.TERMINATE}
    if actions_taken == 0:
        legal.discard(ActionKind.REFINE)  # nothing to refine yet
    return frozenset(legal)


def legal_actions(ctx: ReasoningContext, cfg: EnvConfig) -> frozenset[ActionKind]:
    return legal_action_set(ctx.answer_present, ctx.actions_taken, cfg.max_actions, cfg.enabled_blocks)


def render_reasoning(ctx: ReasoningContext) -> str:
    """Numbered steps only; what the process reward model sees as reasoning."""
    return "\n".join(f"Step {i}: {s}" for i, s in enumerate(ctx.steps, 1))


def initial_context(question: str, kind: DatasetKind) -> ReasoningContext:
    if not question.strip():
        raise ValueError("empty question")
    return ReasoningContext(problem=question, dataset_kind=kind)


class _Pipeline:
    """Collects sub-calls for one step (or one reset evaluation)."""

    def __init__(self, chat: ChatBackend, cfg: EnvConfig):
        self.chat = chat
        self.cfg = cfg
        self.calls: list[SubCall] = []

    def ask(self, stage: str, prompt: str) -> str:
        request = ChatRequest(
            prompt=prompt,
            temperature=self.cfg.temperature,
            max_output_tokens=self.cfg.max_output_tokens,
        )
        exchange = self.chat.complete(request)
        self.calls.append(SubCall(stage=stage, exchange=exchange))
        return exchange.text

    @property
    def usage(self) -> Usage:
        total = Usage()
        for call in self.calls:
            total = total + call.exchange.usage
        return total


def _self_evaluate(pipe: _Pipeline, ctx: ReasoningContext) -> StateVector:
    """Score the current context; one re-prompt, then defaults with warning."""
    best: prompts.SelfEvalReport | None = None
    for _ in range(pipe.cfg.self_eval_retry + 1):
        text = pipe.ask("self_eval", prompts.render_self_eval(ctx))
        try:
            report = prompts.parse_self_eval(text)
        except MalformedEvaluationError:
            continue
        if best is None or len(report.missing) <= len(best.missing):
            best = report
        if not best.missing:
            break
    if best is None:
        raise MalformedEvaluationError("self-evaluation yielded no aspect markers, even after retry")
    if best.missing:
        log.warning("self-evaluation missing aspects %s; defaulted to 0", ",".join(best.missing))
    return best.state


def reset(
    question: str, kind: DatasetKind, chat: ChatBackend, cfg: EnvConfig = EnvConfig()
) -> tuple[ReasoningContext, StateVector, tuple[SubCall, ...]]:
    """Fresh context plus the initial state from evaluating the bare problem."""
    ctx = initial_context(question, kind)
    pipe = _Pipeline(chat, cfg)
    state = _self_evaluate(pipe, ctx)
    return ctx, state, tuple(pipe.calls)


def _run_reason_one_step(pipe: _Pipeline, ctx: ReasoningContext) -> str:
    return pipe.ask("reason_one_step", prompts.render_reason_one_step(ctx))


def _run_refine(pipe: _Pipeline, ctx: ReasoningContext) -> str:
    return pipe.ask("refine", prompts.render_refine(ctx))


def _run_decompose(pipe: _Pipeline, ctx: ReasoningContext) -> str:
    split_prompt = prompts.render_decompose_split(ctx)
    text = pipe.ask("decompose_split", split_prompt)
    try:
        subtasks = prompts.parse_subtasks(text, pipe.cfg.subtask_cap)
    except ParseFailure:
        text = pipe.ask("decompose_split", split_prompt)
        try:
            subtasks = prompts.parse_subtasks(text, pipe.cfg.subtask_cap)
        except ParseFailure as exc:
            raise StepFailureError(f"decomposition unparseable after retry: {exc}") from exc
    results: list[str] = []
    for i in range(1, len(subtasks) + 1):
        prompt = prompts.render_decompose_execute(ctx, subtasks, results, i)
        results.append(pipe.ask("decompose_execute", prompt))
    return pipe.ask("decompose_summary", prompts.render_decompose_summary(subtasks, results))


def _run_debate(pipe: _Pipeline, ctx: ReasoningContext) -> str:
    plans_prompt = prompts.render_debate_plans(ctx)
    plans_text = pipe.ask("debate_plans", plans_prompt)
    try:
        plans = prompts.parse_plans(plans_text)
    except ParseFailure:
        plans_text = pipe.ask("debate_plans", plans_prompt)
        try:
            plans = prompts.parse_plans(plans_text)
        except ParseFailure as exc:
            raise StepFailureError(f"debate plans unparseable after retry: {exc}") from exc
    choice_prompt = prompts.render_debate_choice(ctx, plans_text)
    choice_text = pipe.ask("debate_choice", choice_prompt)
    try:
        index = prompts.parse_plan_choice(choice_text, n_plans=len(plans))
    except ParseFailure:
        choice_text = pipe.ask("debate_choice", choice_prompt)
        try:
            index = prompts.parse_plan_choice(choice_text, n_plans=len(plans))
        except ParseFailure:
            log.warning("plan choice unparseable after retry; falling back to plan 1")
            index = 1
    return pipe.ask("debate_execute", prompts.render_debate_execute(ctx, plans[index - 1]))


def step(
    ctx: ReasoningContext,
    state: StateVector,
    action: ActionKind,
    chat: ChatBackend,
    prm: PrmBackend,
    cfg: EnvConfig = EnvConfig(),
) -> StepOutcome:
    """Execute one logic block; see the module docstring for the contract.

    Refine requested on an empty context executes as ReasonOneStep. Any other
    action outside the legal set raises IllegalActionError.
    """
    legal = legal_actions(ctx, cfg)
    executed = action
    if action not in legal:
        if action is ActionKind.REFINE and ctx.actions_taken == 0 and not ctx.answer_present:
            executed = ActionKind.REASON_ONE_STEP
        else:
            raise IllegalActionError(f"{action.name} not legal here (legal: {sorted(a.name for a in legal)})")

    pipe = _Pipeline(chat, cfg)
    if executed is ActionKind.TERMINATE:
        text = pipe.ask("terminate", prompts.render_terminate(ctx))
        new_ctx = ctx.with_step(text, answer_present=True)
        reward = score_process(prm, ctx.problem, render_reasoning(new_ctx))
        return StepOutcome(
            ctx=new_ctx,
            state=state,  # no re-evaluation after the terminal step
            reward=reward,
            done=True,
            action=action,
            executed=executed,
            appended=text,
            transcript=tuple(pipe.calls),
            usage=pipe.usage,
        )

    if executed is ActionKind.REASON_ONE_STEP:
        text = _run_reason_one_step(pipe, ctx)
    elif executed is ActionKind.DECOMPOSE:
        text = _run_decompose(pipe, ctx)
    elif executed is ActionKind.DEBATE:
        text = _run_debate(pipe, ctx)
    elif executed is ActionKind.REFINE:
        text = _run_refine(pipe, ctx)
    else:  # pragma: no cover - enum is closed
        raise IllegalActionError(f"unknown action {action!r}")

    answer_present = extract_answer(text, ctx.dataset_kind) is not None
    new_ctx = ctx.with_step(text, answer_present=answer_present)
    reward = score_process(prm, ctx.problem, render_reasoning(new_ctx))
    next_state = _self_evaluate(pipe, new_ctx)
    return StepOutcome(
        ctx=new_ctx,
        state=next_state,
        reward=reward,
        done=False,
        action=action,
        executed=executed,
        appended=text,
        transcript=tuple(pipe.calls),
        usage=pipe.usage,
    )


@dataclass
class ReasoningEpisode:
    """Trainer/eval-facing wrapper running one question to completion.

    Parse failures inside a block terminate the episode with reward 0 for
    that step; gateway and evaluation failures abort it via EpisodeFailure.
    """

    problem: str
    kind: DatasetKind
    chat: ChatBackend
    prm: PrmBackend
    cfg: EnvConfig = EnvConfig()
    question_id: str = ""
    usage_log: UsageLog | None = None

    ctx: ReasoningContext | None = field(default=None, init=False)
    state: StateVector | None = field(default=None, init=False)
    outcomes: list[StepOutcome] = field(default_factory=list, init=False)
    transitions: list[Transition] = field(default_factory=list, init=False)
    final_text: str | None = field(default=None, init=False)
    failed: bool = field(default=False, init=False)

    def _record(self, calls: tuple[SubCall, ...]) -> None:
        if self.usage_log is not None:
            for call in calls:
                self.usage_log.record(call.exchange, self.question_id or None)

    def reset(self) -> StateVector:
        try:
            ctx, state, calls = reset(self.problem, self.kind, self.chat, self.cfg)
        except (GatewayError, MalformedEvaluationError) as exc:
            raise EpisodeFailure(f"reset failed: {exc}") from exc
        self._record(calls)
        self.ctx, self.state = ctx, state
        self.outcomes.clear()
        self.transitions.clear()
        self.final_text = None
        self.failed = False
        return state

    def legal_actions(self) -> list[ActionKind]:
        assert self.ctx is not None, "reset() first"
        return sorted(legal_actions(self.ctx, self.cfg), key=int)

    def step(self, action: ActionKind) -> tuple[StateVector, float, bool]:
        assert self.ctx is not None and self.state is not None, "reset() first"
        try:
            outcome = step(self.ctx, self.state, action, self.chat, self.prm, self.cfg)
        except StepFailureError as exc:
            log.warning("question %s: %s", self.question_id or "?", exc)
            self.failed = True
            self.transitions.append(Transition(self.state, action, 0.0, self.state, True))
            return self.state, 0.0, True
        except (GatewayError, MalformedEvaluationError) as exc:
            raise EpisodeFailure(f"step failed: {exc}") from exc
        self._record(outcome.transcript)
        self.outcomes.append(outcome)
        self.transitions.append(Transition(self.state, action, outcome.reward, outcome.state, outcome.done))
        self.ctx, self.state = outcome.ctx, outcome.state
        if outcome.done:
            self.final_text = outcome.appended
        return outcome.state, outcome.reward, outcome.done

    @property
    def final_answer(self) -> str | None:
        if self.final_text is None:
            return None
        return extract_answer(self.final_text, self.kind)

    def trajectory(self) -> Trajectory:
        return Trajectory(
            question_id=self.question_id,
            transitions=tuple(self.transitions),
            final_answer=self.final_answer,
        )
