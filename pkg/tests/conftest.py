"""Shared fixtures: scripted chat rules that exercise every pipeline stage.

The rule strings key off distinctive phrases in the prompt templates, so a
single backend can serve self-evaluation, all four reasoning blocks, and the
answer-producing terminate call for a small arithmetic problem (3 + 4).
"""

import pytest

from qnav.core import DatasetKind
from qnav.env import EnvConfig
from qnav.evalkit import QuestionRecord, save_dataset
from qnav.gateway import ScriptedChatBackend, ScriptedPrm, ScriptedRule

EVAL_RESPONSE = (
    "A1 score=2 reason=premises restated\n"
    "A2 score=3 reason=constraints listed\n"
    "A3 score=2 reason=goal identified\n"
    "B1 score=3 reason=step follows\n"
    "B2 score=2 reason=arithmetic checked\n"
    "C1 score=1 reason=partial progress\n"
    "C2 score=2 reason=confidence moderate\n"
)

PLANS_RESPONSE = (
    "### Plan1: Add the numbers directly.\n"
    "### Plan2: Count up from the larger number.\n"
    "### Plan3: Use a number line.\n"
)

SUBTASKS_RESPONSE = (
    "### Subtask1: Find the sum of 3 and 4.\n"
    "### Subtask2: Verify the result.\n"
)


def standard_rules():
    """Rules for a complete scripted episode on the 3 + 4 problem."""
    return (
        ScriptedRule("Please evaluate the current step", EVAL_RESPONSE),
        ScriptedRule("reason exactly ONE more step", "We compute 3+4=7."),
        ScriptedRule(
            "Please decompose the current task into subtasks", SUBTASKS_RESPONSE
        ),
        ScriptedRule(
            "Please conduct the following Subtask", "Subtask result: the sum is 7."
        ),
        ScriptedRule(
            "Please give a clear and concise summary", "The sum of 3 and 4 is 7."
        ),
        ScriptedRule("propose three different alternative plans", PLANS_RESPONSE),
        ScriptedRule(
            "tell which one is most promising",
            "The most promising plan is Plan2: counting is reliable.",
        ),
        ScriptedRule("according to the plan here", "Counting up from 3 by 4 gives 7."),
        ScriptedRule(
            "Please check and refine the current thought",
            "Checked: the arithmetic is consistent.",
        ),
        # Terminate endings, one per dataset kind.  The \boxed rule must sit
        # before the bare boxed rule: the former contains the latter.
        ScriptedRule("\\boxed{{answer}}", "The answer is \\boxed{7}."),
        ScriptedRule("boxed{{answer}}", "The answer is \\boxed{7}."),
        ScriptedRule("The answer is numerical_answer", "The answer is 7."),
        ScriptedRule("The answer is (CHOICE)", "The answer is (B)."),
        ScriptedRule("'YES/NO'", "YES"),
        ScriptedRule("'The answer is yes' or 'The answer is no'", "The answer is yes."),
    )


@pytest.fixture
def chat():
    return ScriptedChatBackend(standard_rules())


@pytest.fixture
def prm():
    return ScriptedPrm(default=0.5)


@pytest.fixture
def env_cfg():
    return EnvConfig()


@pytest.fixture
def sample_questions():
    return (
        QuestionRecord(
            id="q1",
            question="What is 3 + 4?",
            answer="7",
            kind=DatasetKind.ELEMENTARY_MATH_NUMERIC,
        ),
        QuestionRecord(
            id="q2",
            question="What is 3 + 4? Choices: (A) 6 (B) 7 (C) 8.",
            answer="B",
            kind=DatasetKind.MULTIPLE_CHOICE,
        ),
    )


@pytest.fixture
def dataset_path(tmp_path, sample_questions):
    path = tmp_path / "dataset.jsonl"
    save_dataset(sample_questions, path)
    return path
