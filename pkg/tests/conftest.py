import pytest

from reps.domain import Question, Solution, SolutionSource, TaskKind


@pytest.fixture
def yesno_question():
    return Question(
        id="q1",
        task_kind=TaskKind.YES_NO,
        text="Is the sky blue on a clear day?",
        gold_answer="yes",
        supporting_facts=("Rayleigh scattering makes the clear sky look blue.",),
    )


def make_solution(sid, qid="q1", rationale="Some reasoning. Therefore, the answer is yes.",
                  answer="yes", valid=None, source=SolutionSource.GENERATED):
    extras = {} if valid is None else {"gt_valid": valid}
    return Solution(
        id=sid, question_id=qid, rationale=rationale, answer=answer,
        source=source, extras=extras,
    )


@pytest.fixture
def solution_factory():
    return make_solution
