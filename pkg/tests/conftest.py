import numpy as np
import pytest

from dyadscan.domain import DyadTrial, Participant, SexComp, SimilaritySample, TaskType, TrialSeries


def make_trial(a, b, dyad_id="MM-000", sex=SexComp.MM, task=TaskType.COOPERATION,
               rt=(0.4, 0.5), index=0, fs=10.0):
    """DyadTrial from two channel matrices (or 1-D single-channel series)."""
    sa = TrialSeries(dyad_id, Participant.A, sex, task, a, fs, rt[0])
    sb = TrialSeries(dyad_id, Participant.B, sex, task, b, fs, rt[1])
    return DyadTrial(sa, sb, index)


def make_sample(scores, sex="MM", task="coop", dyad_id="MM-000"):
    return SimilaritySample(scores, sex, task, dyad_id)


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


# criterion lines collected by test_acceptance.py, echoed after the run
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
