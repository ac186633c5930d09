"""Acceptance criteria, one test each. Every test prints a single PASS/FAIL line.

The Monte-Carlo criteria (4 to 8) share memoized runs, so they take tens of
minutes in total on one core. Deselect them with ``-m "not slow"``.
"""

import pytest

from spatial_holes import acceptance


def _report(check, capsys):
    res = check()
    with capsys.disabled():
        print("\n" + res.line(), flush=True)
    assert res.passed, res.detail


def test_criterion_1_oracle_equivalence(capsys):
    _report(acceptance.check_oracle_equivalence, capsys)


def test_criterion_2_adjoint_and_structure(capsys):
    _report(acceptance.check_adjoint_structure, capsys)


@pytest.mark.slow
def test_criterion_3_noiseless_recovery(capsys):
    _report(acceptance.check_noiseless_recovery, capsys)


@pytest.mark.slow
def test_criterion_4_activity_error_ordering(capsys):
    _report(acceptance.check_activity_ordering, capsys)


@pytest.mark.slow
def test_criterion_5_false_alarm_dominates(capsys):
    _report(acceptance.check_error_decomposition, capsys)


@pytest.mark.slow
def test_criterion_6_ser_ordering(capsys):
    _report(acceptance.check_ser_ordering, capsys)


@pytest.mark.slow
def test_criterion_7_full_load_collapse(capsys):
    _report(acceptance.check_full_load_collapse, capsys)


@pytest.mark.slow
def test_criterion_8_determinism(capsys):
    _report(acceptance.check_determinism, capsys)
