import numpy as np
import pytest

from spatial_holes.channel import StructuredChannel
from spatial_holes.detector import (EXACT, FALSE_ALARM, MISDETECTION, MIXED, ActivityVector,
                                    SolverFailure, activity_from, classify_outcome, detect_cs,
                                    detect_mmse_baseline, zero_threshold)
from spatial_holes.signal import BlockVec, ConfigurationError, extend, make_alphabet
from spatial_holes.solver import GroupSparseProblem

from conftest import cgauss

EXT = extend(make_alphabet("qpsk"))


def test_zero_threshold_examples():
    x = BlockVec([[0.3, 0.4 + 0.4j, 0.0, -0.5 - 0.5j]])
    out = zero_threshold(x, EXT).blocks[0]
    # kept entries keep their soft value
    np.testing.assert_array_equal(out, [0, 0.4 + 0.4j, 0, -0.5 - 0.5j])


def test_zero_threshold_boundary_matches_geometry(rng):
    # with unit-energy points, an entry survives iff Re(v conj(p)) > 1/2 for some p
    v = 2 * cgauss(rng, (5, 200))
    out = zero_threshold(BlockVec(v), EXT).blocks
    pts = make_alphabet("qpsk").points
    keep = np.max(np.real(v[..., None] * np.conj(pts)), axis=-1) > 0.5
    np.testing.assert_array_equal(out != 0, keep)


def test_zero_threshold_idempotent(rng):
    x = BlockVec(cgauss(rng, (4, 30)))
    once = zero_threshold(x, EXT)
    np.testing.assert_array_equal(zero_threshold(once, EXT).blocks, once.blocks)


def test_activity_majority_rule():
    L = 72
    b = np.zeros((3, L), complex)
    b[0, :36] = 1
    b[1, :35] = 1
    b[2, :] = 1
    assert activity_from(BlockVec(b)).a == (1, 0, 1)
    odd = np.zeros((2, 5))
    odd[0, :3] = 1
    odd[1, :2] = 1
    assert activity_from(BlockVec(odd)).a == (1, 0)


def test_activity_vector_helpers():
    a = ActivityVector.from_pattern([1, 5], 8)
    assert a.mask == "01000100" and a.pattern == (1, 5) and len(a) == 8


@pytest.mark.parametrize("truth,est,kind", [
    ("0110", "0110", EXACT),
    ("0110", "0111", FALSE_ALARM),
    ("0110", "0100", MISDETECTION),
    ("0110", "1010", MIXED),
    ("0000", "0000", EXACT),
    ("0110", "0000", MISDETECTION),
])
def test_classify_examples(truth, est, kind):
    t = ActivityVector(tuple(int(c) for c in truth))
    e = ActivityVector(tuple(int(c) for c in est))
    out = classify_outcome(t, e)
    assert out.kind == kind and out.is_error == (kind != EXACT)


def test_classify_length_mismatch():
    with pytest.raises(ConfigurationError):
        classify_outcome(ActivityVector((1, 0)), ActivityVector((1, 0, 0)))


def test_mmse_baseline_zero_data(small_channel):
    act, xt = detect_mmse_baseline(small_channel, np.zeros(8), 0.1, EXT)
    assert act.a == (0, 0, 0) and not np.any(xt.data)


@pytest.mark.parametrize("solver", ["fista", "omp"])
def test_cs_null_case(rng, small_channel, solver):
    # pure noise inside the epsilon ball: nothing detected
    y = 0.01 * cgauss(rng, 8)
    act, xt, rep = detect_cs(GroupSparseProblem(small_channel, y, 1.0), EXT, solver)
    assert act.a == (0, 0, 0)


def test_cs_detects_single_user(rng):
    ch = StructuredChannel(cgauss(rng, (3, 5, 16)))
    alph = make_alphabet("qpsk")
    x = np.zeros((5, 16), complex)
    x[3] = alph.points[rng.integers(0, 4, 16)]
    y = ch.apply(BlockVec(x)) + 0.01 * cgauss(rng, 48)
    act, _, _ = detect_cs(GroupSparseProblem(ch, y, 0.01 * np.sqrt(48)), EXT)
    assert act.pattern == (3,)


def test_cs_solver_failure_and_unknown_solver(rng):
    ch = StructuredChannel(cgauss(rng, (4, 2, 3)))
    prob = GroupSparseProblem(ch, cgauss(rng, 12), 1e-6)
    with pytest.raises(SolverFailure):
        detect_cs(prob, EXT)
    with pytest.raises(ConfigurationError):
        detect_cs(prob, EXT, solver="nope")
