"""Spatial activity detection.

Both the group-sparse (CS) detector and the MMSE baseline end in the same
two steps: zero every entry whose nearest point in the extended alphabet is
zero, then declare a user active when at least half of its subcarriers
survived.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal import BlockVec, ConfigurationError, ExtendedAlphabet, md_indices
from .solver import INFEASIBLE, GroupSparseProblem, SolverReport, block_omp, solve_constrained

EXACT = "exact"
FALSE_ALARM = "false_alarm"
MISDETECTION = "misdetection"
MIXED = "mixed"


class SolverFailure(RuntimeError):
    def __init__(self, report: SolverReport):
        super().__init__(f"solver failed with status {report.status}")
        self.report = report


@dataclass(frozen=True)
class ActivityVector:
    a: tuple

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(int(bool(v)) for v in self.a))

    @classmethod
    def from_pattern(cls, pattern, n_users: int) -> "ActivityVector":
        a = np.zeros(n_users, dtype=int)
        a[list(pattern)] = 1
        return cls(tuple(a))

    @property
    def pattern(self) -> tuple:
        return tuple(i for i, v in enumerate(self.a) if v)

    @property
    def mask(self) -> str:
        return "".join(str(v) for v in self.a)

    def __len__(self) -> int:
        return len(self.a)


@dataclass(frozen=True)
class DetectionOutcome:
    truth: ActivityVector
    estimate: ActivityVector
    kind: str

    @property
    def is_error(self) -> bool:
        return self.kind != EXACT


def zero_threshold(x_tilde: BlockVec, ext: ExtendedAlphabet) -> BlockVec:
    """Zero the entries whose minimum-distance decision over ``ext`` is 0."""
    blocks = x_tilde.blocks
    keep = md_indices(blocks, ext) != ext.zero_index
    return BlockVec(np.where(keep, blocks, 0.0))


def activity_from(x_hat: BlockVec) -> ActivityVector:
    """Majority rule: active iff at least ceil(L/2) nonzero entries."""
    need = -(-x_hat.block_len // 2)
    counts = np.count_nonzero(x_hat.blocks, axis=1)
    return ActivityVector(tuple(counts >= need))


def _decide(x_tilde: BlockVec, ext: ExtendedAlphabet) -> ActivityVector:
    return activity_from(zero_threshold(x_tilde, ext))


def detect_cs(problem: GroupSparseProblem, ext: ExtendedAlphabet, solver: str = "fista",
              **solver_kw):
    """Group-sparse reconstruction followed by the shared decision steps.

    Returns ``(activity, x_tilde, report)``. Raises :class:`SolverFailure`
    when the solver reports the problem infeasible.
    """
    if solver in ("fista", "constrained-fista"):
        rep = solve_constrained(problem, **solver_kw)
    elif solver in ("omp", "block-omp"):
        rep = block_omp(problem, **solver_kw)
    else:
        raise ConfigurationError(f"unknown solver {solver!r}")
    if rep.status == INFEASIBLE or not np.all(np.isfinite(rep.solution.blocks)):
        raise SolverFailure(rep)
    return _decide(rep.solution, ext), rep.solution, rep


def detect_mmse_baseline(channel, y, sigma_n_sq: float, ext: ExtendedAlphabet):
    """Full-size MMSE estimate over all users, then the shared decision steps.

    Returns ``(activity, x_tilde)``.
    """
    from .mmse import mmse_full

    x_tilde = mmse_full(channel, y, sigma_n_sq)
    return _decide(x_tilde, ext), x_tilde


def classify_outcome(truth: ActivityVector, estimate: ActivityVector) -> DetectionOutcome:
    if len(truth) != len(estimate):
        raise ConfigurationError("activity vectors differ in length")
    nt, ne = len(truth.pattern), len(estimate.pattern)
    if truth.a == estimate.a:
        kind = EXACT
    elif ne > nt:
        kind = FALSE_ALARM
    elif ne < nt:
        kind = MISDETECTION
    else:
        kind = MIXED
    return DetectionOutcome(truth, estimate, kind)
