"""Subset MMSE equalization and the three decoders compared in the experiments.

Because every channel block is diagonal, ``(H_s^H H_s + s2 I)^-1 H_s^H y``
splits into ``L`` independent ``|S| x |S|`` systems, one per subcarrier.
Each is solved through a Cholesky factorization.

All decoders return a :class:`BlockVec` of decisions with a zero block for
every user they did not decode.
"""

from __future__ import annotations

import numpy as np

from .channel import StructuredChannel
from .signal import Alphabet, BlockVec, ConfigurationError, ExtendedAlphabet, demodulate_md


def _chol_solve(chol: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``C C^H z = rhs`` for a stack of lower factors ``C``, shape (L, n, n)."""
    n = chol.shape[-1]
    w = np.empty_like(rhs)
    for i in range(n):
        w[:, i] = (rhs[:, i] - np.einsum("kj,kj->k", chol[:, i, :i], w[:, :i])) / chol[:, i, i]
    z = np.empty_like(rhs)
    ch = np.conj(chol)
    for i in range(n - 1, -1, -1):
        z[:, i] = (w[:, i] - np.einsum("kj,kj->k", ch[:, i + 1:, i], z[:, i + 1:])) / ch[:, i, i]
    return z


class SubsetEqualizer:
    """Per-subcarrier factorized MMSE systems for a fixed active pattern."""

    def __init__(self, channel: StructuredChannel, pattern, sigma_n_sq: float):
        self.pattern = tuple(int(i) for i in pattern)
        if not self.pattern:
            raise ConfigurationError("SubsetEqualizer needs a non-empty pattern")
        if sigma_n_sq < 0:
            raise ConfigurationError("sigma_n_sq must be nonnegative")
        self.channel = channel
        self.sigma_n_sq = float(sigma_n_sq)
        idx = np.array(self.pattern)
        self.a = channel.per_subcarrier[:, :, idx]  # (L, NS, |S|)
        self.ah = np.conj(np.swapaxes(self.a, 1, 2))
        self.chol = None
        if self.sigma_n_sq > 0:
            gram = self.ah @ self.a + self.sigma_n_sq * np.eye(len(idx))
            self.chol = np.linalg.cholesky(gram)
        else:
            # zero-noise limit: minimum-norm least squares
            self.pinv = np.linalg.pinv(self.a)

    def solve(self, y) -> np.ndarray:
        """Estimates for the pattern's users, shape ``(|S|, L)``."""
        ch = self.channel
        yt = np.asarray(y, dtype=complex).reshape(ch.n_rx, ch.n_subcarriers).T
        if self.chol is None:
            return (self.pinv @ yt[..., None])[..., 0].T
        rhs = (self.ah @ yt[..., None])[..., 0]
        return _chol_solve(self.chol, rhs).T


def mmse_subset(channel: StructuredChannel, pattern, y, sigma_n_sq: float) -> np.ndarray:
    """MMSE estimate of the users in ``pattern``; rows follow the pattern order."""
    return SubsetEqualizer(channel, pattern, sigma_n_sq).solve(y)


def mmse_full(channel: StructuredChannel, y, sigma_n_sq: float) -> BlockVec:
    return BlockVec(mmse_subset(channel, range(channel.n_users), y, sigma_n_sq))


def _scatter(n_users: int, pattern, rows: np.ndarray, alphabet) -> BlockVec:
    out = np.zeros((n_users, rows.shape[-1]), dtype=complex)
    if len(pattern):
        out[list(pattern)] = demodulate_md(rows, alphabet)
    return BlockVec(out)


def decode_cs_standalone(x_tilde: BlockVec, pattern, alphabet: Alphabet) -> BlockVec:
    """Demodulate the reconstruction's detected-active blocks directly."""
    pattern = list(pattern)
    return _scatter(x_tilde.n_blocks, pattern, x_tilde.blocks[pattern], alphabet)


def decode_mmse_standalone(channel: StructuredChannel, y, sigma_n_sq: float,
                           ext: ExtendedAlphabet) -> BlockVec:
    """Full MMSE decoder gated by its own activity decision.

    Users the MMSE activity rule declares inactive are decided as all-zero;
    the others are demodulated over the base alphabet.
    """
    from .detector import detect_mmse_baseline

    activity, x_tilde = detect_mmse_baseline(channel, y, sigma_n_sq, ext)
    pattern = list(activity.pattern)
    return _scatter(channel.n_users, pattern, x_tilde.blocks[pattern], ext.base)


def decode_cs_mmse(channel: StructuredChannel, y, sigma_n_sq: float, detected,
                   alphabet: Alphabet) -> BlockVec:
    """MMSE on the detected-active subset, then minimum-distance decisions."""
    pattern = list(getattr(detected, "pattern", detected))
    if not pattern:
        return BlockVec.zeros(channel.n_users, channel.n_subcarriers)
    rows = mmse_subset(channel, pattern, y, sigma_n_sq)
    return _scatter(channel.n_users, pattern, rows, alphabet)


def symbol_errors(decisions: BlockVec, transmitted: BlockVec, truth_pattern) -> int:
    """Wrong decisions over the truly active users' transmitted symbols."""
    idx = list(truth_pattern)
    return int(np.count_nonzero(decisions.blocks[idx] != transmitted.blocks[idx]))
