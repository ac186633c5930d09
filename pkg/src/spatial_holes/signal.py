"""Constellations, symbol sampling and minimum-distance decisions.

Canonical point ordering
------------------------
Every square QAM alphabet lists its points sorted by real part ascending,
then imaginary part ascending. For QPSK this is::

    0: (-1-1j)/sqrt(2)   1: (-1+1j)/sqrt(2)   2: (1-1j)/sqrt(2)   3: (1+1j)/sqrt(2)

The extended alphabet appends the zero point *last*, so a value exactly
equidistant from zero and a constellation point is decided as the
constellation point. Minimum-distance ties always go to the lowest index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

_ORDERS = {"QPSK": 4, "16QAM": 16, "64QAM": 64}


class ConfigurationError(ValueError):
    """Raised for inconsistent dimensions or parameters."""


@dataclass(frozen=True)
class Alphabet:
    """Square QAM constellation with unit average energy."""

    name: str
    points: np.ndarray

    def __len__(self) -> int:
        return len(self.points)

    @property
    def has_zero(self) -> bool:
        return False


@dataclass(frozen=True)
class ExtendedAlphabet:
    """A base alphabet plus the no-transmission point at complex zero."""

    base: Alphabet

    @property
    def name(self) -> str:
        return self.base.name + "+0"

    @property
    def points(self) -> np.ndarray:
        return np.append(self.base.points, 0.0 + 0.0j)

    @property
    def zero_index(self) -> int:
        return len(self.base.points)

    def __len__(self) -> int:
        return len(self.base.points) + 1

    @property
    def has_zero(self) -> bool:
        return True


def make_alphabet(name: str) -> Alphabet:
    """Build QPSK, 16QAM or 64QAM normalized to unit average energy."""
    key = name.upper()
    if key not in _ORDERS:
        raise ConfigurationError(f"unknown alphabet {name!r}; expected one of {sorted(_ORDERS)}")
    m = _ORDERS[key]
    side = int(round(np.sqrt(m)))
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    # real-major then imag ascending: the canonical ordering
    re, im = np.meshgrid(levels, levels, indexing="ij")
    pts = (re + 1j * im).ravel()
    pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
    return Alphabet(name=key, points=pts)


def extend(alphabet: Alphabet) -> ExtendedAlphabet:
    return ExtendedAlphabet(alphabet)


@dataclass
class BlockVec:
    """Concatenated per-user vectors ``[x_1; x_2; ...; x_NP]``.

    Stored as a ``(n_blocks, block_len)`` array; ``data`` gives the flat,
    user-major view where block ``i`` occupies ``data[i*L:(i+1)*L]``.
    """

    blocks: np.ndarray

    def __post_init__(self):
        self.blocks = np.asarray(self.blocks, dtype=complex)
        if self.blocks.ndim != 2:
            raise ConfigurationError("BlockVec needs a 2-D (n_blocks, block_len) array")

    @classmethod
    def from_flat(cls, data, block_len: int) -> "BlockVec":
        data = np.asarray(data, dtype=complex)
        if block_len <= 0 or data.size % block_len:
            raise ConfigurationError(f"length {data.size} is not a multiple of block_len={block_len}")
        return cls(data.reshape(-1, block_len))

    @classmethod
    def zeros(cls, n_blocks: int, block_len: int) -> "BlockVec":
        return cls(np.zeros((n_blocks, block_len), dtype=complex))

    @property
    def data(self) -> np.ndarray:
        return self.blocks.reshape(-1)

    @property
    def n_blocks(self) -> int:
        return self.blocks.shape[0]

    @property
    def block_len(self) -> int:
        return self.blocks.shape[1]

    def block(self, i: int) -> np.ndarray:
        """Block ``i`` (0-based)."""
        return self.blocks[i]

    def block_norms(self) -> np.ndarray:
        b = self.blocks
        return np.sqrt(np.sum(b.real**2 + b.imag**2, axis=1))

    def support(self) -> np.ndarray:
        return np.flatnonzero(np.any(self.blocks != 0, axis=1))


def sample_symbols(alphabet: Alphabet, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` symbols uniformly and independently from the alphabet."""
    idx = rng.integers(0, len(alphabet.points), size=count)
    return alphabet.points[idx]


def assemble_transmit(activity, symbols: Sequence[np.ndarray], block_len: int) -> BlockVec:
    """Place each active user's symbols in its block; inactive blocks stay zero.

    ``activity`` is a binary mask (or anything with an ``a`` attribute);
    ``symbols`` holds one length-``block_len`` vector per active user, in
    increasing user order.
    """
    a = np.asarray(getattr(activity, "a", activity), dtype=int)
    active = np.flatnonzero(a)
    if len(symbols) != len(active):
        raise ConfigurationError(
            f"{len(active)} active users but {len(symbols)} symbol vectors supplied"
        )
    out = np.zeros((len(a), block_len), dtype=complex)
    for i, s in zip(active, symbols):
        s = np.asarray(s, dtype=complex)
        if s.shape != (block_len,):
            raise ConfigurationError(f"user {i}: expected {block_len} symbols, got shape {s.shape}")
        out[i] = s
    return BlockVec(out)


def md_indices(values, alphabet) -> np.ndarray:
    """Index of the nearest point for each value (lowest index on ties)."""
    v = np.asarray(values, dtype=complex)
    pts = alphabet.points
    d = np.abs(v[..., None] - pts) ** 2
    return np.argmin(d, axis=-1)


def demodulate_md(value, alphabet):
    """Minimum-distance decision over ``alphabet`` (plain or extended).

    Works elementwise on arrays; a scalar input returns a scalar.
    """
    pts = alphabet.points
    out = pts[md_indices(value, alphabet)]
    if np.ndim(value) == 0:
        return complex(out)
    return out
