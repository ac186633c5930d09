"""Multipath Rayleigh channels and the structured uplink channel operator.

The operator maps the stacked user vector ``x = [x_1; ...; x_NP]`` (each
of length L) to the stacked receive vector ``[y_1; ...; y_NS]`` where
``y_j = sum_i h_ji * x_i`` elementwise per subcarrier. Its dense form is
the ``(NS*L, NP*L)`` matrix whose ``(j, i)`` block is ``diag(h_ji)``; that
matrix is only ever built for small test instances.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .signal import BlockVec, ConfigurationError

DENSE_SIZE_CAP = 1024


class NumericalError(RuntimeError):
    pass


@dataclass(frozen=True)
class MultipathProfile:
    tap_variances: tuple

    def __post_init__(self):
        v = np.asarray(self.tap_variances, dtype=float)
        if v.ndim != 1 or v.size == 0 or np.any(v < 0):
            raise ConfigurationError("tap variances must be a non-empty list of nonnegative reals")
        if abs(v.sum() - 1.0) > 1e-12:
            raise ConfigurationError(f"tap variances sum to {v.sum()!r}, expected 1")

    @classmethod
    def uniform(cls, n_taps: int) -> "MultipathProfile":
        if n_taps < 1:
            raise ConfigurationError("n_taps must be positive")
        return cls(tuple([1.0 / n_taps] * n_taps))

    @property
    def n_taps(self) -> int:
        return len(self.tap_variances)


@dataclass(frozen=True)
class NoiseModel:
    sigma_n_sq: float

    def __post_init__(self):
        if not self.sigma_n_sq > 0:
            raise ConfigurationError("sigma_n_sq must be positive")

    @classmethod
    def from_snr_db(cls, snr_db: float) -> "NoiseModel":
        return cls(10.0 ** (-snr_db / 10.0))

    @property
    def snr_db(self) -> float:
        return -10.0 * np.log10(self.sigma_n_sq)


def draw_taps(profile: MultipathProfile, rng: np.random.Generator, size=()) -> np.ndarray:
    """Independent CN(0, var_t) taps; ``size`` prepends batch dimensions."""
    var = np.asarray(profile.tap_variances)
    shape = tuple(np.atleast_1d(size)) if size != () else ()
    g = rng.standard_normal(shape + (var.size, 2))
    return np.sqrt(var / 2.0) * (g[..., 0] + 1j * g[..., 1])


def freq_response(taps, n_subcarriers: int) -> np.ndarray:
    """h(k) = sum_t tap_t exp(-2j pi k t / L), k = 0..L-1 (unscaled DFT).

    Operates on the last axis, so a batch of tap vectors is accepted.
    """
    taps = np.asarray(taps, dtype=complex)
    if taps.shape[-1] > n_subcarriers:
        raise ConfigurationError(
            f"{taps.shape[-1]} taps do not fit in {n_subcarriers} subcarriers"
        )
    return np.fft.fft(taps, n=n_subcarriers, axis=-1)


@dataclass(frozen=True, eq=False)
class StructuredChannel:
    """Per-(rx antenna, user) subcarrier responses, shape ``(NS, NP, L)``."""

    responses: np.ndarray = field(repr=False)

    def __post_init__(self):
        r = np.array(self.responses, dtype=complex)
        if r.ndim != 3:
            raise ConfigurationError("responses must have shape (n_rx, n_users, n_subcarriers)")
        r.setflags(write=False)
        object.__setattr__(self, "responses", r)

    @classmethod
    def random(cls, n_rx: int, n_users: int, n_subcarriers: int,
               profile: MultipathProfile, rng: np.random.Generator) -> "StructuredChannel":
        taps = draw_taps(profile, rng, size=(n_rx, n_users))
        return cls(freq_response(taps, n_subcarriers))

    @property
    def n_rx(self) -> int:
        return self.responses.shape[0]

    @property
    def n_users(self) -> int:
        return self.responses.shape[1]

    @property
    def n_subcarriers(self) -> int:
        return self.responses.shape[2]

    @cached_property
    def per_subcarrier(self) -> np.ndarray:
        """Subcarrier-major stack of ``NS x NP`` matrices, shape ``(L, NS, NP)``."""
        return np.ascontiguousarray(np.transpose(self.responses, (2, 0, 1)))

    @cached_property
    def gram(self) -> np.ndarray:
        """``H_k^H H_k`` for every subcarrier, shape ``(L, NP, NP)``."""
        a = self.per_subcarrier
        return np.conj(np.swapaxes(a, 1, 2)) @ a

    @cached_property
    def block_fro_sq(self) -> np.ndarray:
        """Squared Frobenius norm of each user's column block."""
        r = self.responses
        return np.sum(r.real**2 + r.imag**2, axis=(0, 2))

    def _check_x(self, blocks):
        if blocks.shape != (self.n_users, self.n_subcarriers):
            raise ConfigurationError(
                f"expected blocks of shape {(self.n_users, self.n_subcarriers)}, got {blocks.shape}"
            )

    def apply(self, x) -> np.ndarray:
        """Noiseless receive vector ``H x`` (flat, rx-major)."""
        blocks = x.blocks if isinstance(x, BlockVec) else np.asarray(x)
        self._check_x(blocks)
        return np.einsum("jik,ik->jk", self.responses, blocks).reshape(-1)

    def apply_adjoint(self, r) -> BlockVec:
        """``H^H r`` as a BlockVec."""
        r = np.asarray(r, dtype=complex)
        if r.size != self.n_rx * self.n_subcarriers:
            raise ConfigurationError(
                f"expected length {self.n_rx * self.n_subcarriers}, got {r.size}"
            )
        r = r.reshape(self.n_rx, self.n_subcarriers)
        return BlockVec(np.einsum("jik,jk->ik", np.conj(self.responses), r))

    def subcarrier_matrix(self, k: int) -> np.ndarray:
        if not 0 <= k < self.n_subcarriers:
            raise IndexError(f"subcarrier {k} out of range [0, {self.n_subcarriers})")
        return self.responses[:, :, k].copy()

    def dense(self) -> np.ndarray:
        """Materialize H. Test-only; refuses instances with NP*L > 1024."""
        ns, npu, L = self.responses.shape
        if npu * L > DENSE_SIZE_CAP:
            raise ConfigurationError(f"dense H refused: NP*L = {npu * L} > {DENSE_SIZE_CAP}")
        H = np.zeros((ns * L, npu * L), dtype=complex)
        idx = np.arange(L)
        for j in range(ns):
            for i in range(npu):
                H[j * L + idx, i * L + idx] = self.responses[j, i]
        return H

    def op_norm_sq(self, tol: float = 1e-3, max_iter: int = 5000, seed: int = 0) -> float:
        """Largest eigenvalue of ``H^H H`` by power iteration.

        The returned value carries a ``(1 + tol)`` safety factor so that it
        can be used directly as a Lipschitz constant.
        """
        if tol <= 0:
            raise ConfigurationError("tol must be positive")
        rng = np.random.default_rng(seed)
        shape = (self.n_users, self.n_subcarriers)
        v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        v /= np.linalg.norm(v)
        h, hc = self.responses, np.conj(self.responses)
        est = 0.0
        for _ in range(max_iter):
            w = np.einsum("jik,jk->ik", hc, np.einsum("jik,ik->jk", h, v))
            new = float(np.real(np.vdot(v, w)))
            nrm = np.linalg.norm(w)
            if nrm == 0.0:
                return 0.0
            v = w / nrm
            if abs(new - est) <= 0.1 * tol * new:
                return new * (1.0 + tol)
            est = new
        raise NumericalError(f"power iteration did not converge in {max_iter} iterations")

    def to_csv(self, path) -> None:
        """Dump responses as rows ``(rx, user, subcarrier, re, im)``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rx", "user", "subcarrier", "re", "im"])
            for (j, i, k), h in np.ndenumerate(self.responses):
                w.writerow([j, i, k, repr(float(h.real)), repr(float(h.imag))])

    @classmethod
    def from_csv(cls, path) -> "StructuredChannel":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        ns = 1 + max(int(r["rx"]) for r in rows)
        npu = 1 + max(int(r["user"]) for r in rows)
        L = 1 + max(int(r["subcarrier"]) for r in rows)
        resp = np.zeros((ns, npu, L), dtype=complex)
        for r in rows:
            resp[int(r["rx"]), int(r["user"]), int(r["subcarrier"])] = complex(
                float(r["re"]), float(r["im"])
            )
        return cls(resp)


def complex_noise(shape, sigma_n_sq: float, rng: np.random.Generator) -> np.ndarray:
    """CN(0, sigma_n_sq) samples."""
    g = rng.standard_normal(tuple(np.atleast_1d(shape)) + (2,))
    return np.sqrt(sigma_n_sq / 2.0) * (g[..., 0] + 1j * g[..., 1])
