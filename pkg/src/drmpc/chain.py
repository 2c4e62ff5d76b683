"""Ground-truth Markov chain and simplex helpers.

Modes are 0-based integers ``0..d-1`` throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STOCHASTIC_TOL = 1e-9


class NonStochasticRow(ValueError):
    """A kernel row has a negative entry or does not sum to one."""


def rng_for(seed: int) -> np.random.Generator:
    """Independent PCG64 stream for one run; never touches global state."""
    return np.random.Generator(np.random.PCG64(np.uint64(seed % 2**64)))


def in_simplex(p, tol: float = 1e-12) -> bool:
    p = np.asarray(p, dtype=float)
    return bool(np.all(p >= -tol) and abs(p.sum() - 1.0) <= tol)


@dataclass(frozen=True)
class TransitionKernel:
    """Row-stochastic matrix; ``rows[i, j] = P[w_{t+1} = j | w_t = i]``."""

    rows: np.ndarray

    def __post_init__(self):
        self.rows.setflags(write=False)

    @property
    def d(self) -> int:
        return self.rows.shape[0]

    def row(self, w: int) -> np.ndarray:
        return self.rows[w]

    def to_list(self) -> list[list[float]]:
        return self.rows.tolist()


def new_kernel(matrix) -> TransitionKernel:
    """Validate ``matrix`` and wrap it as a kernel.

    Rows within ``1e-9`` of stochastic are renormalized; anything further
    off raises :class:`NonStochasticRow`.
    """
    m = np.array(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise ValueError(f"kernel must be a non-empty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonStochasticRow("kernel has non-finite entries")
    for i, r in enumerate(m):
        if np.any(r < 0):
            raise NonStochasticRow(f"row {i} has a negative entry: {r.tolist()}")
        s = r.sum()
        if abs(s - 1.0) > STOCHASTIC_TOL:
            raise NonStochasticRow(f"row {i} sums to {s!r}, not 1")
        m[i] = r / s
    return TransitionKernel(m)


@dataclass(frozen=True)
class ModePath:
    modes: np.ndarray
    seed: int

    def __len__(self):
        return len(self.modes)


def step_mode(row: np.ndarray, u: float) -> int:
    """Inverse-CDF draw: first index whose cumulative mass exceeds ``u``."""
    j = int(np.searchsorted(np.cumsum(row), u, side="right"))
    if j >= len(row):
        # cumsum may end a hair below 1
        j = int(np.flatnonzero(row)[-1])
    return j


def mode_uniforms(seed: int, T: int) -> np.ndarray:
    """The uniforms driving the mode process of run ``seed``.

    Kept separate from any other randomness so that every controller variant
    sees the same mode sequence for a given seed.
    """
    return rng_for(seed).random(T)


def sample_path(kernel: TransitionKernel, w0: int, T: int, seed: int) -> ModePath:
    if not 0 <= w0 < kernel.d:
        raise ValueError(f"initial mode {w0} outside 0..{kernel.d - 1}")
    if T < 0:
        raise ValueError("T must be nonnegative")
    u = mode_uniforms(seed, T)
    modes = np.empty(T + 1, dtype=int)
    modes[0] = w0
    for t in range(T):
        modes[t + 1] = step_mode(kernel.rows[modes[t]], u[t])
    return ModePath(modes, seed)


def transition_counts(modes, d: int) -> np.ndarray:
    counts = np.zeros((d, d), dtype=np.int64)
    modes = np.asarray(modes)
    np.add.at(counts, (modes[:-1], modes[1:]), 1)
    return counts
