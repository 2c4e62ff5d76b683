"""Transition-count learner, confidence schedules and l1 ambiguity sets."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np


class RobustFallbackWarning(UserWarning):
    """A degenerate confidence level forced the fully robust ambiguity set."""


@dataclass(frozen=True)
class LearnerState:
    """Mode-transition counts; ``counts[w, w']`` tallies observed ``w -> w'``."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("counts must be a square matrix")
        if np.any(c < 0):
            raise ValueError("counts must be nonnegative")
        c = c.astype(np.int64, copy=True)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @classmethod
    def empty(cls, d: int) -> "LearnerState":
        return cls(np.zeros((d, d), dtype=np.int64))

    @property
    def d(self) -> int:
        return self.counts.shape[0]

    def visits(self, w: int) -> int:
        return int(self.counts[w].sum())

    def to_json(self) -> dict:
        return {"counts": self.counts.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "LearnerState":
        return cls(np.array(data["counts"], dtype=np.int64))


def _check_mode(w: int, d: int):
    if not 0 <= w < d:
        raise ValueError(f"mode {w} outside 0..{d - 1}")


def update_counts(s: LearnerState, w: int, w_next: int) -> LearnerState:
    _check_mode(w, s.d)
    _check_mode(w_next, s.d)
    c = s.counts.copy()
    c[w, w_next] += 1
    return LearnerState(c)


def empirical_row(s: LearnerState, w: int) -> np.ndarray:
    """Row ``w`` of the empirical kernel; uniform while mode ``w`` is unvisited."""
    _check_mode(w, s.d)
    n = s.counts[w].sum()
    if n == 0:
        return np.full(s.d, 1.0 / s.d)
    return s.counts[w] / n


def radius_from_count(n: int, d: int, beta: float) -> float:
    """l1 radius from the bound P(|p_hat - p|_1 >= r) <= (2^d - 2) exp(-n r^2 / 2)."""
    if d == 1:
        return 0.0
    if n == 0:
        return 2.0
    if beta <= 0.0:
        warnings.warn("confidence level 0 gives the whole simplex", RobustFallbackWarning, stacklevel=3)
        return 2.0
    r2 = 2.0 * (math.log(2.0**d - 2.0) - math.log(beta)) / n
    return min(2.0, math.sqrt(max(r2, 0.0)))


def radius(s: LearnerState, w: int, beta: float) -> float:
    if beta > 1.0 or beta < 0.0:
        raise ValueError(f"confidence level {beta} outside [0, 1]")
    _check_mode(w, s.d)
    return radius_from_count(s.visits(w), s.d, beta)


@dataclass(frozen=True)
class AmbiguitySet:
    """``{p in simplex : |p - center|_1 <= radius}``."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        if c.ndim != 1 or np.any(c < -1e-12) or abs(c.sum() - 1.0) > 1e-12:
            raise ValueError(f"center {c} is not a probability vector")
        if not 0.0 <= self.radius <= 2.0 + 1e-12:
            raise ValueError(f"radius {self.radius} outside [0, 2]")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(min(self.radius, 2.0)))

    @property
    def d(self) -> int:
        return len(self.center)

    def contains(self, p, tol: float = 1e-12) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(
            np.all(p >= -tol) and abs(p.sum() - 1.0) <= tol and np.abs(p - self.center).sum() <= self.radius + tol
        )

    @classmethod
    def singleton(cls, p) -> "AmbiguitySet":
        return cls(np.asarray(p, dtype=float), 0.0)

    @classmethod
    def simplex(cls, d: int) -> "AmbiguitySet":
        return cls(np.full(d, 1.0 / d), 2.0)


def ambiguity_set(s: LearnerState, w: int, beta: float) -> AmbiguitySet:
    return AmbiguitySet(empirical_row(s, w), radius(s, w, beta))


# -- confidence dynamics -----------------------------------------------------


@dataclass(frozen=True)
class Schedule:
    """Confidence schedule of one component.

    ``kind="poly"``: ``beta_t = b (1 + t)^-q`` (needs ``q > 1`` for summability).
    ``kind="exp"``: ``beta_t = b exp(-q t)``.
    """

    b: float
    q: float
    kind: str = "poly"

    def __post_init__(self):
        if not 0.0 <= self.b <= 1.0:
            raise ValueError(f"initial confidence b={self.b} outside [0, 1]")
        if self.kind == "poly" and self.q <= 1.0:
            raise ValueError(f"polynomial decay needs q > 1, got {self.q}")
        if self.kind == "exp" and self.q <= 0.0:
            raise ValueError(f"exponential decay needs a positive rate, got {self.q}")
        if self.kind not in ("poly", "exp"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    def step(self, beta: float) -> float:
        if self.kind == "exp":
            return beta * math.exp(-self.q)
        if self.b == 0.0 or beta == 0.0:
            return 0.0
        q = self.q
        return self.b * beta * (beta ** (1.0 / q) + self.b ** (1.0 / q)) ** (-q)

    def closed_form(self, t: int) -> float:
        if self.kind == "exp":
            return self.b * math.exp(-self.q * t)
        return self.b * (1.0 + t) ** (-self.q)

    def sum_bound(self) -> float:
        """Upper bound on the full series sum of the schedule."""
        if self.kind == "exp":
            return self.b / (1.0 - math.exp(-self.q))
        return self.b * (1.0 + 1.0 / (self.q - 1.0))


@dataclass(frozen=True)
class ConfidenceVector:
    """Confidence levels laid out as ``[cost, g_1, ..., g_ng]``."""

    values: tuple[float, ...]
    params: tuple[Schedule, ...] = field(repr=False)

    def __post_init__(self):
        if len(self.values) != len(self.params):
            raise ValueError("one schedule per confidence component is required")
        for v in self.values:
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"confidence {v} outside [0, 1]")

    @classmethod
    def initial(cls, params) -> "ConfidenceVector":
        params = tuple(params)
        return cls(tuple(float(p.b) for p in params), params)

    @property
    def cost(self) -> float:
        return self.values[0]

    def constraint(self, i: int) -> float:
        return self.values[i + 1]

    def __len__(self):
        return len(self.values)


def confidence_step(beta: ConfidenceVector) -> ConfidenceVector:
    return ConfidenceVector(tuple(p.step(v) for p, v in zip(beta.params, beta.values)), beta.params)


def confidence_after(beta: ConfidenceVector, k: int) -> ConfidenceVector:
    for _ in range(k):
        beta = confidence_step(beta)
    return beta
