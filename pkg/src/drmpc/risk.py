"""Risk evaluators over l1 ambiguity sets and their LP epigraph encodings.

The evaluators are exact: the support function of ``{p in simplex :
|p - p_hat|_1 <= r}`` is computed by greedy mass transport, and AVaR-type
minimizations scan the breakpoints of a convex piecewise-linear function.
The ``add_*_epigraph`` helpers emit the same quantities as linear rows for
the optimal control LP.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .learner import AmbiguitySet, RobustFallbackWarning
from .solver import Affine, ConvexProgram, LinearProgramBuilder


def worst_case_distribution(aset: AmbiguitySet, xi) -> np.ndarray:
    """A maximizer of ``p @ xi`` over ``aset`` (ties go to the lowest index)."""
    xi = np.asarray(xi, dtype=float)
    p = aset.center.copy()
    if aset.radius == 0.0:
        return p
    top = int(np.argmax(xi))
    move = min(aset.radius / 2.0, 1.0 - p[top])
    if move <= 0.0:
        return p
    p[top] += move
    remaining = move
    for j in np.lexsort((np.arange(len(xi)), xi)):
        if j == top:
            continue
        take = min(p[j], remaining)
        p[j] -= take
        remaining -= take
        if remaining <= 0.0:
            break
    return p


def support_function(aset: AmbiguitySet, xi) -> float:
    """``max_{p in aset} p @ xi``, the ambiguous conditional expectation."""
    xi = np.asarray(xi, dtype=float)
    if aset.radius >= 2.0:
        return float(xi.max())
    return float(worst_case_distribution(aset, xi) @ xi)


def avar(p, alpha: float, xi) -> float:
    """Average value-at-risk of ``xi`` under ``p`` at level ``alpha``.

    ``alpha = 0`` is the worst case over all modes, ``alpha = 1`` the mean.
    """
    xi = np.asarray(xi, dtype=float)
    if alpha == 0:
        return float(xi.max())
    p = np.asarray(p, dtype=float)
    t = np.unique(xi)
    excess = np.maximum(xi[None, :] - t[:, None], 0.0)
    return float(np.min(t + excess @ p / alpha))


def dr_avar(aset: AmbiguitySet, alpha_hat: float, xi) -> float:
    """Worst-case AVaR over the ambiguity set."""
    xi = np.asarray(xi, dtype=float)
    if alpha_hat == 0 or aset.radius >= 2.0:
        return float(xi.max())
    best = np.inf
    for t in np.unique(xi):
        best = min(best, t + support_function(aset, np.maximum(xi - t, 0.0)) / alpha_hat)
    return float(best)


def adjusted_alpha(alpha, beta):
    """Tightened level ``(alpha - beta) / (1 - beta)``, clamped at 0.

    Works with any numeric type, so ``Fraction`` inputs stay exact.
    """
    if beta >= 1:
        raise ValueError(f"confidence level {beta} must be < 1")
    if beta < 0 or alpha < 0 or alpha > 1:
        raise ValueError(f"levels out of range: alpha={alpha}, beta={beta}")
    if beta > alpha:
        warnings.warn(
            f"confidence {beta} exceeds violation rate {alpha}; constraint made robust",
            RobustFallbackWarning,
            stacklevel=2,
        )
        return 0 * alpha
    return (alpha - beta) / (1 - beta)


@dataclass(frozen=True)
class RiskSpec:
    """One of the three risk measures, carrying exactly the data it needs."""

    kind: str
    alpha: float | None = None
    aset: AmbiguitySet | None = None
    refdist: np.ndarray | None = None

    def __post_init__(self):
        need = {
            "expectation": ("aset",),
            "avar": ("alpha", "refdist"),
            "dravar": ("alpha", "aset"),
        }
        if self.kind not in need:
            raise ValueError(f"unknown risk kind {self.kind!r}")
        for name in ("alpha", "aset", "refdist"):
            present = getattr(self, name) is not None
            if present != (name in need[self.kind]):
                raise ValueError(f"{self.kind} risk {'requires' if not present else 'does not take'} {name}")
        if self.alpha is not None and not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha {self.alpha} outside [0, 1]")

    def __call__(self, xi) -> float:
        if self.kind == "expectation":
            return support_function(self.aset, xi)
        if self.kind == "avar":
            return avar(self.refdist, self.alpha, xi)
        return dr_avar(self.aset, self.alpha, xi)


# -- LP epigraph encodings -----------------------------------------------------


def add_support_epigraph(lp: LinearProgramBuilder, aset: AmbiguitySet, xi, tau: Affine):
    """Add rows enforcing ``support_function(aset, xi) <= tau``.

    ``xi`` is a sequence of affine expressions (one per mode). For
    ``0 < r < 2`` this is the Lagrangian dual of the support problem:
    ``lam * r + nu + sum_j p_j y_j <= tau`` with ``y_j >= xi_j - nu``,
    ``y_j >= -lam`` and ``xi_j - nu <= lam``.
    """
    xi = [Affine.lift(e) for e in xi]
    p, r = aset.center, aset.radius
    if r >= 2.0:
        for e in xi:
            lp.add_le(e - tau, 0.0)
        return
    if r == 0.0:
        lp.add_le(Affine.sum(pj * e for pj, e in zip(p, xi) if pj > 0) - tau, 0.0)
        return
    lam = lp.var(lb=0.0)
    nu = lp.var()
    bound = lam * r + nu - tau
    for pj, e in zip(p, xi):
        lp.add_le(e - nu - lam, 0.0)
        if pj > 0:
            y = lp.var()
            lp.add_ge(y - e + nu, 0.0)
            lp.add_ge(y + lam, 0.0)
            bound = bound + pj * y
    lp.add_le(bound, 0.0)


def add_dravar_epigraph(lp: LinearProgramBuilder, aset: AmbiguitySet, alpha_hat: float, xi, tau):
    """Add rows enforcing ``dr_avar(aset, alpha_hat, xi) <= tau``."""
    xi = [Affine.lift(e) for e in xi]
    tau = Affine.lift(tau)
    if alpha_hat == 0 or aset.radius >= 2.0:
        for e in xi:
            lp.add_le(e - tau, 0.0)
        return
    t = lp.var()
    slack = []
    for pj, e in zip(aset.center, xi):
        if aset.radius == 0.0 and pj == 0:
            slack.append(Affine.const_(0.0))
            continue
        s = lp.var(lb=0.0)
        lp.add_ge(s - e + t, 0.0)
        slack.append(s)
    add_support_epigraph(lp, aset, slack, alpha_hat * tau - alpha_hat * t)


def epigraph_program(aset: AmbiguitySet, xi, alpha_hat: float | None = None) -> tuple[ConvexProgram, int]:
    """Standalone LP ``min tau`` subject to the epigraph rows for numeric ``xi``.

    ``alpha_hat=None`` encodes the ambiguous expectation, otherwise DR-AVaR.
    Returns the program and the index of ``tau``.
    """
    lp = LinearProgramBuilder()
    tau = lp.var()
    consts = [Affine.const_(float(v)) for v in xi]
    if alpha_hat is None:
        add_support_epigraph(lp, aset, consts, tau)
    else:
        add_dravar_epigraph(lp, aset, alpha_hat, consts, tau)
    lp.minimize(tau)
    return lp.build(), tau.index


# -- batched evaluators (grid dynamic programming) -----------------------------


def support_function_batch(aset: AmbiguitySet, xi: np.ndarray) -> np.ndarray:
    """``support_function`` over the last axis of ``xi``.

    Entries equal to ``+inf`` propagate whenever some distribution in the
    set can put mass on them.
    """
    xi = np.asarray(xi, dtype=float)
    p, r = aset.center, aset.radius
    inf = np.isinf(xi) & (xi > 0)
    finite = np.where(inf, 0.0, xi)
    if r >= 2.0:
        out = finite.max(axis=-1)
    elif r == 0.0:
        out = finite @ p
    else:
        order = np.argsort(finite, axis=-1, kind="stable")
        xs = np.take_along_axis(finite, order, axis=-1)
        ps = p[order]
        move = np.minimum(r / 2.0, 1.0 - ps[..., -1])
        before = np.cumsum(ps[..., :-1], axis=-1) - ps[..., :-1]
        removed = np.clip(move[..., None] - before, 0.0, ps[..., :-1])
        out = finite @ p + move * xs[..., -1] - np.sum(removed * xs[..., :-1], axis=-1)
    reach = inf.any(axis=-1) if r > 0.0 else (inf & (p > 0)).any(axis=-1)
    return np.where(reach, np.inf, out)


def dr_avar_batch(aset: AmbiguitySet, alpha_hat: float, xi: np.ndarray) -> np.ndarray:
    """``dr_avar`` over the last axis of ``xi`` (finite inputs)."""
    xi = np.asarray(xi, dtype=float)
    if alpha_hat == 0 or aset.radius >= 2.0:
        return xi.max(axis=-1)
    best = np.full(xi.shape[:-1], np.inf)
    for j in range(xi.shape[-1]):
        t = xi[..., j]
        val = t + support_function_batch(aset, np.maximum(xi - t[..., None], 0.0)) / alpha_hat
        best = np.minimum(best, val)
    return best
