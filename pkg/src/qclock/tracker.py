"""Bayesian clock belief: a grid over recent average frequencies plus phase moments.

The belief after ``n`` interrogations is a probability table over the retained
frequencies ``s_n = (omega_{n-m+1}, ..., omega_n)`` together with, at every
table node, the conditional moments ``E((theta_n - offset)^k | s_n, a_n)`` of
the cumulative phase ``theta_n = T * sum_{j<=n} omega_j``.  Moments are kept
relative to a running ``offset`` (the current phase estimate) so that second
moments do not suffer cancellation once ``theta`` has wandered far from zero.

One interrogation cycle is::

    prior = extend_prior(belief, transition)      # add an omega_{n+1} axis
    post  = bayes_update(prior, alg, a, T)        # weight by p(a | omega_{n+1})
    post  = update_moments(post, T)               # theta_{n+1} = theta_n + omega_{n+1} T
    post  = truncate(post)                        # drop axes beyond the memory

:class:`ClockTracker` wraps the cycle.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import comb

import numpy as np
from scipy.special import ndtr

from .gaussian import GridDistribution, conditional_coefficients
from .noise import DiffCovariance, IntervalGrid, NoiseModel, diff_cov_matrix
from .quantum import InterrogationAlgorithm, outcome_probs

__all__ = [
    "TrackerConfig",
    "ClockBelief",
    "PhaseStatistics",
    "GaussianTransition",
    "ZeroProbabilityOutcome",
    "initial_belief",
    "extend_prior",
    "condition_on",
    "bayes_update",
    "predict_outcomes",
    "update_moments",
    "truncate",
    "phase_statistics",
    "expected_variance_increase",
    "ClockTracker",
]


class ZeroProbabilityOutcome(RuntimeError):
    """The observed outcome has zero predictive probability under the belief."""


@dataclass(frozen=True)
class TrackerConfig:
    m: int = 1
    P: int = 41
    K: int = 2
    T: float = 1.0
    span: float = 4.0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("memory m must be at least 1")
        if self.K < 2:
            raise ValueError("moment order K must be at least 2")
        if self.P < 3 or self.P % 2 == 0:
            raise ValueError("P must be an odd integer >= 3")
        if not self.T > 0:
            raise ValueError("T must be positive")


@dataclass(frozen=True)
class ClockBelief:
    """Joint grid over retained frequencies plus per-node phase moments.

    ``indices[i]`` is the interrogation number of axis ``i`` (0 is the
    reference interval, pinned at zero deviation).  ``moments[k]`` has the
    shape of the joint table and holds ``E((theta_step - offset)^k | node)``.
    When the last index exceeds ``step`` the belief is an extended prior whose
    moments still refer to ``theta_step``.
    """

    step: int
    indices: tuple
    joint: GridDistribution
    moments: np.ndarray
    offset: float = 0.0
    memory: int = 1
    history: tuple = ()

    def __post_init__(self):
        if len(self.indices) != self.joint.ndim:
            raise ValueError("one interrogation index per joint axis")
        if self.moments.shape[1:] != self.joint.probs.shape:
            raise ValueError("moment table does not match the joint grid")

    @property
    def K(self) -> int:
        return self.moments.shape[0] - 1

    @property
    def pending(self) -> bool:
        """True for an extended prior awaiting its measurement."""
        return self.indices[-1] > self.step

    @property
    def phase_estimate(self) -> float:
        return self.offset + float(np.sum(self.joint.probs * self.moments[1]))

    def frequency_mean(self, axis: int = -1) -> float:
        return self.joint.mean(axis % self.joint.ndim)


@dataclass(frozen=True)
class PhaseStatistics:
    mean: float
    variance: float
    nodes: np.ndarray
    node_probs: np.ndarray
    centered: np.ndarray  # E(theta - E theta | last-axis node)


def initial_belief(config: TrackerConfig) -> ClockBelief:
    joint = GridDistribution((np.zeros(1),), np.ones(1))
    M = np.zeros((config.K + 1, 1))
    M[0] = 1.0
    return ClockBelief(0, (0,), joint, M, 0.0, config.m)


# ---------------------------------------------------------------- transitions

def _gaussian_rows(mu: np.ndarray, var: float, nodes: np.ndarray) -> np.ndarray:
    """Discretize ``N(mu, var)`` onto ``nodes`` for every entry of ``mu``.

    Density sampling when the conditional is wide compared with the node
    spacing, cell masses otherwise (so narrow or degenerate conditionals still
    put their mass on the right node).
    """
    mu = np.asarray(mu, dtype=float)[..., None]
    if nodes.size == 1:
        return np.ones(mu.shape[:-1] + (1,))
    h = float(nodes[1] - nodes[0])
    sd = np.sqrt(max(var, 0.0))
    if sd >= h:
        logw = -0.5 * ((nodes - mu) / sd) ** 2
        logw -= logw.max(axis=-1, keepdims=True)
        rows = np.exp(logw)
    else:
        edges = np.concatenate([nodes - 0.5 * h, nodes[-1:] + 0.5 * h])
        if sd == 0.0:
            z = np.where(edges > mu, np.inf, -np.inf)
        else:
            z = (edges - mu) / sd
        lo, hi = z[..., :-1], z[..., 1:]
        # upper-tail form keeps precision on the right side of the mean
        rows = np.where(lo > 0, ndtr(-lo) - ndtr(-hi), ndtr(hi) - ndtr(lo))
        empty = rows.sum(axis=-1) <= 1e-300
        if np.any(empty):
            nearest = np.abs(nodes - mu).argmin(axis=-1)
            fallback = np.zeros_like(rows)
            np.put_along_axis(fallback, nearest[..., None], 1.0, axis=-1)
            rows = np.where(empty[..., None], fallback, rows)
    return rows / rows.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class GaussianTransition:
    """Conditional-Gaussian prediction of the next average frequency.

    ``cov`` is the covariance of ``(omega_1, ..., omega_H)`` relative to the
    pinned reference ``omega_0 = 0``.  The next-frequency axis is a uniform
    grid of ``points`` nodes spanning ``span`` predictive standard deviations
    around the predictive mean.
    """

    cov: np.ndarray
    points: int = 41
    span: float = 4.0

    @classmethod
    def from_noise(cls, model: NoiseModel, T: float, horizon: int, points: int = 41,
                   span: float = 4.0) -> "GaussianTransition":
        C = diff_cov_matrix(model, IntervalGrid.uniform(horizon, T))
        return cls(C.matrix, points, span)

    @property
    def horizon(self) -> int:
        return self.cov.shape[0]

    def conditional(self, belief: ClockBelief):
        """Per-node conditional means and the common conditional variance of ``omega_{n+1}``."""
        k = belief.indices[-1] + 1
        if k > self.horizon:
            raise ValueError(f"covariance horizon {self.horizon} exhausted")
        axes = [i for i, idx in enumerate(belief.indices) if idx >= 1]
        sel = [belief.indices[i] - 1 for i in axes] + [k - 1]
        beta, var = conditional_coefficients(self.cov[np.ix_(sel, sel)])
        mu = np.zeros(belief.joint.probs.shape)
        for b, i in zip(beta, axes):
            shape = [1] * belief.joint.ndim
            shape[i] = -1
            mu = mu + b * belief.joint.axes[i].reshape(shape)
        return mu, var

    def kernel(self, belief: ClockBelief):
        mu, var = self.conditional(belief)
        w = belief.joint.probs
        mean = float(np.sum(w * mu))
        total = var + float(np.sum(w * (mu - mean) ** 2))
        sd = np.sqrt(max(total, 0.0))
        if sd <= 1e-15 * max(1.0, abs(mean)):
            nodes = np.array([mean])
        else:
            nodes = mean + sd * np.linspace(-self.span, self.span, self.points)
        return nodes, _gaussian_rows(mu, var, nodes)


# ---------------------------------------------------------------- cycle steps

def extend_prior(belief: ClockBelief, transition) -> ClockBelief:
    """Append the next-frequency axis.

    ``transition.kernel(belief)`` must return ``(nodes, rows)`` where ``rows``
    has shape ``joint.shape + (len(nodes),)`` and each row sums to one.
    """
    if belief.pending:
        raise ValueError("belief already carries an unmeasured frequency axis")
    nodes, rows = transition.kernel(belief)
    nodes = np.asarray(nodes, dtype=float)
    rows = np.asarray(rows, dtype=float)
    if rows.shape != belief.joint.probs.shape + (nodes.size,):
        raise ValueError("transition kernel has the wrong shape")
    joint = GridDistribution(belief.joint.axes + (nodes,), belief.joint.probs[..., None] * rows)
    M = np.broadcast_to(belief.moments[..., None], belief.moments.shape + (nodes.size,)).copy()
    return replace(belief, indices=belief.indices + (belief.indices[-1] + 1,), joint=joint, moments=M)


def condition_on(belief: ClockBelief, likelihood, outcome=None) -> ClockBelief:
    """Weight the joint by a likelihood defined on the last axis."""
    lik = np.asarray(likelihood, dtype=float)
    post = belief.joint.probs * lik
    z = post.sum()
    if not z > 0:
        raise ZeroProbabilityOutcome(f"outcome {outcome!r} has zero predictive probability")
    hist = belief.history + ((outcome,) if outcome is not None else ())
    return replace(belief, joint=GridDistribution(belief.joint.axes, post / z), history=hist)


def bayes_update(belief: ClockBelief, alg: InterrogationAlgorithm, outcome: int, T: float) -> ClockBelief:
    if not belief.pending:
        raise ValueError("extend the prior before measuring")
    lik = outcome_probs(alg, belief.joint.axes[-1], T)[:, int(outcome)]
    return condition_on(belief, lik, int(outcome))


def predict_outcomes(belief: ClockBelief, alg: InterrogationAlgorithm, T: float) -> np.ndarray:
    w = belief.joint.probs.reshape(-1, belief.joint.probs.shape[-1]).sum(axis=0)
    p = w @ outcome_probs(alg, belief.joint.axes[-1], T)
    return p / p.sum()


def _shift_moments(M: np.ndarray, d) -> np.ndarray:
    """Moments of ``X - d`` from moments of ``X`` (``d`` broadcasts over nodes)."""
    K = M.shape[0] - 1
    out = np.zeros_like(M)
    for k in range(K + 1):
        for l in range(k + 1):
            out[k] = out[k] + comb(k, l) * (-d) ** (k - l) * M[l]
    return out


def update_moments(belief: ClockBelief, T: float, recenter: bool = True) -> ClockBelief:
    """Advance the phase moments by ``omega_{n+1} T`` at every node.

    Given the node, ``theta_n`` is independent of ``omega_{n+1}``, so the
    binomial expansion applies node by node.
    """
    if not belief.pending:
        raise ValueError("no unmeasured frequency axis to integrate")
    y = belief.joint.axes[-1] * T
    M = _shift_moments(belief.moments, -y)  # moments of (theta_n - offset) + y
    M[0] = 1.0
    offset = belief.offset
    if recenter:
        d = float(np.sum(belief.joint.probs * M[1]))
        M = _shift_moments(M, d)
        M[0] = 1.0
        offset += d
    return replace(belief, step=belief.indices[-1], moments=M, offset=offset)


def truncate(belief: ClockBelief) -> ClockBelief:
    """Marginalize oldest axes until at most ``memory`` remain."""
    while belief.joint.ndim > belief.memory:
        w = belief.joint.probs
        marg = w.sum(axis=0)
        safe = np.where(marg > 0, marg, 1.0)
        M = np.where(marg > 0, (w * belief.moments).sum(axis=1) / safe,
                     belief.moments.mean(axis=1))
        M[0] = 1.0
        joint = GridDistribution(belief.joint.axes[1:], marg)
        belief = replace(belief, indices=belief.indices[1:], joint=joint, moments=M)
    return belief


def _last_axis_sums(belief: ClockBelief):
    n = belief.joint.probs.shape[-1]
    w = belief.joint.probs.reshape(-1, n)
    M = belief.moments.reshape(belief.moments.shape[0], -1, n)
    return w.sum(axis=0), (w[None] * M).sum(axis=1)


def phase_statistics(belief: ClockBelief) -> PhaseStatistics:
    """Phase mean, variance and per-node centered conditional means on the last axis."""
    w, A = _last_axis_sums(belief)
    m1 = float(A[1].sum())
    var = max(float(A[2].sum()) - m1 * m1, 0.0)
    safe = np.where(w > 0, w, 1.0)
    centered = np.where(w > 0, A[1] / safe - m1, 0.0)
    return PhaseStatistics(belief.offset + m1, var, belief.joint.axes[-1], w, centered)


def expected_variance_increase(belief: ClockBelief, alg: InterrogationAlgorithm, T: float,
                               likelihood=None) -> float:
    """``sum_a p(a) V(theta_n + omega_{n+1} T | a) - V(theta_n)`` for an extended prior."""
    if not belief.pending:
        raise ValueError("needs an extended prior")
    w, A = _last_axis_sums(belief)
    y = belief.joint.axes[-1] * T
    L = outcome_probs(alg, belief.joint.axes[-1], T) if likelihood is None else np.asarray(likelihood)
    m1 = float(A[1].sum())
    v0 = float(A[2].sum()) - m1 * m1
    # moments of X = theta - offset + y, aggregated per last-axis node
    X1 = A[1] + w * y
    X2 = A[2] + 2 * y * A[1] + w * y * y
    pa = w @ L
    ok = pa > 0
    e1 = (X1 @ L)[ok] / pa[ok]
    e2 = (X2 @ L)[ok] / pa[ok]
    return float(np.sum(pa[ok] * (e2 - e1 * e1)) - v0)


@dataclass
class ClockTracker:
    """Mutable convenience wrapper owning one belief."""

    transition: object
    config: TrackerConfig
    belief: ClockBelief = field(default=None)

    def __post_init__(self):
        if self.belief is None:
            self.belief = initial_belief(self.config)

    def prior(self) -> ClockBelief:
        return extend_prior(self.belief, self.transition)

    def observe(self, prior: ClockBelief, alg: InterrogationAlgorithm, outcome: int) -> ClockBelief:
        """Measure, integrate and truncate; returns the untruncated posterior."""
        post = update_moments(bayes_update(prior, alg, outcome, self.config.T), self.config.T)
        self.belief = truncate(post)
        return post
