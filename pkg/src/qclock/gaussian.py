"""Multivariate Gaussian conditioning and grid discretization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Gaussian",
    "GridDistribution",
    "DegenerateConditioning",
    "condition_last",
    "conditional_coefficients",
    "discretize",
    "marginalize",
]

REGULARIZATION = 1e-12


class DegenerateConditioning(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class Gaussian:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mean, dtype=float))
        C = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if C.shape != (mu.size, mu.size):
            raise ValueError(f"mean has dimension {mu.size} but covariance is {C.shape}")
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "cov", C)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class GridDistribution:
    """Probability table on a tensor grid; ``probs.shape == tuple(len(ax) for ax in axes)``."""

    axes: tuple
    probs: np.ndarray

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        p = np.asarray(self.probs, dtype=float)
        if p.shape != tuple(a.size for a in axes):
            raise ValueError(f"probability table shape {p.shape} does not match axes")
        if np.any(p < 0):
            raise ValueError("negative probability")
        total = p.sum()
        if abs(total - 1.0) > 1e-12:
            p = p / total
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "probs", p)

    @property
    def ndim(self) -> int:
        return len(self.axes)

    def mean(self, axis: int = 0) -> float:
        return float(np.sum(marginalize_to(self, axis) * self.axes[axis]))

    def var(self, axis: int = 0) -> float:
        w = marginalize_to(self, axis)
        x = self.axes[axis]
        mu = np.sum(w * x)
        return float(np.sum(w * (x - mu) ** 2))


def conditional_coefficients(cov: np.ndarray):
    """Regression of the last coordinate on the others.

    Returns ``(beta, variance)`` such that the last coordinate given the
    others ``f`` is Gaussian with mean ``mu_N + beta @ (f - mu_head)``.
    """
    C = np.asarray(cov, dtype=float)
    n = C.shape[0] - 1
    if n == 0:
        return np.zeros(0), float(C[0, 0])
    A = C[:n, :n]
    b = C[:n, n]
    try:
        beta = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        A = A + REGULARIZATION * np.trace(A) * np.eye(n)
        try:
            beta = np.linalg.solve(A, b)
        except np.linalg.LinAlgError as exc:
            raise DegenerateConditioning("conditioning block is singular") from exc
    if not np.all(np.isfinite(beta)):
        raise DegenerateConditioning("conditioning block is singular")
    var = float(C[n, n] - b @ beta)
    return beta, max(var, 0.0)


def condition_last(g: Gaussian, observed) -> tuple[float, float]:
    """Mean and variance of the last coordinate given the first ``N-1``."""
    f = np.atleast_1d(np.asarray(observed, dtype=float))
    if f.size != g.dim - 1:
        raise ValueError(f"expected {g.dim - 1} observed values, got {f.size}")
    beta, var = conditional_coefficients(g.cov)
    mean = float(g.mean[-1] + beta @ (f - g.mean[:-1]))
    return mean, var


def _degenerate(sigma: float, mu: float) -> bool:
    return sigma <= 1e-12 * max(1.0, abs(mu))


def discretize(g: Gaussian, points: int = 41, span: float = 4.0) -> GridDistribution:
    """Uniform grid over ``mean +- span * std`` with weights proportional to the density."""
    if points < 3 or points % 2 == 0:
        raise ValueError("points must be an odd integer >= 3")
    if span <= 0:
        raise ValueError("span must be positive")
    if g.dim != 1:
        raise ValueError("discretize expects a one-dimensional Gaussian")
    mu = float(g.mean[0])
    sigma = float(np.sqrt(max(g.cov[0, 0], 0.0)))
    x = mu + sigma * np.linspace(-span, span, points)
    if _degenerate(sigma, mu):
        w = np.zeros(points)
        w[points // 2] = 1.0
    else:
        w = np.exp(-0.5 * ((x - mu) / sigma) ** 2)
    return GridDistribution((x,), w / w.sum())


def marginalize(d: GridDistribution, axis: int) -> GridDistribution:
    """Sum out ``axis``."""
    if not -d.ndim <= axis < d.ndim:
        raise ValueError(f"axis {axis} out of range for {d.ndim}-d distribution")
    if d.ndim == 1:
        raise ValueError("cannot marginalize the only axis")
    axis %= d.ndim
    axes = d.axes[:axis] + d.axes[axis + 1:]
    return GridDistribution(axes, d.probs.sum(axis=axis))


def marginalize_to(d: GridDistribution, axis: int) -> np.ndarray:
    """Marginal weights along a single axis."""
    others = tuple(i for i in range(d.ndim) if i != axis % d.ndim)
    return d.probs.sum(axis=others) if others else d.probs
