"""Power-law oscillator noise: interval-averaged covariances and trajectory sampling.

Frequencies are deviations from the atomic standard in rad/s, times are in
seconds.  The point covariance of a power-law process with spectral exponent
``alpha`` in (-3, -1] is only defined formally; the quantities that are well
defined are covariances of *differences* of interval averages, which is what
:func:`diff_cov_matrix` assembles.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

__all__ = [
    "NoiseModel",
    "IntervalGrid",
    "DiffCovariance",
    "QuadratureError",
    "NotPositiveSemidefinite",
    "point_kernel",
    "avg_cov",
    "diff_cov_matrix",
    "sample_trajectory",
]

PSD_TOL = 1e-9


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, abserr: float):
        super().__init__(f"{message} (estimated error {abserr:.3e})")
        self.abserr = abserr


class NotPositiveSemidefinite(ValueError):
    def __init__(self, eigenvalue: float, norm: float):
        super().__init__(
            f"covariance matrix is not PSD: eigenvalue {eigenvalue:.3e} "
            f"below -{PSD_TOL:g} * {norm:.3e}"
        )
        self.eigenvalue = eigenvalue


@dataclass(frozen=True)
class NoiseModel:
    """Power-law frequency noise ``S(f) ~ f**alpha`` with scale ``h``."""

    alpha: float
    h: float

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"noise amplitude h must be positive, got {self.h}")
        if not (-3.0 < self.alpha <= -1.0):
            raise ValueError(
                f"unsupported spectral exponent alpha={self.alpha}; need -3 < alpha <= -1"
            )

    @property
    def is_flicker(self) -> bool:
        return self.alpha == -1.0

    @classmethod
    def brownian(cls, h: float) -> "NoiseModel":
        return cls(alpha=-2.0, h=h)

    @classmethod
    def flicker(cls, h: float) -> "NoiseModel":
        return cls(alpha=-1.0, h=h)


@dataclass(frozen=True)
class IntervalGrid:
    """Interval boundaries ``t_0 < t_1 < ... < t_{n+1}``.

    ``I_0 = [t_0, t_1]`` is the reference interval before the first
    interrogation; ``I_i = [t_i, t_{i+1}]`` is interrogation ``i``.
    """

    boundaries: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=float)
        if b.ndim != 1 or b.size < 3:
            raise ValueError("need the reference interval plus at least one interrogation")
        if np.any(np.diff(b) <= 0):
            raise ValueError("interval boundaries must be strictly increasing")
        object.__setattr__(self, "boundaries", b)

    @classmethod
    def uniform(cls, n: int, T: float) -> "IntervalGrid":
        """``n`` interrogations of duration ``T`` preceded by a reference interval of length ``T``."""
        return cls(T * np.arange(n + 2, dtype=float))

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.boundaries)

    @property
    def n(self) -> int:
        return self.boundaries.size - 2

    def interval(self, i: int) -> tuple[float, float]:
        return float(self.boundaries[i]), float(self.boundaries[i + 1])


@dataclass(frozen=True)
class DiffCovariance:
    """Joint covariance of ``(omega_1 - omega_0, ..., omega_n - omega_0)``."""

    matrix: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])


def point_kernel(model: NoiseModel, dt):
    """Formal covariance ``Cov(omega(s), omega(s'))`` at separation ``dt = |s - s'|``."""
    dt = np.asarray(dt, dtype=float)
    if np.any(dt <= 0):
        raise ValueError("point kernel is only formal; dt must be > 0")
    if model.is_flicker:
        out = -2.0 * model.h * np.log(dt)
    else:
        out = -0.5 * model.h * dt ** (-model.alpha - 1.0)
    return out[()] if out.ndim == 0 else out


def _second_antiderivative(model: NoiseModel, x):
    # G with G'' = point kernel, G(0) = 0; valid for either sign of x.
    x = np.abs(np.asarray(x, dtype=float))
    if model.is_flicker:
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where(x > 0, 0.5 * x**2 * np.log(np.where(x > 0, x, 1.0)) - 0.75 * x**2, 0.0)
        return -2.0 * model.h * g
    p = -model.alpha - 1.0
    return -0.5 * model.h * x ** (p + 2.0) / ((p + 1.0) * (p + 2.0))


def _avg_cov_closed(model, a, b, c, d):
    G = lambda x: _second_antiderivative(model, x)  # noqa: E731
    total = G(b - c) - G(a - c) - G(b - d) + G(a - d)
    return total / ((b - a) * (d - c))


def _overlap_length(u, a, b, c, d):
    # length of {s in [a,b] : s - u in [c,d]}
    return np.maximum(0.0, np.minimum(b, d + u) - np.maximum(a, c + u))


def _avg_cov_quad(model, a, b, c, d, rtol):
    # The double integral of k(s - s') over the rectangle equals a single
    # integral of k(u) against the overlap length of the two intervals.
    lo, hi = a - d, b - c
    kernel = lambda u: 0.0 if u == 0 else float(point_kernel(model, abs(u)))  # noqa: E731
    f = lambda u: kernel(u) * _overlap_length(u, a, b, c, d)  # noqa: E731
    breaks = sorted({x for x in (0.0, a - c, b - d) if lo < x < hi})
    edges = [lo, *breaks, hi]
    total, err = 0.0, 0.0
    for u0, u1 in zip(edges[:-1], edges[1:]):
        val, e = integrate.quad(f, u0, u1, epsabs=0.0, epsrel=rtol * 1e-2, limit=200)
        total += val
        err += e
    if err > rtol * max(abs(total), 1e-300):
        raise QuadratureError("interval covariance quadrature did not converge", err)
    return total / ((b - a) * (d - c))


def avg_cov(model: NoiseModel, interval_k, interval_l, method: str = "closed", rtol: float = 1e-8):
    """Covariance of the averages of ``omega`` over two intervals.

    Parameters
    ----------
    model : NoiseModel
    interval_k, interval_l : (float, float)
        ``(start, stop)`` of each interval, with ``stop > start``.
    method : {"closed", "quad"}
        ``"closed"`` uses the exact second antiderivative of the kernel;
        ``"quad"`` integrates numerically to relative tolerance ``rtol``.
    """
    a, b = map(float, interval_k)
    c, d = map(float, interval_l)
    if not (b > a and d > c):
        raise ValueError("intervals must have positive length")
    if method == "closed":
        return float(_avg_cov_closed(model, a, b, c, d))
    if method == "quad":
        return _avg_cov_quad(model, a, b, c, d, rtol)
    raise ValueError(f"unknown method {method!r}")


def diff_cov_matrix(model: NoiseModel, grid: IntervalGrid, method: str = "closed") -> DiffCovariance:
    """Assemble ``C_ij = Cov(omega_i - omega_0, omega_j - omega_0)`` for ``i, j = 1..n``."""
    n = grid.n
    t = grid.boundaries
    if method == "closed":
        a, b = t[:-1], t[1:]
        # interval-average covariance between every pair I_k, I_l (k, l = 0..n)
        K = _avg_cov_closed(model, a[:, None], b[:, None], a[None, :], b[None, :])
    else:
        K = np.empty((n + 1, n + 1))
        for k in range(n + 1):
            for l in range(k, n + 1):
                K[k, l] = K[l, k] = avg_cov(model, grid.interval(k), grid.interval(l), method=method)
    C = K[1:, 1:] - K[1:, :1] - K[:1, 1:] + K[0, 0]
    C = 0.5 * (C + C.T)
    eig = np.linalg.eigvalsh(C)[0]
    norm = np.linalg.norm(C, 2)
    if eig < -PSD_TOL * norm:
        raise NotPositiveSemidefinite(eig, norm)
    return DiffCovariance(C)


def _factor(C: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (C + C.T))
    scale = max(abs(w).max(initial=0.0), 1e-300)
    if w[0] < -PSD_TOL * scale:
        raise NotPositiveSemidefinite(w[0], scale)
    return V * np.sqrt(np.clip(w, 0.0, None))


def sample_trajectory(C: DiffCovariance | np.ndarray, seed=None, size: int | None = None) -> np.ndarray:
    """Draw true average frequencies ``(omega_1, ..., omega_n)`` with ``omega_0 = 0``.

    ``seed`` may be anything accepted by :func:`numpy.random.default_rng`.
    With ``size`` given, returns an array of shape ``(size, n)``.
    """
    mat = C.matrix if isinstance(C, DiffCovariance) else np.asarray(C, dtype=float)
    L = _factor(mat)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((1 if size is None else size, mat.shape[0]))
    out = z @ L.T
    return out[0] if size is None else out
