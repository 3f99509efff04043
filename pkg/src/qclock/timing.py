"""Measurement-phase compensation when the true interrogation duration is uncertain.

The experimenter only sees the external oscillator phase ``phi = (omega + Omega) s``
and estimates the elapsed time as ``s* = phi / (omega* + Omega)``.  Phases are in
rad, frequencies in rad/s; ``Omega`` is the absolute standard frequency.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "TimingConfig",
    "CompensationState",
    "PhaseError",
    "compensating_phase",
    "phase_error",
    "reparameterize",
    "reparameterize_inverse",
    "residual_error",
    "sample_duration",
    "effective_phase",
]


@dataclass(frozen=True)
class TimingConfig:
    """``jitter`` is the relative standard deviation of the true duration (truncated at 3 sigma)."""

    Omega: float
    jitter: float = 1e-3
    prep_measure_window: float = 0.0
    reparameterize: bool = False

    def __post_init__(self):
        if not self.Omega > 0:
            raise ValueError("Omega must be positive")
        if not 0 <= self.jitter < 1.0 / 3.0:
            raise ValueError("jitter must lie in [0, 1/3) so durations stay positive")
        if self.prep_measure_window < 0:
            raise ValueError("prep_measure_window must be non-negative")


@dataclass(frozen=True)
class CompensationState:
    omega_star: float
    phi: float

    def s_star(self, Omega: float) -> float:
        return self.phi / (self.omega_star + Omega)


@dataclass(frozen=True)
class PhaseError:
    value: float
    bound: float
    admissible: bool  # slip condition |omega* - omega| T < pi

    @property
    def within_bound(self) -> bool:
        return abs(self.value) <= self.bound * (1 + 1e-12) + 1e-15


def compensating_phase(comp: CompensationState, T: float, Omega: float) -> float:
    """``phi omega*/(omega* + Omega) - omega* T``, i.e. ``omega* (s* - T)``."""
    den = comp.omega_star + Omega
    if not den > 0:
        raise ValueError("need omega* + Omega > 0")
    return comp.phi * comp.omega_star / den - comp.omega_star * T


def phase_error(omega: float, comp: CompensationState, s: float, T: float, Omega: float) -> PhaseError:
    """Residual phase error after compensation and its a-priori bound ``E_1``.

    ``comp.phi`` is not used: the error is expressed through the true
    duration ``s`` (the oscillator phase is ``(omega + Omega) s``).  The
    bound uses ``|omega*|`` so that it also covers negative estimates.
    """
    ws = comp.omega_star
    r = ws / (ws + Omega)
    eps = (ws - omega) * ((T - s) + r * s)
    bound = np.pi * abs(T - s) / T + np.pi * (s / T) * abs(r)
    admissible = abs(ws - omega) * T < np.pi
    pe = PhaseError(float(eps), float(bound), bool(admissible))
    if admissible and not pe.within_bound:
        raise AssertionError(f"phase error {eps} exceeds bound {bound}")
    return pe


def reparameterize(omega, omega_star: float, Omega: float):
    """``rho(omega) = omega (omega* + Omega) / (omega + Omega)``."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega + Omega <= 0):
        raise ValueError("need omega + Omega > 0")
    out = omega * (omega_star + Omega) / (omega + Omega)
    return out[()] if out.ndim == 0 else out


def reparameterize_inverse(omega_p, omega_star: float, Omega: float):
    omega_p = np.asarray(omega_p, dtype=float)
    out = omega_p * Omega / (omega_star + Omega - omega_p)
    return out[()] if out.ndim == 0 else out


def residual_error(omega: float, omega_star: float, phi: float, phi_T: float, Omega: float) -> PhaseError:
    """Error left with the reparameterized cost and continuous compensation.

    The bound ``pi |T - s| / T * Omega / (omega* + Omega)`` needs ``T``, which
    follows from ``phi_T = T (omega* + Omega)``.
    """
    if not omega + Omega > 0:
        raise ValueError("need omega + Omega > 0")
    T = phi_T / (omega_star + Omega)
    s_minus_T = (phi - phi_T) / (omega + Omega)
    eps = (omega - omega_star) * s_minus_T * Omega / (omega_star + Omega)
    bound = np.pi * abs(s_minus_T) / T * Omega / (omega_star + Omega)
    admissible = abs(omega - omega_star) * T < np.pi
    pe = PhaseError(float(eps), float(bound), bool(admissible))
    if admissible and not pe.within_bound:
        raise AssertionError(f"residual error {eps} exceeds bound {bound}")
    return pe


def sample_duration(cfg: TimingConfig, T: float, rng) -> float:
    """True duration ``s``: Gaussian around ``T`` with relative spread ``jitter``, truncated at 3 sigma."""
    if cfg.jitter == 0:
        return T
    while True:
        z = rng.standard_normal()
        if abs(z) <= 3.0:
            return T * (1.0 + cfg.jitter * z)


def effective_phase(omega: float, omega_star: float, s: float, T: float, cfg: TimingConfig) -> float:
    """Phase the atoms actually acquire, in the frame the protocol was designed for.

    Without reparameterization the protocol expects ``omega T``; with it,
    ``rho(omega) T``.  The returned value is that expectation plus the
    residual error.
    """
    Omega = cfg.Omega
    if cfg.reparameterize:
        phi_T = T * (omega_star + Omega)
        phi = (omega + Omega) * s
        expected = reparameterize(omega, omega_star, Omega) * T
        return float(expected + residual_error(omega, omega_star, phi, phi_T, Omega).value)
    comp = CompensationState(omega_star, (omega + Omega) * s)
    return float(omega * T + phase_error(omega, comp, s, T, Omega).value)
