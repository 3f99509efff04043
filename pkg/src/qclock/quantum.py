"""N-atom interrogation algebra: states, free evolution, POVM statistics, baselines.

Conventions: each atom evolves under ``R_z(phi) = diag(exp(-i phi/2), exp(+i phi/2))``
with ``phi = omega * T``.  A computational basis state of Hamming weight ``w``
therefore picks up the phase ``exp(i phi (w - N/2))``.

Algorithms may live in the full ``2**N`` dimensional space or in the
``N + 1`` dimensional symmetric (Dicke) subspace, which is invariant under the
free evolution.  :func:`to_full` and :func:`to_symmetric` convert between the two.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

__all__ = [
    "PureState",
    "Povm",
    "InterrogationAlgorithm",
    "free_evolution",
    "evolution_phases",
    "outcome_probs",
    "ramsey_algorithm",
    "buzek_algorithm",
    "dicke_isometry",
    "to_full",
    "to_symmetric",
]

NORM_TOL = 1e-10
POVM_TOL = 1e-9


def _weights(n_atoms: int, symmetric: bool) -> np.ndarray:
    if symmetric:
        return np.arange(n_atoms + 1, dtype=float)
    idx = np.arange(2**n_atoms)
    return np.array([bin(i).count("1") for i in idx], dtype=float)


@dataclass(frozen=True)
class PureState:
    amplitudes: np.ndarray
    n_atoms: int
    symmetric: bool = False

    def __post_init__(self):
        psi = np.asarray(self.amplitudes, dtype=complex).ravel()
        dim = self.n_atoms + 1 if self.symmetric else 2**self.n_atoms
        if psi.size != dim:
            raise ValueError(f"expected {dim} amplitudes, got {psi.size}")
        nrm = np.linalg.norm(psi)
        if abs(nrm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (norm {nrm:.12f})")
        object.__setattr__(self, "amplitudes", psi)

    @classmethod
    def normalized(cls, amplitudes, n_atoms: int, symmetric: bool = False) -> "PureState":
        psi = np.asarray(amplitudes, dtype=complex).ravel()
        return cls(psi / np.linalg.norm(psi), n_atoms, symmetric)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def generator(self) -> np.ndarray:
        """Diagonal of the free-evolution generator (phase per unit ``omega*T``)."""
        return _weights(self.n_atoms, self.symmetric) - 0.5 * self.n_atoms


@dataclass(frozen=True)
class Povm:
    elements: np.ndarray
    labels: tuple = field(default=())

    def __post_init__(self):
        P = np.asarray(self.elements, dtype=complex)
        if P.ndim != 3 or P.shape[1] != P.shape[2]:
            raise ValueError("POVM elements must be an array of square matrices")
        object.__setattr__(self, "elements", P)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(range(P.shape[0])))
        elif len(self.labels) != P.shape[0]:
            raise ValueError("one label per POVM element required")

    def __len__(self) -> int:
        return self.elements.shape[0]

    @property
    def dim(self) -> int:
        return self.elements.shape[1]

    def completeness_error(self) -> float:
        return float(np.abs(self.elements.sum(axis=0) - np.eye(self.dim)).max())

    def min_eigenvalue(self) -> float:
        P = 0.5 * (self.elements + np.conj(np.swapaxes(self.elements, 1, 2)))
        return float(np.linalg.eigvalsh(P)[:, 0].min())

    def validate(self, tol: float = POVM_TOL) -> None:
        herm = np.abs(self.elements - np.conj(np.swapaxes(self.elements, 1, 2))).max()
        if herm > tol:
            raise ValueError(f"POVM element not Hermitian (residual {herm:.2e})")
        if self.min_eigenvalue() < -tol:
            raise ValueError(f"POVM element not PSD (eigenvalue {self.min_eigenvalue():.2e})")
        if self.completeness_error() > tol:
            raise ValueError(f"POVM elements do not sum to identity ({self.completeness_error():.2e})")


@dataclass(frozen=True)
class InterrogationAlgorithm:
    """Initial state, POVM and per-outcome phase estimates ``g`` (rad)."""

    state: PureState
    povm: Povm
    g: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float).ravel()
        if g.size != len(self.povm):
            raise ValueError(f"{len(self.povm)} POVM elements but {g.size} labels")
        if self.povm.dim != self.state.dim:
            raise ValueError("state and POVM dimensions differ")
        object.__setattr__(self, "g", g)

    @property
    def n_outcomes(self) -> int:
        return len(self.povm)

    def with_labels(self, g) -> "InterrogationAlgorithm":
        return InterrogationAlgorithm(self.state, self.povm, g, self.name)


def evolution_phases(state: PureState, phi) -> np.ndarray:
    """``exp(i phi k)`` for each basis state; shape ``phi.shape + (dim,)``."""
    phi = np.asarray(phi, dtype=float)
    return np.exp(1j * phi[..., None] * state.generator)


def free_evolution(psi: PureState, omega: float, T: float) -> PureState:
    """Apply ``R_z(omega*T)`` to every atom."""
    amp = evolution_phases(psi, omega * T) * psi.amplitudes
    return PureState.normalized(amp, psi.n_atoms, psi.symmetric)


def outcome_probs(alg: InterrogationAlgorithm, omega, T: float) -> np.ndarray:
    """Born-rule outcome distribution ``p(a | omega)``.

    ``omega`` may be a scalar or an array; the outcome index is the last axis.
    """
    omega = np.asarray(omega, dtype=float)
    evolved = evolution_phases(alg.state, omega * T) * alg.state.amplitudes
    flat = evolved.reshape(-1, alg.state.dim)
    p = np.einsum("jd,ade,je->ja", flat.conj(), alg.povm.elements, flat).real
    p = np.clip(p, 0.0, None)
    p /= p.sum(axis=1, keepdims=True)
    return p.reshape(omega.shape + (alg.n_outcomes,))


def dicke_isometry(n_atoms: int) -> np.ndarray:
    """Columns are normalized Dicke states ``|D_w>`` in the computational basis."""
    w = _weights(n_atoms, symmetric=False).astype(int)
    V = np.zeros((2**n_atoms, n_atoms + 1))
    for k in range(n_atoms + 1):
        V[w == k, k] = 1.0 / np.sqrt(comb(n_atoms, k))
    return V


def to_full(alg: InterrogationAlgorithm) -> InterrogationAlgorithm:
    """Embed a symmetric-subspace algorithm in the full space.

    The orthogonal complement of the symmetric subspace is attached to the
    first POVM element; the state never populates it.
    """
    if not alg.state.symmetric:
        return alg
    N = alg.state.n_atoms
    V = dicke_isometry(N)
    psi = PureState(V @ alg.state.amplitudes, N, symmetric=False)
    P = np.einsum("ij,ajk,lk->ail", V, alg.povm.elements, V)
    P[0] += np.eye(V.shape[0]) - V @ V.T
    return InterrogationAlgorithm(psi, Povm(P, alg.povm.labels), alg.g, alg.name)


def to_symmetric(alg: InterrogationAlgorithm) -> InterrogationAlgorithm:
    """Restrict a full-space algorithm whose state is permutation symmetric."""
    if alg.state.symmetric:
        return alg
    N = alg.state.n_atoms
    V = dicke_isometry(N)
    amp = V.T @ alg.state.amplitudes
    if abs(np.linalg.norm(amp) - 1.0) > 1e-9:
        raise ValueError("state is not in the symmetric subspace")
    P = np.einsum("ji,ajk,kl->ail", V, alg.povm.elements, V)
    return InterrogationAlgorithm(
        PureState.normalized(amp, N, symmetric=True), Povm(P, alg.povm.labels), alg.g, alg.name
    )


def _ramsey_single(phase: float) -> np.ndarray:
    # projectors onto R_z(phase)|+> and R_z(phase)|->
    plus = np.array([np.exp(-0.5j * phase), np.exp(0.5j * phase)]) / np.sqrt(2)
    minus = np.array([np.exp(-0.5j * phase), -np.exp(0.5j * phase)]) / np.sqrt(2)
    return np.stack([np.outer(plus, plus.conj()), np.outer(minus, minus.conj())])


def ramsey_labels(n_atoms: int, phase: float) -> np.ndarray:
    """Fringe-inversion estimates: ``phase + arcsin(2c/N - 1)`` for ``c`` plus-results."""
    c = np.arange(n_atoms + 1)
    return phase + np.arcsin(2.0 * c / n_atoms - 1.0)


def ramsey_algorithm(n_atoms: int, phase: float = 0.0, symmetric: bool = False) -> InterrogationAlgorithm:
    """Ramsey interrogation with ``N`` independent atoms.

    Outcome ``c`` is the number of atoms found in ``R_z(phase)|+>``.  For one
    atom ``p(+ | omega) = (1 + sin(omega*T - phase)) / 2``.
    """
    if n_atoms < 1:
        raise ValueError("need at least one atom")
    single_state = np.array([1.0, -1.0j]) / np.sqrt(2)
    psi = np.array([1.0 + 0j])
    for _ in range(n_atoms):
        psi = np.kron(psi, single_state)
    proj = _ramsey_single(phase)
    dim = 2**n_atoms
    P = np.zeros((n_atoms + 1, dim, dim), dtype=complex)
    for bits in range(2**n_atoms):
        # bit = 0 -> '+' result for that atom
        op = np.array([[1.0 + 0j]])
        for j in range(n_atoms):
            op = np.kron(op, proj[(bits >> (n_atoms - 1 - j)) & 1])
        n_plus = n_atoms - bin(bits).count("1")
        P[n_plus] += op
    alg = InterrogationAlgorithm(
        PureState(psi, n_atoms), Povm(P), ramsey_labels(n_atoms, phase), name="ramsey"
    )
    return to_symmetric(alg) if symmetric else alg


def buzek_algorithm(n_atoms: int, offset: float = 0.0, n_outcomes: int | None = None,
                    symmetric: bool = True) -> InterrogationAlgorithm:
    """Sine state with a covariant phase measurement (uniform-prior optimum).

    The state has Dicke amplitudes ``sqrt(2/(N+2)) sin(pi (w+1) / (N+2))``; the
    measurement has ``K >= N+1`` equally spaced outcomes at phases
    ``offset + 2 pi k / K``, each labeled by its phase.
    """
    if n_atoms < 1:
        raise ValueError("need at least one atom")
    K = n_atoms + 1 if n_outcomes is None else int(n_outcomes)
    if K < n_atoms + 1:
        raise ValueError("a covariant measurement needs at least N+1 outcomes")
    w = np.arange(n_atoms + 1)
    amp = np.sqrt(2.0 / (n_atoms + 2)) * np.sin(np.pi * (w + 1) / (n_atoms + 2))
    thetas = offset + 2 * np.pi * np.arange(K) / K
    # covariant vectors sum_w exp(i w theta)|w>, weighted so that sum_k P_k = I
    e = np.exp(1j * np.outer(thetas, w)) / np.sqrt(K)
    P = np.einsum("ki,kj->kij", e, e.conj())
    g = offset + np.angle(np.exp(1j * (thetas - offset)))
    alg = InterrogationAlgorithm(
        PureState.normalized(amp, n_atoms, symmetric=True), Povm(P), g, name="buzek"
    )
    return alg if symmetric else to_full(alg)
