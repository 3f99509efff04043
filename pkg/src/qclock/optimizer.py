"""Per-interrogation optimization of state, POVM and outcome labels.

The objective is the expected cost ``sum_a sum_j p(omega_j) p(a | omega_j) C(omega_j, a)``
for the adaptive cost ``C = (omega T - g_a)^2 + 2 (omega T - g_a) c_j`` where
``c_j = E(theta - E theta | omega_j)`` is the centered conditional phase.  With
the labels replaced by the posterior means ``g'_a = E(theta - E theta + omega T | a)``
the objective equals the expected posterior-variance increase of the
cumulative phase.

Algorithms are optimized in the symmetric subspace (dimension ``N + 1``),
which loses nothing because the free evolution only sees Hamming weights.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize, stats

from .gaussian import GridDistribution, marginalize_to
from .quantum import InterrogationAlgorithm, Povm, PureState, ramsey_algorithm
from .sdp import PovmCertificate, certify, solve_povm

__all__ = [
    "CostTable",
    "SdpSolution",
    "OptimizerConfig",
    "build_cost",
    "cost_operators",
    "state_operator",
    "expected_cost",
    "optimal_povm_for_state",
    "optimal_state_for_povm",
    "seesaw",
    "posterior_labels",
    "refine_g",
    "delta_v",
    "optimize_interrogation",
    "best_phase_ramsey",
    "ramsey_delta_v",
]


@dataclass(frozen=True)
class CostTable:
    omegas: np.ndarray
    priors: np.ndarray
    costs: np.ndarray  # (n_omega, n_outcomes)
    phase_terms: np.ndarray
    T: float
    g: np.ndarray
    evolution: np.ndarray | None = None  # frequencies driving the unitaries, if not ``omegas``

    @property
    def phase_omegas(self) -> np.ndarray:
        return self.omegas if self.evolution is None else self.evolution

    @property
    def n_outcomes(self) -> int:
        return self.costs.shape[1]

    def kernels(self, n_atoms: int) -> np.ndarray:
        """``Z[a, d, e] = sum_j p_j C_ja exp(i omega_j T (d - e))`` on the Dicke basis."""
        key = ("_Z", n_atoms)
        cache = self.__dict__.setdefault("_cache", {})
        if key not in cache:
            m = np.arange(-n_atoms, n_atoms + 1)
            phases = np.exp(1j * np.outer(self.phase_omegas * self.T, m))  # (J, 2N+1)
            z = (self.priors[:, None] * self.costs).T @ phases  # (A, 2N+1)
            w = np.arange(n_atoms + 1)
            cache[key] = z[:, (w[:, None] - w[None, :]) + n_atoms]
        return cache[key]


@dataclass(frozen=True)
class SdpSolution:
    algorithm: InterrogationAlgorithm
    objective: float
    certificate: PovmCertificate
    trace: tuple = field(default=())


@dataclass(frozen=True)
class OptimizerConfig:
    n_outcomes: int | None = None  # default: one outcome per grid node
    max_iters: int = 50
    tol: float = 1e-9
    starts: int = 8
    refine_rounds: int = 3
    gap_tol: float = 1e-8
    certificate_tol: float = 1e-6
    ramsey_phases: int = 64  # best-phase Ramsey candidate (scan size); 0 disables


def _as_grid(prior) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(prior, GridDistribution):
        return prior.axes[-1], marginalize_to(prior, prior.ndim - 1)
    omegas, probs = prior
    return np.asarray(omegas, dtype=float), np.asarray(probs, dtype=float)


def build_cost(prior, phase_means, T: float, g, evolution=None) -> CostTable:
    """Tabulate ``C(omega_j, a) = (omega_j T - g_a)^2 + 2 (omega_j T - g_a) c_j``.

    ``evolution`` optionally replaces the node frequencies inside the
    unitaries (reparameterized timing) while the cost keeps ``omega_j``.
    """
    omegas, probs = _as_grid(prior)
    c = np.broadcast_to(np.asarray(phase_means, dtype=float), omegas.shape)
    g = np.asarray(g, dtype=float).ravel()
    diff = omegas[:, None] * T - g[None, :]
    costs = diff**2 + 2.0 * diff * c[:, None]
    if evolution is not None:
        evolution = np.asarray(evolution, dtype=float)
        if evolution.shape != omegas.shape:
            raise ValueError("evolution frequencies must match the grid")
    return CostTable(omegas, probs / probs.sum(), costs, np.array(c), float(T), g, evolution)


def _symmetric_state(state: PureState) -> np.ndarray:
    if not state.symmetric:
        raise ValueError("optimizer works in the symmetric subspace; use quantum.to_symmetric")
    return state.amplitudes


def cost_operators(cost: CostTable, state: PureState) -> np.ndarray:
    """``R_a = sum_j p_j C_ja U_j |psi><psi| U_j^dag`` so that the expected cost is ``sum_a tr(P_a R_a)``."""
    psi = _symmetric_state(state)
    return np.outer(psi, psi.conj())[None] * cost.kernels(state.n_atoms)


def state_operator(cost: CostTable, povm: Povm, n_atoms: int) -> np.ndarray:
    """``Q = sum_j p_j U_j^dag (sum_a C_ja P_a) U_j`` so that the expected cost is ``<psi|Q|psi>``."""
    Q = np.einsum("ade,ade->de", povm.elements, cost.kernels(n_atoms).conj())
    return 0.5 * (Q + Q.conj().T)


def expected_cost(alg: InterrogationAlgorithm, cost: CostTable) -> float:
    """Direct sum ``sum_{j,a} C(omega_j, a) p(omega_j) p(a | omega_j)``."""
    from .quantum import outcome_probs

    p = outcome_probs(alg, cost.phase_omegas, cost.T)
    return float(np.sum(cost.priors[:, None] * p * cost.costs))


def _objective(psi, P, Z) -> float:
    R = np.outer(psi, psi.conj())[None] * Z
    return float(np.einsum("aij,aji->", P, R).real)


def optimal_povm_for_state(state: PureState, cost: CostTable, gap_tol: float = 1e-8):
    """Minimum-cost POVM for a fixed state; returns ``(Povm, objective, certificate)``."""
    R = cost_operators(cost, state)
    sol = solve_povm(R, gap_tol=gap_tol)
    return Povm(sol.elements), sol.objective, sol.certificate


def _canonical_phase(psi: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(psi) > 1e-9))
    return psi * np.exp(-1j * np.angle(psi[k]))


def optimal_state_for_povm(povm: Povm, cost: CostTable, n_atoms: int) -> tuple[PureState, float]:
    """Ground state of the state-step operator and its eigenvalue."""
    Q = state_operator(cost, povm, n_atoms)
    w, V = np.linalg.eigh(Q)
    psi = _canonical_phase(V[:, 0])
    return PureState.normalized(psi, n_atoms, symmetric=True), float(w[0])


def _random_state(rng, n_atoms: int) -> np.ndarray:
    z = rng.standard_normal(n_atoms + 1) + 1j * rng.standard_normal(n_atoms + 1)
    return z / np.linalg.norm(z)


def _run_seesaw(cost: CostTable, n_atoms: int, psi: np.ndarray, P: np.ndarray | None, config: OptimizerConfig):
    Z = cost.kernels(n_atoms)
    trace = []
    best = np.inf if P is None else _objective(psi, P, Z)
    cert = None
    if P is not None:
        trace.append(best)
    for _ in range(config.max_iters):
        R = np.outer(psi, psi.conj())[None] * Z
        sol = solve_povm(R, gap_tol=config.gap_tol)
        if sol.objective <= best or P is None:
            P, cert, val = sol.elements, sol.certificate, sol.objective
        else:
            val = best
        trace.append(val)
        Q = np.einsum("ade,ade->de", P, Z.conj())
        w, V = np.linalg.eigh(0.5 * (Q + Q.conj().T))
        new_val = float(w[0])
        if new_val < val:
            psi = _canonical_phase(V[:, 0])
        else:
            new_val = val
        trace.append(new_val)
        improvement = best - new_val
        best = min(best, new_val)
        if improvement < config.tol:
            break
    if cert is None:
        cert = certify(P, np.outer(psi, psi.conj())[None] * Z)
    return psi, P, best, cert, tuple(trace)


def seesaw(cost: CostTable, n_atoms: int, config: OptimizerConfig = OptimizerConfig(),
           seed=None, initial_states=()) -> SdpSolution:
    """Alternate exact POVM and state minimization; keep the best of several starts.

    Parameters
    ----------
    cost : CostTable
        Fixed labels ``g`` are taken from the table.
    n_atoms : int
    config : OptimizerConfig
        ``starts`` random complex initial states are tried in addition to
        ``initial_states``.
    seed
        Seed for the random starting states.
    initial_states : iterable of PureState or InterrogationAlgorithm
        Warm starts; an algorithm also seeds the POVM.
    """
    rng = np.random.default_rng(seed)
    starts = []
    for s in initial_states:
        if isinstance(s, InterrogationAlgorithm):
            starts.append((s.state.amplitudes, _pad_povm(s.povm.elements, cost.n_outcomes)))
        else:
            starts.append((s.amplitudes, None))
    for _ in range(config.starts):
        starts.append((_random_state(rng, n_atoms), None))
    if not starts:
        raise ValueError("seesaw needs at least one starting state")
    best = None
    for psi0, P0 in starts:
        out = _run_seesaw(cost, n_atoms, psi0, P0, config)
        if best is None or out[2] < best[2]:
            best = out
    psi, P, val, cert, trace = best
    alg = InterrogationAlgorithm(PureState.normalized(psi, n_atoms, True), Povm(P), cost.g, "adaptive")
    return SdpSolution(alg, val, cert, trace)


def _pad_povm(P: np.ndarray, n_outcomes: int) -> np.ndarray:
    if P.shape[0] > n_outcomes:
        raise ValueError("warm-start POVM has more outcomes than the cost table")
    out = np.zeros((n_outcomes,) + P.shape[1:], dtype=complex)
    out[: P.shape[0]] = P
    return out


def posterior_labels(alg: InterrogationAlgorithm, cost: CostTable, min_prob: float = 1e-12) -> np.ndarray:
    """``g'_a = E(theta - E theta + omega T | a)``; outcomes with ``p(a) < min_prob`` keep their label."""
    from .quantum import outcome_probs

    lik = outcome_probs(alg, cost.phase_omegas, cost.T)  # (J, A)
    joint = cost.priors[:, None] * lik
    pa = joint.sum(axis=0)
    x = cost.omegas * cost.T + cost.phase_terms
    g = alg.g.copy()
    ok = pa >= min_prob
    g[ok] = (joint[:, ok] * x[:, None]).sum(axis=0) / pa[ok]
    return g


def relabel(cost: CostTable, g) -> CostTable:
    return build_cost((cost.omegas, cost.priors), cost.phase_terms, cost.T, g, cost.evolution)


def delta_v(alg: InterrogationAlgorithm, cost: CostTable) -> float:
    """Expected posterior-variance increase of the phase for ``alg`` (labels re-optimized)."""
    g = posterior_labels(alg, cost)
    return expected_cost(alg.with_labels(g), relabel(cost, g))


def refine_g(sol: SdpSolution, cost: CostTable, n_atoms: int, config: OptimizerConfig = OptimizerConfig()):
    """One round of label refinement followed by a warm-started re-solve.

    Returns ``(new_cost, new_solution)``; the new objective never exceeds
    the old one.
    """
    g_new = posterior_labels(sol.algorithm, cost)
    new_cost = relabel(cost, g_new)
    warm = sol.algorithm.with_labels(g_new)
    out = seesaw(new_cost, n_atoms, replace(config, starts=0), initial_states=[warm])
    if out.objective > sol.objective:
        # cannot happen beyond solver tolerance: relabeling alone already lowers the cost
        start_val = expected_cost(warm, new_cost)
        out = SdpSolution(warm, start_val, out.certificate, out.trace)
    return new_cost, out


def default_labels(omegas: np.ndarray, T: float, n_outcomes: int | None) -> np.ndarray:
    if n_outcomes is None or n_outcomes == omegas.size:
        return omegas * T
    return np.linspace(omegas.min(), omegas.max(), n_outcomes) * T


def ramsey_delta_v(cost: CostTable, n_atoms: int, phases) -> np.ndarray:
    """``delta_v`` of Ramsey interrogations at each measurement phase, vectorized.

    Ramsey counts are binomial in ``q = (1 + sin(omega T - phase)) / 2``.
    With posterior labels the cost is ``E x^2 - sum_a (E x 1_a)^2 / p(a) - E c^2``
    where ``x = omega T + c``.
    """
    phases = np.atleast_1d(np.asarray(phases, dtype=float))
    q = 0.5 * (1.0 + np.sin(cost.phase_omegas[None, :] * cost.T - phases[:, None]))  # (F, J)
    lik = stats.binom.pmf(np.arange(n_atoms + 1)[None, None, :], n_atoms, q[..., None])  # (F, J, A)
    x = cost.omegas * cost.T + cost.phase_terms
    pw = cost.priors[None, :, None] * lik
    pa = pw.sum(axis=1)
    sx = (pw * x[None, :, None]).sum(axis=1)
    explained = np.where(pa > 1e-300, sx**2 / np.where(pa > 1e-300, pa, 1.0), 0.0).sum(axis=1)
    return np.sum(cost.priors * x**2) - explained - np.sum(cost.priors * cost.phase_terms**2)


def best_phase_ramsey(cost: CostTable, n_atoms: int, n_phases: int = 64, center: float | None = None):
    """Ramsey algorithm with the measurement phase minimizing ``delta_v``.

    A uniform phase scan is polished by a bounded scalar search around the
    best scan point.  Returns ``(algorithm_with_posterior_labels, delta_v)``.
    """
    if center is None:
        center = float(np.sum(cost.priors * cost.phase_omegas) * cost.T)
    phases = center + np.linspace(-np.pi, np.pi, n_phases, endpoint=False)
    vals = ramsey_delta_v(cost, n_atoms, phases)
    k = int(np.argmin(vals))
    step = 2 * np.pi / n_phases
    res = optimize.minimize_scalar(lambda ph: float(ramsey_delta_v(cost, n_atoms, ph)[0]),
                                   bounds=(phases[k] - step, phases[k] + step), method="bounded",
                                   options={"xatol": 1e-10})
    phase = float(res.x) if res.fun < vals[k] else float(phases[k])
    alg = ramsey_algorithm(n_atoms, phase, symmetric=True)
    alg = alg.with_labels(posterior_labels(alg, cost))
    return alg, expected_cost(alg, relabel(cost, alg.g))


def optimize_interrogation(omegas, priors, phase_terms, T: float, n_atoms: int,
                           config: OptimizerConfig = OptimizerConfig(), seed=None,
                           warm_starts=(), evolution_omegas=None) -> SdpSolution:
    """Full per-interrogation optimization: multistart seesaw, then label refinement.

    ``warm_starts`` may hold states or algorithms (e.g. the previous step's
    optimum or a Ramsey interrogation).  Algorithms are relabeled with their
    posterior labels and padded to the configured number of outcomes.  The
    returned algorithm carries self-consistent labels, so its objective is
    its expected posterior-variance increase.
    """
    omegas = np.asarray(omegas, dtype=float)
    g0 = default_labels(omegas, T, config.n_outcomes)
    cost = build_cost((omegas, priors), phase_terms, T, g0, evolution_omegas)
    n_out = cost.n_outcomes

    def polish(sol: SdpSolution) -> SdpSolution:
        c = relabel(cost, sol.algorithm.g)
        trace = list(sol.trace)
        for _ in range(config.refine_rounds):
            c, new = refine_g(sol, c, n_atoms, config)
            trace.extend(new.trace)
            improved = sol.objective - new.objective
            sol = new
            if improved < config.tol:
                break
        g_final = posterior_labels(sol.algorithm, c)
        alg = sol.algorithm.with_labels(g_final)
        return SdpSolution(alg, expected_cost(alg, relabel(cost, g_final)), sol.certificate, tuple(trace))

    best = None
    states = [s for s in warm_starts if isinstance(s, PureState)]
    if states or config.starts > 0:
        best = polish(seesaw(cost, n_atoms, config, seed=seed, initial_states=states))

    # Warm algorithms are scored as they are (with posterior labels) and only
    # seesawed from when that already beats the incumbent.  Each one remains a
    # candidate, so the result never does worse than any warm start.
    warm = []
    candidates = list(warm_starts)
    if config.ramsey_phases > 0 and n_atoms + 1 <= n_out:
        # guarantees the result is never worse than the best Ramsey interrogation
        candidates.append(best_phase_ramsey(cost, n_atoms, config.ramsey_phases)[0])
    for alg in candidates:
        if not isinstance(alg, InterrogationAlgorithm) or alg.n_outcomes > n_out:
            continue
        g = np.concatenate([posterior_labels(alg, cost), g0[alg.n_outcomes:]])
        padded = InterrogationAlgorithm(alg.state, Povm(_pad_povm(alg.povm.elements, n_out)), g, alg.name)
        padded = padded.with_labels(posterior_labels(padded, cost))
        c = relabel(cost, padded.g)
        warm.append((expected_cost(padded, c), padded, c))
    warm.sort(key=lambda item: item[0])
    for val, padded, c in warm:
        if best is None or val < best.objective - config.tol:
            sol = polish(seesaw(c, n_atoms, replace(config, starts=0), initial_states=[padded]))
        else:
            R = cost_operators(c, padded.state)
            sol = SdpSolution(padded, val, certify(padded.povm.elements, R))
        if best is None or sol.objective < best.objective:
            best = sol
    if best is None:
        raise ValueError("no starting point: set config.starts > 0 or pass warm starts")
    return best
