"""Monte Carlo clocks: adaptive, Ramsey and Buzek interrogation against sampled noise.

Every run draws its true frequency trajectory from ``SeedSequence([seed, run])``,
so the same run index sees the same oscillator under every protocol.  Outcome
draws and optimizer restarts use ``SeedSequence([seed, run, protocol_id])``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache

import numpy as np

from .noise import IntervalGrid, NoiseModel, diff_cov_matrix, sample_trajectory
from .optimizer import OptimizerConfig, optimize_interrogation
from .quantum import buzek_algorithm, outcome_probs, ramsey_algorithm
from .timing import TimingConfig, effective_phase, reparameterize, sample_duration
from .tracker import (
    GaussianTransition,
    TrackerConfig,
    condition_on,
    expected_variance_increase,
    extend_prior,
    initial_belief,
    phase_statistics,
    truncate,
    update_moments,
)

__all__ = [
    "PROTOCOLS",
    "CLOCK_OPTIMIZER",
    "SimConfig",
    "RunRecord",
    "Metrics",
    "run_clock",
    "run_protocol",
    "allan_variance",
    "allan_curve",
    "square_freq_error",
    "compute_metrics",
    "Improvement",
    "compare_protocols",
]

PROTOCOLS = ("adaptive", "ramsey", "buzek")
PROTOCOL_ID = {name: i for i, name in enumerate(PROTOCOLS)}

# warm-started per-step optimizer; eight outcomes lose nothing measurable for N <= 3
CLOCK_OPTIMIZER = OptimizerConfig(n_outcomes=8, starts=0, tol=1e-6, refine_rounds=1)


@dataclass(frozen=True)
class SimConfig:
    atoms: int
    protocol: str
    noise: NoiseModel
    T: float = 1.0
    interrogations: int = 100
    runs: int = 100
    seed: int = 0
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    optimizer: OptimizerConfig = CLOCK_OPTIMIZER
    first_step_starts: int = 2
    buzek_outcomes: int | None = None
    timing: TimingConfig | None = None

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}; choose from {PROTOCOLS}")
        if self.atoms < 1:
            raise ValueError("need at least one atom")
        if self.interrogations < 2:
            raise ValueError("need at least two interrogations")
        if self.runs < 1:
            raise ValueError("need at least one run")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.tracker.T != self.T:
            object.__setattr__(self, "tracker", replace(self.tracker, T=self.T))


@dataclass(frozen=True)
class RunRecord:
    """Per-step history of one clock.  Arrays have length ``M``."""

    protocol: str
    run_index: int
    true_omegas: np.ndarray
    estimates: np.ndarray  # posterior mean of omega_n after measurement n
    predicted: np.ndarray  # prior mean of omega_n before measurement n
    outcomes: np.ndarray
    phase_truth: np.ndarray
    phase_estimates: np.ndarray
    phase_variances: np.ndarray
    delta_v: np.ndarray
    expected_costs: np.ndarray
    phase_slips: np.ndarray
    durations: np.ndarray | None = None

    _ARRAYS = ("true_omegas", "estimates", "predicted", "outcomes", "phase_truth", "phase_estimates",
               "phase_variances", "delta_v", "expected_costs", "phase_slips", "durations")

    def __post_init__(self):
        M = len(self.true_omegas)
        for name in self._ARRAYS:
            v = getattr(self, name)
            if v is not None and len(v) != M:
                raise ValueError(f"{name} has length {len(v)}, expected {M}")

    @property
    def M(self) -> int:
        return len(self.true_omegas)

    def to_dict(self) -> dict:
        out = {"protocol": self.protocol, "run_index": self.run_index}
        for name in self._ARRAYS:
            v = getattr(self, name)
            out[name] = None if v is None else np.asarray(v).tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        kw = {"protocol": d["protocol"], "run_index": int(d["run_index"])}
        for name in cls._ARRAYS:
            v = d.get(name)
            if v is None:
                kw[name] = None
            elif name == "outcomes":
                kw[name] = np.asarray(v, dtype=int)
            elif name == "phase_slips":
                kw[name] = np.asarray(v, dtype=bool)
            else:
                kw[name] = np.asarray(v, dtype=float)
        return cls(**kw)


@lru_cache(maxsize=8)
def _covariance(noise: NoiseModel, M: int, T: float) -> np.ndarray:
    return diff_cov_matrix(noise, IntervalGrid.uniform(M, T)).matrix


def _rng(cfg: SimConfig, run_index: int, stream: int | None) -> np.random.Generator:
    key = [cfg.seed, run_index] if stream is None else [cfg.seed, run_index, stream]
    return np.random.default_rng(np.random.SeedSequence(key))


def sample_truth(cfg: SimConfig, run_index: int) -> np.ndarray:
    """True average frequencies for a run; identical across protocols."""
    return sample_trajectory(_covariance(cfg.noise, cfg.interrogations, cfg.T), _rng(cfg, run_index, None))


def run_clock(cfg: SimConfig, run_index: int) -> RunRecord:
    """Simulate one clock for ``cfg.interrogations`` steps; deterministic in ``(seed, run_index)``."""
    M, T, N = cfg.interrogations, cfg.T, cfg.atoms
    truth = sample_truth(cfg, run_index)
    rng = _rng(cfg, run_index, PROTOCOL_ID[cfg.protocol] + 1)
    C = _covariance(cfg.noise, M, T)
    transition = GaussianTransition(C, cfg.tracker.P, cfg.tracker.span)
    belief = initial_belief(cfg.tracker)
    K_buzek = cfg.buzek_outcomes or N + 1
    timing = cfg.timing

    cols = {k: np.zeros(M) for k in ("est", "pred", "pt", "pe", "pv", "dv", "ec", "dur")}
    outcomes = np.zeros(M, dtype=int)
    slips = np.zeros(M, dtype=bool)
    prev = None
    theta = 0.0
    for n in range(M):
        prior = extend_prior(belief, transition)
        st = phase_statistics(prior)
        nodes = prior.joint.axes[-1]
        mu = float(np.sum(st.node_probs * nodes))
        evol = None
        if timing is not None and timing.reparameterize:
            evol = reparameterize(nodes, mu, timing.Omega)
        if cfg.protocol == "adaptive":
            warm = [ramsey_algorithm(N, mu * T, symmetric=True)]
            if prev is not None:
                warm.append(prev)
            opt = cfg.optimizer if prev is not None else replace(cfg.optimizer, starts=cfg.first_step_starts)
            sol = optimize_interrogation(nodes, st.node_probs, st.centered, T, N, opt,
                                         seed=int(rng.integers(2**32)), warm_starts=warm,
                                         evolution_omegas=evol)
            alg, cost = sol.algorithm, sol.objective
            prev = alg
        elif cfg.protocol == "ramsey":
            alg, cost = ramsey_algorithm(N, mu * T, symmetric=True), math.nan
        else:
            alg, cost = buzek_algorithm(N, mu * T - np.pi / K_buzek, K_buzek), math.nan
        L = outcome_probs(alg, nodes if evol is None else evol, T)
        dv = expected_variance_increase(prior, alg, T, likelihood=L)

        w_true = truth[n]
        if timing is not None:
            s = sample_duration(timing, T, rng)
            cols["dur"][n] = s
            p_true = outcome_probs(alg, effective_phase(w_true, mu, s, T, timing) / T, T)
        else:
            p_true = outcome_probs(alg, w_true, T)
        a = int(rng.choice(alg.n_outcomes, p=p_true))

        post = update_moments(condition_on(prior, L[:, a], a), T)
        est = post.frequency_mean()
        theta += w_true * T
        ps = phase_statistics(post)
        cols["est"][n], cols["pred"][n] = est, mu
        cols["pt"][n], cols["pe"][n], cols["pv"][n] = theta, ps.mean, ps.variance
        cols["dv"][n] = dv
        cols["ec"][n] = dv if math.isnan(cost) else cost
        outcomes[n] = a
        slips[n] = abs(est - w_true) * T >= np.pi
        belief = truncate(post)

    return RunRecord(cfg.protocol, run_index, truth, cols["est"], cols["pred"], outcomes,
                     cols["pt"], cols["pe"], cols["pv"], cols["dv"], cols["ec"], slips,
                     cols["dur"] if timing is not None else None)


def _run_one(args):
    cfg, r = args
    return run_clock(cfg, r)


def run_protocol(cfg: SimConfig, run_indices=None, threads: int = 1) -> list[RunRecord]:
    """All runs of one protocol, in run order.  ``threads > 1`` uses worker processes."""
    idx = list(range(cfg.runs)) if run_indices is None else list(run_indices)
    if threads <= 1:
        return [run_clock(cfg, r) for r in idx]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_run_one, [(cfg, r) for r in idx]))


# ---------------------------------------------------------------- metrics

def allan_variance(values, m: int) -> float:
    """Overlapping Allan variance at averaging factor ``m``."""
    y = np.asarray(values, dtype=float)
    M = y.size
    if m < 1 or M < 2 * m:
        raise ValueError(f"averaging factor m={m} needs at least {2 * m} samples, have {M}")
    # window means rather than cumulative-sum differences: a constant series gives exactly zero
    avg = np.lib.stride_tricks.sliding_window_view(y, m).mean(axis=1)  # avg[k] = mean of y[k:k+m]
    d = avg[m:] - avg[:-m]
    return float(np.sum(d * d) / (2.0 * (M - 2 * m + 1)))


def allan_curve(values) -> np.ndarray:
    """``allan_variance`` for ``m = 1 .. floor(M/2)``."""
    y = np.asarray(values, dtype=float)
    return np.array([allan_variance(y, m) for m in range(1, y.size // 2 + 1)])


def square_freq_error(record: RunRecord) -> np.ndarray:
    """Squared difference of the cumulative averages of estimated and true frequency."""
    n = np.arange(1, record.M + 1)
    return ((np.cumsum(record.estimates) - np.cumsum(record.true_omegas)) / n) ** 2


@dataclass(frozen=True)
class Metrics:
    """Run-averaged curves.

    ``allan`` is computed on the corrected clock's residual frequency
    ``omega - omega*``; ``allan_estimates`` on the raw estimates ``omega*``.
    """

    protocol: str
    runs: int
    sq_freq_error: np.ndarray
    allan: np.ndarray
    allan_estimates: np.ndarray
    phase_sq_error: np.ndarray
    phase_variance: np.ndarray
    slip_rate: float


def _per_run(records):
    sq = np.array([square_freq_error(r) for r in records])
    al = np.array([allan_curve(r.true_omegas - r.estimates) for r in records])
    ae = np.array([allan_curve(r.estimates) for r in records])
    return sq, al, ae


def compute_metrics(records) -> Metrics:
    records = list(records)
    if not records:
        raise ValueError("no run records")
    sq, al, ae = _per_run(records)
    pe = np.array([(r.phase_truth - r.phase_estimates) ** 2 for r in records])
    pv = np.array([r.phase_variances for r in records])
    slips = float(np.mean([r.phase_slips.mean() for r in records]))
    return Metrics(records[0].protocol, len(records), sq.mean(0), al.mean(0), ae.mean(0),
                   pe.mean(0), pv.mean(0), slips)


@dataclass(frozen=True)
class Improvement:
    baseline: str
    metric: str
    percent: float
    stderr: float

    def as_dict(self) -> dict:
        return asdict(self)


def _gain_sq(base, adapt, last):
    b, a = base.mean(0)[-last:], adapt.mean(0)[-last:]
    return float(np.mean(100.0 * (b - a) / b))


def _gain_allan(base, adapt):
    b, a = base.mean(0), adapt.mean(0)
    return float(np.mean(100.0 * (b - a) / b))


def compare_protocols(adaptive, baseline, last: int = 20, bootstrap: int = 200, seed: int = 0):
    """Percent improvement of ``adaptive`` over ``baseline`` records.

    Records are paired by run index.  Square-error gains are averaged over
    the last ``last`` steps, Allan-variance gains over all averaging factors;
    both are computed on run-averaged curves.  Standard errors come from a
    paired bootstrap over runs.
    """
    amap = {r.run_index: r for r in adaptive}
    bmap = {r.run_index: r for r in baseline}
    common = sorted(set(amap) & set(bmap))
    if not common:
        raise ValueError("no run indices shared by the two record sets")
    A = [amap[i] for i in common]
    B = [bmap[i] for i in common]
    sa, la, ea = _per_run(A)
    sb, lb, eb = _per_run(B)
    last = min(last, sa.shape[1])
    stats = {
        "square_error": lambda ix: _gain_sq(sb[ix], sa[ix], last),
        "allan_variance": lambda ix: _gain_allan(lb[ix], la[ix]),
        "allan_variance_estimates": lambda ix: _gain_allan(eb[ix], ea[ix]),
    }
    rng = np.random.default_rng(seed)
    n = len(common)
    draws = [rng.integers(0, n, n) for _ in range(bootstrap)]
    full = np.arange(n)
    base = B[0].protocol
    out = []
    for name, f in stats.items():
        boot = np.array([f(ix) for ix in draws]) if bootstrap > 1 else np.array([np.nan])
        out.append(Improvement(base, name, f(full), float(np.std(boot, ddof=1)) if bootstrap > 1 else math.nan))
    return out
