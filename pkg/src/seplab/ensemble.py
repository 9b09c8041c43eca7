"""Monte Carlo estimation over independent trajectories: running-supremum and
per-time moments, exponential decay fits, time-averaged observables, and the
tail bound sanity check.

Reproducibility contract: trajectory i draws from a generator seeded by
(master_seed, i) only, so the ensemble is bit-identical for any worker count
and any execution order. Failures abort the whole ensemble and name the
failed trajectory indices so the exact runs can be replayed.
"""

from __future__ import annotations

import multiprocessing as mp
from dataclasses import dataclass

import numpy as np

from .eos import PressureLaw
from .grid import Grid
from .integrator import (
    Perturbation,
    StepConfig,
    Trajectory,
    TrajectoryBlowup,
    initial_state,
    simulate,
)
from .noise import NoiseModel
from .steady import SteadyState

__all__ = [
    "TrajectoryProblem",
    "EnsembleStats",
    "EnsembleError",
    "DecayFit",
    "KBAverage",
    "ChebyshevReport",
    "run_ensemble",
    "fit_decay",
    "kb_average",
    "chebyshev_check",
    "PSI_OBSERVABLES",
]

# spawn key reserved for the bootstrap stream; trajectory keys are 0..M-1
_BOOTSTRAP_KEY = 1 << 20


class EnsembleError(RuntimeError):
    """Raised when trajectories blow up; lists indices for exact replay."""

    def __init__(self, failures, master_seed):
        self.failures = failures
        self.master_seed = master_seed
        detail = "; ".join(
            f"trajectory {idx} (seed ({master_seed},{idx})): {msg}" for idx, msg in failures
        )
        super().__init__(f"{len(failures)} trajectories blew up: {detail}")


@dataclass(frozen=True)
class TrajectoryProblem:
    """Immutable bundle describing one stochastic run; shared by all workers."""

    grid: Grid
    law: PressureLaw
    doping: np.ndarray
    steady: SteadyState
    noise: NoiseModel
    step: StepConfig
    perturbation: Perturbation
    t_end: float
    record_stride: int = 1
    tau: float = 1.0

    def trajectory(self, rng) -> Trajectory:
        init = initial_state(
            self.grid, self.law, self.doping, self.steady, self.perturbation,
            rho_floor=self.step.rho_floor, tau=self.tau,
        )
        return simulate(
            self.grid, self.law, self.doping, self.steady, init, self.t_end,
            self.step, self.noise, rng, self.record_stride,
        )


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=master_seed, spawn_key=(index,))
    )


@dataclass
class EnsembleStats:
    """Moment estimates over record times for each configured order.

    sup_* follow the running supremum of the combined norm (nondecreasing in
    t by construction); pointwise_* are the per-time moments, the series the
    decay fits use. Standard errors come from a bootstrap over trajectories.
    """

    times: np.ndarray
    orders: tuple
    sup_moments: dict
    sup_stderr: dict
    pointwise_moments: dict
    pointwise_stderr: dict
    sup_final: np.ndarray  # per-trajectory overall supremum, shape (M,)
    n_trajectories: int
    master_seed: int

    def moment(self, m: int, kind: str = "pointwise") -> np.ndarray:
        table = self.pointwise_moments if kind == "pointwise" else self.sup_moments
        return table[m]


_WORKER_STATE: dict = {}


def _worker_init(problem, master_seed):
    _WORKER_STATE["problem"] = problem
    _WORKER_STATE["master_seed"] = master_seed


def _worker_run(index):
    problem = _WORKER_STATE["problem"]
    master_seed = _WORKER_STATE["master_seed"]
    try:
        traj = problem.trajectory(trajectory_rng(master_seed, index))
    except TrajectoryBlowup as err:
        return index, "blowup", str(err), None
    return index, "ok", traj.times, traj.combined


def run_ensemble(problem: TrajectoryProblem, n_trajectories: int, master_seed: int,
                 workers: int = 1, orders=(1, 2), bootstrap: int = 200) -> EnsembleStats:
    """Estimate moments of the combined norm over independent trajectories.

    Deterministic in (problem, n_trajectories, master_seed, orders, bootstrap)
    regardless of workers; results land in index-assigned slots.
    """
    if n_trajectories < 2:
        raise ValueError("need at least two trajectories")
    orders = tuple(int(m) for m in orders)
    if any(m < 1 for m in orders):
        raise ValueError("moment orders must be positive integers")

    indices = range(n_trajectories)
    if workers <= 1:
        _worker_init(problem, master_seed)
        outcomes = [_worker_run(i) for i in indices]
    else:
        ctx = mp.get_context("fork")
        chunk = max(1, n_trajectories // (4 * workers))
        with ctx.Pool(workers, initializer=_worker_init,
                      initargs=(problem, master_seed)) as pool:
            outcomes = pool.map(_worker_run, indices, chunksize=chunk)

    failures = [(idx, msg) for idx, status, msg, _ in outcomes if status == "blowup"]
    if failures:
        raise EnsembleError(failures, master_seed)

    times = outcomes[0][2]
    combined = np.empty((n_trajectories, times.size))
    for idx, _, t, series in outcomes:
        if not np.array_equal(t, times):
            raise RuntimeError("trajectories recorded on different time grids")
        combined[idx] = series

    running_sup = np.maximum.accumulate(combined, axis=1)
    boot_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=master_seed, spawn_key=(_BOOTSTRAP_KEY,))
    )
    resamples = boot_rng.integers(0, n_trajectories, size=(bootstrap, n_trajectories))

    sup_moments, sup_stderr, pt_moments, pt_stderr = {}, {}, {}, {}
    for m in orders:
        sup_pow = running_sup**m
        pt_pow = combined**m
        sup_moments[m] = sup_pow.mean(axis=0)
        pt_moments[m] = pt_pow.mean(axis=0)
        sup_stderr[m] = sup_pow[resamples].mean(axis=1).std(axis=0, ddof=1)
        pt_stderr[m] = pt_pow[resamples].mean(axis=1).std(axis=0, ddof=1)

    return EnsembleStats(
        times=times,
        orders=orders,
        sup_moments=sup_moments,
        sup_stderr=sup_stderr,
        pointwise_moments=pt_moments,
        pointwise_stderr=pt_stderr,
        sup_final=running_sup[:, -1],
        n_trajectories=n_trajectories,
        master_seed=master_seed,
    )


@dataclass(frozen=True)
class DecayFit:
    """Least-squares slope of log(moment) against time over a window."""

    m: int
    alpha_hat: float
    log_C: float
    r2: float
    window: tuple
    source: str
    degenerate: bool = False


def fit_decay(stats: EnsembleStats, m: int, window, source: str = "pointwise") -> DecayFit:
    """Fit moment[m](t) ~ C exp(-alpha_hat t) on the window by log regression.

    The running-supremum series is nondecreasing by construction, so genuine
    decay estimates come from the pointwise series (the default); fitting the
    sup series is allowed for boundedness checks and reports alpha_hat <= 0.
    """
    lo, hi = float(window[0]), float(window[1])
    mask = (stats.times >= lo) & (stats.times <= hi)
    if int(mask.sum()) < 3:
        raise ValueError("need at least three record times inside the window")
    values = stats.moment(m, source)[mask]
    if np.any(values <= 0.0):
        raise ValueError(
            "nonpositive moment inside the fit window (machine floor reached?); "
            "shrink the window"
        )
    t = stats.times[mask]
    y = np.log(values)
    slope, intercept = np.polyfit(t, y, 1)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return DecayFit(m, 0.0, float(intercept), float("nan"), (lo, hi), source, True)
    ss_res = float(np.sum((y - (slope * t + intercept)) ** 2))
    r2 = 1.0 - ss_res / ss_tot
    return DecayFit(m, float(-slope), float(intercept), float(r2), (lo, hi), source)


def _psi_exp(traj: Trajectory) -> np.ndarray:
    return np.exp(-traj.combined)


def _psi_tanh(traj: Trajectory) -> np.ndarray:
    return np.tanh(traj.sigma_norms[:, 0])


#: bounded observables usable in time averages: name -> (series fn, value at rest)
PSI_OBSERVABLES = {
    "psi_exp": (_psi_exp, 1.0),
    "psi_tanh": (_psi_tanh, 0.0),
}


@dataclass(frozen=True)
class KBAverage:
    psi_id: str
    horizon: float
    average: float
    target: float
    gap: float


def kb_average(traj: Trajectory, psi_id: str, horizon: float | None = None) -> KBAverage:
    """Left-endpoint time average of a bounded observable along one run.

    The gap to the observable's rest value contracts like 1/T once the path
    has settled, which is the contraction the time-averaged law exhibits.
    """
    if psi_id not in PSI_OBSERVABLES:
        raise KeyError(f"unknown observable {psi_id!r}; have {sorted(PSI_OBSERVABLES)}")
    series_of, target = PSI_OBSERVABLES[psi_id]
    horizon = float(traj.times[-1]) if horizon is None else float(horizon)
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    if horizon > traj.times[-1] + 1e-12:
        raise ValueError("horizon exceeds the recorded trajectory")
    values = series_of(traj)
    t = traj.times
    upper = np.minimum(np.append(t[1:], horizon), horizon)
    weights = np.maximum(upper - np.minimum(t, horizon), 0.0)
    average = float(np.sum(weights * values) / horizon)
    return KBAverage(psi_id, horizon, average, target, abs(average - target))


@dataclass(frozen=True)
class ChebyshevReport:
    threshold: float
    m: int
    empirical: float
    bound: float
    stderr: float
    passed: bool


def chebyshev_check(stats: EnsembleStats, threshold: float, m: int) -> ChebyshevReport:
    """Empirical exceedance of the overall supremum against the moment bound.

    P[sup > a] <= E[sup^m]/a^m; the empirical fraction may sit above the bound
    only by binomial sampling noise (three standard errors).
    """
    if threshold <= 0.0:
        raise ValueError("threshold must be positive")
    M = stats.n_trajectories
    empirical = float(np.mean(stats.sup_final > threshold))
    bound = float(stats.sup_moments[m][-1] / threshold**m)
    stderr = float(np.sqrt(empirical * (1.0 - empirical) / M))
    passed = empirical <= bound + 3.0 * stderr
    return ChebyshevReport(threshold, m, empirical, bound, stderr, passed)
