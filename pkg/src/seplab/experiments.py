"""Experiment orchestration: build the problem from a config and run one of
the four laboratory procedures, returning plain tabular results.

The same entry points back both the HTTP service and the command line, so a
config fully determines every emitted value regardless of the transport.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError, ExperimentConfig
from .ensemble import (
    TrajectoryProblem,
    chebyshev_check,
    fit_decay,
    kb_average,
    run_ensemble,
    trajectory_rng,
)
from .eos import PressureLaw
from .grid import Grid
from .integrator import Perturbation, StepConfig, initial_state, simulate
from .noise import NoiseModel
from .steady import SteadyState, constant_doping, cosine_doping, solve_steady

__all__ = [
    "Table",
    "SteadyOutcome",
    "RunOutcome",
    "EnsembleOutcome",
    "MeasureOutcome",
    "build_grid",
    "build_law",
    "build_doping",
    "build_noise",
    "steady_of",
    "build_problem",
    "steady_experiment",
    "run_experiment",
    "ensemble_experiment",
    "measure_experiment",
]


@dataclass
class Table:
    columns: list
    rows: list

    def as_dict(self):
        return {"columns": list(self.columns), "rows": [list(r) for r in self.rows]}


@dataclass
class SteadyOutcome:
    summary: dict
    fields: Table


@dataclass
class RunOutcome:
    summary: dict
    trajectory: Table


@dataclass
class EnsembleOutcome:
    summary: dict
    moments: Table
    moments_pointwise: Table
    fits: list = field(default_factory=list)


@dataclass
class MeasureOutcome:
    summary: dict
    averages: Table


def build_grid(cfg: ExperimentConfig) -> Grid:
    return Grid(cfg.grid.dim, cfg.grid.n, cfg.grid.length)


def build_law(cfg: ExperimentConfig) -> PressureLaw:
    return PressureLaw(K=cfg.pressure.K, gamma=cfg.pressure.gamma)


def build_doping(cfg: ExperimentConfig, grid: Grid) -> np.ndarray:
    if cfg.doping.kind == "constant":
        return constant_doping(grid, cfg.doping.base)
    return cosine_doping(grid, cfg.doping.base, cfg.doping.amp)


def build_noise(cfg: ExperimentConfig) -> NoiseModel:
    if cfg.noise.kind == "off" or cfg.noise.eps == 0.0:
        return NoiseModel.off(dim=cfg.grid.dim)
    return NoiseModel.geometric(
        modes=cfg.noise.K, kind=cfg.noise.kind, eps=cfg.noise.eps, dim=cfg.grid.dim
    )


def steady_of(cfg: ExperimentConfig, grid: Grid, law: PressureLaw,
              doping: np.ndarray) -> SteadyState:
    return solve_steady(
        grid, law, doping,
        tol=cfg.steady.tol, max_iter=cfg.steady.max_iter, theta=cfg.steady.theta,
    )


def master_seed(cfg: ExperimentConfig) -> int:
    return cfg.seed if cfg.noise.seed is None else cfg.noise.seed


def default_workers(cfg: ExperimentConfig) -> int:
    if cfg.workers is not None:
        return cfg.workers
    return max(1, len(os.sched_getaffinity(0)))


def build_problem(cfg: ExperimentConfig, command: str = "run",
                  t_end: float | None = None) -> TrajectoryProblem:
    cfg.require_stepping(command)
    grid = build_grid(cfg)
    law = build_law(cfg)
    doping = build_doping(cfg, grid)
    steady = steady_of(cfg, grid, law, doping)
    return TrajectoryProblem(
        grid=grid,
        law=law,
        doping=doping,
        steady=steady,
        noise=build_noise(cfg),
        step=StepConfig(
            dt=cfg.step.dt, cfl=cfg.step.cfl,
            rho_floor=cfg.step.rho_floor, scheme=cfg.step.scheme,
        ),
        perturbation=Perturbation(cfg.perturbation.kind, cfg.perturbation.eps),
        t_end=cfg.t_end if t_end is None else t_end,
        record_stride=cfg.record_stride,
        tau=cfg.tau,
    )


def steady_experiment(cfg: ExperimentConfig) -> SteadyOutcome:
    grid = build_grid(cfg)
    law = build_law(cfg)
    doping = build_doping(cfg, grid)
    ss = steady_of(cfg, grid, law, doping)
    axis_names = ("x", "y", "z")[: grid.dim]
    coords = [c.ravel() for c in grid.coords()]
    rho = ss.rho.ravel()
    phi = ss.phi.ravel()
    rows = [
        [*(float(c[i]) for c in coords), float(rho[i]), float(phi[i])]
        for i in range(grid.num_nodes)
    ]
    summary = {
        "residual": ss.residual,
        "iterations": ss.iterations,
        "mass_defect": ss.mass_defect,
        "min_rho": ss.min_rho,
    }
    return SteadyOutcome(summary, Table([*axis_names, "rho", "phi"], rows))


def run_experiment(cfg: ExperimentConfig) -> RunOutcome:
    problem = build_problem(cfg, "run")
    traj = problem.trajectory(trajectory_rng(master_seed(cfg), 0))
    summary = {
        "n_steps": traj.n_steps,
        "n_cfl_clamps": traj.n_cfl_clamps,
        "n_halvings": traj.n_halvings,
        "final_combined": float(traj.combined[-1]),
        "seed": master_seed(cfg),
    }
    return RunOutcome(summary, Table(list(traj.columns), list(traj.rows())))


def ensemble_experiment(cfg: ExperimentConfig) -> EnsembleOutcome:
    problem = build_problem(cfg, "ensemble")
    workers = default_workers(cfg)
    seed = master_seed(cfg)
    section = cfg.ensemble
    stats = run_ensemble(
        problem, section.trajectories, seed,
        workers=workers, orders=tuple(section.m_orders), bootstrap=section.bootstrap,
    )
    window = section.fit_window or (0.1 * problem.t_end, problem.t_end)

    def moment_rows(kind):
        rows = []
        for m in stats.orders:
            est = stats.moment(m, kind)
            err = (stats.sup_stderr if kind == "running_sup" else stats.pointwise_stderr)[m]
            rows.extend(
                [float(t), float(m), float(e), float(s)]
                for t, e, s in zip(stats.times, est, err)
            )
        return rows

    fits = []
    for m in stats.orders:
        fit = fit_decay(stats, m, window, source=section.fit_source)
        fits.append(
            {
                "m": fit.m,
                "alpha_hat": fit.alpha_hat,
                "log_C": fit.log_C,
                "r2": None if np.isnan(fit.r2) else fit.r2,
                "window": list(fit.window),
                "source": fit.source,
                "degenerate": fit.degenerate,
            }
        )
    median_sup = float(np.median(stats.sup_final))
    cheb = chebyshev_check(stats, 4.0 * median_sup, m=stats.orders[0]) \
        if median_sup > 0 else None
    summary = {
        "trajectories": stats.n_trajectories,
        "master_seed": seed,
        "workers": workers,
        "median_sup": median_sup,
        "chebyshev": None
        if cheb is None
        else {
            "threshold": cheb.threshold,
            "m": cheb.m,
            "empirical": cheb.empirical,
            "bound": cheb.bound,
            "stderr": cheb.stderr,
            "passed": cheb.passed,
        },
    }
    columns = ["t", "m", "estimate", "stderr"]
    return EnsembleOutcome(
        summary,
        Table(columns, moment_rows("running_sup")),
        Table(columns, moment_rows("pointwise")),
        fits,
    )


def measure_experiment(cfg: ExperimentConfig) -> MeasureOutcome:
    horizon = max(cfg.measure.horizons)
    if cfg.t_end is not None and cfg.t_end < horizon:
        raise ConfigError("t_end is shorter than the largest measure horizon")
    t_end = cfg.t_end if cfg.t_end is not None else horizon
    problem = build_problem(cfg, "measure", t_end=t_end)
    traj = problem.trajectory(trajectory_rng(master_seed(cfg), 0))
    rows = []
    for T in cfg.measure.horizons:
        kb = kb_average(traj, cfg.measure.psi, horizon=T)
        rows.append([float(T), kb.psi_id, kb.average, kb.target, kb.gap])
    summary = {
        "psi": cfg.measure.psi,
        "t_end": t_end,
        "seed": master_seed(cfg),
        "n_steps": traj.n_steps,
    }
    return MeasureOutcome(summary, Table(["T", "psi_id", "avg", "target", "gap"], rows))
