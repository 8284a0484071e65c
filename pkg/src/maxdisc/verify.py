"""Experiment runner: empirical joint CDFs of normalised maxima against the limits."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import EmptySamples, LadderTooShort, RegimeMismatch, ValidationError
from .extremes import (
    MaximaEngine,
    MaxSample,
    closed_form_pickands,
    normalize_maxima,
    normalizers,
    with_wrong_centering,
)
from .limits import LimitSpec, limit_cdf_many
from .model import (
    ComponentParams,
    GridSpec,
    Regime,
    build_model,
    check_horizon,
    classify_grid,
    default_rule,
)
from .pickands import build_H_table, estimate_H_alpha

DEFAULT_AXIS = (-1.0, 0.0, 1.0, 2.0)
FAULTS = (None, "center_at_aT")


def default_workers() -> int:
    env = os.environ.get("MAXDISC_WORKERS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValidationError(f"MAXDISC_WORKERS must be an integer, got {env!r}") from None
        if n < 1:
            raise ValidationError("MAXDISC_WORKERS must be >= 1")
        return n
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


@dataclass(frozen=True)
class PickandsOptions:
    reps: int = 20000
    lam: float = 64.0
    extrapolate: bool = True
    seed: int = 0


@dataclass
class ExperimentConfig:
    components: Sequence[ComponentParams]
    r_cross: Optional[object] = None
    allow_singular_latent: bool = False
    grid_rule: object = None
    log_T: Optional[float] = 8.0
    log_T_ladder: Optional[Sequence[float]] = None
    replications: int = 4000
    lattice_x: Sequence[float] = DEFAULT_AXIS
    lattice_y: Sequence[float] = DEFAULT_AXIS
    points: Optional[Sequence] = None  # explicit [(x_vec, y_vec), ...]
    seed: int = 0
    workers: Optional[int] = None
    pickands: PickandsOptions = field(default_factory=PickandsOptions)
    mesh_factor: float = 0.05
    skeleton_D: float = 1.0
    skip_eps: float = 1e-10
    fault: Optional[str] = None
    allowance: float = 0.04
    z_tol: float = 4.0

    def __post_init__(self):
        self.components = tuple(
            c if isinstance(c, ComponentParams) else ComponentParams(**c) for c in self.components
        )
        if self.replications < 100:
            raise ValidationError("at least 100 replications are required")
        if self.fault not in FAULTS:
            raise ValidationError(f"unknown fault {self.fault!r}")
        if self.points is None and (len(self.lattice_x) == 0 or len(self.lattice_y) == 0):
            raise ValidationError("evaluation lattice is empty")
        if self.points is not None and len(self.points) == 0:
            raise ValidationError("evaluation lattice is empty")
        for lt in [self.log_T] + list(self.log_T_ladder or []):
            if lt is not None and not lt > 2.0:
                raise ValidationError(f"ln T must exceed 2, got {lt!r}")
        if self.grid_rule is None:
            self.grid_rule = default_rule("sparse")

    @property
    def model(self):
        return build_model(self.components, self.r_cross, self.allow_singular_latent)

    def grid(self) -> GridSpec:
        specs = {classify_grid(self.grid_rule, c.alpha).regime for c in self.components}
        if len(specs) > 1:
            raise RegimeMismatch("the grid falls into different regimes for different components")
        return classify_grid(self.grid_rule, self.components[0].alpha)

    def lattice(self, p: int, corollary: bool = False):
        """Evaluation points as arrays ``(X, Y)`` of shape ``(npts, p)``."""
        if self.points is not None:
            X = np.array([np.broadcast_to(np.asarray(x, float), (p,)) for x, _ in self.points])
            Y = np.array([np.broadcast_to(np.asarray(y, float), (p,)) for _, y in self.points])
        elif corollary:
            X = np.repeat(np.asarray(self.lattice_x, float)[:, None], p, axis=1)
            Y = np.full_like(X, np.inf)
        else:
            xs, ys = np.meshgrid(np.asarray(self.lattice_x, float), np.asarray(self.lattice_y, float), indexing="ij")
            X = np.repeat(xs.ravel()[:, None], p, axis=1)
            Y = np.repeat(ys.ravel()[:, None], p, axis=1)
        if corollary:
            Y = np.full_like(X, np.inf)
        return X, Y


@dataclass
class PointResult:
    x: list
    y: list
    empirical: float
    stderr: float
    theoretical: float
    theory_error: float
    z: float


@dataclass
class ExperimentReport:
    regime: str
    limit: str
    log_T: float
    replications: int
    seed: int
    points: list
    sup_distance: float
    sup_stderr: float
    worst_z: float
    verdict: str
    diagnostics: dict
    sample: Optional[MaxSample] = None

    def to_dict(self) -> dict:
        return {
            "regime": self.regime,
            "limit": self.limit,
            "log_T": self.log_T,
            "replications": self.replications,
            "seed": self.seed,
            "summary": {
                "sup_distance": self.sup_distance,
                "sup_stderr": self.sup_stderr,
                "worst_z": self.worst_z,
                "verdict": self.verdict,
            },
            "points": [
                {
                    "x": _json_vec(p.x),
                    "y": _json_vec(p.y),
                    "empirical": p.empirical,
                    "stderr": p.stderr,
                    "theoretical": p.theoretical,
                    "theory_error": p.theory_error,
                    "z": p.z,
                }
                for p in self.points
            ],
            "diagnostics": self.diagnostics,
        }


def _json_vec(v):
    return [float(a) if math.isfinite(a) else ("inf" if a > 0 else "-inf") for a in v]


def empirical_cdf(samples, lattice):
    """Fraction of replications with every ``x_hat <= x`` and ``y_hat <= y``.

    ``samples`` is ``(X_hat, Y_hat)`` and ``lattice`` is ``(X, Y)``; arrays are
    ``(n, p)`` and ``(npts, p)``. Returns values and binomial standard errors.
    """
    Xh, Yh = (np.atleast_2d(np.asarray(a, dtype=float)) for a in samples)
    X, Y = (np.atleast_2d(np.asarray(a, dtype=float)) for a in lattice)
    if Xh.size == 0 or Xh.shape[0] == 0:
        raise EmptySamples("no samples to count")
    n = Xh.shape[0]
    counts = kernels.lattice_counts(
        np.ascontiguousarray(Xh), np.ascontiguousarray(Yh), np.ascontiguousarray(X), np.ascontiguousarray(Y)
    )
    p = counts / n
    return p, np.sqrt(p * (1.0 - p) / n)


_TABLE_CACHE: dict = {}


def pickands_constants(alpha: float, d_eff: float, opts: PickandsOptions, workers: int = 1):
    key = (alpha, d_eff, opts)
    if key not in _TABLE_CACHE:
        _TABLE_CACHE[key] = build_H_table(
            alpha, d_eff, lam=opts.lam, reps=opts.reps, seed=opts.seed, extrapolate=opts.extrapolate, workers=workers
        )
    return _TABLE_CACHE[key]


def _H_alpha(alpha: float, opts: PickandsOptions, workers: int) -> float:
    closed = closed_form_pickands(alpha)
    if closed is not None:
        return closed
    key = ("H_alpha", alpha, opts)
    if key not in _TABLE_CACHE:
        _TABLE_CACHE[key] = estimate_H_alpha(
            alpha, reps=opts.reps, seed=opts.seed, extrapolate=opts.extrapolate, workers=workers
        ).value
    return _TABLE_CACHE[key]


@dataclass
class SimulatedMaxima:
    engine: MaximaEngine
    raw: object
    constants: list
    tables: list
    sample: MaxSample

    def __iter__(self):
        return iter((self.engine, self.raw, self.constants, self.tables, self.sample))


def simulate_maxima(config: ExperimentConfig, model, grid: GridSpec, T: float, workers: int) -> SimulatedMaxima:
    """Replicate joint maxima and normalise them with the regime's constants."""
    engine = MaximaEngine(model, T, grid, config.mesh_factor, config.skeleton_D, config.skip_eps)
    raw = engine.run(config.replications, config.seed, workers)
    constants = []
    tables = []
    for comp, plan in zip(model.components, engine.plans):
        H_a = _H_alpha(comp.alpha, config.pickands, workers)
        H_d = None
        if grid.regime is Regime.PICKANDS:
            pc = pickands_constants(comp.alpha, grid.D * comp.c ** (1.0 / comp.alpha), config.pickands, workers)
            tables.append(pc)
            H_d = pc.H_d.value
        nc = normalizers(T, comp, grid, H_a, H_d, delta=plan.delta)
        if config.fault == "center_at_aT":
            nc = with_wrong_centering(nc)
        constants.append(nc)
    sample = normalize_maxima(raw.m_cont, raw.m_grid, constants, grid.regime)
    return SimulatedMaxima(engine, raw, constants, tables, sample)


def run_experiment(config: ExperimentConfig, limit: Optional[str] = None, log_T: Optional[float] = None,
                   keep_sample: bool = False) -> ExperimentReport:
    """Simulate, normalise, count and compare with the limit law.

    ``limit`` defaults to the grid's regime; ``"corollary"`` compares the
    continuous maxima alone. Any other mismatch with the grid raises
    :class:`RegimeMismatch`.
    """
    model = config.model
    grid = config.grid()
    limit = limit or grid.regime.value
    if limit != "corollary" and Regime(limit) is not grid.regime:
        raise RegimeMismatch(f"grid is {grid.regime.value}, asked to verify {limit}")
    log_T = config.log_T if log_T is None else log_T
    if log_T is None:
        raise ValidationError("no horizon given")
    T = math.exp(log_T)
    check_horizon(model, T)
    workers = config.workers or default_workers()

    engine, raw, constants, tables, sample = simulate_maxima(config, model, grid, T, workers)

    corollary = limit == "corollary"
    X, Y = config.lattice(model.p, corollary)
    emp, se = empirical_cdf((sample.x_hat, sample.y_hat), (X, Y))
    kw = {}
    if limit == "pickands":
        kw = dict(
            H_alpha=[t.H_alpha.value for t in tables],
            H_d_alpha=[t.H_d.value for t in tables],
            H_xy=[t.table for t in tables],
            d=grid.D,
        )
    spec = LimitSpec.from_model(model, limit, **kw)
    theo, theo_err = limit_cdf_many(spec, X, None if corollary else Y)

    diff = emp - theo
    z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(diff == 0, 0.0, np.sign(diff) * np.inf))
    points = [
        PointResult(X[i].tolist(), Y[i].tolist(), float(emp[i]), float(se[i]), float(theo[i]), float(theo_err[i]),
                    float(z[i]))
        for i in range(X.shape[0])
    ]
    i_sup = int(np.argmax(np.abs(diff)))
    ok = np.abs(diff) <= config.z_tol * se + config.allowance
    diag = {
        "grid": {"regime": grid.regime.value, "D": grid.D if math.isfinite(grid.D) else "inf"},
        "components": [],
        "fault": config.fault,
    }
    for k, (plan, nc) in enumerate(zip(engine.plans, constants)):
        xh, yh = sample.x_hat[:, k], sample.y_hat[:, k]
        diag["components"].append(
            {
                "mesh_h": plan.mesh.h,
                "mesh_points": plan.mesh.n,
                "delta": plan.delta,
                "delta_snap_error": plan.snap_error,
                "markov": plan.markov,
                "skeleton_step": plan.K,
                "refined_intervals_mean": float(raw.refined[k]),
                "skip_error_bound": float(raw.skip_bound[k]),
                "a_T": nc.a_T,
                "b_T": nc.b_T,
                "b_prime": nc.b_prime(),
                "corr_xy": float(np.corrcoef(xh, yh)[0, 1]) if xh.std() > 0 and yh.std() > 0 else float("nan"),
                "mean_abs_x_minus_y": float(np.mean(np.abs(xh - yh))),
                "grid_le_cont_violations": int(np.sum(sample.m_grid[:, k] > sample.m_cont[:, k])),
            }
        )
    if tables:
        diag["pickands"] = [
            {"H_alpha": t.H_alpha.to_dict(), "H_d": t.H_d.to_dict(), "table": t.table.meta} for t in tables
        ]
    return ExperimentReport(
        regime=grid.regime.value,
        limit=limit,
        log_T=float(log_T),
        replications=config.replications,
        seed=config.seed,
        points=points,
        sup_distance=float(np.abs(diff[i_sup])),
        sup_stderr=float(se[i_sup]),
        worst_z=float(np.max(np.abs(z))),
        verdict="PASS" if bool(np.all(ok)) else "FAIL",
        diagnostics=diag,
        sample=sample if keep_sample else None,
    )


@dataclass
class SweepReport:
    log_T: list
    sup_distance: list
    sup_stderr: list
    verdict: str
    monotone: bool
    reports: list

    def to_dict(self) -> dict:
        return {
            "log_T": self.log_T,
            "sup_distance": self.sup_distance,
            "sup_stderr": self.sup_stderr,
            "verdict": self.verdict,
            "non_increasing_within_stderr": self.monotone,
            "reports": [r.to_dict() for r in self.reports],
        }


def convergence_sweep(config: ExperimentConfig, limit: Optional[str] = None) -> SweepReport:
    """Sup-distance per horizon of the ladder.

    The verdict is PASS when the largest horizon's distance is the smallest
    of the ladder or within one combined standard error of it. ``monotone``
    records whether every step is non-increasing within one combined
    standard error.
    """
    ladder = list(config.log_T_ladder or [])
    if len(ladder) < 3:
        raise LadderTooShort(f"a sweep needs at least 3 horizons, got {len(ladder)}")
    if any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise ValidationError("ln T ladder must be strictly increasing")
    reports = [run_experiment(config, limit, lt) for lt in ladder]
    dist = [r.sup_distance for r in reports]
    ses = [r.sup_stderr for r in reports]
    i_min = int(np.argmin(dist))
    last = len(dist) - 1
    ok = i_min == last or dist[last] - dist[i_min] <= math.hypot(ses[last], ses[i_min])
    mono = all(dist[i + 1] - dist[i] <= math.hypot(ses[i + 1], ses[i]) for i in range(last))
    return SweepReport([float(l) for l in ladder], dist, ses, "PASS" if ok else "FAIL", mono, reports)
