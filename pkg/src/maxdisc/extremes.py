"""Grid points, joint maxima, normalising constants and the replication engine.

Continuous maxima
-----------------
Components with ``alpha = 1`` have the Ornstein-Uhlenbeck kernel and are
simulated exactly as a Markov chain. Their continuous maximum is the exact
Brownian-bridge maximum between mesh points (the OU diffusion coefficient is
``2C``), and only skeleton intervals that can still exceed the running maximum
are refined; each skipped interval exceeds it with probability below
``skip_eps``. Other components are sampled by circulant embedding on the full
mesh and the mesh maximum stands in for the continuous one.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import DeltaBelowMesh, MissingConstant, RegimeMismatch, ValidationError
from .model import ComponentParams, GridSpec, Regime, VectorCorrelationModel, log_horizon
from .sampler import CirculantSampler, MeshSpec, PathEnsemble, kernel_cov, stream

SQRT_2PI = math.sqrt(2.0 * math.pi)


def closed_form_pickands(alpha: float) -> Optional[float]:
    """``H_1 = 1`` and ``H_2 = 1/sqrt(pi)``; ``None`` for other alphas."""
    if alpha == 1.0:
        return 1.0
    if alpha == 2.0:
        return 1.0 / math.sqrt(math.pi)
    return None


@dataclass(frozen=True)
class NormalizationConstants:
    a_T: float
    b_T: float
    b_T_delta: Optional[float]
    b_dT: Optional[float]
    regime: Regime
    delta: Optional[float] = None

    def b_prime(self, regime=None) -> float:
        regime = Regime(regime or self.regime)
        if regime is Regime.SPARSE:
            value = self.b_T_delta
        elif regime is Regime.PICKANDS:
            value = self.b_dT
        else:
            value = self.b_T
        if value is None:
            raise RegimeMismatch(f"constants carry no grid centering for regime {regime.value}")
        return value


def _level(a, c, alpha, H):
    return a + math.log(c ** (1.0 / alpha) * H * a ** (-1.0 + 2.0 / alpha) / SQRT_2PI) / a


def normalizers(
    T: float,
    component: ComponentParams,
    grid: GridSpec,
    H_alpha: Optional[float] = None,
    H_d_alpha: Optional[float] = None,
    delta: Optional[float] = None,
) -> NormalizationConstants:
    """``a_T``, ``b_T`` and the regime's grid centering.

    ``delta`` defaults to ``grid.delta(T)``; pass the snapped grid step when
    the grid lives on a simulation mesh. The Pickands centering ``b_dT`` uses
    ``a_T^{-1}`` in front of the logarithm, like ``b_T`` and ``b_T^delta``.
    """
    lnT = log_horizon(T)
    a = math.sqrt(2.0 * lnT)
    alpha, c = component.alpha, component.c
    if H_alpha is None:
        H_alpha = closed_form_pickands(alpha)
        if H_alpha is None:
            raise MissingConstant(f"H_alpha for alpha={alpha} must be supplied")
    b_T = _level(a, c, alpha, H_alpha)
    if delta is None:
        delta = grid.delta(T)
    b_T_delta = a + math.log(1.0 / (SQRT_2PI * delta * a)) / a if delta and delta > 0 else None
    b_dT = None
    if grid.regime is Regime.PICKANDS:
        if H_d_alpha is None:
            raise MissingConstant("Pickands regime needs H_{d,alpha}")
        b_dT = _level(a, c, alpha, H_d_alpha)
    return NormalizationConstants(a, b_T, b_T_delta, b_dT, grid.regime, delta)


def with_wrong_centering(constants: NormalizationConstants) -> NormalizationConstants:
    """Fault injection: continuous centering ``b_T`` replaced by ``a_T``."""
    return replace(constants, b_T=constants.a_T)


def grid_points(delta: float, mesh: MeshSpec) -> np.ndarray:
    """Mesh indices of ``delta N  [0, T]``; ``delta`` must be a mesh multiple."""
    if delta < mesh.h * (1.0 - 1e-9):
        raise DeltaBelowMesh(f"grid step {delta!r} is below the mesh step {mesh.h!r}")
    m = int(round(delta / mesh.h))
    if abs(delta / mesh.h - m) > 1e-6:
        raise ValidationError(f"grid step {delta!r} is not a multiple of the mesh step {mesh.h!r}")
    return np.arange(0, mesh.n, m)


def joint_maxima(ensemble: PathEnsemble, grid_indices: np.ndarray):
    """Per-component ``(m_cont, m_grid)`` from a path ensemble."""
    paths = ensemble.paths
    return paths.max(axis=1), paths[:, grid_indices].max(axis=1)


@dataclass
class MaxSample:
    m_cont: np.ndarray
    m_grid: np.ndarray
    x_hat: np.ndarray
    y_hat: np.ndarray


def normalize_maxima(m_cont, m_grid, constants: Sequence[NormalizationConstants], regime) -> MaxSample:
    """``x = a_T (M - b_T)`` and ``y = a_T (M^delta - b'_T)`` per component."""
    regime = Regime(regime)
    m_cont = np.asarray(m_cont, dtype=float)
    m_grid = np.asarray(m_grid, dtype=float)
    if m_cont.shape[-1] != len(constants):
        raise ValidationError("one set of constants per component is required")
    for c in constants:
        if c.regime is not regime:
            raise RegimeMismatch(f"constants built for {c.regime.value}, asked for {regime.value}")
    a = np.array([c.a_T for c in constants])
    b = np.array([c.b_T for c in constants])
    bp = np.array([c.b_prime(regime) for c in constants])
    return MaxSample(m_cont, m_grid, a * (m_cont - b), a * (m_grid - bp))


# --------------------------------------------------------------------------
# replication engine


@dataclass(frozen=True)
class ComponentPlan:
    mesh: MeshSpec
    m: int  # grid step in mesh steps
    K: int  # skeleton step in mesh steps (OU plan only)
    markov: bool
    delta_nominal: float

    @property
    def delta(self) -> float:
        return self.m * self.mesh.h

    @property
    def snap_error(self) -> float:
        return abs(self.delta - self.delta_nominal) / self.delta_nominal


def mesh_bound(T: float, component: ComponentParams, factor: float) -> float:
    """Mesh step contract ``factor (2 ln T)^(-1/alpha) C^(-1/alpha)``."""
    lnT = log_horizon(T)
    return factor * (2.0 * lnT) ** (-1.0 / component.alpha) * component.c ** (-1.0 / component.alpha)


def plan_component(
    T: float,
    component: ComponentParams,
    delta: float,
    mesh_factor: float = 0.05,
    skeleton_D: float = 1.0,
    markov: Optional[bool] = None,
) -> ComponentPlan:
    if markov is None:
        markov = component.alpha == 1.0
    h_bound = mesh_bound(T, component, mesh_factor)
    if not markov:
        # largest step within the contract that divides delta
        m = max(1, math.ceil(delta / h_bound - 1e-9))
        mesh = MeshSpec.for_horizon(T, delta / m)
        return ComponentPlan(mesh, m, 1, False, delta)
    # bridges give the exact sup between mesh points, so a grid finer than the
    # mesh contract can serve as the mesh itself
    if delta <= h_bound:
        mesh = MeshSpec.for_horizon(T, delta)
    else:
        mesh = MeshSpec.for_horizon(T, min(h_bound, delta / 8.0))
    h = mesh.h
    skel = skeleton_D * mesh_bound(T, component, 1.0)
    if delta <= skel:
        m = max(1, int(round(delta / h)))
        K = m * max(1, int(round(skel / (m * h))))
    else:
        K = max(1, min(int(round(skel / h)), int(delta / (8.0 * h))))
        m = K * max(1, int(round(delta / (K * h))))
    return ComponentPlan(mesh, m, K, True, delta)


@dataclass
class RawMaxima:
    m_cont: np.ndarray  # (reps, p)
    m_grid: np.ndarray
    z: np.ndarray  # latent draws (reps, p)
    refined: np.ndarray  # mean refined skeleton intervals per component
    skip_bound: np.ndarray  # bound on P(skipped interval mattered), per component
    plans: tuple


class MaximaEngine:
    """Joint (continuous, grid) maxima of every component, replication by replication.

    Replication ``r`` uses the streams ``(seed, r, k)`` for component ``k`` and
    ``(seed, r, p)`` for the latent vector, so results do not depend on how
    replications are spread across workers.
    """

    def __init__(
        self,
        model: VectorCorrelationModel,
        T: float,
        grid: GridSpec,
        mesh_factor: float = 0.05,
        skeleton_D: float = 1.0,
        skip_eps: float = 1e-10,
        markov: Optional[bool] = None,
    ):
        lnT = log_horizon(T)
        self.model = model
        self.T = T
        self.grid = grid
        self.skip_eps = skip_eps
        delta = grid.delta(T)
        if not (delta > 0) or not math.isfinite(delta):
            raise ValidationError(f"grid step must be positive, got {delta!r}")
        if delta > T:
            raise ValidationError(f"grid step {delta!r} exceeds the horizon")
        self.plans = tuple(
            plan_component(T, comp, delta, mesh_factor, skeleton_D, markov) for comp in model.components
        )
        rho = np.array([c.r_diag for c in model.components]) / lnT
        self.w_eta = np.sqrt(1.0 - rho)
        self.w_z = np.sqrt(rho)
        self._ou_args = []
        self._circ = []
        cut = -math.log(skip_eps)
        for comp, plan in zip(model.components, self.plans):
            if plan.markov:
                h = plan.mesh.h
                N = plan.mesh.n - 1
                n_skel = N // plan.K
                rho_h = math.exp(-comp.c * h)
                self._ou_args.append(
                    (
                        n_skel,
                        plan.K,
                        plan.m,
                        N - n_skel * plan.K,
                        rho_h,
                        2.0 * comp.c * h,
                        cut * comp.c * plan.K * h,
                        kernels.bridge_weights(rho_h, plan.K),
                    )
                )
                self._circ.append(None)
            else:
                self._ou_args.append(None)
                self._circ.append(CirculantSampler(kernel_cov(comp.c, comp.alpha), plan.mesh.n, plan.mesh.h))

    def replicate(self, seed: int, rep: int):
        p = self.model.p
        mc = np.empty(p)
        mg = np.empty(p)
        nref = np.zeros(p)
        nskip = np.zeros(p)
        for k in range(p):
            gen = stream(seed, rep, k)
            if self._ou_args[k] is not None:
                a, b, r, s = kernels.ou_joint_maxima(gen, *self._ou_args[k])
                nref[k], nskip[k] = r, s
            else:
                path = self._circ[k].sample(gen, 1)[0]
                a, b = path.max(), path[:: self.plans[k].m].max()
            mc[k], mg[k] = a, b
        u = stream(seed, rep, p).standard_normal(self.model.latent_rank)
        z = self.model.latent_factor @ u
        shift = self.w_z * z
        return self.w_eta * mc + shift, self.w_eta * mg + shift, z, nref, nskip

    def _block(self, seed, reps):
        return [self.replicate(seed, r) for r in reps]

    def run(self, reps: int, seed: int, workers: int = 1, chunk: int = 64) -> RawMaxima:
        p = self.model.p
        out_c = np.empty((reps, p))
        out_g = np.empty((reps, p))
        out_z = np.empty((reps, p))
        nref = np.zeros((reps, p))
        nskip = np.zeros((reps, p))
        blocks = [range(i, min(i + chunk, reps)) for i in range(0, reps, chunk)]
        if workers <= 1:
            results = (self._block(seed, b) for b in blocks)
        else:
            pool = ThreadPoolExecutor(max_workers=workers)
            results = pool.map(lambda b: self._block(seed, b), blocks)
        try:
            for block, res in zip(blocks, results):
                for r, (c, g, z, nr, ns) in zip(block, res):
                    out_c[r], out_g[r], out_z[r], nref[r], nskip[r] = c, g, z, nr, ns
        finally:
            if workers > 1:
                pool.shutdown()
        return RawMaxima(
            out_c,
            out_g,
            out_z,
            nref.mean(axis=0),
            nskip.mean(axis=0) * self.skip_eps,
            self.plans,
        )
