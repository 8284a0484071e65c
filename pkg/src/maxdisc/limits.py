"""Limiting joint distribution functions.

Every limit law has the form ``E exp(-sum_k A_k(x_k, y_k) w_k(Z))`` with
``w_k(z) = exp(-r_kk + sqrt(2 r_kk) z_k)``. Only the per-component coefficient
differs between regimes:

========== ==============================================================
sparse     ``e^-x + e^-y``
pickands   ``e^-x + e^-y - H^{ln H_a + x, ln H_d + y}``
dense      ``e^-min(x, y)``
corollary  ``e^-x`` (continuous maxima only)
========== ==============================================================

The expectation over ``Z`` runs over the support of its covariance, so
components with ``r_kk = 0`` drop out and a singular covariance is integrated
in its rank. Up to three latent dimensions use a tensor Gauss-Hermite rule;
beyond that a scrambled Sobol sequence.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.stats import norm, qmc

from .errors import DimensionMismatch, MissingConstant, NegativeExponent, QuadratureUnavailable, ValidationError
from .model import EIG_TOL, VectorCorrelationModel

REGIMES = ("sparse", "pickands", "dense", "corollary")
MAX_TENSOR_DIM = 3
QMC_POINTS = 1 << 20
QMC_REPLICATES = 32  # enough replicates for a stable error estimate
BOUND_TOL = 1e-12


def _r_of(model) -> np.ndarray:
    if isinstance(model, VectorCorrelationModel):
        return np.array([c.r_diag for c in model.components], dtype=float)
    return np.atleast_1d(np.asarray(model, dtype=float))


def _vectors(x, y, z, r):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    z = np.asarray(z, dtype=float)
    p = r.shape[0]
    if x.shape != (p,) or y.shape != (p,) or z.shape[-1:] != (p,):
        raise DimensionMismatch(f"x, y and z must have length {p}")
    return x, y, z


def latent_weights(z, r) -> np.ndarray:
    """``exp(-r_k + sqrt(2 r_k) z_k)``, broadcasting over leading axes of ``z``."""
    return np.exp(-r + np.sqrt(2.0 * r) * z)


def f_exponent(x, y, z, model) -> float:
    r = _r_of(model)
    x, y, z = _vectors(x, y, z, r)
    return np.sum((np.exp(-x) + np.exp(-y)) * latent_weights(z, r), axis=-1)


def h_exponent(x, y, z, model) -> float:
    r = _r_of(model)
    x, y, z = _vectors(x, y, z, r)
    return np.sum(np.exp(-np.minimum(x, y)) * latent_weights(z, r), axis=-1)


def _per_component(value, p, name):
    if value is None:
        raise MissingConstant(f"{name} is required")
    arr = np.broadcast_to(np.asarray(value, dtype=float), (p,))
    return arr


def _pickands_coeff(x, y, H_alpha, H_d, H_xy):
    """Per-component ``e^-x + e^-y - H^{ln H_a + x, ln H_d + y}``."""
    p = x.shape[0]
    Ha = _per_component(H_alpha, p, "H_alpha")
    Hd = _per_component(H_d, p, "H_d_alpha")
    evals = H_xy if isinstance(H_xy, (list, tuple)) else [H_xy] * p
    if len(evals) != p:
        raise DimensionMismatch(f"need {p} H^(x,y) evaluators, got {len(evals)}")
    out = np.empty(p)
    for k in range(p):
        hxy = float(evals[k](math.log(Ha[k]) + x[k], math.log(Hd[k]) + y[k]))
        out[k] = np.exp(-x[k]) + np.exp(-y[k]) - hxy
        scale = np.exp(-x[k]) + np.exp(-y[k])
        if out[k] < -BOUND_TOL * max(1.0, scale):
            raise NegativeExponent(
                f"H^(x,y) = {hxy:.6g} exceeds e^-x + e^-y = {scale:.6g} at component {k}"
            )
    return np.maximum(out, 0.0)


def g_exponent(x, y, z, model, H_alpha, H_d_alpha, H_xy_eval) -> float:
    r = _r_of(model)
    x, y, z = _vectors(x, y, z, r)
    coeff = _pickands_coeff(x, y, H_alpha, H_d_alpha, H_xy_eval)
    return np.sum(coeff * latent_weights(z, r), axis=-1)


# --------------------------------------------------------------------------
# H^{x,y} table


@dataclass
class HTable:
    """``H^{x,y}`` on a rectangular lattice: bilinear inside (capped by the analytic
    bound ``min(e^-x H_alpha, e^-y H_d)``), the bound itself outside."""

    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray  # shape (len(xs), len(ys))
    stderr: np.ndarray
    H_alpha: float
    H_d: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=float)
        self.ys = np.asarray(self.ys, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.stderr = np.asarray(self.stderr, dtype=float)
        if self.values.shape != (self.xs.size, self.ys.size):
            raise DimensionMismatch("table values do not match the lattice")
        if np.any(np.diff(self.xs) <= 0) or np.any(np.diff(self.ys) <= 0):
            raise ValidationError("lattice axes must be strictly increasing")

    def bound(self, x, y):
        return np.minimum(np.exp(-np.asarray(x)) * self.H_alpha, np.exp(-np.asarray(y)) * self.H_d)

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        shape = x.shape
        x, y = x.ravel(), y.ravel()
        inside = (x >= self.xs[0]) & (x <= self.xs[-1]) & (y >= self.ys[0]) & (y <= self.ys[-1])
        out = np.array(self.bound(x, y), dtype=float)
        if np.any(inside):
            xi, yi = x[inside], y[inside]
            i = np.clip(np.searchsorted(self.xs, xi, side="right") - 1, 0, self.xs.size - 2)
            j = np.clip(np.searchsorted(self.ys, yi, side="right") - 1, 0, self.ys.size - 2)
            tx = (xi - self.xs[i]) / (self.xs[i + 1] - self.xs[i])
            ty = (yi - self.ys[j]) / (self.ys[j + 1] - self.ys[j])
            v = self.values
            interp = (
                (1 - tx) * (1 - ty) * v[i, j]
                + tx * (1 - ty) * v[i + 1, j]
                + (1 - tx) * ty * v[i, j + 1]
                + tx * ty * v[i + 1, j + 1]
            )
            # the bound is convex, so bilinear steps between nodes can overshoot it
            out[inside] = np.minimum(interp, out[inside])
        return float(out[0]) if shape == () else out.reshape(shape)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# H^(x,y) table; H_alpha={self.H_alpha!r} H_d={self.H_d!r}\n")
            w = csv.writer(fh)
            w.writerow(["x", "y", "value", "stderr"])
            for a, x in enumerate(self.xs):
                for b, y in enumerate(self.ys):
                    w.writerow([repr(float(x)), repr(float(y)), repr(float(self.values[a, b])),
                                repr(float(self.stderr[a, b]))])

    @classmethod
    def read_csv(cls, path) -> "HTable":
        with open(path) as fh:
            head = fh.readline()
            parts = dict(tok.split("=") for tok in head.split(";")[1].split())
            rows = list(csv.DictReader(fh))
        xs = np.unique([float(r["x"]) for r in rows])
        ys = np.unique([float(r["y"]) for r in rows])
        vals = np.empty((xs.size, ys.size))
        errs = np.empty_like(vals)
        for r in rows:
            a = np.searchsorted(xs, float(r["x"]))
            b = np.searchsorted(ys, float(r["y"]))
            vals[a, b] = float(r["value"])
            errs[a, b] = float(r["stderr"])
        return cls(xs, ys, vals, errs, float(parts["H_alpha"]), float(parts["H_d"]))


# --------------------------------------------------------------------------
# spec and integration


@dataclass
class LimitSpec:
    regime: str
    r_diag: np.ndarray
    latent_factor: np.ndarray
    H_alpha: Optional[Sequence[float]] = None
    H_d_alpha: Optional[Sequence[float]] = None
    H_xy: Optional[object] = None  # one callable, or one per component
    d: Optional[float] = None

    def __post_init__(self):
        self.regime = getattr(self.regime, "value", self.regime)
        if self.regime not in REGIMES:
            raise ValidationError(f"unknown limit regime {self.regime!r}")
        self.r_diag = np.asarray(self.r_diag, dtype=float)
        self.latent_factor = np.asarray(self.latent_factor, dtype=float)
        if self.regime == "pickands":
            if self.d is not None and not self.d > 0:
                raise ValidationError("Pickands limit needs d > 0")
            if self.H_alpha is None or self.H_d_alpha is None or self.H_xy is None:
                raise MissingConstant("Pickands limit needs H_alpha, H_d_alpha and the H^(x,y) table")

    @property
    def p(self) -> int:
        return self.r_diag.shape[0]

    @classmethod
    def from_model(cls, model: VectorCorrelationModel, regime, **kw) -> "LimitSpec":
        r = np.array([c.r_diag for c in model.components], dtype=float)
        return cls(regime, r, model.latent_factor, **kw)

    def coefficients(self, x, y) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float)) if y is not None else np.full(self.p, np.inf)
        if x.shape != (self.p,) or y.shape != (self.p,):
            raise DimensionMismatch(f"x and y must have length {self.p}")
        if self.regime == "sparse":
            return np.exp(-x) + np.exp(-y)
        if self.regime == "dense":
            return np.exp(-np.minimum(x, y))
        if self.regime == "corollary":
            return np.exp(-x)
        return _pickands_coeff(x, y, self.H_alpha, self.H_d_alpha, self.H_xy)

    def support(self):
        """Latent rows of the components with ``r_kk > 0`` in a full-rank factor."""
        active = np.flatnonzero(self.r_diag > 0)
        if active.size == 0:
            return active, np.zeros((0, 0))
        L = self.latent_factor[active]
        cov = L @ L.T
        evals, evecs = np.linalg.eigh(cov)
        keep = evals > EIG_TOL * max(1.0, float(evals[-1]))
        return active, evecs[:, keep] * np.sqrt(evals[keep])


@dataclass(frozen=True)
class LimitValue:
    value: float
    error: float
    method: str
    nodes: int


def _gh_rule(dim, n):
    x, w = hermegauss(n)
    w = w / math.sqrt(2.0 * math.pi)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    wgrid = np.meshgrid(*([w] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wts = np.prod(np.stack([g.ravel() for g in wgrid], axis=1), axis=1)
    return pts, wts


def _integrate_rule(A, r, factor, pts, wts):
    # A: (npts, q) coefficients of the active components
    z = pts @ factor.T
    W = latent_weights(z, r)
    return np.exp(-A @ W.T) @ wts


def limit_cdf_many(spec: LimitSpec, X, Y=None, n_nodes: int = 64, method: str = "auto", seed: int = 0):
    """Limit CDF at many points; returns ``(values, errors)`` arrays."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.full_like(X, np.inf) if Y is None else np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape != Y.shape:
        raise DimensionMismatch("x and y lattices differ in shape")
    A = np.stack([spec.coefficients(x, y) for x, y in zip(X, Y)])
    active, factor = spec.support()
    inactive = np.setdiff1d(np.arange(spec.p), active)
    base = np.exp(-A[:, inactive].sum(axis=1))
    q = factor.shape[1]
    if q == 0:
        return base, np.zeros_like(base)
    A_act = A[:, active]
    r = spec.r_diag[active]
    if method == "auto":
        method = "gh" if q <= MAX_TENSOR_DIM else "qmc"
    if method == "gh":
        if q > MAX_TENSOR_DIM:
            raise QuadratureUnavailable(f"tensor rule limited to {MAX_TENSOR_DIM} latent dimensions, got {q}")
        if n_nodes < 64:
            raise ValidationError("tensor rule needs at least 64 nodes per axis")
        full = _integrate_rule(A_act, r, factor, *_gh_rule(q, n_nodes))
        half = _integrate_rule(A_act, r, factor, *_gh_rule(q, n_nodes // 2))
        return base * full, base * np.abs(full - half)
    if method != "qmc":
        raise ValidationError(f"unknown integration method {method!r}")
    per = max(QMC_POINTS // QMC_REPLICATES, 1 << 10)
    reps = []
    for i in range(QMC_REPLICATES):
        eng = qmc.Sobol(d=q, scramble=True, seed=np.random.default_rng([seed, i]))
        u = eng.random(per)
        pts = norm.ppf(np.clip(u, 1e-16, 1 - 1e-16))
        reps.append(_integrate_rule(A_act, r, factor, pts, np.full(per, 1.0 / per)))
    reps = np.array(reps)
    return base * reps.mean(axis=0), base * reps.std(axis=0, ddof=1) / math.sqrt(QMC_REPLICATES)


def limit_cdf(spec: LimitSpec, x, y=None, n_nodes: int = 64, method: str = "auto", seed: int = 0) -> LimitValue:
    """``E_Z exp(-exponent(x, y, Z))`` with an error estimate.

    ``y=None`` (or ``+inf`` entries) leaves grid maxima unconstrained. The
    Gauss-Hermite error estimate is ``|Q_n - Q_{n/2}|``; the quasi-Monte Carlo
    one is the standard error across randomised replicates.
    """
    vals, errs = limit_cdf_many(spec, [x], None if y is None else [y], n_nodes, method, seed)
    active, factor = spec.support()
    q = factor.shape[1]
    used = "none" if q == 0 else ("gh" if (method == "auto" and q <= MAX_TENSOR_DIM) or method == "gh" else "qmc")
    nodes = 1 if q == 0 else (n_nodes**q if used == "gh" else QMC_POINTS)
    return LimitValue(float(vals[0]), float(errs[0]), used, int(nodes))


def gumbel_cdf(x):
    return np.exp(-np.exp(-np.asarray(x, dtype=float)))
