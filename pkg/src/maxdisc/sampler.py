"""Exact Gaussian samplers on a uniform mesh.

Stationary paths use circulant embedding (Dietrich-Newsam): the covariance
sequence on the mesh is embedded in a circulant matrix of power-of-two size,
diagonalised by the FFT, and a complex Gaussian draw gives two independent
exact paths. Fractional Brownian motion is the cumulative sum of exactly
sampled fractional Gaussian noise. A dense symmetric square root sampler is
kept for small meshes as an independent check.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    EmbeddingNotPSD,
    InsufficientReplications,
    ValidationError,
)
from .model import VectorCorrelationModel, base_kernel, correlation_at, log_horizon

PAD_FACTORS = (1, 2, 4, 8)


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(master_seed, *key)``.

    Keys are replication / component indices. The derivation goes through
    ``SeedSequence`` hashing, so streams do not depend on scheduling order.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class MeshSpec:
    h: float
    n: int

    def __post_init__(self):
        if not (self.h > 0) or not math.isfinite(self.h):
            raise ValidationError(f"mesh step must be positive, got {self.h!r}")
        if self.n < 1:
            raise ValidationError(f"mesh needs at least one point, got n={self.n!r}")

    @property
    def horizon(self) -> float:
        return self.h * (self.n - 1)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    @classmethod
    def for_horizon(cls, T: float, h_max: float) -> "MeshSpec":
        """Finest-needed mesh on ``[0, T]`` with step ``<= h_max`` and ``h (n-1) = T``."""
        steps = max(1, math.ceil(T / h_max - 1e-9))
        return cls(T / steps, steps + 1)


@dataclass
class PathEnsemble:
    paths: np.ndarray  # shape (p, n)
    mesh: MeshSpec
    master_seed: int
    replication: int

    @property
    def p(self) -> int:
        return self.paths.shape[0]


# --------------------------------------------------------------------------
# circulant embedding


class CirculantSampler:
    """Precomputed spectral table for one stationary covariance on one mesh."""

    def __init__(self, cov: Callable[[np.ndarray], np.ndarray], n: int, h: float = 1.0):
        self.n = int(n)
        self.h = float(h)
        if self.n < 2:
            self.size = 1
            self.sqrt_eig = np.ones(1)
            self.pad = 1
            self.min_eigenvalue = 1.0
            return
        base = 1 << math.ceil(math.log2(2 * (self.n - 1)))
        worst = None
        for pad in PAD_FACTORS:
            size = base * pad
            half = size // 2
            c = np.asarray(cov(np.arange(half + 1) * self.h), dtype=float)
            row = np.concatenate([c, c[-2:0:-1]])
            eig = np.fft.fft(row).real
            lo = float(eig.min())
            if lo >= -1e-8 * float(eig.max()):
                self.size = size
                self.pad = pad
                self.min_eigenvalue = lo
                self.sqrt_eig = np.sqrt(np.clip(eig, 0.0, None) / size)
                return
            worst = (lo, size)
        raise EmbeddingNotPSD(*worst)

    def sample(self, gen: np.random.Generator, count: int = 1) -> np.ndarray:
        """``count`` independent exact paths, shape ``(count, n)``."""
        if self.n < 2:
            return gen.standard_normal((count, 1))
        pairs = (count + 1) // 2
        out = np.empty((2 * pairs, self.n))
        for i in range(pairs):
            w = gen.standard_normal(self.size) + 1j * gen.standard_normal(self.size)
            y = np.fft.fft(self.sqrt_eig * w)[: self.n]
            out[2 * i] = y.real
            out[2 * i + 1] = y.imag
        return out[:count]

    def sample_batch(self, gen: np.random.Generator, count: int) -> np.ndarray:
        """Like :meth:`sample` but one batched FFT; meant for short meshes."""
        if self.n < 2:
            return gen.standard_normal((count, 1))
        pairs = (count + 1) // 2
        w = gen.standard_normal((pairs, self.size)) + 1j * gen.standard_normal((pairs, self.size))
        y = np.fft.fft(self.sqrt_eig * w, axis=1)[:, : self.n]
        return np.concatenate([y.real, y.imag], axis=0)[:count]


def kernel_cov(c: float, alpha: float):
    return lambda t: base_kernel(c, alpha, t)


def sample_stationary(c: float, alpha: float, mesh: MeshSpec, seed: int, *key: int) -> np.ndarray:
    """One standard stationary path with kernel ``exp(-c |t|^alpha)``."""
    sampler = CirculantSampler(kernel_cov(c, alpha), mesh.n, mesh.h)
    return sampler.sample(stream(seed, *key), 1)[0]


def dense_sqrt_sampler(cov_matrix: np.ndarray):
    """Sampler through the symmetric square root of a covariance matrix."""
    evals, evecs = np.linalg.eigh(np.asarray(cov_matrix, dtype=float))
    root = (evecs * np.sqrt(np.clip(evals, 0.0, None))) @ evecs.T

    def draw(gen, count):
        return gen.standard_normal((count, root.shape[0])) @ root

    return draw


# --------------------------------------------------------------------------
# fractional Brownian motion


def fgn_autocov(hurst: float, lags) -> np.ndarray:
    k = np.abs(np.asarray(lags, dtype=float))
    e = 2.0 * hurst
    return 0.5 * (np.abs(k + 1) ** e - 2.0 * k**e + np.abs(k - 1) ** e)


class FBMSampler:
    """fBm paths ``B_H`` on ``{0, h, ..., (n-1) h}`` with ``B(0) = 0``."""

    def __init__(self, hurst: float, mesh: MeshSpec):
        if not (0.0 < hurst <= 1.0):
            raise ValidationError(f"Hurst index must lie in (0, 1], got {hurst!r}")
        self.hurst = float(hurst)
        self.mesh = mesh
        self.scale = mesh.h**self.hurst
        self._noise = None
        if 0.0 < hurst < 1.0 and hurst != 0.5 and mesh.n > 2:
            self._noise = CirculantSampler(lambda t: fgn_autocov(self.hurst, t), mesh.n - 1, 1.0)

    def sample(self, gen: np.random.Generator) -> np.ndarray:
        n = self.mesh.n
        out = np.zeros(n)
        if n == 1:
            return out
        if self.hurst == 1.0:
            return self.mesh.times * gen.standard_normal()
        if self._noise is None:
            incr = gen.standard_normal(n - 1)
        else:
            incr = self._noise.sample(gen, 1)[0]
        np.cumsum(incr * self.scale, out=out[1:])
        return out


def sample_fbm(hurst: float, mesh: MeshSpec, seed: int, *key: int) -> np.ndarray:
    return FBMSampler(hurst, mesh).sample(stream(seed, *key))


# --------------------------------------------------------------------------
# vector process


class VectorSampler:
    """Samples the shared-factor vector process on a fixed mesh and horizon."""

    def __init__(self, model: VectorCorrelationModel, T: float, mesh: MeshSpec):
        lnT = log_horizon(T)
        if not math.isclose(mesh.horizon, T, rel_tol=1e-9, abs_tol=0.0) and mesh.n > 1:
            raise ValidationError(f"mesh horizon {mesh.horizon!r} does not match T={T!r}")
        self.model = model
        self.T = T
        self.mesh = mesh
        rho = np.array([c.r_diag for c in model.components]) / lnT
        self.w_eta = np.sqrt(1.0 - rho)
        self.w_z = np.sqrt(rho)
        self._eta = [CirculantSampler(kernel_cov(c.c, c.alpha), mesh.n, mesh.h) for c in model.components]

    def latent(self, seed: int, rep: int) -> np.ndarray:
        u = stream(seed, rep, self.model.p).standard_normal(self.model.latent_rank)
        return self.model.latent_factor @ u

    def sample(self, seed: int, rep: int = 0) -> PathEnsemble:
        p = self.model.p
        paths = np.empty((p, self.mesh.n))
        for k in range(p):
            paths[k] = self._eta[k].sample(stream(seed, rep, k), 1)[0]
        z = self.latent(seed, rep)
        paths = self.w_eta[:, None] * paths + (self.w_z * z)[:, None]
        return PathEnsemble(paths, self.mesh, int(seed), int(rep))


def sample_vector_process(
    model: VectorCorrelationModel, T: float, mesh: MeshSpec, seed: int, rep: int = 0
) -> PathEnsemble:
    return VectorSampler(model, T, mesh).sample(seed, rep)


# --------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class CovarianceRow:
    k: int
    l: int
    lag: int
    empirical: float
    model: float
    z: float
    flagged: bool


def covariance_selfcheck(
    batch: np.ndarray,
    model: VectorCorrelationModel,
    T: float,
    h: float,
    lags: Sequence[int],
    pairs=None,
    reference=None,
    z_flag: float = 4.0,
) -> list:
    """Compare empirical cross-covariances with the model.

    ``batch`` has shape ``(reps, p, n)``. For each pair ``(k, l)`` and mesh lag
    ``L`` the estimator is the replication mean of ``X_k(0) X_l(L h)``; its
    standard error is ``sqrt((1 + c^2) / reps)`` for unit-variance Gaussians.
    ``reference(k, l, t)`` overrides the model correlation (used to inject faults).
    """
    batch = np.asarray(batch, dtype=float)
    reps = batch.shape[0]
    if reps < 1000:
        raise InsufficientReplications(f"need >= 1000 replications, got {reps}")
    p = batch.shape[1]
    if pairs is None:
        pairs = [(k, l) for k in range(p) for l in range(p)]
    if reference is None:
        reference = lambda k, l, t: correlation_at(model, k, l, t, T)  # noqa: E731
    rows = []
    for lag in lags:
        for k, l in pairs:
            prod = batch[:, k, 0] * batch[:, l, lag]
            emp = float(prod.mean())
            ref = float(reference(k, l, lag * h))
            se = math.sqrt((1.0 + ref * ref) / reps)
            z = (emp - ref) / se
            rows.append(CovarianceRow(k, l, int(lag), emp, ref, z, abs(z) > z_flag))
    return rows


# --------------------------------------------------------------------------
# path dump

_DUMP_HEADER = struct.Struct("<4sIIQdQQ")
_DUMP_MAGIC = b"MXDP"


def write_path_dump(path, ensembles: Sequence[PathEnsemble]) -> None:
    """Binary columnar dump: per ensemble a header (magic, version, p, n, h,
    seed, replication) followed by ``p`` columns of ``n`` little-endian float64."""
    with open(path, "wb") as fh:
        for ens in ensembles:
            fh.write(
                _DUMP_HEADER.pack(
                    _DUMP_MAGIC, 1, ens.p, ens.mesh.n, ens.mesh.h, ens.master_seed, ens.replication
                )
            )
            fh.write(np.ascontiguousarray(ens.paths, dtype="<f8").tobytes())


def read_path_dump(path) -> list:
    out = []
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0
    while pos < len(data):
        magic, version, p, n, h, seed, rep = _DUMP_HEADER.unpack_from(data, pos)
        if magic != _DUMP_MAGIC or version != 1:
            raise ValidationError("not a path dump file")
        pos += _DUMP_HEADER.size
        count = p * n
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(p, n).copy()
        pos += 8 * count
        out.append(PathEnsemble(arr, MeshSpec(h, n), seed, rep))
    return out
