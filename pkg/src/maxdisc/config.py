"""JSON experiment configuration.

Example::

    {
      "components": [{"alpha": 1.0, "c": 1.0, "r_diag": 0.5},
                     {"alpha": 1.0, "c": 1.0, "r_diag": 0.5}],
      "r_cross": [[0.25]],
      "grid": {"rule": "dense"},
      "log_T": 8,
      "replications": 4000,
      "lattice": {"x": [-1, 0, 1, 2], "y": [-1, 0, 1, 2]},
      "seed": 1
    }

``r_cross`` is the row-major lower triangle, either strict (rows of length
0, 1, ..., p-1; the empty first row may be omitted) or including the
diagonal. A flat list of the same numbers is accepted too.
"""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np

from .errors import ConfigParse, MaxDiscError
from .model import DenseDefault, PickandsGrid, SparseDefault, power_law_delta
from .verify import ExperimentConfig, PickandsOptions

TOP_KEYS = {
    "components",
    "r_cross",
    "allow_singular_latent",
    "grid",
    "log_T",
    "log_T_ladder",
    "replications",
    "lattice",
    "seed",
    "workers",
    "pickands",
    "mesh",
    "fault",
    "tolerance",
}


def _keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigParse(f"{where}: expected an object")
    extra = set(obj) - set(allowed)
    if extra:
        raise ConfigParse(f"{where}: unknown key(s) {sorted(extra)}")


def _num(obj, key, where, default=None, kind=float):
    if key not in obj:
        if default is ConfigParse:
            raise ConfigParse(f"{where}: missing key '{key}'")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigParse(f"{where}.{key}: expected a number, got {v!r}")
    if kind is int:
        if float(v) != int(v):
            raise ConfigParse(f"{where}.{key}: expected an integer, got {v!r}")
        return int(v)
    return float(v)


def parse_r_cross(raw, diag):
    """Full symmetric matrix from a lower triangle (see module docstring)."""
    p = len(diag)
    if raw is None:
        return None
    flat = []
    if all(isinstance(row, list) for row in raw):
        rows = [r for r in raw]
        if rows and len(rows[0]) == 0:
            rows = rows[1:]
        lengths = [len(r) for r in rows]
        if lengths == list(range(1, p)):
            with_diag = False
        elif lengths == list(range(1, p + 1)):
            with_diag = True
        else:
            raise ConfigParse(f"r_cross: row lengths {lengths} fit neither a strict nor a full lower triangle of size {p}")
        flat = [v for r in rows for v in r]
    else:
        flat = list(raw)
        if len(flat) == p * (p - 1) // 2:
            with_diag = False
        elif len(flat) == p * (p + 1) // 2:
            with_diag = True
        else:
            raise ConfigParse(f"r_cross: {len(flat)} entries fit no lower triangle of size {p}")
    for v in flat:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigParse(f"r_cross: expected numbers, got {v!r}")
    M = np.diag(np.asarray(diag, dtype=float))
    it = iter(flat)
    for i in range(p):
        for j in range(i + 1 if with_diag else i):
            M[i, j] = M[j, i] = float(next(it))
    return M


def parse_grid(obj):
    if obj is None:
        return SparseDefault()
    _keys(obj, {"rule", "d", "scale", "power", "delta"}, "grid")
    rule = obj.get("rule")
    if rule == "sparse":
        return SparseDefault()
    if rule == "dense":
        return DenseDefault()
    if rule == "pickands":
        return PickandsGrid(_num(obj, "d", "grid", ConfigParse))
    if rule == "power":
        return power_law_delta(_num(obj, "scale", "grid", 1.0), _num(obj, "power", "grid", ConfigParse))
    if rule == "constant":
        return power_law_delta(_num(obj, "delta", "grid", ConfigParse), 0.0)
    raise ConfigParse(f"grid.rule: unknown rule {rule!r} (sparse, pickands, dense, power, constant)")


def config_from_dict(cfg: dict) -> ExperimentConfig:
    _keys(cfg, TOP_KEYS, "config")
    comps = cfg.get("components")
    if not isinstance(comps, list) or not comps:
        raise ConfigParse("config.components: expected a non-empty list")
    components = []
    for i, c in enumerate(comps):
        where = f"components[{i}]"
        _keys(c, {"alpha", "c", "r_diag"}, where)
        components.append(
            dict(alpha=_num(c, "alpha", where, ConfigParse), c=_num(c, "c", where, 1.0), r_diag=_num(c, "r_diag", where, 0.0))
        )
    r_cross = parse_r_cross(cfg.get("r_cross"), [c["r_diag"] for c in components])

    lattice = cfg.get("lattice") or {}
    _keys(lattice, {"x", "y", "points"}, "lattice")
    kw = {}
    if "points" in lattice:
        pts = []
        for i, pt in enumerate(lattice["points"]):
            _keys(pt, {"x", "y"}, f"lattice.points[{i}]")
            pts.append((pt["x"], pt.get("y", math.inf)))
        kw["points"] = pts
    if "x" in lattice:
        kw["lattice_x"] = [float(v) for v in lattice["x"]]
    if "y" in lattice:
        kw["lattice_y"] = [float(v) for v in lattice["y"]]

    pk = cfg.get("pickands") or {}
    _keys(pk, {"reps", "lambda", "extrapolate", "seed"}, "pickands")
    popts = PickandsOptions(
        reps=_num(pk, "reps", "pickands", 20000, int),
        lam=_num(pk, "lambda", "pickands", 64.0),
        extrapolate=bool(pk.get("extrapolate", True)),
        seed=_num(pk, "seed", "pickands", 0, int),
    )
    mesh = cfg.get("mesh") or {}
    _keys(mesh, {"factor", "skeleton_D", "skip_eps"}, "mesh")
    tol = cfg.get("tolerance") or {}
    _keys(tol, {"allowance", "z"}, "tolerance")

    ladder = cfg.get("log_T_ladder")
    if ladder is not None and not isinstance(ladder, list):
        raise ConfigParse("config.log_T_ladder: expected a list")
    workers = cfg.get("workers")
    try:
        return ExperimentConfig(
            components=components,
            r_cross=r_cross,
            allow_singular_latent=bool(cfg.get("allow_singular_latent", False)),
            grid_rule=parse_grid(cfg.get("grid")),
            log_T=_num(cfg, "log_T", "config", None if ladder else 8.0),
            log_T_ladder=[float(v) for v in ladder] if ladder else None,
            replications=_num(cfg, "replications", "config", 4000, int),
            seed=_num(cfg, "seed", "config", 0, int),
            workers=None if workers is None else _num(cfg, "workers", "config", None, int),
            pickands=popts,
            mesh_factor=_num(mesh, "factor", "mesh", 0.05),
            skeleton_D=_num(mesh, "skeleton_D", "mesh", 1.0),
            skip_eps=_num(mesh, "skip_eps", "mesh", 1e-10),
            fault=cfg.get("fault"),
            allowance=_num(tol, "allowance", "tolerance", 0.04),
            z_tol=_num(tol, "z", "tolerance", 4.0),
            **kw,
        )
    except MaxDiscError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigParse(f"config: {exc}") from None


def load_config(path):
    """Read and validate a config file; returns ``(ExperimentConfig, raw dict)``."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigParse(f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParse(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return config_from_dict(raw), raw


def _canon(obj):
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, int) and not isinstance(obj, bool):
        return float(obj)
    return obj


def canonical_bytes(cfg: dict) -> bytes:
    """Sorted keys, no whitespace, every number as a shortest round-trip float."""
    return json.dumps(_canon(cfg), sort_keys=True, separators=(",", ":"), allow_nan=False).encode()


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_bytes(cfg)).hexdigest()
