"""TOML model configuration.

An ODE model file looks like::

    [model]
    kind = "ode"
    alpha_star = 0.0

    [death]
    rates = [1.0, 2.0, 3.0]        # or: generator = "power", n = 64,
                                   #     coeff = 1.0, exponent = 1.2
    [birth]
    bands = { "1" = 0.4 }          # offset -> constant, or coo = [[n,k,v],..]

    [coupling]
    coo = [[0, 1, 0.3], [2, 0, 0.1]]

    [scale]
    alpha_grid = [0.2, 0.4, 0.8, 1.2]

A logistic model file replaces [death]/[birth]/[coupling] with::

    [logistic]
    m = 1.0
    theta = 0.8
    b = 0.2
    h = 0.25
    L = 16
    N_max = 2
    a_plus = { kind = "gaussian", sigma = 2.0, scale = 0.3 }
    a_minus = { kind = "tophat", radius = 3, height = 0.5 }

Kernels may also be given as explicit ``values = [...]`` lists or as
``csv = "path"`` (one sample per line); all kernels are symmetrized.
Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import InvalidInput
from .evolution_core import DiagonalGenerator
from .logistic import LogisticParams, symmetrize_kernel
from .ode_system import OdeModel
from .scale_operator import OperatorMatrix, band_matrix


class ConfigError(InvalidInput):
    """Malformed model configuration."""


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in [{where}]: {sorted(unknown)}")


def _death_rates(sec: dict) -> np.ndarray:
    _check_keys(sec, {"rates", "generator", "n", "coeff", "exponent"}, "death")
    if "rates" in sec:
        return np.asarray(sec["rates"], dtype=np.float64)
    if sec.get("generator") == "power":
        n = int(sec["n"])
        coeff = float(sec.get("coeff", 1.0))
        expo = float(sec.get("exponent", 1.0))
        return coeff * (np.arange(n) + 1.0) ** expo
    raise ConfigError("[death] needs 'rates' or generator = 'power'")


def _matrix(sec: dict, where: str) -> OperatorMatrix:
    _check_keys(sec, {"coo", "bands", "n"}, where)
    if "coo" in sec:
        triples = [(int(r), int(c), float(v)) for r, c, v in sec["coo"]]
        return OperatorMatrix.from_coo(triples)
    if "bands" in sec:
        n = int(sec.get("n", 0))
        if n <= 0:
            raise ConfigError(f"[{where}] bands need an explicit size 'n'")
        bands = {}
        for off, val in sec["bands"].items():
            off = int(off)
            width = n - abs(off)
            if width <= 0:
                raise ConfigError(f"[{where}] band offset {off} too large for n={n}")
            vals = (
                np.full(width, float(val))
                if np.isscalar(val)
                else np.asarray(val, dtype=np.float64)
            )
            bands[off] = vals
        return band_matrix(n, bands)
    return OperatorMatrix({})


def _kernel(spec, L: int, base: Path) -> np.ndarray:
    if isinstance(spec, list):
        a = np.asarray(spec, dtype=np.float64)
    elif isinstance(spec, dict):
        _check_keys(
            spec, {"kind", "sigma", "scale", "radius", "height", "values", "csv"},
            "kernel",
        )
        if "values" in spec:
            a = np.asarray(spec["values"], dtype=np.float64)
        elif "csv" in spec:
            path = base / spec["csv"]
            a = np.loadtxt(path, dtype=np.float64).reshape(-1)
        elif spec.get("kind") == "gaussian":
            sigma = float(spec["sigma"])
            scale = float(spec.get("scale", 1.0))
            # periodic displacement distance in cells
            d = np.minimum(np.arange(L), L - np.arange(L))
            a = scale * np.exp(-0.5 * (d / sigma) ** 2)
        elif spec.get("kind") == "tophat":
            radius = int(spec["radius"])
            height = float(spec.get("height", 1.0))
            d = np.minimum(np.arange(L), L - np.arange(L))
            a = np.where(d <= radius, height, 0.0)
        else:
            raise ConfigError(f"unknown kernel spec {spec!r}")
    else:
        raise ConfigError(f"kernel must be a list or table, got {type(spec)}")
    if a.size != L:
        raise ConfigError(f"kernel has {a.size} samples, grid has {L}")
    return symmetrize_kernel(a)


@dataclass(frozen=True)
class ModelConfig:
    kind: str
    ode: OdeModel | None
    logistic: LogisticParams | None
    n_max: int | None
    alpha_grid: tuple[float, ...]


def load_model(path) -> ModelConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        return _build_model(doc, path)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError, InvalidInput) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _build_model(doc: dict, path) -> "ModelConfig":
    _check_keys(
        doc, {"model", "death", "birth", "coupling", "scale", "logistic"}, "top level"
    )
    model = doc.get("model", {})
    _check_keys(model, {"kind", "alpha_star"}, "model")
    kind = model.get("kind", "ode")
    scale = doc.get("scale", {})
    _check_keys(scale, {"alpha_grid"}, "scale")
    alpha_grid = tuple(float(a) for a in scale.get("alpha_grid", ()))

    if kind == "ode":
        if "death" not in doc:
            raise ConfigError("ode model needs a [death] section")
        d = DiagonalGenerator(_death_rates(doc["death"]))
        b = _matrix(doc.get("birth", {}), "birth")
        c = _matrix(doc.get("coupling", {}), "coupling")
        ode = OdeModel(d, b, c, alpha_star=float(model.get("alpha_star", 0.0)))
        return ModelConfig(kind="ode", ode=ode, logistic=None, n_max=None,
                           alpha_grid=alpha_grid)
    if kind == "logistic":
        sec = doc.get("logistic")
        if sec is None:
            raise ConfigError("logistic model needs a [logistic] section")
        _check_keys(
            sec, {"m", "theta", "b", "h", "L", "N_max", "a_plus", "a_minus"},
            "logistic",
        )
        L = int(sec["L"])
        params = LogisticParams(
            m=float(sec.get("m", 0.0)),
            a_plus=_kernel(sec.get("a_plus", [0.0] * L), L, path.parent),
            a_minus=_kernel(sec.get("a_minus", [0.0] * L), L, path.parent),
            theta=float(sec.get("theta", 1.0)),
            b=float(sec.get("b", 0.0)),
            h=float(sec.get("h", 1.0)),
        )
        return ModelConfig(
            kind="logistic", ode=None, logistic=params,
            n_max=int(sec.get("N_max", 2)), alpha_grid=alpha_grid,
        )
    raise ConfigError(f"unknown model kind {kind!r}")
