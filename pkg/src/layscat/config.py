"""JSON run configuration.

Units: wavenumbers in 1/length, radii and centers in the same length unit,
impedance in 1/length. Example::

    {
      "medium": {"k0": 2.0, "k1": 3.0, "lambda0": 0.5, "eta": null, "impedance": 1.0},
      "geometry": {
        "S0": {"type": "sphere", "radius": 1.0, "center": [0, 0, 0]},
        "S1": {"type": "sphere", "radius": 0.4},
        "partition": "all-dirichlet"
      },
      "incidence": {"plane_waves": [[0, 0, 1]], "point_sources": []},
      "discretization": {"n_polar_S0": 16, "n_polar_S1": 16,
                         "far_field_n_theta": 12, "far_field_n_phi": 24},
      "outputs": {"directory": "out"}
    }

A star surface is ``{"type": "star", "coeffs": [[n, m, c], ...]}`` with
``r = sum c Y_nm`` over real orthonormal harmonics.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import ConfigError, LayscatError
from .geometry import NAMED_RULES, make_sphere, make_star_surface, partition_boundary
from .solver import PlaneWave, PointSource, ScatteringConfig

SECTIONS = ("medium", "geometry", "incidence", "discretization", "outputs")

DEFAULTS = {
    "medium": {"eta": None, "impedance": 0.0},
    "incidence": {"plane_waves": [], "point_sources": []},
    "discretization": {"n_polar_S0": 16, "n_polar_S1": None, "far_field_n_theta": 12,
                       "far_field_n_phi": 24, "oracle_order": None},
    "outputs": {"directory": "out"},
}


def _number(value, path: str, positive: bool = False, nonneg: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(path, f"expected a finite number, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(path, f"must be positive, got {value}")
    if nonneg and value < 0:
        raise ConfigError(path, f"must be nonnegative, got {value}")
    return float(value)


def _integer(value, path: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(path, f"must be at least {minimum}, got {value}")
    return value


def _vector(value, path: str) -> list:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ConfigError(path, "expected a list of three numbers")
    return [_number(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _mapping(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(path, "expected an object")
    return value


def _known(d: dict, path: str, keys) -> None:
    extra = sorted(set(d) - set(keys))
    if extra:
        raise ConfigError(f"{path}.{extra[0]}" if path else extra[0], "unknown field")


def _surface(spec, path: str) -> dict:
    spec = _mapping(spec, path)
    kind = spec.get("type")
    center = _vector(spec.get("center", [0.0, 0.0, 0.0]), f"{path}.center")
    if kind == "sphere":
        _known(spec, path, ("type", "radius", "center"))
        if "radius" not in spec:
            raise ConfigError(f"{path}.radius", "missing")
        return {"type": "sphere", "radius": _number(spec["radius"], f"{path}.radius", positive=True),
                "center": center}
    if kind == "star":
        _known(spec, path, ("type", "coeffs", "center"))
        coeffs = spec.get("coeffs")
        if not isinstance(coeffs, list) or not coeffs:
            raise ConfigError(f"{path}.coeffs", "expected a nonempty list of [n, m, c]")
        out = []
        for i, item in enumerate(coeffs):
            p = f"{path}.coeffs[{i}]"
            if not isinstance(item, (list, tuple)) or len(item) != 3:
                raise ConfigError(p, "expected [n, m, c]")
            n = _integer(item[0], p + "[0]", 0)
            m = item[1]
            if isinstance(m, bool) or not isinstance(m, int) or abs(m) > n:
                raise ConfigError(p + "[1]", "order must be an integer with |m| <= n")
            out.append([n, m, _number(item[2], p + "[2]")])
        return {"type": "star", "coeffs": sorted(out), "center": center}
    raise ConfigError(f"{path}.type", f"expected 'sphere' or 'star', got {kind!r}")


def normalize(raw: Any) -> dict:
    """Validate and fill defaults; errors carry the offending field path."""
    raw = _mapping(raw, "config")
    _known(raw, "", SECTIONS)
    for sec in ("medium", "geometry", "incidence"):
        if sec not in raw:
            raise ConfigError(sec, "missing section")
    cfg = {sec: copy.deepcopy(DEFAULTS.get(sec, {})) for sec in SECTIONS}
    for sec in SECTIONS:
        if sec in raw:
            cfg[sec].update(_mapping(raw[sec], sec))

    med = cfg["medium"]
    _known(med, "medium", ("k0", "k1", "lambda0", "eta", "impedance"))
    for key in ("k0", "k1", "lambda0"):
        if key not in med:
            raise ConfigError(f"medium.{key}", "missing")
        med[key] = _number(med[key], f"medium.{key}", positive=True)
    if med["eta"] is not None:
        med["eta"] = _number(med["eta"], "medium.eta")
        if med["eta"] == 0:
            raise ConfigError("medium.eta", "must be nonzero")
    med["impedance"] = _number(med["impedance"], "medium.impedance", nonneg=True)

    geo = cfg["geometry"]
    _known(geo, "geometry", ("S0", "S1", "partition"))
    for key in ("S0", "S1"):
        if key not in geo:
            raise ConfigError(f"geometry.{key}", "missing")
        geo[key] = _surface(geo[key], f"geometry.{key}")
    geo.setdefault("partition", "all-dirichlet")
    if geo["partition"] not in NAMED_RULES:
        raise ConfigError("geometry.partition",
                          f"unknown rule {geo['partition']!r}; expected one of {sorted(NAMED_RULES)}")

    inc = cfg["incidence"]
    _known(inc, "incidence", ("plane_waves", "point_sources"))
    pw = []
    for i, d in enumerate(inc["plane_waves"]):
        v = _vector(d, f"incidence.plane_waves[{i}]")
        if abs(float(np.linalg.norm(v)) - 1.0) > 1e-12:
            raise ConfigError(f"incidence.plane_waves[{i}]", "direction must be a unit vector")
        pw.append(v)
    inc["plane_waves"] = pw
    inc["point_sources"] = [_vector(z, f"incidence.point_sources[{i}]")
                            for i, z in enumerate(inc["point_sources"])]
    if not pw and not inc["point_sources"]:
        raise ConfigError("incidence", "no plane waves or point sources given")

    dis = cfg["discretization"]
    _known(dis, "discretization", DEFAULTS["discretization"].keys())
    dis["n_polar_S0"] = _integer(dis["n_polar_S0"], "discretization.n_polar_S0", 4)
    if dis["n_polar_S1"] is None:
        dis["n_polar_S1"] = dis["n_polar_S0"]
    dis["n_polar_S1"] = _integer(dis["n_polar_S1"], "discretization.n_polar_S1", 4)
    dis["far_field_n_theta"] = _integer(dis["far_field_n_theta"], "discretization.far_field_n_theta", 1)
    dis["far_field_n_phi"] = _integer(dis["far_field_n_phi"], "discretization.far_field_n_phi", 1)
    if dis["oracle_order"] is not None:
        dis["oracle_order"] = _integer(dis["oracle_order"], "discretization.oracle_order", 1)

    out = cfg["outputs"]
    _known(out, "outputs", ("directory",))
    if not isinstance(out["directory"], str) or not out["directory"]:
        raise ConfigError("outputs.directory", "expected a nonempty string")
    return cfg


def digest_of(cfg: dict) -> str:
    """SHA-256 of the canonical JSON form (sorted keys, compact separators)."""
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode()).hexdigest()


def _build_surface(spec: dict, n_polar: int):
    if spec["type"] == "sphere":
        return make_sphere(spec["center"], spec["radius"], n_polar, 2 * n_polar)
    coeffs = {(n, m): c for n, m, c in spec["coeffs"]}
    return make_star_surface(coeffs, n_polar, 2 * n_polar, spec["center"])


@dataclass(frozen=True)
class RunConfig:
    data: dict

    @classmethod
    def from_dict(cls, raw: Any) -> "RunConfig":
        return cls(normalize(raw))

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"invalid JSON: {exc.msg} at line {exc.lineno}") from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    @property
    def digest(self) -> str:
        return digest_of(self.data)

    def with_changes(self, **sections) -> "RunConfig":
        d = self.to_dict()
        for sec, upd in sections.items():
            d[sec].update(upd)
        return RunConfig.from_dict(d)

    def scattering_config(self, n_polar: int | None = None) -> ScatteringConfig:
        """Build surfaces and the medium; ``n_polar`` rescales both grids."""
        med, geo, dis = self.data["medium"], self.data["geometry"], self.data["discretization"]
        n0, n1 = dis["n_polar_S0"], dis["n_polar_S1"]
        if n_polar is not None:
            n1 = max(4, round(n1 * n_polar / n0))
            n0 = n_polar
        try:
            s0 = _build_surface(geo["S0"], n0)
            s1 = partition_boundary(_build_surface(geo["S1"], n1), geo["partition"])
            return ScatteringConfig(med["k0"], med["k1"], med["lambda0"], s0, s1,
                                    impedance=med["impedance"], eta=med["eta"])
        except ConfigError:
            raise
        except LayscatError as exc:
            raise ConfigError("geometry", str(exc)) from None

    def incidents(self) -> list:
        inc = self.data["incidence"]
        return [PlaneWave(d) for d in inc["plane_waves"]] + [PointSource(z) for z in inc["point_sources"]]

    def far_field_directions(self):
        from .fields import direction_grid

        dis = self.data["discretization"]
        return direction_grid(dis["far_field_n_theta"], dis["far_field_n_phi"])
