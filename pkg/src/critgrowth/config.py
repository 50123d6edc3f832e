"""Canonical JSON configuration: schema, defaults and validation.

One config file drives every command. Parsing fills in all defaults and
keeps the fully-resolved dict (it is embedded verbatim in every report,
so a report always carries enough provenance to reproduce itself).
Validation happens at load: PMFs must normalize, the mean matrix must be
primitive, and numeric fields must sit in their documented domains;
errors name the offending key path.

Schema (see README for the full field reference)::

    {
      "model":     {"kind": "gwi" | "sdgw" | "cell_division" | "table", ...},
      "spectral":  {"tol", "max_iter", "criticality_tol"},
      "criterion": {"radii", "sigma2_samples"},
      "lyapunov":  {"projections", "off_ray", "phi", "k", "k_max",
                    "n_samples", "band", "audit_samples"},
      "sim":       {"horizon", "n_traj", "seed", "s", "R", "burn_in",
                    "ceiling", "engine", "x0"},
      "output":    {"dir", "formats"}
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .models import (BonusDriftSdgw, CellDivisionModel, GwiModel, Model,
                     OffspringLaw, TableSdgw)
from .montecarlo import SimConfig
from .spectral import PerronData, is_primitive, perron

MODEL_KINDS = ("gwi", "sdgw", "cell_division", "table")
FORMATS = ("json", "csv", "both")
DEFAULT_X0_PROJECTION = 100.0


def canonical_json(obj) -> str:
    """Deterministic JSON serialization (sorted keys, fixed layout)."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


@dataclass(frozen=True)
class SpectralSettings:
    tol: float = 1e-12
    max_iter: int = 100_000
    criticality_tol: float = 1e-9


@dataclass(frozen=True)
class CriterionSettings:
    radii: tuple = (1e2, 1e3, 1e4, 1e5, 1e6)
    sigma2_samples: int = 100_000


@dataclass(frozen=True)
class LyapunovSettings:
    projections: tuple = (1e2, 1e3, 1e4)
    off_ray: float = 0.2
    phi: str = "log"
    k: int | None = None          # None: scan for the smallest working k
    k_max: int = 64
    n_samples: int = 50_000
    band: float = 2.0
    audit_samples: int = 20_000


@dataclass(eq=False)
class RunConfig:
    """A fully validated run: the model plus every knob, resolved."""

    model: Model
    pd: PerronData
    spectral: SpectralSettings
    criterion: CriterionSettings
    lyapunov: LyapunovSettings
    sim: SimConfig
    x0: np.ndarray
    out_dir: str
    formats: str
    resolved: dict = field(repr=False, default_factory=dict)

    @property
    def seed(self) -> int:
        return self.sim.seed

    def to_json(self) -> str:
        return canonical_json(self.resolved)


class _Reader:
    """Typed dict access with config-path error messages."""

    def __init__(self, data: dict, path: str):
        if not isinstance(data, dict):
            raise ConfigError("expected an object", path=path)
        self.data = data
        self.path = path

    def child(self, key: str, default=None) -> "_Reader":
        return _Reader(self.data.get(key, default if default is not None else {}),
                       f"{self.path}.{key}" if self.path else key)

    def get(self, key, kind, default=None, required=False):
        if key not in self.data:
            if required:
                raise ConfigError("missing required key",
                                  path=f"{self.path}.{key}")
            return default
        value = self.data[key]
        if value is None and not required:
            return default
        if kind is float and isinstance(value, (int, float)) \
                and not isinstance(value, bool):
            return float(value)
        if kind is int and isinstance(value, int) and not isinstance(value, bool):
            return int(value)
        if kind is str and isinstance(value, str):
            return value
        if kind is list and isinstance(value, list):
            return value
        if kind is dict and isinstance(value, dict):
            return value
        raise ConfigError(f"expected {kind.__name__}, got {value!r}",
                          path=f"{self.path}.{key}")

    def unknown_keys(self, allowed) -> None:
        extra = set(self.data) - set(allowed)
        if extra:
            raise ConfigError(f"unknown keys {sorted(extra)}", path=self.path)


def _parse_law(obj, path: str) -> OffspringLaw:
    reader = _Reader(obj, path)
    support = reader.get("support", list, required=True)
    probs = reader.get("probs", list, required=True)
    try:
        return OffspringLaw(support, probs)
    except ConfigError as exc:
        raise ConfigError(exc.message, path=path) from exc


def _parse_laws(items, path: str) -> tuple:
    if not isinstance(items, list) or not items:
        raise ConfigError("expected a non-empty list of laws", path=path)
    return tuple(_parse_law(law, f"{path}[{i}]") for i, law in enumerate(items))


def build_model(spec: dict, path: str = "model") -> Model:
    reader = _Reader(spec, path)
    kind = reader.get("kind", str, required=True)
    if kind not in MODEL_KINDS:
        raise ConfigError(f"kind must be one of {MODEL_KINDS}, got {kind!r}",
                          path=f"{path}.kind")
    ceiling = reader.get("gaussian_ceiling", int, default=10**12)
    alpha = reader.get("alpha", float, default=0.0)
    delta = reader.get("delta", float, default=1.0)
    if not -1.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (-1, 1), got {alpha}",
                          path=f"{path}.alpha")
    if delta <= 0.0:
        raise ConfigError(f"delta must be positive, got {delta}",
                          path=f"{path}.delta")
    extras = {"gaussian_ceiling": ceiling, "alpha": alpha, "delta": delta}
    try:
        if kind == "gwi":
            reader.unknown_keys({"kind", "offspring", "immigration",
                                 "gaussian_ceiling", "alpha", "delta"})
            model = GwiModel(
                offspring=_parse_laws(reader.get("offspring", list,
                                                 required=True),
                                      f"{path}.offspring"),
                immigration=_parse_law(reader.get("immigration", dict,
                                                  required=True),
                                       f"{path}.immigration"),
                **extras)
            violations = model.standing_violations()
            if violations:
                raise ConfigError("; ".join(violations), path=path)
        elif kind == "sdgw":
            reader.unknown_keys({"kind", "offspring", "drift",
                                 "gaussian_ceiling", "alpha", "delta"})
            model = BonusDriftSdgw(
                base=_parse_laws(reader.get("offspring", list, required=True),
                                 f"{path}.offspring"),
                drift_limit=np.asarray(reader.get("drift", list,
                                                  required=True), dtype=float),
                **extras)
        elif kind == "table":
            reader.unknown_keys({"kind", "offspring", "overrides",
                                 "gaussian_ceiling", "alpha", "delta"})
            overrides = []
            for i, entry in enumerate(reader.get("overrides", list,
                                                 default=[])):
                entry_reader = _Reader(entry, f"{path}.overrides[{i}]")
                state = entry_reader.get("state", list, required=True)
                laws = _parse_laws(entry_reader.get("laws", list,
                                                    required=True),
                                   f"{path}.overrides[{i}].laws")
                overrides.append((tuple(int(c) for c in state), laws))
            model = TableSdgw(
                base=_parse_laws(reader.get("offspring", list, required=True),
                                 f"{path}.offspring"),
                overrides=tuple(overrides), **extras)
        else:
            reader.unknown_keys({"kind", "p", "p_prime", "c1", "c2", "b1",
                                 "b2", "beta1", "beta2", "a_coeffs",
                                 "gaussian_ceiling", "alpha", "delta"})
            model = CellDivisionModel(
                p=reader.get("p", float, required=True),
                p_prime=reader.get("p_prime", float, required=True),
                c1=reader.get("c1", float, required=True),
                c2=reader.get("c2", float, required=True),
                b1=reader.get("b1", float, required=True),
                b2=reader.get("b2", float, required=True),
                beta1=reader.get("beta1", float, default=0.0),
                beta2=reader.get("beta2", float, default=0.0),
                a_coeffs=tuple(tuple(row) for row in reader.get(
                    "a_coeffs", list, default=[[1.0, 1.0], [1.0, 1.0]])),
                **extras)
    except ConfigError as exc:
        if exc.path is None:
            raise ConfigError(exc.message, path=path) from exc
        raise
    if not is_primitive(model.mean_matrix()):
        raise ConfigError(
            "mean matrix is not primitive (no boolean power up to the "
            f"Wielandt bound is strictly positive): "
            f"{model.mean_matrix().tolist()}", path=path)
    return model


def parse_config_dict(data: dict, seed: int | None = None,
                      out_dir: str | None = None,
                      formats: str | None = None) -> RunConfig:
    """Validate a config dict and resolve every default.

    `seed`, `out_dir` and `formats` are CLI/service overrides applied
    before resolution, so the embedded config reflects what actually ran.
    """
    root = _Reader(data, "")
    root.unknown_keys({"model", "spectral", "criterion", "lyapunov", "sim",
                       "output"})
    model_spec = root.get("model", dict, required=True)
    model = build_model(model_spec)

    spectral_r = root.child("spectral")
    spectral_r.unknown_keys({"tol", "max_iter", "criticality_tol"})
    spectral = SpectralSettings(
        tol=_positive(spectral_r, "tol", 1e-12),
        max_iter=_positive_int(spectral_r, "max_iter", 100_000),
        criticality_tol=_positive(spectral_r, "criticality_tol", 1e-9))

    criterion_r = root.child("criterion")
    criterion_r.unknown_keys({"radii", "sigma2_samples"})
    radii = criterion_r.get("radii", list,
                            default=[1e2, 1e3, 1e4, 1e5, 1e6])
    radii = tuple(_as_positive_float(v, f"criterion.radii[{i}]")
                  for i, v in enumerate(radii))
    if sorted(radii) != list(radii):
        raise ConfigError("radii must be increasing", path="criterion.radii")
    criterion = CriterionSettings(
        radii=radii,
        sigma2_samples=_positive_int(criterion_r, "sigma2_samples", 100_000))

    lyap_r = root.child("lyapunov")
    lyap_r.unknown_keys({"projections", "off_ray", "phi", "k", "k_max",
                         "n_samples", "band", "audit_samples"})
    phi = lyap_r.get("phi", str, default="log")
    if phi not in ("log", "invlog"):
        raise ConfigError(f"phi must be 'log' or 'invlog', got {phi!r}",
                          path="lyapunov.phi")
    projections = tuple(
        _as_positive_float(v, f"lyapunov.projections[{i}]")
        for i, v in enumerate(lyap_r.get("projections", list,
                                         default=[1e2, 1e3, 1e4])))
    k = lyap_r.get("k", int, default=None)
    if k is not None and k < 1:
        raise ConfigError("k must be >= 1", path="lyapunov.k")
    lyapunov = LyapunovSettings(
        projections=projections,
        off_ray=_nonneg(lyap_r, "off_ray", 0.2),
        phi=phi, k=k,
        k_max=_positive_int(lyap_r, "k_max", 64),
        n_samples=_positive_int(lyap_r, "n_samples", 50_000),
        band=_positive(lyap_r, "band", 2.0),
        audit_samples=_positive_int(lyap_r, "audit_samples", 20_000))

    sim_r = root.child("sim")
    sim_r.unknown_keys({"horizon", "n_traj", "seed", "s", "R", "burn_in",
                        "ceiling", "engine", "x0"})
    engine = sim_r.get("engine", str, default="per_trajectory")
    if engine not in ("per_trajectory", "lockstep"):
        raise ConfigError(f"engine must be 'per_trajectory' or 'lockstep', "
                          f"got {engine!r}", path="sim.engine")
    try:
        sim = SimConfig(
            horizon=sim_r.get("horizon", int, default=1000),
            n_traj=sim_r.get("n_traj", int, default=100),
            seed=(seed if seed is not None
                  else sim_r.get("seed", int, default=0)),
            s=sim_r.get("s", float, default=50.0),
            R=sim_r.get("R", float, default=1e4),
            burn_in=sim_r.get("burn_in", int, default=None),
            ceiling=sim_r.get("ceiling", int, default=10**12),
            engine=engine)
    except ConfigError as exc:
        raise ConfigError(exc.message, path="sim") from exc

    pd = perron(model.mean_matrix(), tol=spectral.tol,
                max_iter=spectral.max_iter)
    x0_raw = sim_r.get("x0", list, default=None)
    if x0_raw is None:
        x0 = np.maximum(np.rint(DEFAULT_X0_PROJECTION * pd.v), 0.0)
        x0 = x0.astype(np.int64)
        if not x0.any():
            x0[0] = 1
    else:
        if not all(isinstance(v, int) and not isinstance(v, bool)
                   for v in x0_raw):
            raise ConfigError("x0 must be a list of integers", path="sim.x0")
        x0 = np.asarray(x0_raw, dtype=np.int64)
        if x0.shape != (model.dim,) or np.any(x0 < 0):
            raise ConfigError(
                f"x0 must be {model.dim} non-negative integers",
                path="sim.x0")

    out_r = root.child("output")
    out_r.unknown_keys({"dir", "formats"})
    out = out_dir if out_dir is not None else out_r.get("dir", str,
                                                        default="reports")
    fmt = formats if formats is not None else out_r.get("formats", str,
                                                        default="json")
    if fmt not in FORMATS:
        raise ConfigError(f"formats must be one of {FORMATS}, got {fmt!r}",
                          path="output.formats")

    resolved = {
        "model": _resolve_model_spec(model),
        "spectral": {"tol": spectral.tol, "max_iter": spectral.max_iter,
                     "criticality_tol": spectral.criticality_tol},
        "criterion": {"radii": list(criterion.radii),
                      "sigma2_samples": criterion.sigma2_samples},
        "lyapunov": {"projections": list(lyapunov.projections),
                     "off_ray": lyapunov.off_ray, "phi": lyapunov.phi,
                     "k": lyapunov.k, "k_max": lyapunov.k_max,
                     "n_samples": lyapunov.n_samples, "band": lyapunov.band,
                     "audit_samples": lyapunov.audit_samples},
        "sim": sim.to_dict() | {"x0": x0.tolist()},
        "output": {"dir": out, "formats": fmt},
    }
    return RunConfig(model=model, pd=pd, spectral=spectral,
                     criterion=criterion, lyapunov=lyapunov, sim=sim, x0=x0,
                     out_dir=out, formats=fmt, resolved=resolved)


def parse_config(path, seed: int | None = None, out_dir: str | None = None,
                 formats: str | None = None) -> RunConfig:
    """Load and validate a config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config_dict(data, seed=seed, out_dir=out_dir,
                             formats=formats)


def _resolve_model_spec(model: Model) -> dict:
    return model.describe()


def _as_positive_float(value, path: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool) \
            or value <= 0:
        raise ConfigError(f"expected a positive number, got {value!r}",
                          path=path)
    return float(value)


def _positive(reader: _Reader, key: str, default: float) -> float:
    value = reader.get(key, float, default=default)
    if value <= 0:
        raise ConfigError(f"must be positive, got {value}",
                          path=f"{reader.path}.{key}")
    return value


def _nonneg(reader: _Reader, key: str, default: float) -> float:
    value = reader.get(key, float, default=default)
    if value < 0:
        raise ConfigError(f"must be non-negative, got {value}",
                          path=f"{reader.path}.{key}")
    return value


def _positive_int(reader: _Reader, key: str, default: int) -> int:
    value = reader.get(key, int, default=default)
    if value < 1:
        raise ConfigError(f"must be a positive integer, got {value}",
                          path=f"{reader.path}.{key}")
    return value
