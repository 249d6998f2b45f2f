import os
import json
import math
import logging
from dataclasses import dataclass, field, replace

from rkhs_tools.errors import ConfigError, DomainError
from rkhs_tools.scenarios import AFFINE_WAVELET, BANDLIMITED, FOCK, SCENARIO_IDS, ScenarioSpec

SCHEMA_VERSION = 1

STAGE_LEVELS = {
    "certify-kernel": 0,
    "build-points": 1,
    "build-frame": 2,
    "build-riesz": 2,
    "certify-molecules": 3,
}

FRAME_MODES = ("almost_tight", "dual", "tight", "canonical")
POINT_KINDS = ("lattice", "near_uniform", "jittered", "file")

DEFAULT_TOLERANCES = {
    "duality": 1e-6,
    "parseval": 1e-5,
    "biorthogonality": 1e-8,
    "interpolation": 1e-8,
    "wuc": 0.03,
    "loc_growth": 0.5,
}

SCENARIO_DEFAULTS = {
    FOCK: {"window": 6.0, "resolution": [41], "probe_radius": 2.5, "probe_spacing": 0.3},
    BANDLIMITED: {"window": 20.0, "resolution": [801], "probe_radius": 8.0, "probe_spacing": 0.5,
                  "band": 1.0, "reg": 0.1},
    AFFINE_WAVELET: {"window": 6.0, "resolution": [30, 16], "probe_radius": 2.0, "probe_spacing": 0.5,
                     "log_window": 2.0, "probe_log_radius": 1.0, "mother": "mexican_hat", "mirror": True},
}


@dataclass(frozen=True)
class RunConfig:
    seed: int
    scenario: ScenarioSpec
    weight_exponent: float
    points: dict
    stages: tuple[str, ...]
    frame: dict
    riesz: dict
    molecules: dict
    tolerances: dict
    output_dir: str
    raw: dict = field(repr=False, default_factory=dict)
    source: str = ""

    def scaled(self, factor: float) -> "RunConfig":
        """Copy with every tolerance multiplied by ``factor``."""
        if not factor > 0:
            raise ConfigError(f"--tol-scale must be positive, got {factor}")
        return replace(self, tolerances={k: v * factor for k, v in self.tolerances.items()})

    def canonical(self) -> dict:
        """Normalised configuration echoed into certificates."""
        return {
            "schema": SCHEMA_VERSION,
            "seed": self.seed,
            "scenario": self.scenario.to_dict(),
            "weight": {"kind": "polynomial", "exponent": self.weight_exponent},
            "points": self.points,
            "stages": list(self.stages),
            "frame": self.frame,
            "riesz": self.riesz,
            "molecules": self.molecules,
            "tolerances": self.tolerances,
        }


def _number(block: dict, key: str, default=None, positive: bool = False, where: str = "") -> float | None:
    value = block.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{where}{key} must be a finite number, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(f"{where}{key} must be positive, got {value!r}")
    return float(value)


def _block(data: dict, key: str) -> dict:
    value = data.get(key, {})
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"'{key}' must be an object, got {type(value).__name__}")
    return value


def _scenario(data: dict, q_radius: float) -> ScenarioSpec:
    block = _block(data, "scenario")
    sid = str(block.get("id", "")).strip().lower()
    if sid not in SCENARIO_IDS:
        raise ConfigError(f"scenario.id must be one of {SCENARIO_IDS}, got {block.get('id')!r}")
    merged = {**SCENARIO_DEFAULTS[sid], **{k: v for k, v in block.items() if k != "id"}}
    resolution = merged.pop("resolution")
    if isinstance(resolution, int) and not isinstance(resolution, bool):
        resolution = [resolution]
    if not isinstance(resolution, list) or not all(isinstance(r, int) and not isinstance(r, bool) for r in resolution):
        raise ConfigError(f"scenario.resolution must be an integer or a list of integers, got {resolution!r}")
    known = set(ScenarioSpec.__dataclass_fields__) - {"id", "resolution", "q_radius"}
    unknown = set(merged) - known
    if unknown:
        raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
    for key, value in merged.items():
        if key == "mother":
            merged[key] = str(value).strip().lower()
        elif key == "mirror":
            if not isinstance(value, bool):
                raise ConfigError(f"scenario.mirror must be true or false, got {value!r}")
        else:
            merged[key] = _number(merged, key, where="scenario.")
    try:
        return ScenarioSpec(id=sid, resolution=tuple(resolution), q_radius=q_radius, **merged).validate()
    except DomainError as exc:
        raise ConfigError(f"invalid scenario: {exc}") from exc


def _points(data: dict) -> dict:
    block = _block(data, "points")
    kinds = [k for k in POINT_KINDS if k in block]
    if len(kinds) != 1:
        raise ConfigError(f"points needs exactly one of {POINT_KINDS}, got {sorted(block)}")
    kind = kinds[0]
    params = block[kind]
    if kind == "file":
        if not isinstance(params, dict) or not isinstance(params.get("path"), str):
            raise ConfigError("points.file needs a 'path' string")
        _number(params, "u_radius", positive=True, where="points.file.")
        return {"kind": kind, **params}
    if not isinstance(params, dict):
        raise ConfigError(f"points.{kind} must be an object")
    where = f"points.{kind}."
    if kind == "near_uniform":
        _number(params, "epsilon", positive=True, where=where)
        _number(params, "u_radius", 1.0, positive=True, where=where)
        if "epsilon" not in params:
            raise ConfigError("points.near_uniform needs 'epsilon'")
    else:
        for key in params:
            _number(params, key, positive=key != "jitter", where=where)
        if kind == "jittered" and not 0 <= params.get("jitter", 0.0) < 0.5:
            raise ConfigError("points.jittered.jitter must be in [0, 0.5)")
    return {"kind": kind, **params}


def _stages(data: dict) -> tuple[str, ...]:
    stages = data.get("stages", ["certify-kernel", "build-points", "build-frame", "certify-molecules"])
    if not isinstance(stages, list) or not stages or not all(isinstance(s, str) for s in stages):
        raise ConfigError("stages must be a non-empty list of stage names")
    unknown = [s for s in stages if s not in STAGE_LEVELS]
    if unknown:
        raise ConfigError(f"unknown stages {unknown}; expected names from {list(STAGE_LEVELS)}")
    if len(set(stages)) != len(stages):
        raise ConfigError(f"stages repeat: {stages}")
    levels = [STAGE_LEVELS[s] for s in stages]
    if levels != sorted(levels) or levels[0] != 0 or any(b - a > 1 for a, b in zip(levels, levels[1:])):
        raise ConfigError(f"stages {stages} are not a prefix of "
                          "certify-kernel -> build-points -> build-frame/build-riesz -> certify-molecules")
    if "build-points" not in stages and "build-frame" in stages:
        raise ConfigError("build-frame needs build-points")
    return tuple(stages)


def _frame(data: dict) -> dict:
    block = _block(data, "frame")
    mode = str(block.get("mode", "dual")).strip().lower()
    if mode not in FRAME_MODES:
        raise ConfigError(f"frame.mode must be one of {FRAME_MODES}, got {mode!r}")
    delta = _number(block, "delta", 0.9, positive=True, where="frame.")
    if delta > 1:
        raise ConfigError(f"frame.delta must be at most 1, got {delta}")
    return {
        "mode": mode,
        "delta": delta,
        "gate": _number(block, "gate", None, positive=True, where="frame."),
        "uniformity_gate": _number(block, "uniformity_gate", 0.1, positive=True, where="frame."),
    }


def _riesz(data: dict) -> dict:
    block = _block(data, "riesz")
    if not block:
        return {}
    out = {
        "separation": _number(block, "separation", 1.5, positive=True, where="riesz."),
        "delta": _number(block, "delta", 0.9, positive=True, where="riesz."),
        "gate": _number(block, "gate", None, positive=True, where="riesz."),
    }
    lattice = block.get("lattice", {})
    if not isinstance(lattice, dict) or not lattice:
        raise ConfigError("riesz.lattice must be an object with lattice parameters")
    for key in lattice:
        _number(lattice, key, positive=True, where="riesz.lattice.")
    out["lattice"] = dict(lattice)
    return out


def load_run_config(path: str) -> RunConfig:
    """Parse, validate and normalise a run configuration.

    Raises ``ConfigError`` with a precise message on any problem.
    """
    logger = logging.getLogger(__name__)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    schema = data.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema {schema!r}; expected {SCHEMA_VERSION}")

    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    neighborhoods = _block(data, "neighborhoods")
    q_radius = _number(neighborhoods, "q", 1.0, positive=True, where="neighborhoods.")
    weight = _block(data, "weight")
    if weight.get("kind", "polynomial") != "polynomial":
        raise ConfigError(f"weight.kind must be 'polynomial', got {weight.get('kind')!r}")
    exponent = _number(weight, "exponent", 0.0, where="weight.")
    if exponent < 0:
        raise ConfigError(f"weight.exponent must be non-negative, got {exponent}")

    tolerances = dict(DEFAULT_TOLERANCES)
    for key, value in _block(data, "tolerances").items():
        if key not in DEFAULT_TOLERANCES:
            raise ConfigError(f"unknown tolerance {key!r}; expected one of {sorted(DEFAULT_TOLERANCES)}")
        tolerances[key] = _number({key: value}, key, positive=True, where="tolerances.")
    molecules = _block(data, "molecules")
    stages = _stages(data)
    riesz = _riesz(data)
    if "build-riesz" in stages and not riesz:
        raise ConfigError("stage build-riesz needs a 'riesz' block")

    output_dir = data.get("output_dir", "output_files")
    if not isinstance(output_dir, str) or not output_dir.strip():
        raise ConfigError("output_dir must be a non-empty string")
    config = RunConfig(
        seed=seed,
        scenario=_scenario(data, q_radius),
        weight_exponent=exponent,
        points=_points(data) if "build-points" in stages or "points" in data else {},
        stages=stages,
        frame=_frame(data),
        riesz=riesz,
        molecules={
            "radius": _number(molecules, "radius", 4.0, positive=True, where="molecules."),
            "threshold": _number(molecules, "threshold", 1e-3, positive=True, where="molecules."),
        },
        tolerances=tolerances,
        output_dir=output_dir,
        raw=data,
        source=os.path.abspath(path),
    )
    logger.info("Loaded config %s: scenario=%s stages=%s", path, config.scenario.id, ",".join(stages))
    return config
