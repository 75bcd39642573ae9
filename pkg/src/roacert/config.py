"""Run configuration: a YAML (or JSON) document with one section per stage.

Example::

    seed: 0
    threads: 1
    system: {kind: dense_hurwitz, dimension: 10, seed: 0}
    candidate: {source: identity}
    psgld: {k_steps: 500, block_size: 64, n_blocks: 100}
    evt: {alpha: 0.01, b_resamples: 1000}
    certify: {rho: 1.0}
    search: {rho_low: null, rho_high: null, rel_tol: 0.02}

Unknown keys are rejected with the dotted path of the offending field.
"""

from __future__ import annotations

import copy
import dataclasses
from pathlib import Path

import numpy as np
import yaml

from .certifier import EvtConfig
from .dynamics import OdeSystem, system_from_config
from .errors import ConfigError
from .lyapunov import GramCandidate, load_candidate, make_poly_dictionary
from .sampler import PsgldConfig
from .synthesis import SynthesisConfig, synthesize

__all__ = ["DEFAULTS", "load_config", "merge_config", "build_system", "build_candidate", "psgld_config", "evt_config"]

DEFAULTS: dict = {
    "seed": 0,
    "threads": 1,
    "system": {"kind": "dense_hurwitz", "dimension": 10, "seed": 0},
    "candidate": {"source": "identity", "path": None, "degree": None, "output": None},
    "synthesis": {},
    "psgld": {},
    "evt": {},
    "certify": {"rho": 1.0},
    "search": {"rho_low": None, "rho_high": None, "rel_tol": 0.02},
    "validate": {"n_points": 100},
    "bench": {"dimensions": [10, 50, 100], "budget_seconds": 600.0, "system_seed": 0},
    "output": {"report": None, "export_blockmax": None},
}

_SECTION_TYPES = {"psgld": PsgldConfig, "evt": EvtConfig, "synthesis": SynthesisConfig}
_CANDIDATE_SOURCES = ("identity", "synthesize", "file")


def merge_config(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in (override or {}).items():
        where = f"{path}{key}"
        if key not in out and path.rstrip(".") not in ("system", "psgld", "evt", "synthesis"):
            raise ConfigError(f"unknown config field '{where}'")
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = merge_config(out[key], val, where + ".")
        else:
            out[key] = val
    return out


def _check_section(cfg: dict, name: str) -> None:
    cls = _SECTION_TYPES[name]
    names = {f.name for f in dataclasses.fields(cls)}
    for key in cfg.get(name, {}):
        if key not in names:
            raise ConfigError(f"unknown config field '{name}.{key}'")
    try:
        cls(**cfg.get(name, {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Read, merge with defaults, and validate a run configuration."""
    doc: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            doc = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f" at line {mark.line + 1}" if mark is not None else ""
            raise ConfigError(f"cannot parse {p}{where}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{p}: top level must be a mapping")
    cfg = merge_config(DEFAULTS, doc)
    cfg = merge_config(cfg, overrides or {})
    for name in _SECTION_TYPES:
        _check_section(cfg, name)
    src = cfg["candidate"].get("source")
    if src not in _CANDIDATE_SOURCES:
        raise ConfigError(f"candidate.source must be one of {_CANDIDATE_SOURCES}, got {src!r}")
    if src == "file":
        cand_path = cfg["candidate"].get("path")
        if not cand_path or not Path(cand_path).is_file():
            raise ConfigError(f"candidate.path does not exist: {cand_path!r}")
    try:
        cfg["seed"] = int(cfg["seed"])
        cfg["threads"] = int(cfg["threads"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"seed/threads must be integers: {exc}") from exc
    if cfg["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    return cfg


def build_system(cfg: dict) -> OdeSystem:
    return system_from_config(cfg["system"])


def build_candidate(cfg: dict, system: OdeSystem):
    """Returns ``(candidate, synthesis_result_or_None)``."""
    c = cfg["candidate"]
    if c["source"] == "identity":
        return GramCandidate.quadratic(np.eye(system.dimension)), None
    if c["source"] == "file":
        cand = load_candidate(c["path"])
        if cand.dimension != system.dimension:
            raise ConfigError(f"candidate.path is over R^{cand.dimension}, system has dimension {system.dimension}")
        return cand, None
    res = synthesize(system, make_poly_dictionary(system.dimension, c.get("degree")), synthesis_config(cfg))
    return res.candidate, res


def psgld_config(cfg: dict) -> PsgldConfig:
    return PsgldConfig(**{**cfg["psgld"], "seed": cfg["seed"]})


def evt_config(cfg: dict) -> EvtConfig:
    return EvtConfig(**cfg["evt"])


def synthesis_config(cfg: dict) -> SynthesisConfig:
    return SynthesisConfig(**{"seed": cfg["seed"], **cfg["synthesis"]})
