"""Run configuration: one YAML file with per-stage sections, plus manifests.

Every stage records a manifest of input/output content hashes and the seeds
used, so any artifact can be traced to its exact inputs and reruns can be
checked for bit-identity.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .errors import ConfigInvalid

TOOLKIT_VERSION = "0.1.0"


@dataclass
class RunConfig:
    seed: int
    out_dir: Path
    synthesize: dict = field(default_factory=dict)
    filter: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    pipeline: dict = field(default_factory=dict)
    feedback: dict = field(default_factory=dict)
    eval: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def resolve(self, value: str) -> Path:
        path = Path(value)
        return path if path.is_absolute() else self.base_dir / path


def _require(obj: dict, key: str, section: str) -> Any:
    if key not in obj:
        raise ConfigInvalid(f"{section}.{key}" if section else key, "missing")
    return obj[key]


def load_config(path, out_dir_override: Optional[str] = None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigInvalid("config", f"file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigInvalid("config", f"invalid YAML: {exc}")
    if not isinstance(raw, dict):
        raise ConfigInvalid("config", "top level must be a mapping")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigInvalid("seed", "must be an integer")
    out_dir = (
        out_dir_override
        or os.environ.get("ROLEBOT_OUT_DIR")
        or raw.get("out_dir", "artifacts")
    )
    cfg = RunConfig(
        seed=seed,
        out_dir=Path(out_dir),
        synthesize=raw.get("synthesize", {}) or {},
        filter=raw.get("filter", {}) or {},
        train=raw.get("train", {}) or {},
        pipeline=raw.get("pipeline", {}) or {},
        feedback=raw.get("feedback", {}) or {},
        eval=raw.get("eval", {}) or {},
        base_dir=path.parent,
    )
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    backend = cfg.synthesize.get("backend", "toy")
    if isinstance(backend, dict):
        if "url" not in backend:
            raise ConfigInvalid("synthesize.backend.url", "missing")
    elif backend != "toy":
        raise ConfigInvalid("synthesize.backend", f"unknown backend {backend!r}")
    n = cfg.synthesize.get("n_dialogues", 20)
    if not isinstance(n, int) or n <= 0:
        raise ConfigInvalid("synthesize.n_dialogues", "must be a positive integer")
    method = cfg.pipeline.get("unanswerable_method", "mc_dropout")
    if method not in ("mc_dropout", "ppl"):
        raise ConfigInvalid("pipeline.unanswerable_method", f"unknown method {method!r}")
    for key in ("fallback_questions_file",):
        value = cfg.pipeline.get(key)
        if value is not None and not cfg.resolve(value).exists():
            raise ConfigInvalid(f"pipeline.{key}", f"file not found: {value}")
    script = cfg.feedback.get("script")
    if script is not None and not cfg.resolve(script).exists():
        raise ConfigInvalid("feedback.script", f"file not found: {script}")


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(
    stage: str, out_dir: Path, inputs: list[Path], outputs: list[Path], seed: int
) -> Path:
    manifest = {
        "stage": stage,
        "version": TOOLKIT_VERSION,
        "seed": seed,
        "inputs": {str(Path(p).name): file_sha256(p) for p in inputs},
        "outputs": {str(Path(p).name): file_sha256(p) for p in outputs},
    }
    path = Path(out_dir) / f"manifest_{stage}.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2), encoding="utf-8")
    return path
