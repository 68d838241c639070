"""Run directory bookkeeping: every artifact gets a `<name>.meta.json` sidecar."""
from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Any

from core import __version__
from core.config import RunConfig

logger = logging.getLogger(__name__)

SIDECAR_SUFFIX = ".meta.json"


def sidecar_path(artifact: str | os.PathLike) -> Path:
    artifact = Path(artifact)
    return artifact.with_name(artifact.name + SIDECAR_SUFFIX)


def write_sidecar(artifact: str | os.PathLike, cfg: RunConfig, **extra: Any) -> Path:
    artifact = Path(artifact)
    meta = {
        "artifact": artifact.name,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "code_version": __version__,
        "segment": cfg.segment,
        "source": cfg.source,
        **extra,
    }
    path = sidecar_path(artifact)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("[Artifact] %s", artifact)
    return path


def read_sidecar(artifact: str | os.PathLike) -> dict[str, Any]:
    path = sidecar_path(artifact)
    if not path.is_file():
        return {}
    return json.loads(path.read_text(encoding="utf-8"))


class RunDirectory:
    def __init__(self, cfg: RunConfig, root: str | os.PathLike | None = None):
        self.cfg = cfg
        self.root = Path(root or cfg.out_dir)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def record(self, name: str, **extra: Any) -> Path:
        """Sidecar for an artifact already written under the run directory."""
        p = self.path(name)
        write_sidecar(p, self.cfg, **extra)
        return p

    def write_text(self, name: str, text: str, **extra: Any) -> Path:
        p = self.path(name)
        p.write_text(text, encoding="utf-8")
        return self.record(name, **extra)

    def write_resolved_config(self) -> Path:
        return self.write_text("config.resolved.env", self.cfg.to_env_text())
