"""Run bookkeeping: manifests, content hashes, and a duplicate registry.

Every artifact-producing command records what went in (config hash, input
file hashes) and what came out. The registry is an append-only JSONL file;
a rerun whose input hashes all match an earlier run is flagged rather than
rejected, since reproducing a run on purpose is legitimate.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

RUN_FILE = "run.json"


def sha256_file(path: Path | str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def hash_config(data: dict) -> str:
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=10,
        )
    except (OSError, subprocess.TimeoutExpired):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 else "unknown"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class RunManifest:
    run_id: str
    command: str
    git: str
    config_hash: str
    input_hashes: dict[str, str]
    started: str
    finished: str | None = None
    status: str = "running"
    outputs: list[str] = field(default_factory=list)
    duplicate_of: str | None = None

    @classmethod
    def start(cls, command: str, config: dict, inputs: dict[str, Path | str]) -> "RunManifest":
        return cls(
            run_id=f"{datetime.now(timezone.utc):%Y%m%dT%H%M%S}-{uuid.uuid4().hex[:8]}",
            command=command,
            git=git_describe(),
            config_hash=hash_config(config),
            input_hashes={name: sha256_file(p) for name, p in sorted(inputs.items())},
            started=_now(),
        )

    def finish(self, outputs: list[Path | str], status: str = "ok") -> "RunManifest":
        self.finished = _now()
        self.status = status
        self.outputs = [str(o) for o in outputs]
        return self

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "command": self.command,
            "git": self.git,
            "config_hash": self.config_hash,
            "input_hashes": self.input_hashes,
            "started": self.started,
            "finished": self.finished,
            "status": self.status,
            "outputs": self.outputs,
            "duplicate_of": self.duplicate_of,
        }

    def write(self, out_dir: Path | str) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / RUN_FILE
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path


class RunRegistry:
    """Append-only JSONL of run manifests with duplicate detection."""

    def __init__(self, path: Path | str):
        self.path = Path(path)

    def _rows(self) -> list[dict]:
        if not self.path.exists():
            return []
        with self.path.open() as fh:
            return [json.loads(line) for line in fh if line.strip()]

    def find_duplicate(self, manifest: RunManifest) -> str | None:
        """run_id of an earlier run with the same command and hashes, if any."""
        for row in self._rows():
            if (
                row.get("command") == manifest.command
                and row.get("config_hash") == manifest.config_hash
                and row.get("input_hashes") == manifest.input_hashes
                and row.get("status") == "ok"
            ):
                return row.get("run_id")
        return None

    def append(self, manifest: RunManifest) -> None:
        manifest.duplicate_of = self.find_duplicate(manifest)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(manifest.to_dict(), sort_keys=True) + "\n")
