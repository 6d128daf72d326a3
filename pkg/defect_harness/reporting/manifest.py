from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from defect_harness.logging.events import json_default, utc_now


@dataclass(slots=True)
class RunManifest:
    """Everything needed to reproduce a run: config echo, adaptive decisions, result summary."""

    command: str
    config: dict
    version: str
    seed: int
    decisions: dict = field(default_factory=dict)
    result: dict = field(default_factory=dict)
    artifacts: list[str] = field(default_factory=list)
    seconds: float = 0.0
    status: str = "ok"
    created: str = field(default_factory=utc_now)

    def decide(self, key: str, value) -> None:
        self.decisions[key] = value

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "version": self.version,
            "seed": self.seed,
            "status": self.status,
            "created": self.created,
            "seconds": self.seconds,
            "config": self.config,
            "decisions": self.decisions,
            "result": self.result,
            "artifacts": list(self.artifacts),
        }

    def write(self, path: str | Path) -> None:
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True, default=json_default) + "\n", encoding="utf-8")


def load_manifest(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
