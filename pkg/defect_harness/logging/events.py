from __future__ import annotations

import json
from datetime import datetime, timezone
from pathlib import Path

import numpy as np


def json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def append_jsonl(path: str | Path, event: dict) -> None:
    """Append a single event as one JSON line, stamped with `ts` when missing."""
    output_path = Path(path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    record = {"ts": utc_now(), **event} if "ts" not in event else event
    with output_path.open("a", encoding="utf-8") as f:
        f.write(json.dumps(record, ensure_ascii=False, default=json_default) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    rows: list[dict] = []
    input_path = Path(path)
    if not input_path.exists():
        return rows
    with input_path.open("r", encoding="utf-8") as f:
        for line in f:
            raw = line.strip()
            if raw:
                rows.append(json.loads(raw))
    return rows
