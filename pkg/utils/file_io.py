from __future__ import annotations
import json
from pathlib import Path
from typing import Any, Iterable, Iterator, List, Tuple

import yaml
from pydantic import BaseModel

from logger import GLOBAL_LOGGER as log
from exception.custom_exception import ConfigError, CorpusFormatError, RelationCPException

RESOLVED_CONFIG_NAME = "resolved_config.yaml"


# ----------------------------- #
# Helpers (paths + text files)  #
# ----------------------------- #
def require_file(path: str | Path | None, what: str) -> Path:
    """Resolve an input path, raising ConfigError naming it when absent."""
    if not path:
        raise ConfigError(f"no {what} path configured")
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} not found: {p}")
    return p


def ensure_dir(path: str | Path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _to_jsonable(obj: Any) -> Any:
    if isinstance(obj, BaseModel):
        return obj.model_dump(mode="json")
    return obj


def write_json(path: str | Path, obj: Any) -> Path:
    """Deterministic JSON: sorted keys, two-space indent, trailing newline."""
    out = Path(path)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(_to_jsonable(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
        return out
    except (OSError, TypeError) as e:
        log.error("Failed to write JSON", path=str(out), error=str(e))
        raise RelationCPException(f"Failed to write {out}", e) from e


def read_json(path: str | Path) -> Any:
    p = require_file(path, "JSON file")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CorpusFormatError(f"invalid JSON in {p}", e.lineno, e) from e


def write_jsonl(path: str | Path, records: Iterable[Any]) -> int:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(out, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(_to_jsonable(record), ensure_ascii=False, sort_keys=True) + "\n")
            count += 1
    log.info("JSONL written", path=str(out), records=count)
    return count


def iter_jsonl(path: str | Path) -> Iterator[Tuple[int, Any]]:
    """Yield ``(line_number, record)``; blank lines are skipped, bad JSON raises with the line number."""
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                yield line_number, json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusFormatError(f"malformed JSON ({e.msg})", line_number, e) from e


def iter_tsv(path: str | Path, columns: int) -> Iterator[Tuple[int, List[str]]]:
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != columns or any(not x for x in fields):
                raise CorpusFormatError(f"expected {columns} tab-separated fields, got {line!r}", line_number)
            yield line_number, fields


def snapshot_config(config: BaseModel, output_dir: str | Path) -> Path:
    """Write the resolved config next to the outputs; called before any compute."""
    out = ensure_dir(output_dir) / RESOLVED_CONFIG_NAME
    out.write_text(yaml.safe_dump(config.model_dump(mode="json"), sort_keys=True), encoding="utf-8")
    log.info("Resolved config written", path=str(out))
    return out
