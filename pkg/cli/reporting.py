from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd
from pydantic import BaseModel

from logger import GLOBAL_LOGGER as log
from exception.custom_exception import ConfigError
from model.models import EvalReport
from utils.file_io import ensure_dir, read_json, require_file, write_json

EVAL_REPORT_FILE = "eval_report.json"
REPORT_MD = "report.md"
REPORT_JSON = "report.json"
ABLATION_JSON = "ablation.json"
ABLATION_TXT = "ablation.txt"


class RunSummary(BaseModel):
    name: str
    metric: str
    median: float
    per_seed: List[float]
    seeds: List[int]
    episodes: Optional[int] = None
    delta: Optional[float] = None


def load_run(run_dir: str | Path) -> EvalReport:
    path = require_file(Path(run_dir) / EVAL_REPORT_FILE, "evaluation report")
    return EvalReport.model_validate(read_json(path))


def _run_names(run_dirs: Sequence[str | Path]) -> List[str]:
    names = [Path(d).name for d in run_dirs]
    if len(set(names)) != len(names):
        names = [str(d) for d in run_dirs]
    return names


def build_report(run_dirs: Sequence[str | Path], baseline: Optional[str] = None) -> List[RunSummary]:
    """Merge the runs' reports; with two or more runs, add median deltas against ``baseline`` (default: the first run)."""
    if not run_dirs:
        raise ConfigError("report needs at least one run directory")
    names = _run_names(run_dirs)
    reports = [load_run(d) for d in run_dirs]
    metrics = sorted({r.metric for r in reports})
    if len(metrics) > 1:
        raise ConfigError(f"runs report different metrics ({', '.join(metrics)}); refusing to compare them")
    if baseline is not None and baseline not in names:
        raise ConfigError(f"baseline run {baseline!r} is not among {names}")
    base_median = reports[names.index(baseline) if baseline else 0].median

    rows = []
    for name, report in zip(names, reports):
        rows.append(RunSummary(
            name=name, metric=report.metric, median=report.median, per_seed=report.per_seed,
            seeds=report.seeds, episodes=report.episodes,
            delta=report.median - base_median if len(reports) > 1 else None,
        ))
    return rows


def render_markdown(rows: Sequence[RunSummary], baseline: Optional[str] = None) -> str:
    with_delta = any(r.delta is not None for r in rows)
    header = ["run", rows[0].metric + " (median)", "per seed"] + (["delta"] if with_delta else [])
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for r in rows:
        cells = [r.name, f"{r.median:.4f}", ", ".join(f"{v:.4f}" for v in r.per_seed)]
        if with_delta:
            cells.append(f"{r.delta:+.4f}")
        lines.append("| " + " | ".join(cells) + " |")
    if with_delta:
        lines += ["", f"Deltas are against `{baseline or rows[0].name}`."]
    return "\n".join(lines) + "\n"


def write_report(rows: Sequence[RunSummary], output_dir: str | Path, baseline: Optional[str] = None) -> Tuple[Path, Path]:
    out = ensure_dir(output_dir)
    md = out / REPORT_MD
    md.write_text(render_markdown(rows, baseline), encoding="utf-8")
    js = write_json(out / REPORT_JSON, {"baseline": baseline or rows[0].name, "runs": [r.model_dump() for r in rows]})
    log.info("Report written", runs=len(rows), markdown=str(md))
    return md, js


def ablation_frame(cells: Dict[str, Dict[str, float]], settings: Sequence[str]) -> pd.DataFrame:
    """Rows by encoder initialization, columns by input setting."""
    return pd.DataFrame.from_dict(cells, orient="index").reindex(columns=list(settings))


def write_ablation(
    cells: Dict[str, Dict[str, float]], settings: Sequence[str], metric: str, output_dir: str | Path
) -> Tuple[Path, Path]:
    out = ensure_dir(output_dir)
    js = write_json(out / ABLATION_JSON, {"metric": metric, "settings": list(settings), "rows": cells})
    txt = out / ABLATION_TXT
    txt.write_text(ablation_frame(cells, settings).to_string(float_format=lambda v: f"{v:.4f}") + "\n", encoding="utf-8")
    log.info("Ablation table written", rows=len(cells), settings=list(settings))
    return js, txt
