"""Aggregation and table rendering for result record files.

Consumes the line-delimited records written by the experiment runner (or
a previously emitted machine-readable report, which embeds the same
records verbatim) and renders one comparison table per dataset: rows are
regimes, columns are per-task Accuracy / macro-F1 plus cross-task
averages, the best value per column flagged with ``*``.
"""

from __future__ import annotations

import json
from pathlib import Path

from .config import REGIMES
from .errors import ConfigError, FormatError
from .experiment import aggregate_records

REPORT_VERSION = 1


def load_records(paths: list[str | Path]) -> list[dict]:
    """Read result records from .jsonl record files or report .json files."""
    records: list[dict] = []
    for path in paths:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"records file not found: {path}")
        text = path.read_text(encoding="utf-8")
        stripped = text.lstrip()
        if stripped.startswith("{"):
            doc = json.loads(text)
            if "records" not in doc:
                raise FormatError(f"{path}: report document lacks a 'records' field")
            records.extend(doc["records"])
            continue
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}: bad record ({exc})", lineno) from None
            records.append(rec)
    return [r for r in records if r.get("kind") == "result"]


def _grouped_by_dataset(records: list[dict]) -> dict[str, list[dict]]:
    groups: dict[str, list[dict]] = {}
    for rec in records:
        groups.setdefault(rec["dataset"], []).append(rec)
    return groups


def _check_task_consistency(dataset: str, records: list[dict]) -> list[str]:
    """All regimes of one dataset must report the same task set."""
    by_regime: dict[str, set[str]] = {}
    for rec in records:
        by_regime.setdefault(rec["regime"], set()).add(rec["task"])
    task_sets = {frozenset(ts) for ts in by_regime.values()}
    if len(task_sets) > 1:
        detail = "; ".join(f"{r}: {sorted(ts)}" for r, ts in sorted(by_regime.items()))
        raise ConfigError(
            f"cannot merge records for dataset {dataset!r}: regimes report "
            f"incompatible task sets ({detail})"
        )
    return sorted(task_sets.pop())


def _regime_order(present: set[str]) -> list[str]:
    ordered = [r for r in REGIMES if r in present]
    ordered.extend(sorted(present - set(REGIMES)))
    return ordered


def build_report(records: list[dict]) -> dict:
    """Machine-readable report: input records plus the aggregated tables."""
    if not records:
        raise ConfigError("no result records to report on")
    tables = []
    for dataset, recs in sorted(_grouped_by_dataset(records).items()):
        tasks = _check_task_consistency(dataset, recs)
        aggregates = aggregate_records(recs)
        cell = {(a["regime"], a["task"]): a for a in aggregates}
        rows = []
        for regime in _regime_order({r["regime"] for r in recs}):
            row: dict = {"regime": regime}
            accs, f1s = [], []
            for task in tasks:
                agg = cell.get((regime, task))
                if agg is None:
                    raise ConfigError(
                        f"dataset {dataset!r}: regime {regime!r} has no records for task {task!r}"
                    )
                row[f"{task}:accuracy"] = agg["accuracy_mean"]
                row[f"{task}:accuracy_stdev"] = agg["accuracy_stdev"]
                row[f"{task}:macro_f1"] = agg["macro_f1_mean"]
                row[f"{task}:macro_f1_stdev"] = agg["macro_f1_stdev"]
                accs.append(agg["accuracy_mean"])
                f1s.append(agg["macro_f1_mean"])
            row["average:accuracy"] = sum(accs) / len(accs)
            row["average:macro_f1"] = sum(f1s) / len(f1s)
            rows.append(row)
        tables.append({"dataset": dataset, "tasks": tasks, "rows": rows})
    return {"version": REPORT_VERSION, "tables": tables, "records": records}


def render_text(report: dict) -> str:
    """Plain-text tables; the best value in each metric column gets a ``*``."""
    blocks = []
    for table in report["tables"]:
        tasks = table["tasks"]
        columns = [(t, m) for t in [*tasks, "average"] for m in ("accuracy", "macro_f1")]
        header = ["regime"] + [f"{t} {'Acc' if m == 'accuracy' else 'MaF1'}" for t, m in columns]
        best = {
            col: max(row[f"{col[0]}:{col[1]}"] for row in table["rows"])
            for col in columns
        }
        grid = [header]
        for row in table["rows"]:
            cells = [row["regime"]]
            for col in columns:
                value = row[f"{col[0]}:{col[1]}"]
                flag = "*" if value == best[col] else " "
                cells.append(f"{value:.3f}{flag}")
            grid.append(cells)
        widths = [max(len(r[i]) for r in grid) for i in range(len(header))]
        lines = [f"dataset: {table['dataset']}"]
        for i, row_cells in enumerate(grid):
            lines.append("  ".join(c.ljust(w) for c, w in zip(row_cells, widths)).rstrip())
            if i == 0:
                lines.append("  ".join("-" * w for w in widths))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def write_report_json(report: dict, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
