"""Result files and table rendering.

The result file is JSON: config echo, per-cell dataset metrics with the
per-scene breakdown, and operational counts. Table renderers (csv, txt, md)
are pure functions of the parsed result dict, so re-rendering a stored file
is byte-identical. Metric values render with 3 decimals; absent metrics
render as "-".
"""

from __future__ import annotations

import io
import json
from typing import Sequence

from .errors import ConfigError
from .harness import CellResult, ExperimentResult
from .metrics import mean_std

FORMATS = ("csv", "txt", "md")


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.3f}"


def cell_to_dict(cell: CellResult) -> dict:
    scenes = []
    dataset_ade = dataset_fde = None
    if cell.dataset is not None:
        dataset_ade = cell.dataset.min_dyn_ade
        dataset_fde = cell.dataset.min_dyn_fde
        for m in cell.dataset.scenes:
            scenes.append(
                {
                    "scene_id": m.scene_id,
                    "min_dyn_ade": m.min_dyn_ade,
                    "min_dyn_fde": m.min_dyn_fde,
                    "agents_scored": m.agents_scored,
                    "timeouts": m.timeouts,
                    "expired": m.expired,
                    "ineligible": m.ineligible,
                }
            )
    return {
        "predictor": cell.predictor,
        "k": cell.k,
        "h": cell.h,
        "repetition": cell.repetition,
        "failed": cell.failed,
        "error": cell.error,
        "min_dyn_ade": dataset_ade,
        "min_dyn_fde": dataset_fde,
        "scenes": scenes,
        "counts": dict(cell.counts),
        "wall_time": cell.wall_time,
    }


def result_to_dict(result: ExperimentResult) -> dict:
    return {
        "layout": result.layout,
        "config": result.config_echo,
        "cells": [cell_to_dict(c) for c in result.cells],
    }


def save_result(result: ExperimentResult, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result_to_dict(result), fh, indent=2)
        fh.write("\n")


def load_result(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def render(result: dict, fmt: str) -> str:
    if fmt not in FORMATS:
        raise ConfigError(f"unknown report format {fmt!r}, expected one of {FORMATS}")
    if fmt == "csv":
        return _render_csv(result)
    layout = result.get("layout", "k")
    if layout == "repeat":
        rows = _repeat_rows(result)
    else:
        rows = _grid_rows(result)
    return _render_rows(rows, markdown=(fmt == "md"))


def _render_csv(result: dict) -> str:
    out = io.StringIO()
    out.write(
        "predictor,k,h,repetition,min_dyn_ade,min_dyn_fde,"
        "timeouts,expired,ineligible,failed\n"
    )
    for cell in result["cells"]:
        counts = cell.get("counts", {})
        out.write(
            ",".join(
                [
                    cell["predictor"],
                    str(cell["k"]),
                    str(cell["h"]),
                    str(cell["repetition"]),
                    _fmt(cell["min_dyn_ade"]),
                    _fmt(cell["min_dyn_fde"]),
                    str(counts.get("timeout_ticks", 0)),
                    str(counts.get("expired", 0)),
                    str(counts.get("ineligible", 0)),
                    "yes" if cell["failed"] else "no",
                ]
            )
            + "\n"
        )
    return out.getvalue()


def _predictor_order(cells: Sequence[dict]) -> list[str]:
    order = []
    for cell in cells:
        if cell["predictor"] not in order:
            order.append(cell["predictor"])
    return order


def _sub_label(cell: dict, layout: str, axes: set[str]) -> str:
    parts = []
    if layout == "h":
        parts.append(f"H={cell['h']}")
        if "k" in axes:
            parts.append(f"k={cell['k']}")
    else:
        parts.append(f"k={cell['k']}")
        if "h" in axes:
            parts.append(f"H={cell['h']}")
    if "repetition" in axes:
        parts.append(f"r={cell['repetition']}")
    return " ".join(parts)


def _grid_rows(result: dict) -> list[list[str]]:
    """Benchmark-table layout: predictors as column groups, swept axis as sub-columns."""
    cells = result["cells"]
    layout = result.get("layout", "k")
    groups: dict[str, list[dict]] = {}
    for cell in cells:
        groups.setdefault(cell["predictor"], []).append(cell)

    header_top = ["Model"]
    header_sub = [""]
    columns: list[dict] = []
    for predictor in _predictor_order(cells):
        group = groups[predictor]
        # A deterministic, axis-invariant predictor collapses to one column
        # (the convention for CVM, whose column is headed H=0 in ablations).
        if layout == "h" and len(group) > 1 and _identical_values(group):
            group = [group[0]]
            sub_labels = ["H=0"]
        else:
            axes = {
                axis
                for axis in ("k", "h", "repetition")
                if len({c[axis] for c in group}) > 1
            }
            sub_labels = [_sub_label(c, layout, axes) if axes else "" for c in group]
        for cell, sub in zip(group, sub_labels):
            header_top.append(predictor)
            header_sub.append(sub)
            columns.append(cell)

    row_ade = ["minDynADE (m)"] + [
        "failed" if c["failed"] else _fmt(c["min_dyn_ade"]) for c in columns
    ]
    row_fde = ["minDynFDE (m)"] + [
        "failed" if c["failed"] else _fmt(c["min_dyn_fde"]) for c in columns
    ]
    rows = [header_top]
    if any(h for h in header_sub):
        rows.append(header_sub)
    rows.extend([row_ade, row_fde])
    return rows


def _identical_values(group: Sequence[dict]) -> bool:
    ades = {c["min_dyn_ade"] for c in group}
    fdes = {c["min_dyn_fde"] for c in group}
    return len(ades) == 1 and len(fdes) == 1 and not any(c["failed"] for c in group)


def _repeat_rows(result: dict) -> list[list[str]]:
    """Repeatability layout: one row per predictor, mean/std per metric."""
    cells = result["cells"]
    rows = [["Model", "minDynADE mean", "minDynADE std", "minDynFDE mean", "minDynFDE std"]]
    for predictor in _predictor_order(cells):
        reps = [c for c in cells if c["predictor"] == predictor and not c["failed"]]
        ades = [c["min_dyn_ade"] for c in reps if c["min_dyn_ade"] is not None]
        fdes = [c["min_dyn_fde"] for c in reps if c["min_dyn_fde"] is not None]
        if not ades:
            rows.append([predictor, "-", "-", "-", "-"])
            continue
        ade_mean, ade_std = mean_std(ades)
        fde_mean, fde_std = mean_std(fdes)
        rows.append(
            [predictor, _fmt(ade_mean), _fmt(ade_std), _fmt(fde_mean), _fmt(fde_std)]
        )
    return rows


def _render_rows(rows: list[list[str]], markdown: bool) -> str:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = []
    for r, row in enumerate(rows):
        padded = [cell.ljust(widths[i]) for i, cell in enumerate(row)]
        if markdown:
            lines.append("| " + " | ".join(padded) + " |")
            if r == 0:
                lines.append("|" + "|".join("-" * (w + 2) for w in widths) + "|")
        else:
            lines.append("  ".join(padded).rstrip())
    return "\n".join(lines) + "\n"
