"""Result tables and confusion-matrix files.

Writes, per run: results.csv (one row per head, one column per
protocol), and per protocol a confusion_<name>.csv with integer counts,
a confusion_<name>.pgm heatmap (each row scaled by its own total) and a
per_class_<name>.csv with per-class accuracies. Protocol names are made
filesystem-friendly by replacing "," with "-" and "|" with "_".
"""
from __future__ import annotations

from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import CoverageError, InputError
from .evaluate import SuiteResult, mean_one_one


def format_percent(value: float) -> str:
    return str(Decimal(repr(float(value))).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def slug(protocol_name: str) -> str:
    return protocol_name.replace(",", "-").replace("|", "_")


def _cell(text: str) -> str:
    """Quote a CSV cell when it holds a comma (multi-view protocol names)."""
    if any(c in text for c in ',"\n'):
        return '"' + text.replace('"', '""') + '"'
    return text


def _heatmap_bytes(confusion: np.ndarray) -> bytes:
    counts = np.asarray(confusion, dtype=np.float64)
    sums = counts.sum(axis=1, keepdims=True)
    sums[sums == 0] = 1.0
    shade = np.rint(counts / sums * 255.0).astype(np.uint8)
    h, w = shade.shape
    return b"P5\n%d %d\n255\n" % (w, h) + shade.tobytes()


def _write(path: Path, data):
    if isinstance(data, bytes):
        path.write_bytes(data)
    else:
        path.write_text(data)
    return path


def render_report(suites: Sequence[SuiteResult], output_dir) -> tuple:
    """Write the result files for one or more head kinds; returns the paths."""
    if not suites:
        raise InputError("no results to report")
    columns = [r.protocol for r in suites[0].results]
    for suite in suites[1:]:
        if [r.protocol for r in suite.results] != columns:
            raise InputError(
                "all heads must be evaluated on the same protocol list"
            )

    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    lines = ["head," + ",".join(_cell(c) for c in columns)]
    for suite in suites:
        cells = [format_percent(r.accuracy) for r in suite.results]
        lines.append(suite.head + "," + ",".join(cells))
    written.append(_write(out / "results.csv", "\n".join(lines) + "\n"))

    prefix_head = len(suites) > 1
    for suite in suites:
        for result in suite.results:
            stem = slug(result.protocol)
            if prefix_head:
                stem = f"{suite.head}_{stem}"
            names = result.class_names

            rows = ["class," + ",".join(_cell(n) for n in names)]
            for name, counts in zip(names, result.confusion):
                rows.append(_cell(name) + "," + ",".join(str(int(c)) for c in counts))
            written.append(_write(out / f"confusion_{stem}.csv", "\n".join(rows) + "\n"))

            written.append(
                _write(out / f"confusion_{stem}.pgm", _heatmap_bytes(result.confusion))
            )

            rows = ["class,accuracy"]
            for name, acc in zip(names, result.per_class):
                rows.append(f"{_cell(name)},{'n/a' if acc is None else format_percent(acc)}")
            written.append(_write(out / f"per_class_{stem}.csv", "\n".join(rows) + "\n"))

    mean_lines = ["head,mean_one_one"]
    have_means = False
    for suite in suites:
        try:
            mean = mean_one_one(suite.results)
        except CoverageError:
            continue
        mean_lines.append(f"{suite.head},{format_percent(mean)}")
        have_means = True
    if have_means:
        written.append(_write(out / "one_one_mean.csv", "\n".join(mean_lines) + "\n"))

    return tuple(written)
