"""
Q_Bridge - Figure Data
Plot-ready CSV files and the JSON run sidecar
"""

import csv
import json
import subprocess
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from loguru import logger

from src import __version__
from src.domain.errors import ConfigError
from src.domain.models import EnsembleSummary, ReferenceCurve

SUMMARY_COLUMNS = ["tau", "t", "component", "mean", "variance", "stderr", "n_traj"]


def _write_rows(path: Path, header: Sequence[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in row])
    return path


def version_string() -> str:
    """Package version plus the git revision when run from a checkout"""
    try:
        rev = subprocess.run(
            ["git", "describe", "--always", "--dirty"], cwd=Path(__file__).parent,
            capture_output=True, text=True, timeout=5,
        )
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def write_summary(summary: EnsembleSummary, path: Path) -> Path:
    """Flat (tau, t, component, mean, variance, stderr, n_traj) table"""
    return _write_rows(Path(path), SUMMARY_COLUMNS, summary.rows())


def write_meta(path: Path, scenario: Dict[str, Any], timings: Dict[str, float],
               extra: Optional[Dict[str, Any]] = None) -> Path:
    """JSON sidecar with the config echo, seed, timings and version"""
    meta = {
        "config": scenario,
        "seed": scenario.get("seed"),
        "timings": timings,
        "version": version_string(),
    }
    meta.update(extra or {})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(meta, f, indent=2, default=float)
    return path


def write_snapshots(summary: EnsembleSummary, path: Path) -> Path:
    """Every trajectory at every checkpoint as (trajectory, tau, t, component, value)"""
    if summary.samples is None:
        raise ConfigError("summary carries no raw samples; run with emit_snapshots")
    samples = summary.samples

    def rows():
        for a, tau in enumerate(summary.taus):
            for n in range(samples.shape[1]):
                for b, t in enumerate(summary.times):
                    for c, name in enumerate(summary.components):
                        yield (n, float(tau), float(t), name, float(samples[a, n, b, c]))

    return _write_rows(Path(path), ["trajectory", "tau", "t", "component", "value"], rows())


def _reference_for(references: Sequence[ReferenceCurve], component: str) -> Optional[ReferenceCurve]:
    return next((r for r in references if r.component == component), None)


def emit_figure_data(summary: EnsembleSummary, name: str, out_dir: Path,
                     references: Sequence[ReferenceCurve] = (), line_time: float = 0.5) -> List[Path]:
    """
    Per-component figure tables.

    Writes, for every component: variance against t at the final checkpoint,
    variance against tau at the lattice time nearest line_time, and the full
    (tau, t) surface. Reference columns are added where a curve is known.
    """
    out_dir = Path(out_dir)
    written: List[Path] = []
    final = len(summary.taus) - 1
    times = summary.times
    k = summary.time_index(line_time)

    for c, comp in enumerate(summary.components):
        ref = _reference_for(references, comp)
        ref_var = ref(times) if ref is not None else None
        ref_mean = ref.mean(times) if ref is not None and ref.mean is not None else None

        header = ["t", "mean", "variance", "stderr"]
        if ref_var is not None:
            header.append("reference")
        if ref_mean is not None:
            header.append("reference_mean")
        rows = []
        for b, t in enumerate(times):
            row = [float(t), float(summary.mean[final, b, c]), float(summary.variance[final, b, c]),
                   float(summary.stderr[final, b, c])]
            if ref_var is not None:
                row.append(float(ref_var[b]))
            if ref_mean is not None:
                row.append(float(ref_mean[b]))
            rows.append(row)
        written.append(_write_rows(out_dir / f"{name}_line_{comp}.csv", header, rows))

        header = ["tau", "variance", "stderr"] + (["reference"] if ref_var is not None else [])
        rows = []
        for a, tau in enumerate(summary.taus):
            row = [float(tau), float(summary.variance[a, k, c]), float(summary.stderr[a, k, c])]
            if ref_var is not None:
                row.append(float(ref_var[k]))
            rows.append(row)
        written.append(_write_rows(out_dir / f"{name}_tau_{comp}.csv", header, rows))

        rows = (
            (float(tau), float(t), float(summary.variance[a, b, c]), float(summary.stderr[a, b, c]))
            for a, tau in enumerate(summary.taus) for b, t in enumerate(times)
        )
        written.append(_write_rows(out_dir / f"{name}_surface_{comp}.csv", ["tau", "t", "variance", "stderr"], rows))

    logger.info(f"Wrote {len(written)} figure tables for {name} to {out_dir} (tau line at t={times[k]:g})")
    return written


def write_action(path: Path, steps: np.ndarray, total: float, physical: float) -> Path:
    """Per-step action terms followed by the totals"""
    rows = [(k + 1, float(s)) for k, s in enumerate(steps)]
    rows += [("total", float(total)), ("physical", float(physical))]
    return _write_rows(Path(path), ["step", "action"], rows)


__all__ = [
    "SUMMARY_COLUMNS", "version_string", "write_summary", "write_meta", "write_snapshots",
    "emit_figure_data", "write_action",
]
