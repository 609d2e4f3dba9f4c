"""CSV/JSON writers. CSV uses '.' decimals, 17 significant digits and LF endings."""
from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path

import numpy as np

from .exact import SIR, DistributionTrajectory, MomentSeries, marginals
from .montecarlo import EventTrace, EnsembleStats


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def moments_csv(path, m: MomentSeries, traj: DistributionTrajectory | None = None) -> None:
    """Moment series with optional per-node marginal columns ``pI_j`` (and ``pR_j`` for SIR)."""
    header = list(MomentSeries.CSV_FIELDS)
    cols = [getattr(m, f) for f in MomentSeries.CSV_FIELDS]
    if traj is not None:
        n = traj.space.n
        header += [f"pI_{j}" for j in range(n)]
        cols += list(traj_clip(marginals(traj, "I")).T)
        if traj.space.model == SIR:
            header += [f"pR_{j}" for j in range(n)]
            cols += list(traj_clip(marginals(traj, "R")).T)
    write_csv(path, header, zip(*cols))


def traj_clip(a):
    return np.clip(a, 0.0, 1.0)


def distribution_csv(path, dist) -> None:
    write_csv(path, ("state_index", "probability"), enumerate(np.clip(np.asarray(dist), 0.0, 1.0)))


def ensemble_csv(path, stats: EnsembleStats) -> None:
    write_csv(path, EnsembleStats.CSV_FIELDS, stats.rows())


def trace_csv(path, trace: EventTrace) -> None:
    write_csv(path, ("t_star", "node", "event"), ())
    with open(path, "a", newline="\n") as fh:
        for t, v, e in trace.events:
            fh.write(f"{fmt(t)},{v},{e}\n")


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def to_json(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(to_json(obj), newline="\n")
