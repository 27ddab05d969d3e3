"""Reading and writing maps, traces, diagrams and reports as text.

Numbers are written with ``repr`` (shortest text that round-trips exactly),
'.' as the radix, and comment lines start with ``#``.

CSV_GRID
    First row ``b_y\\b_x`` then the b_x values; each further row is a b_y
    value followed by the signal along that row.
CSV_LONG
    Header ``b_x,b_y,s_b[,s_t]``, one node per row.
"""

from __future__ import annotations

import csv
import datetime as _dt
import enum
import io
import math
import os
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__
from .analysis import FitResult, WidthReport
from .bifurcation import BifurcationDiagram, HysteresisReport
from .scan import ScanTrace, SignalMap

GRID_CORNER = "b_y\\b_x"


class MapFormat(str, enum.Enum):
    CSV_GRID = "CSV_GRID"
    CSV_LONG = "CSV_LONG"


class IngestError(ValueError):
    pass


class MissingNodesError(IngestError):
    def __init__(self, nodes: list[tuple[float, float]]):
        self.nodes = nodes
        listing = ", ".join(f"({bx!r}, {by!r})" for bx, by in nodes[:20])
        more = "" if len(nodes) <= 20 else f" and {len(nodes) - 20} more"
        super().__init__(f"missing nodes (b_x, b_y): {listing}{more}")


def _num(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x)


def _parse_cell(text: str, where: str) -> float:
    t = text.strip()
    if t == "":
        return math.nan
    try:
        return float(t)
    except ValueError:
        raise IngestError(f"{where}: non-numeric cell {text!r}") from None


def _data_lines(path: Path) -> list[tuple[int, list[str]]]:
    with open(path, newline="") as fh:
        lines = [(n, line) for n, line in enumerate(fh, start=1) if line.strip() and not line.lstrip().startswith("#")]
    out = []
    for n, line in lines:
        out.append((n, next(csv.reader([line]))))
    return out


def ingest_map(path, format: MapFormat | str = MapFormat.CSV_GRID, allow_missing: bool = False) -> SignalMap:
    """Read a map file into a rectangular :class:`SignalMap`.

    CSV_GRID files carry one channel, read as ``s_b``. Missing nodes
    raise :class:`MissingNodesError` unless ``allow_missing`` is set, in
    which case they are NaN in the map.
    """
    path = Path(path)
    fmt = MapFormat(format)
    rows = _data_lines(path)
    if not rows:
        raise IngestError(f"{path}: no data")
    if fmt is MapFormat.CSV_GRID:
        n0, header = rows[0]
        b_x = np.array([_parse_cell(c, f"{path}:{n0}") for c in header[1:]])
        if np.any(np.isnan(b_x)):
            raise IngestError(f"{path}:{n0}: empty b_x header cell")
        b_y, body = [], []
        for n, r in rows[1:]:
            if len(r) != len(header):
                raise IngestError(f"{path}:{n}: ragged row ({len(r)} cells, expected {len(header)})")
            by = _parse_cell(r[0], f"{path}:{n}")
            if math.isnan(by):
                raise IngestError(f"{path}:{n}: empty b_y cell")
            b_y.append(by)
            body.append([_parse_cell(c, f"{path}:{n}") for c in r[1:]])
        b_y = np.array(b_y)
        for axis, vals in (("b_x", b_x), ("b_y", b_y)):
            if len(set(vals.tolist())) != len(vals):
                raise IngestError(f"{path}: duplicate {axis} values")
        s_b = np.array(body, float).reshape(len(b_y), len(b_x))
        s_t = None
    else:
        n0, header = rows[0]
        names = [h.strip() for h in header]
        if names[:3] != ["b_x", "b_y", "s_b"] or names[3:] not in ([], ["s_t"]):
            raise IngestError(f"{path}:{n0}: expected header b_x,b_y,s_b[,s_t]")
        has_t = len(names) == 4
        nodes: dict[tuple[float, float], tuple[float, float]] = {}
        for n, r in rows[1:]:
            if len(r) != len(names):
                raise IngestError(f"{path}:{n}: ragged row ({len(r)} cells, expected {len(names)})")
            vals = [_parse_cell(c, f"{path}:{n}") for c in r]
            key = (vals[0], vals[1])
            if key in nodes:
                raise IngestError(f"{path}:{n}: duplicate node {key}")
            nodes[key] = (vals[2], vals[3] if has_t else math.nan)
        b_x = np.array(sorted({k[0] for k in nodes}))
        b_y = np.array(sorted({k[1] for k in nodes}))
        s_b = np.full((len(b_y), len(b_x)), math.nan)
        s_t = np.full_like(s_b, math.nan) if has_t else None
        ix = {v: i for i, v in enumerate(b_x.tolist())}
        iy = {v: i for i, v in enumerate(b_y.tolist())}
        present = np.zeros(s_b.shape, bool)
        for (bx, by), (vb, vt) in nodes.items():
            s_b[iy[by], ix[bx]] = vb
            if s_t is not None:
                s_t[iy[by], ix[bx]] = vt
            present[iy[by], ix[bx]] = True
        if not allow_missing:
            absent = [(float(b_x[j]), float(b_y[i])) for i, j in zip(*np.nonzero(~present))]
            if absent:
                raise MissingNodesError(absent)
    m = SignalMap(b_x, b_y, s_b, s_t, [{"source": str(path), "format": fmt.value}])
    if not allow_missing and not m.complete:
        absent = [(float(m.b_x[j]), float(m.b_y[i])) for i, j in zip(*np.nonzero(m.missing))]
        raise MissingNodesError(absent)
    return m


# ------------------------------------------------------------------ export


def provenance_lines(config_hash: str | None = None, timestamp: str | bool | None = None) -> list[str]:
    """Comment header: tool version, config hash, timestamp.

    ``timestamp=None`` uses ``SOURCE_DATE_EPOCH`` when set and the current
    UTC time otherwise; ``False`` leaves the timestamp out; a string is used
    verbatim.
    """
    lines = [f"# tool: hanle-sp {__version__}"]
    if config_hash is not None:
        lines.append(f"# config_hash: {config_hash}")
    if timestamp is None:
        epoch = os.environ.get("SOURCE_DATE_EPOCH")
        when = (
            _dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc)
            if epoch is not None
            else _dt.datetime.now(_dt.timezone.utc)
        )
        timestamp = when.strftime("%Y-%m-%dT%H:%M:%SZ")
    if timestamp is not False:
        lines.append(f"# timestamp: {timestamp}")
    return lines


def _csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _trace_table(trace: ScanTrace, prefix: Sequence[Any] = (), prefix_names: Sequence[str] = ()):
    header = list(prefix_names) + ["coordinate", "b_x", "b_y", "b_z", "s_b"]
    if trace.s_t is not None:
        header.append("s_t")
    if trace.states is not None:
        header += ["a_y", "a_z", "p_y", "p_z"]
    if trace.times is not None:
        header.append("t")
    rows = []
    for i in range(len(trace)):
        r = list(prefix) + [float(trace.coordinate[i]), *map(float, trace.fields[i]), float(trace.s_b[i])]
        if trace.s_t is not None:
            r.append(float(trace.s_t[i]))
        if trace.states is not None:
            r += list(map(float, trace.states[i]))
        if trace.times is not None:
            r.append(float(trace.times[i]))
        rows.append(r)
    return header, rows


def _map_text(m: SignalMap, fmt: MapFormat, channel: str) -> str:
    if fmt is MapFormat.CSV_GRID:
        values = getattr(m, channel)
        if values is None:
            raise ValueError(f"map has no {channel} channel")
        rows = [[float(m.b_y[i]), *map(float, values[i])] for i in range(len(m.b_y))]
        return _csv([GRID_CORNER, *map(_num, m.b_x)], rows)
    header = ["b_x", "b_y", "s_b"] + (["s_t"] if m.s_t is not None else [])
    rows = []
    for i in range(len(m.b_y)):
        for j in range(len(m.b_x)):
            r = [float(m.b_x[j]), float(m.b_y[i]), float(m.s_b[i, j])]
            if m.s_t is not None:
                r.append(float(m.s_t[i, j]))
            rows.append(r)
    return _csv(header, rows)


def _record(items: dict[str, Any]) -> str:
    out = []
    for k, v in items.items():
        if isinstance(v, (list, tuple)):
            v = " ".join(_num(x) if isinstance(x, float) else str(x) for x in v) if v else "none"
        elif isinstance(v, float):
            v = _num(v) if not math.isnan(v) else "nan"
        out.append(f"{k}: {v}")
    return "\n".join(out) + "\n"


def _hysteresis_record(r: HysteresisReport) -> str:
    return _record({
        "artifact": "hysteresis_report",
        "valid": r.valid,
        "bistable": r.bistable,
        "loop_area": r.loop_area,
        "rms_difference": r.rms_difference,
        "forward_switch_points": r.switch_points["forward"],
        "backward_switch_points": r.switch_points["backward"],
        "inverted_intervals": [f"{a!r}:{b!r}" for a, b in r.inverted_intervals],
        "differing_intervals": [f"{a!r}:{b!r}" for a, b in r.differing_intervals],
        "diagnostic": r.diagnostic or "none",
    })


def _hysteresis_table(r: HysteresisReport) -> str:
    n = min(len(r.forward.control), len(r.backward.control))
    bs = r.backward.signal[::-1][-n:]
    bp = r.backward.p_z[::-1][-n:]
    rows = [[float(r.forward.control[i]), float(r.forward.signal[i]), float(bs[i]),
             float(r.forward.p_z[i]), float(bp[i])] for i in range(n)]
    return _csv(["control", "forward_signal", "backward_signal", "forward_p_z", "backward_p_z"], rows)


def _fit_record(f: FitResult) -> str:
    items = {"artifact": "fit_result", **f.values(),
             "residual_rms": f.residual_rms, "iterations": f.iterations, "converged": f.converged,
             "gradient_norm": f.gradient_norm, "method": f.method}
    for k, v in f.per_param_sensitivity.items():
        items[f"sensitivity.{k}"] = v
    return _record(items)


def _width_record(w: WidthReport) -> str:
    return _record({"artifact": "width_report", "axis": w.axis, "hwhm": w.hwhm,
                    "extrema_positions": list(w.extrema_positions), "method": w.method.value})


def render(artifact, format: str | None = None, channel: str = "s_b") -> str:
    """Body text of an artifact (no provenance header)."""
    if isinstance(artifact, SignalMap):
        return _map_text(artifact, MapFormat(format or MapFormat.CSV_GRID), channel)
    if isinstance(artifact, ScanTrace):
        return _csv(*_trace_table(artifact))
    if isinstance(artifact, (list, tuple)) and all(isinstance(t, ScanTrace) for t in artifact):
        header, rows = ["ray", "angle_deg", "coordinate", "b_x", "b_y", "b_z", "s_b"], []
        for k, tr in enumerate(artifact):
            h, rs = _trace_table(tr, (k, float(tr.metadata.get("angle_deg", math.nan))), ("ray", "angle_deg"))
            header = h
            rows += rs
        return _csv(header, rows)
    if isinstance(artifact, BifurcationDiagram):
        return _csv([artifact.control, "a_y", "a_z", "p_y", "p_z", "stable"],
                    ([*r[:5], int(r[5])] for r in artifact.rows()))
    if isinstance(artifact, HysteresisReport):
        return _hysteresis_table(artifact) if format == "csv" else _hysteresis_record(artifact)
    if isinstance(artifact, FitResult):
        return _fit_record(artifact)
    if isinstance(artifact, WidthReport):
        return _width_record(artifact)
    if isinstance(artifact, (list, tuple)) and all(isinstance(w, WidthReport) for w in artifact):
        return "\n".join(_width_record(w) for w in artifact)
    raise TypeError(f"cannot export {type(artifact).__name__}")


def export(artifact, path, format: str | None = None, channel: str = "s_b",
           config_hash: str | None = None, timestamp: str | bool | None = None) -> Path:
    """Write ``artifact`` to ``path`` with a provenance header.

    Maps take ``format`` CSV_GRID (one ``channel``) or CSV_LONG; hysteresis
    reports take ``"record"`` (default) or ``"csv"`` for the traces.
    """
    path = Path(path)
    text = "\n".join(provenance_lines(config_hash, timestamp)) + "\n" + render(artifact, format, channel)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc
    return path
