"""Trajectory CSV ingestion, LOESS smoothing and leader-trajectory export."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import CoverageGap, DegenerateWindow, EmptyFile, MissingColumn, SpanTooSmall, UnparsableRow
from .simulate import Sampled

FIELDS = ("time", "position", "velocity", "acceleration")
DEFAULT_SPAN = 0.05


@dataclass(frozen=True)
class TrajectoryRecord:
    time: float
    position: float
    velocity: float = math.nan
    acceleration: float = math.nan


def _resolve(header: list[str], columns: dict) -> dict[str, int | None]:
    lowered = [h.strip().lower() for h in header]
    out: dict[str, int | None] = {}
    for name in FIELDS:
        key = columns.get(name, name)
        if key is None:
            out[name] = None
            continue
        if isinstance(key, int):
            if not 0 <= key < len(header):
                raise MissingColumn(f"column index {key} for {name!r} out of range ({len(header)} columns)")
            out[name] = key
            continue
        try:
            out[name] = lowered.index(str(key).strip().lower())
        except ValueError:
            raise MissingColumn(f"no column {key!r} for {name!r}; header is {header}") from None
    if out["time"] is None or out["position"] is None:
        raise MissingColumn("time and position columns are required")
    return out


def read_trajectory_csv(path, columns: dict | None = None) -> list[TrajectoryRecord]:
    """Parse a single-vehicle trajectory file.

    Parameters
    ----------
    path : path-like
        Comma-separated text with a header row.  Lines starting with ``#``
        are ignored.
    columns : dict, optional
        Maps ``time``, ``position``, ``velocity`` and ``acceleration`` to a
        header name (case-insensitive) or a zero-based column index.  A value
        of ``None`` marks the channel as absent.

    Returns
    -------
    list of TrajectoryRecord
        Sorted by time, with samples sharing a timestamp averaged.
    """
    columns = columns or {}
    with open(path, newline="") as fh:
        lines = [(n, line) for n, line in enumerate(fh, start=1) if line.strip() and not line.lstrip().startswith("#")]
    if not lines:
        raise EmptyFile(f"{path}: no header row")
    header = next(csv.reader([lines[0][1]]))
    idx = _resolve(header, columns)
    if len(lines) == 1:
        raise EmptyFile(f"{path}: header only, no data rows")

    rows = []
    for lineno, row in zip((n for n, _ in lines[1:]), csv.reader(line for _, line in lines[1:])):
        values = []
        for name in FIELDS:
            j = idx[name]
            if j is None:
                values.append(math.nan)
                continue
            try:
                values.append(float(row[j]))
            except (IndexError, ValueError):
                cell = row[j] if j < len(row) else "<missing>"
                raise UnparsableRow(f"{path}: line {lineno}: field {name!r} has value {cell!r}", lineno) from None
        if not math.isfinite(values[0]):
            raise UnparsableRow(f"{path}: line {lineno}: non-finite time", lineno)
        rows.append(values)

    data = np.array(rows)
    data = data[np.argsort(data[:, 0], kind="stable")]
    times, start = np.unique(data[:, 0], return_index=True)
    if len(times) == len(data):
        merged = data
    else:
        merged = np.add.reduceat(data, start, axis=0) / np.diff(np.append(start, len(data)))[:, None]
        merged[:, 0] = times
    return [TrajectoryRecord(*map(float, r)) for r in merged]


def write_trajectory_csv(path, records, smoothed: bool = False) -> None:
    """Write records with full round-trip precision."""
    with open(path, "w", newline="") as fh:
        if smoothed:
            fh.write("# smoothed: true\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FIELDS)
        for r in records:
            writer.writerow([repr(float(getattr(r, f))) for f in FIELDS])


def records_to_arrays(records) -> dict[str, np.ndarray]:
    return {f: np.array([getattr(r, f) for r in records], dtype=float) for f in FIELDS}


def _local_linear(x, y, w, x0):
    sw = w.sum()
    if sw <= 0.0:
        raise DegenerateWindow(f"all weights zero in the window around t={x0:g}")
    xm = (w @ x) / sw
    dx = x - xm
    sxx = w @ (dx * dx)
    ym = (w @ y) / sw
    # Fewer than two distinct weighted abscissae: fall back to the local mean.
    if sxx <= 1e-14 * sw * max(1.0, xm * xm):
        return ym
    slope = (w @ (dx * (y - ym))) / sxx
    return ym + slope * (x0 - xm)


def loess_smooth(t, y, span: float = DEFAULT_SPAN, robustness_iters: int = 2) -> np.ndarray:
    """Locally weighted linear regression evaluated at the input abscissae.

    Each point is fitted over its ``ceil(span * n)`` nearest neighbours with
    tricube weights scaled by the farthest neighbour distance.  Each
    robustness pass multiplies these by bisquare weights of the residuals
    scaled by six median absolute residuals.

    Parameters
    ----------
    t, y : array_like
        Abscissae (need not be sorted) and ordinates, same length, at least 3.
    span : float
        Fraction of points in each local window, in ``(0, 1]``.
    robustness_iters : int
        Number of bisquare reweighting passes.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("t and y must be 1-D arrays of equal length")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
        raise ValueError("t and y must be finite")
    n = t.size
    if n < 3:
        raise SpanTooSmall(f"need at least 3 points, got {n}")
    if not 0 < span <= 1:
        raise SpanTooSmall(f"span must lie in (0, 1], got {span}")
    if span * n < 2:
        raise SpanTooSmall(f"span {span} covers fewer than 2 of {n} points")
    if robustness_iters < 0:
        raise ValueError("robustness_iters must be >= 0")
    q = min(n, math.ceil(span * n - 1e-9))

    order = np.argsort(t, kind="stable")
    xs, ys = t[order], y[order]

    lo_idx = np.empty(n, dtype=int)
    radius = np.empty(n)
    lo = 0
    for i in range(n):
        while lo + q < n and xs[i] - xs[lo] > xs[lo + q] - xs[i]:
            lo += 1
        lo_idx[i] = lo
        radius[i] = max(xs[i] - xs[lo], xs[lo + q - 1] - xs[i])

    robust = np.ones(n)
    fit = np.empty(n)
    for it in range(robustness_iters + 1):
        for i in range(n):
            sl = slice(lo_idx[i], lo_idx[i] + q)
            xw = xs[sl]
            h = radius[i]
            if h > 0:
                u = np.minimum(np.abs(xw - xs[i]) / h, 1.0)
                w = (1.0 - u**3) ** 3
            else:
                w = np.ones(q)
            # the point itself carries weight one, so this only guards against bad arithmetic
            if not w.sum() > 0.0:
                raise DegenerateWindow(f"all weights zero in the window around t={xs[i]:g}")
            wr = w * robust[sl]
            # too few neighbours survive the outlier rejection for a line: keep the observation
            fit[i] = ys[i] if np.count_nonzero(wr > 0.0) < 2 else _local_linear(xw, ys[sl], wr, xs[i])
        if it == robustness_iters:
            break
        resid = ys - fit
        s = np.median(np.abs(resid))
        # residuals already at rounding level: reweighting would be noise
        if s == 0.0 or 6.0 * s < 1e-7 * np.mean(np.abs(ys)):
            break
        r = np.minimum(np.abs(resid) / (6.0 * s), 1.0)
        robust = (1.0 - r**2) ** 2

    out = np.empty(n)
    out[order] = fit
    return out


def smooth_records(records, span: float = DEFAULT_SPAN, robustness_iters: int = 2) -> list[TrajectoryRecord]:
    """LOESS on every present channel; absent channels stay NaN."""
    arr = records_to_arrays(records)
    t = arr["time"]
    for f in FIELDS[1:]:
        if np.all(np.isfinite(arr[f])):
            arr[f] = loess_smooth(t, arr[f], span, robustness_iters)
    return [TrajectoryRecord(*(float(arr[f][k]) for f in FIELDS)) for k in range(len(t))]


def to_leader_trajectory(
    records,
    dt_out: float,
    horizon: float | None = None,
    span: float = DEFAULT_SPAN,
    robustness_iters: int = 2,
    smooth: bool = True,
) -> Sampled:
    """Smooth, resample onto a uniform grid and fill missing derivatives.

    Velocity and acceleration come from their own (smoothed) channels when
    present, otherwise from central differences of the smoothed position.
    The output time axis starts at the first record.
    """
    if not dt_out > 0:
        raise ValueError(f"dt_out must be > 0, got {dt_out}")
    if len(records) < 3:
        raise EmptyFile("need at least 3 records")
    if smooth:
        records = smooth_records(records, span, robustness_iters)
    arr = records_to_arrays(records)
    t = arr["time"]
    span_s = t[-1] - t[0]
    if horizon is not None and span_s < horizon - 1e-9 * max(1.0, horizon):
        raise CoverageGap(f"records span {span_s:g} s, horizon is {horizon:g} s")

    steps = int(math.floor(span_s / dt_out + 1e-9))
    grid = t[0] + np.arange(steps + 1) * dt_out
    if len(grid) == len(t) and np.allclose(grid, t, rtol=0.0, atol=1e-9 * dt_out):
        grid = t.copy()

    pos = np.interp(grid, t, arr["position"])
    if np.all(np.isfinite(arr["velocity"])):
        vel = np.interp(grid, t, arr["velocity"])
    else:
        vel = np.gradient(pos, grid)
    if np.all(np.isfinite(arr["acceleration"])):
        acc = np.interp(grid, t, arr["acceleration"])
    else:
        acc = np.gradient(vel, grid)
    return Sampled(grid - grid[0], pos, vel, acc)


def synthetic_leader_records(
    duration: float = 120.0,
    dt: float = 0.1,
    v_mean: float = 20.0,
    amplitude: float = 2.0,
    period: float = 40.0,
    noise: float = 0.0,
    seed: int = 0,
) -> list[TrajectoryRecord]:
    """Sine-speed leader sampled like a 10 Hz trajectory export.

    ``v(t) = v_mean + amplitude sin(2 pi t / period)``; ``noise`` adds
    uniform measurement noise of that half-width to every channel.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(int(round(duration / dt)) + 1) * dt
    om = 2.0 * math.pi / period
    v = v_mean + amplitude * np.sin(om * t)
    p = v_mean * t + amplitude / om * (1.0 - np.cos(om * t))
    a = amplitude * om * np.cos(om * t)
    if noise > 0:
        p = p + rng.uniform(-noise, noise, t.size)
        v = v + rng.uniform(-noise, noise, t.size)
        a = a + rng.uniform(-noise, noise, t.size)
    return [TrajectoryRecord(float(t[k]), float(p[k]), float(v[k]), float(a[k])) for k in range(t.size)]


def write_leader_csv(path, leader: Sampled) -> None:
    recs = [
        TrajectoryRecord(float(a), float(b), float(c), float(d))
        for a, b, c, d in zip(leader.time, leader.position_samples, leader.velocity_samples, leader.acceleration_samples)
    ]
    write_trajectory_csv(path, recs, smoothed=True)


def read_leader_csv(path) -> Sampled:
    arr = records_to_arrays(read_trajectory_csv(path))
    return Sampled(arr["time"], arr["position"], arr["velocity"], arr["acceleration"])
