"""Fixed-step time-domain simulation of the platoon error dynamics.

The integrator works on the stacked error state ``X`` of the collective
closed loop, ``dX/dt = A_c X + B W(t, X)``.  The leader trajectory only
enters through state-dependent disturbances (aerodynamic drag acts on
absolute speed) and through reconstruction of absolute positions.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CoverageGap, NonFiniteState, ZeroDisturbance
from .plant import ClosedLoopSystem

DEFAULT_GAP = 4.5


# -- disturbances -----------------------------------------------------------

class DisturbanceProfile:
    """Per-follower disturbance ``w_i(t)``, identical for every follower
    unless it depends on the follower's own state."""

    state_dependent = False

    def evaluate(self, t: float, n: int, speeds=None) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Zero(DisturbanceProfile):
    def evaluate(self, t, n, speeds=None):
        return np.zeros(n)

    def to_dict(self):
        return {"type": "zero"}


@dataclass(frozen=True)
class SinePulse(DisturbanceProfile):
    """``Q sin(2 pi / T (t - t0))`` on ``[t0, t1)``, zero elsewhere."""

    amplitude: float
    t0: float = 5.0
    t1: float = 10.0
    period: float = 5.0

    def __post_init__(self):
        if not self.t0 < self.t1:
            raise ValueError(f"pulse window must satisfy t0 < t1, got ({self.t0}, {self.t1})")
        if not self.period > 0:
            raise ValueError(f"period must be > 0, got {self.period}")

    def value(self, t: float) -> float:
        if self.t0 <= t < self.t1:
            return self.amplitude * math.sin(2.0 * math.pi / self.period * (t - self.t0))
        return 0.0

    def evaluate(self, t, n, speeds=None):
        return np.full(n, self.value(t))

    def to_dict(self):
        return {"type": "sine_pulse", "amplitude": self.amplitude, "t0": self.t0,
                "t1": self.t1, "period": self.period}


def sine_pulse(Q: float, t0: float = 5.0, t1: float = 10.0, T: float = 5.0) -> SinePulse:
    return SinePulse(Q, t0, t1, T)


@dataclass(frozen=True)
class Drag(DisturbanceProfile):
    """Aerodynamic drag ``-c2 v |v|`` on each follower's absolute speed
    inside ``[t_a, t_b)``."""

    c2: float
    t_a: float
    t_b: float
    state_dependent = True

    def __post_init__(self):
        if not self.c2 >= 0:
            raise ValueError(f"drag coefficient must be >= 0, got {self.c2}")
        if not self.t_a < self.t_b:
            raise ValueError(f"drag window must satisfy t_a < t_b, got ({self.t_a}, {self.t_b})")

    def evaluate(self, t, n, speeds=None):
        if not (self.t_a <= t < self.t_b):
            return np.zeros(n)
        v = np.asarray(speeds, dtype=float)
        return -self.c2 * v * np.abs(v)

    def to_dict(self):
        return {"type": "drag", "c2": self.c2, "t_a": self.t_a, "t_b": self.t_b}


def disturbance_from_dict(d: dict) -> DisturbanceProfile:
    kind = d.get("type", "zero")
    if kind == "zero":
        return Zero()
    if kind == "sine_pulse":
        return SinePulse(float(d["amplitude"]), float(d.get("t0", 5.0)),
                         float(d.get("t1", 10.0)), float(d.get("period", 5.0)))
    if kind == "drag":
        window = d.get("window", (d.get("t_a"), d.get("t_b")))
        return Drag(float(d["c2"]), float(window[0]), float(window[1]))
    raise ValueError(f"unknown disturbance type {kind!r}")


# -- leader -----------------------------------------------------------------

class LeaderTrajectory:
    def position(self, t):
        raise NotImplementedError

    def velocity(self, t):
        raise NotImplementedError

    def acceleration(self, t):
        raise NotImplementedError

    def covers(self, t_start: float, t_end: float) -> bool:
        return True


@dataclass(frozen=True)
class ConstantSpeed(LeaderTrajectory):
    v0: float = 20.0
    p0: float = 0.0

    def position(self, t):
        return self.p0 + self.v0 * np.asarray(t, dtype=float)

    def velocity(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.v0)

    def acceleration(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))


@dataclass(frozen=True, eq=False)
class Sampled(LeaderTrajectory):
    """Leader samples, linearly interpolated between grid points."""

    time: np.ndarray
    position_samples: np.ndarray
    velocity_samples: np.ndarray
    acceleration_samples: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.time, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("sampled leader needs at least two samples")
        if np.any(np.diff(t) <= 0):
            raise ValueError("sampled leader time grid must be strictly increasing")
        for name in ("position_samples", "velocity_samples", "acceleration_samples"):
            if np.asarray(getattr(self, name)).shape != t.shape:
                raise ValueError(f"{name} must match the time grid")

    def _interp(self, t, y):
        return np.interp(t, self.time, y)

    def position(self, t):
        return self._interp(t, self.position_samples)

    def velocity(self, t):
        return self._interp(t, self.velocity_samples)

    def acceleration(self, t):
        return self._interp(t, self.acceleration_samples)

    def covers(self, t_start, t_end):
        span = self.time[-1] - self.time[0]
        slack = 1e-9 * max(1.0, span)
        return self.time[0] <= t_start + slack and self.time[-1] >= t_end - slack

    def velocity_consistency(self) -> float:
        """RMS gap between the velocity channel and differentiated position,
        relative to the velocity RMS."""
        dp = np.gradient(self.position_samples, self.time)
        v = self.velocity_samples
        return float(np.sqrt(np.mean((dp - v) ** 2)) / max(np.sqrt(np.mean(v**2)), 1e-300))

    @classmethod
    def from_constant_speed(cls, v0: float, t_end: float, dt: float, p0: float = 0.0) -> "Sampled":
        t = np.arange(int(round(t_end / dt)) + 1) * dt
        return cls(t, p0 + v0 * t, np.full_like(t, v0), np.zeros_like(t))


# -- trace ------------------------------------------------------------------

@dataclass(eq=False)
class SimulationTrace:
    dt: float
    times: np.ndarray
    states: np.ndarray          # (steps, 3N), vehicle-major
    disturbances: np.ndarray    # (steps, N), value consumed by the first RK stage
    leader: LeaderTrajectory = field(default_factory=ConstantSpeed)
    desired_gap: float = DEFAULT_GAP

    @property
    def n_followers(self) -> int:
        return self.disturbances.shape[1]

    @property
    def p_hat(self) -> np.ndarray:
        return self.states[:, 0::3]

    @property
    def v_hat(self) -> np.ndarray:
        return self.states[:, 1::3]

    @property
    def a_hat(self) -> np.ndarray:
        return self.states[:, 2::3]

    @property
    def outputs(self) -> np.ndarray:
        return self.p_hat

    def desired_offsets(self) -> np.ndarray:
        """``d_{i,0}``: followers sit ``i * gap`` behind the leader."""
        return -self.desired_gap * np.arange(1, self.n_followers + 1)

    def absolute_positions(self) -> np.ndarray:
        p0 = np.asarray(self.leader.position(self.times))
        return self.p_hat + p0[:, None] + self.desired_offsets()[None, :]

    def absolute_velocities(self) -> np.ndarray:
        return self.v_hat + np.asarray(self.leader.velocity(self.times))[:, None]

    def state_norms(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1)


def simulate(
    system: ClosedLoopSystem,
    dist: DisturbanceProfile | None = None,
    leader: LeaderTrajectory | None = None,
    x0=None,
    horizon: float = 30.0,
    dt: float = 1e-3,
    desired_gap: float = DEFAULT_GAP,
) -> SimulationTrace:
    """Classic fourth-order Runge-Kutta with a fixed step."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if not horizon >= dt:
        raise ValueError(f"horizon must be >= dt, got {horizon}")
    dist = Zero() if dist is None else dist
    leader = ConstantSpeed() if leader is None else leader
    a_c, b = system.a_c, system.b
    if not np.all(np.isfinite(a_c)):
        raise ValueError("closed-loop matrix has non-finite entries")
    n = system.n_followers
    x = np.zeros(3 * n) if x0 is None else np.array(x0, dtype=float).reshape(3 * n)

    if dist.state_dependent:
        def w_of(t, x):
            return dist.evaluate(t, n, x[1::3] + leader.velocity(t))
    else:
        def w_of(t, x):
            return dist.evaluate(t, n)

    steps = int(round(horizon / dt))
    times = np.arange(steps + 1) * dt
    states = np.empty((steps + 1, 3 * n))
    ws = np.empty((steps + 1, n))
    half = 0.5 * dt
    # overflow on the way to divergence is caught by the finiteness check
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps + 1):
            t = times[k]
            w1 = w_of(t, x)
            states[k] = x
            ws[k] = w1
            if k == steps:
                break
            k1 = a_c @ x + b @ w1
            xm = x + half * k1
            k2 = a_c @ xm + b @ w_of(t + half, xm)
            xm = x + half * k2
            k3 = a_c @ xm + b @ w_of(t + half, xm)
            xe = x + dt * k3
            k4 = a_c @ xe + b @ w_of(t + dt, xe)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(x)):
                raise NonFiniteState(f"state became non-finite at step {k + 1} (t={t + dt:g})", k + 1)
    return SimulationTrace(dt, times, states, ws, leader, desired_gap)


def replay_leader(
    system: ClosedLoopSystem,
    leader: Sampled,
    dist: DisturbanceProfile | None = None,
    x0=None,
    horizon: float | None = None,
    dt: float = 1e-3,
    desired_gap: float = DEFAULT_GAP,
) -> SimulationTrace:
    """Simulate the followers against a recorded leader from its first sample."""
    t_start = float(leader.time[0])
    if horizon is None:
        horizon = float(leader.time[-1]) - t_start
    if t_start != 0.0:
        leader = Sampled(leader.time - t_start, leader.position_samples,
                         leader.velocity_samples, leader.acceleration_samples)
    if not leader.covers(0.0, horizon):
        raise CoverageGap(
            f"leader samples cover [0, {leader.time[-1] - leader.time[0]:g}] s, horizon is {horizon:g} s"
        )
    return simulate(system, dist, leader, x0, horizon, dt, desired_gap)


def spacing_errors(trace: SimulationTrace) -> np.ndarray:
    """``p_hat_i - p_hat_{i-1}`` (``p_hat_1`` for the first follower)."""
    p = trace.p_hat
    out = np.empty_like(p)
    out[:, 0] = p[:, 0]
    out[:, 1:] = p[:, 1:] - p[:, :-1]
    return out


def _l2(values: np.ndarray, times: np.ndarray) -> float:
    return math.sqrt(float(np.trapezoid(np.sum(values**2, axis=1), times)))


def l2_gain(trace: SimulationTrace, per_node: bool = True) -> float:
    """Time-domain amplification ``||Y||_L2 / ||W||_L2`` (trapezoidal rule).

    With ``per_node`` (default) the denominator is the energy of a single
    follower's disturbance channel, ``||W|| / sqrt(N)``; for the usual
    identical-per-follower disturbance this is the norm of the common signal
    ``w(t)``.  ``per_node=False`` uses the stacked ``W`` and is bounded by the
    H-infinity norm of the closed loop.
    """
    w_norm = _l2(trace.disturbances, trace.times)
    if w_norm == 0.0:
        raise ZeroDisturbance("disturbance has zero L2 norm")
    if per_node:
        w_norm /= math.sqrt(trace.n_followers)
    return _l2(trace.outputs, trace.times) / w_norm


def decay_rate(trace: SimulationTrace, t_start: float, t_end: float | None = None) -> float:
    """Least-squares slope of ``log ||X(t)||`` over ``[t_start, t_end]``."""
    t_end = trace.times[-1] if t_end is None else t_end
    sel = (trace.times >= t_start) & (trace.times <= t_end)
    norms = trace.state_norms()[sel]
    keep = norms > 0
    if keep.sum() < 2:
        raise ValueError("not enough nonzero samples to fit a decay rate")
    slope, _ = np.polyfit(trace.times[sel][keep], np.log(norms[keep]), 1)
    return float(slope)


# -- output -----------------------------------------------------------------

def trace_header(n: int) -> list[str]:
    cols = ["t"]
    for name in ("w", "phat", "vhat", "ahat", "spacing"):
        cols += [f"{name}_{i}" for i in range(1, n + 1)]
    return cols


def write_trace_csv(trace: SimulationTrace, path) -> None:
    sp = spacing_errors(trace)
    table = np.hstack([trace.times[:, None], trace.disturbances, trace.p_hat, trace.v_hat, trace.a_hat, sp])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(trace_header(trace.n_followers))
        for row in table:
            writer.writerow([repr(float(v)) for v in row])


def summarize(trace: SimulationTrace, abscissa: float | None = None, decay_from: float | None = None) -> dict:
    sp = spacing_errors(trace)
    out = {
        "dt": trace.dt,
        "horizon": float(trace.times[-1]),
        "n_followers": trace.n_followers,
        "peak_spacing_error": float(np.abs(sp).max()),
        "peak_spacing_error_per_vehicle": np.abs(sp).max(axis=0).tolist(),
        "peak_position_error_per_vehicle": np.abs(trace.p_hat).max(axis=0).tolist(),
        "final_state_norm": float(trace.state_norms()[-1]),
        "peak_state_norm": float(trace.state_norms().max()),
    }
    try:
        out["l2_gain"] = l2_gain(trace)
        out["l2_gain_stacked"] = l2_gain(trace, per_node=False)
    except ZeroDisturbance:
        out["l2_gain"] = None
        out["l2_gain_stacked"] = None
    if decay_from is not None and decay_from < trace.times[-1]:
        try:
            out["decay"] = {"from": decay_from, "fitted_rate": decay_rate(trace, decay_from),
                            "spectral_abscissa": abscissa}
        except ValueError:
            out["decay"] = None
    return out


def write_summary_json(summary: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
