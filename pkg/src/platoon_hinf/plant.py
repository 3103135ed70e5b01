"""Vehicle model, distributed controller and the collective closed loop.

Every vehicle obeys ``tau * da/dt + a = u + w`` and is described in
leader-relative error coordinates ``x_hat = (p_hat, v_hat, a_hat)``.
Stacking is vehicle-major: ``X = (x_hat_1, ..., x_hat_N)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonPositiveTau
from .topology import DirectedPlatoonGraph, build_coupling_matrix


@dataclass(frozen=True, eq=False)
class VehicleModel:
    tau: float
    a: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    c1: np.ndarray


def vehicle_model(tau: float) -> VehicleModel:
    if not tau > 0:
        raise NonPositiveTau(f"tau must be > 0, got {tau!r}")
    a = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0 / tau]])
    b = np.array([[0.0], [0.0], [1.0 / tau]])
    c1 = np.array([[1.0, 0.0, 0.0]])
    return VehicleModel(float(tau), a, b, b.copy(), c1)


@dataclass(frozen=True)
class FeedbackGains:
    k_p: float
    k_v: float
    k_a: float
    c: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"coupling strength must be > 0, got {self.c!r}")

    @property
    def k(self) -> np.ndarray:
        return np.array([self.k_p, self.k_v, self.k_a], dtype=float)

    def with_coupling(self, c: float) -> "FeedbackGains":
        return FeedbackGains(self.k_p, self.k_v, self.k_a, c)


def _stack_states(graph, states) -> np.ndarray:
    x = np.asarray(states, dtype=float)
    n = graph.n_followers
    if x.shape == (3 * n,):
        x = x.reshape(n, 3)
    if x.shape != (n, 3):
        raise DimensionMismatch(f"expected {n} tracking states of length 3, got shape {x.shape}")
    return x


def local_control(gains: FeedbackGains, graph: DirectedPlatoonGraph, tracking_states) -> np.ndarray:
    """Per-vehicle input from the absolute-error controller.

    ``u_i = -c k^T (g_i x_i + sum_{j in N_i} (d_i x_i - d_ij x_j))``
    """
    x = _stack_states(graph, tracking_states)
    k = gains.k
    u = np.empty(graph.n_followers)
    for i in range(graph.n_followers):
        s = graph.pinning_gains[i] * x[i]
        for j in np.flatnonzero(graph.adjacency[i]):
            s = s + graph.self_weights[i] * x[i] - graph.neighbor_weights[i, j] * x[j]
        u[i] = -gains.c * (k @ s)
    return u


def local_control_relative(gains: FeedbackGains, graph: DirectedPlatoonGraph, tracking_states) -> np.ndarray:
    """Same inputs written with relative errors ``e_ij = x_i - x_j``.

    ``u_i = -c k^T (g_i x_i + sum_j (d_i - d_ij) x_i + sum_j d_ij e_ij)``
    """
    x = _stack_states(graph, tracking_states)
    k = gains.k
    u = np.empty(graph.n_followers)
    for i in range(graph.n_followers):
        s = graph.pinning_gains[i] * x[i]
        for j in np.flatnonzero(graph.adjacency[i]):
            d_ij = graph.neighbor_weights[i, j]
            s = s + (graph.self_weights[i] - d_ij) * x[i] + d_ij * (x[i] - x[j])
        u[i] = -gains.c * (k @ s)
    return u


@dataclass(frozen=True, eq=False)
class ClosedLoopSystem:
    """``dX/dt = a_c X + b W``, ``Y = c_out X``."""

    a_c: np.ndarray
    b: np.ndarray
    c_out: np.ndarray
    graph: DirectedPlatoonGraph
    model: VehicleModel
    gains: FeedbackGains

    @property
    def n_followers(self) -> int:
        return self.graph.n_followers

    def state_space(self):
        return self.a_c, self.b, self.c_out

    def dump(self) -> str:
        """Row-major matrix dump, full precision, for debugging."""
        out = []
        for name, mat in (("A_c", self.a_c), ("B", self.b), ("C", self.c_out)):
            out.append(f"# {name} {mat.shape[0]} {mat.shape[1]}")
            out.extend(" ".join(repr(float(v)) for v in row) for row in mat)
        return "\n".join(out) + "\n"


def assemble_closed_loop(
    graph: DirectedPlatoonGraph, model: VehicleModel, gains: FeedbackGains, c: float | None = None
) -> ClosedLoopSystem:
    """Kronecker assembly; ``c`` overrides ``gains.c`` (zero allowed, giving the open loop)."""
    c = gains.c if c is None else float(c)
    n = graph.n_followers
    m = build_coupling_matrix(graph).m
    bk = model.b1 @ gains.k[None, :]
    a_c = np.kron(np.eye(n), model.a) - c * np.kron(m, bk)
    b = np.kron(np.eye(n), model.b2)
    c_out = np.kron(np.eye(n), model.c1)
    return ClosedLoopSystem(a_c, b, c_out, graph, model, gains)


def mode_denominator(lambda_i: float, gains: FeedbackGains, tau: float) -> tuple[float, float, float, float]:
    """Coefficients of ``tau s^3 + (1 + l k_a) s^2 + l k_v s + l k_p``.

    Uses ``l = lambda_i`` as given; pass ``c * lambda_i`` for a coupling
    strength other than one.
    """
    lam = float(lambda_i)
    return (float(tau), 1.0 + lam * gains.k_a, lam * gains.k_v, lam * gains.k_p)
