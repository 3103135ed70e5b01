"""Directed platoon communication graphs and their coupling matrix.

Followers are labelled ``1..N``; the leader is node 0 and only appears
through the pinning gains.  The coupling matrix is ``M = L_d + P`` with

    M[i, i] = g_i + d_i * sum_j a_ij
    M[i, j] = -d_ij * a_ij            (i != j)
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ComplexSpectrum,
    GraphError,
    NonPositiveEigenvalue,
    RepeatedEigenvalue,
    SpectrumError,
)

__all__ = [
    "DirectedPlatoonGraph",
    "CouplingMatrix",
    "GershgorinDisc",
    "Lemma1Result",
    "SpectralFactorization",
    "build_coupling_matrix",
    "gershgorin_discs",
    "check_lemma1",
    "spectral_factorization",
    "min_eigenvalue",
    "load_topology",
]


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DirectedPlatoonGraph:
    """Weighted directed graph over the followers of a platoon.

    ``adjacency[i, j] == 1`` means follower ``i+1`` receives information
    from follower ``j+1`` (edge ``j+1 -> i+1``).  Arrays are zero-based;
    the public node labels used in files and reports are one-based.
    """

    adjacency: np.ndarray
    neighbor_weights: np.ndarray
    self_weights: np.ndarray
    pinning_gains: np.ndarray

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=float)
        n = adj.shape[0] if adj.ndim == 2 else 0
        if n < 1 or adj.shape != (n, n):
            raise GraphError(f"adjacency must be a nonempty square matrix, got shape {adj.shape}")
        dij = np.asarray(self.neighbor_weights, dtype=float)
        di = np.asarray(self.self_weights, dtype=float).reshape(-1)
        g = np.asarray(self.pinning_gains, dtype=float).reshape(-1)
        if dij.shape != (n, n):
            raise GraphError(f"neighbor_weights must have shape {(n, n)}, got {dij.shape}")
        if di.shape != (n,):
            raise GraphError(f"self_weights must have length {n}, got {di.size}")
        if g.shape != (n,):
            raise GraphError(f"pinning must have length {n}, got {g.size}")
        if not np.all((adj == 0) | (adj == 1)):
            raise GraphError("adjacency entries must be 0 or 1")
        if np.any(np.diag(adj) != 0):
            i = int(np.flatnonzero(np.diag(adj))[0])
            raise GraphError(f"self-loop at node {i + 1}")
        edges = adj == 1
        if np.any(dij[edges] <= 0):
            i, j = np.argwhere(edges & (dij <= 0))[0]
            raise GraphError(f"edge {j + 1}->{i + 1}: weight must be > 0")
        if np.any(dij[~edges] != 0):
            i, j = np.argwhere(~edges & (dij != 0))[0]
            raise GraphError(f"weight given for missing edge {j + 1}->{i + 1}")
        if np.any(~np.isfinite(di)) or np.any(di <= 0):
            i = int(np.flatnonzero(~(di > 0))[0])
            raise GraphError(f"self_weights[{i + 1}] must be > 0")
        if np.any(~np.isfinite(g)) or np.any(g < 0):
            i = int(np.flatnonzero(~(g >= 0))[0])
            raise GraphError(f"pinning[{i + 1}] must be >= 0")
        object.__setattr__(self, "adjacency", _frozen(adj))
        object.__setattr__(self, "neighbor_weights", _frozen(dij))
        object.__setattr__(self, "self_weights", _frozen(di))
        object.__setattr__(self, "pinning_gains", _frozen(g))
        unreached = self.unreachable_nodes()
        if unreached:
            raise GraphError(
                "leader cannot reach follower(s) " + ", ".join(str(i) for i in unreached)
            )

    @property
    def n_followers(self) -> int:
        return self.adjacency.shape[0]

    def neighbors(self, i: int) -> list[int]:
        """One-based labels of the nodes follower ``i`` listens to."""
        return [int(j) + 1 for j in np.flatnonzero(self.adjacency[i - 1])]

    def unreachable_nodes(self) -> list[int]:
        reached = self.pinning_gains > 0
        queue = deque(np.flatnonzero(reached))
        while queue:
            j = queue.popleft()
            # followers listening to j
            for i in np.flatnonzero(self.adjacency[:, j]):
                if not reached[i]:
                    reached[i] = True
                    queue.append(i)
        return [int(i) + 1 for i in np.flatnonzero(~reached)]

    def scaled(self, s: float) -> "DirectedPlatoonGraph":
        return DirectedPlatoonGraph(
            self.adjacency, s * self.neighbor_weights, s * self.self_weights, s * self.pinning_gains
        )

    @classmethod
    def from_edges(
        cls,
        n: int,
        edges: Iterable[tuple[int, int, float]],
        self_weights: Sequence[float],
        pinning: Sequence[float],
    ) -> "DirectedPlatoonGraph":
        """Build from one-based ``(from, to, weight)`` triples."""
        if int(n) != n or n < 1:
            raise GraphError(f"n must be a positive integer, got {n!r}")
        n = int(n)
        adj = np.zeros((n, n))
        dij = np.zeros((n, n))
        for k, (src, dst, w) in enumerate(edges):
            if not (1 <= src <= n and 1 <= dst <= n):
                raise GraphError(f"edges[{k}]: node index out of range 1..{n}")
            if adj[dst - 1, src - 1]:
                raise GraphError(f"edges[{k}]: duplicate edge {src}->{dst}")
            adj[dst - 1, src - 1] = 1
            dij[dst - 1, src - 1] = w
        return cls(adj, dij, np.asarray(self_weights, float), np.asarray(pinning, float))

    @classmethod
    def from_dict(cls, data: dict) -> "DirectedPlatoonGraph":
        for key in ("n", "self_weights", "pinning"):
            if key not in data:
                raise GraphError(f"missing field '{key}'")
        edges = []
        for k, e in enumerate(data.get("edges", [])):
            try:
                edges.append((int(e["from"]), int(e["to"]), float(e.get("weight", 1.0))))
            except (KeyError, TypeError, ValueError) as exc:
                raise GraphError(f"edges[{k}]: malformed edge {e!r}") from exc
        try:
            sw = [float(x) for x in data["self_weights"]]
            pg = [float(x) for x in data["pinning"]]
        except (TypeError, ValueError) as exc:
            raise GraphError(f"self_weights/pinning must be numeric lists: {exc}") from exc
        return cls.from_edges(data["n"], edges, sw, pg)

    def to_dict(self) -> dict:
        edges = [
            {"from": int(j) + 1, "to": int(i) + 1, "weight": float(self.neighbor_weights[i, j])}
            for i, j in np.argwhere(self.adjacency == 1)
        ]
        return {
            "n": self.n_followers,
            "edges": edges,
            "self_weights": self.self_weights.tolist(),
            "pinning": self.pinning_gains.tolist(),
        }


def load_topology(path) -> DirectedPlatoonGraph:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise GraphError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise GraphError(f"{path}: top-level value must be an object")
    return DirectedPlatoonGraph.from_dict(data)


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    m: np.ndarray
    graph: DirectedPlatoonGraph | None = None

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.m, dtype=dtype)


def build_coupling_matrix(graph: DirectedPlatoonGraph) -> CouplingMatrix:
    a = graph.adjacency
    m = -graph.neighbor_weights * a
    m[np.diag_indices_from(m)] = graph.pinning_gains + graph.self_weights * a.sum(axis=1)
    return CouplingMatrix(_frozen(m), graph)


@dataclass(frozen=True)
class GershgorinDisc:
    node: int
    center: float
    radius: float


def gershgorin_discs(graph: DirectedPlatoonGraph) -> list[GershgorinDisc]:
    a = graph.adjacency
    centers = graph.pinning_gains + graph.self_weights * a.sum(axis=1)
    radii = (graph.neighbor_weights * a).sum(axis=1)
    return [
        GershgorinDisc(i + 1, float(o), float(r)) for i, (o, r) in enumerate(zip(centers, radii))
    ]


@dataclass(frozen=True)
class Lemma1Result:
    """Outcome of the disjoint-disc test.

    ``ordering`` lists node labels by increasing disc centre.  On failure
    ``violation`` holds the offending node(s): a single node when the
    leftmost disc touches the origin, else the first overlapping pair.
    A failed test says nothing about diagonalizability.
    """

    satisfied: bool
    ordering: tuple[int, ...]
    violation: tuple[int, ...] | None = None

    def __bool__(self):
        return self.satisfied


def check_lemma1(discs: Sequence[GershgorinDisc]) -> Lemma1Result:
    if not discs:
        raise ValueError("need at least one disc")
    # Interval overlap on the real line does not depend on the order in
    # which pairs are examined, so sorting by centre covers every permutation.
    order = sorted(discs, key=lambda d: (d.center, d.node))
    labels = tuple(d.node for d in order)
    first = order[0]
    if not first.center > first.radius:
        return Lemma1Result(False, labels, (first.node,))
    for lo, hi in zip(order, order[1:]):
        if not hi.center - lo.center > hi.radius + lo.radius:
            return Lemma1Result(False, labels, (lo.node, hi.node))
    return Lemma1Result(True, labels)


@dataclass(frozen=True, eq=False)
class SpectralFactorization:
    """``M = V diag(lam) V^-1`` with real, positive, ascending eigenvalues.

    Columns of ``v`` have unit Euclidean norm and their first nonzero entry
    is positive; anything computed from ``V^T V`` depends on this choice.
    """

    v: np.ndarray
    lam: np.ndarray
    v_inv: np.ndarray
    reconstruction_residual: float
    normalization: str = "unit-2norm-columns"


def _normalize_columns(v: np.ndarray) -> np.ndarray:
    v = v / np.linalg.norm(v, axis=0)
    for k in range(v.shape[1]):
        col = v[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-12 * np.abs(col).max())
        if col[nz[0]] < 0:
            v[:, k] = -col
    return v


def spectral_factorization(m, tol: float = 1e-10, gap_tol: float = 1e-8) -> SpectralFactorization:
    """Diagonalize a coupling matrix.

    Parameters
    ----------
    m : CouplingMatrix or array_like
        Square real matrix.
    tol : float
        Bound on the relative Frobenius reconstruction residual.
    gap_tol : float
        Imaginary parts and eigenvalue gaps are compared against
        ``gap_tol * ||M||_2``.

    Raises
    ------
    ComplexSpectrum, NonPositiveEigenvalue, RepeatedEigenvalue
        The premise of the decoupled design fails for these weights.
    """
    m = np.array(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"square matrix required, got shape {m.shape}")
    scale = max(np.linalg.norm(m, 2), np.finfo(float).tiny)
    thresh = gap_tol * scale

    w, v = np.linalg.eig(m)
    bad = np.flatnonzero(np.abs(w.imag) > thresh)
    if bad.size:
        raise ComplexSpectrum(
            f"eigenvalues {w[bad]} have imaginary parts above {thresh:.3g}", bad.tolist()
        )
    lam = w.real
    order = np.argsort(lam, kind="stable")
    lam = lam[order]
    v = np.real(v[:, order])

    bad = np.flatnonzero(lam <= 0)
    if bad.size:
        raise NonPositiveEigenvalue(f"eigenvalues {lam[bad]} are not positive", bad.tolist())
    gaps = np.diff(lam)
    bad = np.flatnonzero(gaps <= thresh)
    if bad.size:
        i = int(bad[0])
        raise RepeatedEigenvalue(
            f"eigenvalues {lam[i]:.12g} and {lam[i + 1]:.12g} closer than {thresh:.3g}", [i, i + 1]
        )

    v = _normalize_columns(v)
    v_inv = np.linalg.inv(v)
    resid = np.linalg.norm(v @ np.diag(lam) @ v_inv - m) / max(np.linalg.norm(m), np.finfo(float).tiny)
    if not resid < tol:
        raise SpectrumError(f"reconstruction residual {resid:.3g} exceeds {tol:.3g}")
    return SpectralFactorization(_frozen(v), _frozen(lam), _frozen(v_inv), float(resid))


def min_eigenvalue(f: SpectralFactorization) -> float:
    return float(f.lam[0])
