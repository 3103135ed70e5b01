"""Random platoon graphs for property tests."""
import numpy as np

from platoon_hinf.topology import DirectedPlatoonGraph


def random_graph(rng, n=None, p_edge=0.3):
    """Any valid graph: spanning tree from the pinned node plus random extra edges."""
    n = int(rng.integers(2, 9)) if n is None else n
    adj = np.zeros((n, n))
    perm = rng.permutation(n)
    for k in range(1, n):
        adj[perm[k], perm[rng.integers(0, k)]] = 1
    extra = (rng.random((n, n)) < p_edge).astype(float)
    np.fill_diagonal(extra, 0)
    adj = np.maximum(adj, extra)
    dij = adj * rng.uniform(0.2, 2.0, (n, n))
    g = np.where(rng.random(n) < 0.4, rng.uniform(0.1, 5.0, n), 0.0)
    g[perm[0]] = rng.uniform(0.5, 5.0)
    return DirectedPlatoonGraph(adj, dij, rng.uniform(0.2, 4.0, n), g)


def random_separated_graph(rng, n=None, floor=0.5, gap=(0.2, 2.0)):
    """Graph whose Gershgorin discs are disjoint, with ``o - r >= floor`` for the leftmost disc."""
    n = int(rng.integers(2, 9)) if n is None else n
    adj = np.zeros((n, n))
    perm = rng.permutation(n)
    for k in range(1, n):
        adj[perm[k], perm[rng.integers(0, k)]] = 1
    extra = (rng.random((n, n)) < 0.25).astype(float)
    np.fill_diagonal(extra, 0)
    adj = np.maximum(adj, extra)
    dij = adj * rng.uniform(0.1, 1.0, (n, n))
    radii = dij.sum(axis=1)
    deg = adj.sum(axis=1)

    centers = np.empty(n)
    prev = None
    for i in rng.permutation(n):
        if prev is None:
            centers[i] = floor + radii[i] + rng.uniform(*gap)
        else:
            centers[i] = centers[prev] + radii[prev] + radii[i] + rng.uniform(*gap)
        prev = i

    g = np.zeros(n)
    d = np.ones(n)
    for i in range(n):
        if deg[i] == 0:
            g[i] = centers[i]
        else:
            g[i] = rng.uniform(0.0, 0.5) * centers[i] if i != perm[0] else 0.5 * centers[i]
            d[i] = (centers[i] - g[i]) / deg[i]
    g[perm[0]] = max(g[perm[0]], 0.1)
    if deg[perm[0]]:
        d[perm[0]] = (centers[perm[0]] - g[perm[0]]) / deg[perm[0]]
    return DirectedPlatoonGraph(adj, dij, d, g)


def random_stable_system(rng, n=None, m=None, p=None):
    n = int(rng.integers(1, 13)) if n is None else n
    m = int(rng.integers(1, 4)) if m is None else m
    p = int(rng.integers(1, 4)) if p is None else p
    a = rng.standard_normal((n, n))
    shift = np.max(np.linalg.eigvals(a).real) + rng.uniform(0.05, 1.0)
    a -= shift * np.eye(n)
    return a, rng.standard_normal((n, m)), rng.standard_normal((p, n))
