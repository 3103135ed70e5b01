"""Frequency-domain robustness analysis of the platoon closed loop."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import NotHurwitz, SpectrumError
from .plant import (
    ClosedLoopSystem,
    FeedbackGains,
    VehicleModel,
    assemble_closed_loop,
    mode_denominator,
)
from .topology import (
    DirectedPlatoonGraph,
    SpectralFactorization,
    build_coupling_matrix,
    check_lemma1,
    gershgorin_discs,
    spectral_factorization,
)

log = logging.getLogger(__name__)

HURWITZ_EPS = 1e-9


@dataclass(frozen=True)
class HinfResult:
    gamma: float
    peak_frequency: float
    method: str
    tolerance: float
    dc_gain: float = float("nan")


@dataclass(frozen=True)
class GammaBound:
    lambda_min: float
    cond_term: float
    bound: float
    k_p: float
    normalization: str = "unit-2norm-columns"


def _triple(system):
    if isinstance(system, ClosedLoopSystem):
        return system.state_space()
    a, b, c = system
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float).reshape(a.shape[0], -1)
    c = np.asarray(c, dtype=float).reshape(-1, a.shape[0])
    return a, b, c


def spectral_abscissa(a) -> float:
    return float(np.max(np.linalg.eigvals(np.atleast_2d(a)).real))


def is_hurwitz(a_matrix, eps: float = HURWITZ_EPS) -> bool:
    a = np.atleast_2d(np.asarray(a_matrix, dtype=float))
    if a.size == 0 or not np.all(np.isfinite(a)):
        return False
    return spectral_abscissa(a) < -eps


def _chunk(n_states: int) -> int:
    return max(1, int(4e6 // max(n_states * n_states, 1)))


def frequency_response(system, omega) -> np.ndarray:
    """``G(j w)`` for every ``w`` in ``omega``; shape ``(len(omega), p, m)``."""
    a, b, c = _triple(system)
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    n = a.shape[0]
    eye = np.eye(n)
    out = np.empty((omega.size, c.shape[0], b.shape[1]), dtype=complex)
    step = _chunk(n)
    for s in range(0, omega.size, step):
        w = omega[s:s + step]
        lhs = 1j * w[:, None, None] * eye - a
        out[s:s + step] = c @ np.linalg.solve(lhs, np.broadcast_to(b, (w.size,) + b.shape))
    return out


def _sigma_max(a, b, c, omega) -> np.ndarray:
    g = frequency_response((a, b, c), omega)
    return np.linalg.svd(g, compute_uv=False)[:, 0]


def _axis_crossings(a, b, c, gamma, rel_tol=1e-6):
    """Frequencies where the Hamiltonian has (numerically) imaginary eigenvalues."""
    h = np.block([[a, (b @ b.T) / gamma**2], [-(c.T @ c), -a.T]])
    ev = np.linalg.eigvals(h)
    scale = max(1.0, np.linalg.norm(h, 1))
    on_axis = np.abs(ev.real) <= rel_tol * np.maximum(scale, np.abs(ev))
    w = np.abs(ev[on_axis].imag)
    return np.unique(np.round(w, 14)) if w.size else w


def _probe(a, b, c, gamma):
    """Is ``gamma`` below the norm?  Returns (verdict, best sigma, its w)."""
    w = _axis_crossings(a, b, c, gamma)
    if not w.size:
        return False, 0.0, 0.0
    probe = np.concatenate([w, 0.5 * (w[1:] + w[:-1])])
    sig = _sigma_max(a, b, c, probe)
    j = int(np.argmax(sig))
    return bool(sig[j] >= gamma * (1 - 1e-9)), float(sig[j]), float(probe[j])


def hinf_norm(system, tol: float = 1e-6, max_iter: int = 200) -> HinfResult:
    """H-infinity norm by bisection on the Hamiltonian imaginary-axis test.

    Every frequency reported by the Hamiltonian is re-evaluated directly so
    that the lower bracket always holds an attained singular value.
    """
    a, b, c = _triple(system)
    if not is_hurwitz(a):
        raise NotHurwitz(f"spectral abscissa {spectral_abscissa(a):.3g} is not below -{HURWITZ_EPS:g}")
    dc = float(np.linalg.svd(c @ np.linalg.solve(-a, b), compute_uv=False)[0])
    coarse_w = np.logspace(-4, 4, 200)
    coarse = _sigma_max(a, b, c, coarse_w)
    i = int(np.argmax(coarse))
    lo, peak = (dc, 0.0) if dc >= coarse[i] else (float(coarse[i]), float(coarse_w[i]))
    if lo == 0.0:
        return HinfResult(0.0, 0.0, "bisection", 0.0, dc)
    hi = 2.0 * max(float(coarse[i]), lo)
    while _probe(a, b, c, hi)[0]:
        hi *= 2.0

    for _ in range(max_iter):
        if hi - lo <= tol * lo:
            break
        gamma = np.sqrt(lo * hi)
        confirmed, sig, w = _probe(a, b, c, gamma)
        if confirmed:
            if sig > lo:
                lo, peak = sig, w
            lo = max(lo, gamma)
        else:
            hi = gamma
    lo = min(lo, hi)
    return HinfResult(float(0.5 * (lo + hi)), float(peak), "bisection", float((hi - lo) / lo), dc)


def hinf_norm_sweep_oracle(system, omega_grid=None, refine: bool = True) -> float:
    """Peak of the largest singular value over a dense frequency grid.

    Default grid: 20 000 log-spaced points on [1e-4, 1e4] rad/s plus
    ``w = 0``, followed by a bounded scalar refinement around the best
    grid point.
    """
    a, b, c = _triple(system)
    if not is_hurwitz(a):
        raise NotHurwitz(f"spectral abscissa {spectral_abscissa(a):.3g}")
    if omega_grid is None:
        omega_grid = np.concatenate([[0.0], np.logspace(-4, 4, 20000)])
    omega = np.asarray(omega_grid, dtype=float)
    try:
        sig = _sigma_max(a, b, c, omega)
    except np.linalg.LinAlgError:
        sig = np.full(omega.size, -np.inf)
        for k, w in enumerate(omega):
            try:
                sig[k] = _sigma_max(a, b, c, [w])[0]
            except np.linalg.LinAlgError:
                warnings.warn(f"singular resolvent at w={w:g}; point skipped", RuntimeWarning)
    k = int(np.argmax(sig))
    best = float(sig[k])
    if refine and omega.size > 1:
        left = omega[max(k - 1, 0)]
        right = omega[min(k + 1, omega.size - 1)]
        if right > left:
            res = minimize_scalar(
                lambda w: -_sigma_max(a, b, c, [w])[0],
                bounds=(left, right),
                method="bounded",
                options={"xatol": 1e-10 * max(1.0, right)},
            )
            best = max(best, float(-res.fun))
    return best


def _mode_system(theta: float, gains: FeedbackGains, tau: float):
    a3, a2, a1, a0 = mode_denominator(theta, gains, tau)
    a = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-a0 / a3, -a1 / a3, -a2 / a3]])
    b = np.array([[0.0], [0.0], [1.0 / a3]])
    c = np.array([[1.0, 0.0, 0.0]])
    return a, b, c


def mode_hinf(lambda_i: float, gains: FeedbackGains, tau: float, tol: float = 1e-8) -> HinfResult:
    """Norm of ``1 / (tau s^3 + (1 + l k_a) s^2 + l k_v s + l k_p)`` with ``l = c * lambda_i``."""
    theta = gains.c * lambda_i
    a, b, c = _mode_system(theta, gains, tau)
    if not is_hurwitz(a):
        raise NotHurwitz(f"mode lambda={lambda_i:g}: characteristic cubic is not Hurwitz")
    return hinf_norm((a, b, c), tol=tol)


def dc_gain_is_peak(lambda_i: float, gains: FeedbackGains, tau: float) -> bool:
    """True when ``|G_i(jw)|`` is maximal at ``w = 0``.

    ``|D(jw)|^2 - D(0)^2 = x (c1 + c2 x + c3 x^2)`` with ``x = w^2``, so the
    DC value is the peak iff the quadratic factor is nonnegative on x >= 0.
    """
    a3, a2, a1, a0 = mode_denominator(gains.c * lambda_i, gains, tau)
    c1 = a1 * a1 - 2 * a0 * a2
    c2 = a2 * a2 - 2 * a1 * a3
    c3 = a3 * a3
    if c1 < 0:
        return False
    return c2 >= 0 or c2 * c2 <= 4 * c1 * c3


def gamma_upper_bound(f: SpectralFactorization, k_p: float) -> GammaBound:
    """Robustness bound ``sqrt(cond(V^T V)) / (lambda_min k_p)``."""
    if not k_p > 0:
        raise ValueError(f"k_p must be > 0, got {k_p!r}")
    ev = np.linalg.eigvalsh(f.v.T @ f.v)
    cond_term = float(np.sqrt(ev[-1] / ev[0]))
    lam_min = float(f.lam[0])
    return GammaBound(lam_min, cond_term, cond_term / (lam_min * k_p), float(k_p), f.normalization)


@dataclass
class ModeRow:
    lam: float
    dc_gain: float
    gamma: float
    peak_frequency: float


@dataclass
class AnalysisReport:
    discs: list
    lemma1: object
    eigenvalues: list = field(default_factory=list)
    lambda_min: float | None = None
    bound: GammaBound | None = None
    modes: list = field(default_factory=list)
    full: HinfResult | None = None
    hurwitz: bool | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        out = {
            "discs": [{"node": d.node, "center": d.center, "radius": d.radius} for d in self.discs],
            "disc_condition": {
                "satisfied": self.lemma1.satisfied,
                "ordering": list(self.lemma1.ordering),
                "violation": list(self.lemma1.violation) if self.lemma1.violation else None,
            },
            "eigenvalues": self.eigenvalues,
            "lambda_min": self.lambda_min,
            "hurwitz": self.hurwitz,
            "error": self.error,
        }
        if self.bound is not None:
            out["gamma_bound"] = {
                "bound": self.bound.bound,
                "cond_term": self.bound.cond_term,
                "k_p": self.bound.k_p,
                "normalization": self.bound.normalization,
            }
        out["modes"] = [vars(r) for r in self.modes]
        if self.full is not None:
            out["full_hinf"] = {"gamma": self.full.gamma, "peak_frequency": self.full.peak_frequency}
        return out

    def to_text(self) -> str:
        lines = ["Gershgorin discs (node, center, radius):"]
        lines += [f"  {d.node:3d}  {d.center:12.6g}  {d.radius:12.6g}" for d in self.discs]
        l1 = self.lemma1
        verdict = "satisfied" if l1.satisfied else f"not satisfied (violation at {l1.violation})"
        lines.append(f"disc separation condition: {verdict}")
        if self.error:
            lines.append(f"error: {self.error}")
            return "\n".join(lines) + "\n"
        lines.append("eigenvalues: " + " ".join(f"{v:.10g}" for v in self.eigenvalues))
        lines.append(f"lambda_min: {self.lambda_min:.10g}")
        if self.bound is not None:
            lines.append(
                f"gamma bound: {self.bound.bound:.6g} (cond term {self.bound.cond_term:.6g}, "
                f"k_p {self.bound.k_p:g}, {self.bound.normalization})"
            )
        lines.append("modes (lambda, dc gain, gamma, peak w):")
        lines += [
            f"  {r.lam:12.6g}  {r.dc_gain:12.6g}  {r.gamma:12.6g}  {r.peak_frequency:10.4g}" for r in self.modes
        ]
        if self.full is not None:
            lines.append(f"full closed loop: gamma {self.full.gamma:.6g} at w {self.full.peak_frequency:.4g} rad/s")
        elif self.hurwitz is False:
            lines.append("full closed loop: not Hurwitz")
        return "\n".join(lines) + "\n"


def analyze(graph: DirectedPlatoonGraph, model: VehicleModel, gains: FeedbackGains) -> AnalysisReport:
    """Discs, disc condition, spectrum, bound and per-mode / full norms."""
    discs = gershgorin_discs(graph)
    report = AnalysisReport(discs, check_lemma1(discs))
    try:
        f = spectral_factorization(build_coupling_matrix(graph))
    except SpectrumError as exc:
        report.error = f"{type(exc).__name__}: {exc}"
        return report
    report.eigenvalues = f.lam.tolist()
    report.lambda_min = float(f.lam[0])
    if gains.k_p > 0:
        report.bound = gamma_upper_bound(f, gains.k_p)
    for lam in f.lam:
        try:
            r = mode_hinf(lam, gains, model.tau)
            report.modes.append(ModeRow(float(lam), r.dc_gain, r.gamma, r.peak_frequency))
        except NotHurwitz:
            report.modes.append(ModeRow(float(lam), float("nan"), float("inf"), float("nan")))
    system = assemble_closed_loop(graph, model, gains)
    report.hurwitz = is_hurwitz(system.a_c)
    if report.hurwitz:
        report.full = hinf_norm(system)
    return report


def gamma_bound_sweep(graph: DirectedPlatoonGraph, k_p: float, weight_scales, pinning_scales):
    """Evaluate the bound over a grid of weight rescalings.

    Neighbour and self weights are multiplied by each entry of
    ``weight_scales`` and pinning gains by each entry of ``pinning_scales``.
    Grid points whose coupling matrix cannot be diagonalized are skipped.
    This only samples the bound; it makes no claim about its infimum.

    Returns
    -------
    list of (weight_scale, pinning_scale, GammaBound)
        Sorted by increasing bound.
    """
    rows = []
    for sw in weight_scales:
        for sp in pinning_scales:
            g = DirectedPlatoonGraph(
                graph.adjacency, sw * graph.neighbor_weights, sw * graph.self_weights, sp * graph.pinning_gains
            )
            try:
                f = spectral_factorization(build_coupling_matrix(g))
            except SpectrumError:
                continue
            rows.append((float(sw), float(sp), gamma_upper_bound(f, k_p)))
    rows.sort(key=lambda r: r[2].bound)
    return rows
