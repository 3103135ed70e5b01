"""Distributed H-infinity synthesis from a single-vehicle LMI.

Feasible ``(Q, alpha)`` of

    [[A Q + Q A^T - alpha B1 B1^T, B2,       Q C1^T],
     [B2^T,                        -gamma^2, 0     ],
     [C1 Q,                        0,        -1    ]]  < 0

give the gains ``k^T = 1/2 B1^T Q^-1`` and the coupling strength
``c = sqrt(alpha) / lambda_min``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import HURWITZ_EPS, hinf_norm, is_hurwitz, mode_hinf, spectral_abscissa
from .errors import Infeasible, NonPositiveGamma, NonPositiveInput, NotHurwitz, SingularQ
from .plant import FeedbackGains, VehicleModel, assemble_closed_loop
from .topology import DirectedPlatoonGraph, build_coupling_matrix, spectral_factorization

log = logging.getLogger(__name__)

_Q_INDEX = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


def lmi_block(model: VehicleModel, q, alpha: float, gamma_d: float) -> np.ndarray:
    """Assemble the symmetric 5x5 block from scratch."""
    q = np.asarray(q, dtype=float)
    a, b1, b2, c1 = model.a, model.b1, model.b2, model.c1
    f = np.zeros((5, 5))
    f[:3, :3] = a @ q + q @ a.T - alpha * (b1 @ b1.T)
    f[:3, 3:4] = b2
    f[3:4, :3] = b2.T
    f[:3, 4:5] = q @ c1.T
    f[4:5, :3] = c1 @ q
    f[3, 3] = -gamma_d**2
    f[4, 4] = -1.0
    return f


@dataclass(frozen=True, eq=False)
class LmiSolution:
    q: np.ndarray
    alpha: float
    margin: float
    gamma_d: float
    normalized_margin: float
    evaluations: int = 0


def scaled_block(model: VehicleModel, q, alpha: float, gamma_d: float) -> np.ndarray:
    """Congruence ``D F D`` with ``D = diag(1, 1, 1, 1/gamma_d, 1)``.

    Same feasibility set as the raw block, but the disturbance row no
    longer carries the ``gamma_d^2`` scale.
    """
    d = np.array([1.0, 1.0, 1.0, 1.0 / gamma_d, 1.0])
    return d[:, None] * lmi_block(model, q, alpha, gamma_d) * d[None, :]


def certify(model: VehicleModel, q, alpha: float, gamma_d: float) -> tuple[float, float]:
    """Independent feasibility check: ``(margin, normalized margin)``.

    ``margin = -lambda_max(block)`` on the raw block; the normalized margin
    is ``-lambda_max / ||.||_2`` of the congruence-scaled block.
    """
    margin = float(-np.linalg.eigvalsh(lmi_block(model, q, alpha, gamma_d))[-1])
    ev = np.linalg.eigvalsh(scaled_block(model, q, alpha, gamma_d))
    return margin, float(-ev[-1] / np.abs(ev).max())


def is_positive_definite(q) -> bool:
    try:
        np.linalg.cholesky(np.asarray(q, dtype=float))
    except np.linalg.LinAlgError:
        return False
    return True


def _q_of(x) -> np.ndarray:
    q = np.empty((3, 3))
    for v, (i, j) in zip(x[:6], _Q_INDEX):
        q[i, j] = q[j, i] = v
    return q


class _Barrier:
    """Log-det barrier for: maximize t subject to

    -D F(Q, alpha) D - t I > 0,  Q - t I > 0,  0 < alpha < alpha_max,  tr Q < trace_max.
    """

    def __init__(self, model, gamma_d, alpha_max, trace_max):
        self.model, self.gamma_d = model, gamma_d
        self.alpha_max, self.trace_max = alpha_max, trace_max
        self.evaluations = 0
        base = self.constraints(np.zeros(8))
        self.basis = []
        for k in range(8):
            e = np.zeros(8)
            e[k] = 1.0
            self.basis.append([s - s0 for s, s0 in zip(self.constraints(e), base)])
        self.evaluations = 0

    def constraints(self, x):
        self.evaluations += 1
        q, alpha, t = _q_of(x), x[6], x[7]
        return [
            -scaled_block(self.model, q, alpha, self.gamma_d) - t * np.eye(5),
            q - t * np.eye(3),
            np.array([[self.alpha_max - alpha]]),
            np.array([[alpha]]),
            np.array([[self.trace_max - np.trace(q)]]),
        ]

    def value(self, x, s):
        v = -s * x[7]
        for m in self.constraints(x):
            try:
                chol = np.linalg.cholesky(m)
            except np.linalg.LinAlgError:
                return math.inf
            v -= 2.0 * np.log(np.diag(chol)).sum()
        return v

    def newton_step(self, x, s):
        mats = self.constraints(x)
        grad = np.zeros(8)
        grad[7] = -s
        hess = np.zeros((8, 8))
        for k, m in enumerate(mats):
            m_inv = np.linalg.inv(m)
            prods = [m_inv @ self.basis[i][k] for i in range(8)]
            for i in range(8):
                grad[i] -= np.trace(prods[i])
                for j in range(i, 8):
                    hess[i, j] += np.sum(prods[i] * prods[j].T)
        hess = np.triu(hess) + np.triu(hess, 1).T
        dx = -np.linalg.solve(hess, grad)
        return dx, float(-grad @ dx)


def solve_lmi(
    model: VehicleModel,
    gamma_d: float,
    *,
    alpha_max: float | None = None,
    trace_max: float | None = None,
    margin_target: float = 1e-6,
    max_evaluations: int = 100_000,
    gap_tol: float = 1e-9,
) -> LmiSolution:
    """Find a strictly feasible ``(Q, alpha)`` with maximal uniform slack.

    A barrier method maximizes ``t`` subject to ``D block D <= -t I`` and
    ``Q >= t I`` inside the box ``alpha <= alpha_max``, ``tr Q <= trace_max``.
    The box keeps the gains moderate: ``alpha`` bounds the coupling
    strength and ``trace_max`` keeps ``Q^-1`` (hence ``k``) from blowing up.
    Defaults are ``alpha_max = 1 + 1/gamma_d^2`` (the block forces
    ``alpha > 1/gamma_d^2``) and ``trace_max = 2 tau``.

    The returned point is re-certified with an independent eigensolve;
    ``Infeasible`` carries the best normalized margin reached.
    """
    if not gamma_d > 0:
        raise NonPositiveGamma(f"gamma_d must be > 0, got {gamma_d!r}")
    if alpha_max is None:
        alpha_max = 1.0 + 1.0 / gamma_d**2
    if trace_max is None:
        trace_max = 2.0 * model.tau
    bar = _Barrier(model, gamma_d, alpha_max, trace_max)

    x = np.zeros(8)
    q0 = min(model.tau, trace_max / 6.0) * np.eye(3)
    x[:6] = [q0[i, j] for i, j in _Q_INDEX]
    x[6] = 0.5 * alpha_max
    s_first, s_second = bar.constraints(x)[:2]
    x[7] = min(np.linalg.eigvalsh(s_first)[0], np.linalg.eigvalsh(s_second)[0]) - 1.0

    n_dims = 5 + 3 + 3
    s = 1.0
    best = x.copy()
    stalled = False
    while bar.evaluations < max_evaluations and not stalled:
        for _ in range(100):
            try:
                dx, decrement = bar.newton_step(x, s)
            except np.linalg.LinAlgError:
                stalled = True
                break
            if not np.all(np.isfinite(dx)):
                stalled = True
                break
            if decrement / 2 < 1e-10:
                break
            f0 = bar.value(x, s)
            h = 1.0
            while bar.value(x + h * dx, s) > f0 - 0.25 * h * decrement:
                h *= 0.5
                if h < 1e-14 or bar.evaluations >= max_evaluations:
                    h = 0.0
                    break
            if h == 0.0:
                break
            x = x + h * dx
        best = x.copy()
        if n_dims / s < gap_tol:
            break
        s *= 10.0

    q, alpha = _q_of(best), float(best[6])
    margin, normalized = certify(model, q, alpha, gamma_d)
    log.debug("barrier finished: t=%.6g margin=%.6g normalized=%.3g evals=%d",
              best[7], margin, normalized, bar.evaluations)
    if not (normalized >= margin_target and alpha > 0 and is_positive_definite(q)):
        raise Infeasible(
            f"no strictly feasible point for gamma_d={gamma_d:g}: best normalized margin {normalized:.3g}",
            normalized,
        )
    return LmiSolution(q, alpha, margin, float(gamma_d), normalized, bar.evaluations)


def extract_gains(sol: LmiSolution, model: VehicleModel) -> np.ndarray:
    """``k^T = 1/2 B1^T Q^-1`` as a length-3 array ``(k_p, k_v, k_a)``."""
    q = np.asarray(sol.q, dtype=float)
    if np.linalg.cond(q) > 1e14:
        raise SingularQ(f"Q is numerically singular (cond {np.linalg.cond(q):.3g})")
    try:
        return 0.5 * np.linalg.solve(q, model.b1).ravel()
    except np.linalg.LinAlgError as exc:
        raise SingularQ(str(exc)) from exc


def min_coupling(alpha: float, lambda_min: float) -> float:
    if not alpha > 0 or not lambda_min > 0:
        raise NonPositiveInput(f"alpha and lambda_min must be > 0, got {alpha!r}, {lambda_min!r}")
    return math.sqrt(alpha) / lambda_min


@dataclass(frozen=True)
class SynthesizedController:
    gains: FeedbackGains
    solution: LmiSolution
    lambda_min: float
    tau: float

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "gamma_d": self.solution.gamma_d,
            "k": [self.gains.k_p, self.gains.k_v, self.gains.k_a],
            "alpha": self.solution.alpha,
            "lambda_min": self.lambda_min,
            "c": self.gains.c,
            "margin": self.solution.margin,
            "normalized_margin": self.solution.normalized_margin,
        }


def synthesize(graph: DirectedPlatoonGraph, model: VehicleModel, gamma_d: float, **lmi_opts) -> SynthesizedController:
    sol = solve_lmi(model, gamma_d, **lmi_opts)
    k = extract_gains(sol, model)
    lam_min = float(spectral_factorization(build_coupling_matrix(graph)).lam[0])
    c = min_coupling(sol.alpha, lam_min)
    return SynthesizedController(FeedbackGains(*map(float, k), c=c), sol, lam_min, model.tau)


@dataclass
class VerificationReport:
    hurwitz: bool
    gamma: float | None
    gamma_d: float
    passed: bool
    mode_norms: list = field(default_factory=list)
    spectral_abscissa: float = float("nan")
    reason: str = ""

    def to_dict(self) -> dict:
        return dict(vars(self))


def verify_synthesis(
    graph: DirectedPlatoonGraph,
    model: VehicleModel,
    controller,
    gamma_d: float,
    c: float | None = None,
) -> VerificationReport:
    """Direct check of ``||G||_inf < gamma_d`` on the assembled closed loop.

    ``controller`` is a ``SynthesizedController`` or ``FeedbackGains``;
    ``c`` overrides its coupling strength (zero gives the open loop).
    A non-Hurwitz loop yields a failed report rather than an exception.
    """
    gains = controller.gains if isinstance(controller, SynthesizedController) else controller
    c = gains.c if c is None else float(c)
    system = assemble_closed_loop(graph, model, gains, c=c)
    absc = spectral_abscissa(system.a_c)
    if not is_hurwitz(system.a_c):
        return VerificationReport(False, None, gamma_d, False, spectral_abscissa=absc,
                                  reason=f"closed loop not Hurwitz (abscissa {absc:.3g} >= -{HURWITZ_EPS:g})")
    gamma = hinf_norm(system).gamma
    lam = spectral_factorization(build_coupling_matrix(graph)).lam
    modes = []
    for l in lam:
        try:
            modes.append(mode_hinf(l, gains.with_coupling(c), model.tau).gamma)
        except NotHurwitz:
            modes.append(math.inf)
    passed = gamma < gamma_d
    reason = "" if passed else f"gamma {gamma:.6g} >= gamma_d {gamma_d:g}"
    return VerificationReport(True, gamma, gamma_d, passed, modes, absc, reason)
