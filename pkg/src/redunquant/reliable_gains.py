"""Membership in the single-failure-tolerant feedback class, and synthesis.

A gain set is *reliable* when the closed loop is Hurwitz in the nominal
configuration and under every single-channel outage. ``verify_reliable``
is the ground-truth decision procedure (strict inequality, no slack);
``synthesize_gains`` is a heuristic that scales up a Riccati design until
verification passes. Synthesis failure carries the best report found but
is not a certificate that no reliable gain set exists.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, NumericalError, SynthesisFailedError
from .system_model import (
    GainSet,
    MultiChannelSystem,
    closed_loop_matrix,
    solve_lyapunov,
    spectral_abscissa,
)


@dataclass(frozen=True, eq=False)
class ReliabilityReport:
    """Spectral abscissae of all N+1 failure modes (index 0 = nominal)."""

    abscissae: np.ndarray
    margin: float
    reliable: bool

    def __post_init__(self):
        a = np.array(self.abscissae, dtype=float)
        a.setflags(write=False)
        object.__setattr__(self, "abscissae", a)


@dataclass(frozen=True)
class SynthesisOptions:
    """Weights and search bounds for the gain-scaling synthesis loop."""

    Q_weight: np.ndarray | None = None
    R_weights: tuple[np.ndarray, ...] | None = None
    theta_max: float = 1024.0
    margin_floor: float = 1e-6

    def __post_init__(self):
        if self.theta_max < 1.0:
            raise DomainError("theta_max must be at least 1")
        if self.margin_floor < 0.0:
            raise DomainError("margin_floor must be nonnegative")


def verify_reliable(sys: MultiChannelSystem, gains: GainSet) -> ReliabilityReport:
    """Decide reliability: every mode's spectral abscissa strictly negative."""
    abscissae = np.array(
        [spectral_abscissa(closed_loop_matrix(sys, gains, j)) for j in range(sys.n_channels + 1)]
    )
    margin = float(-abscissae.max())
    return ReliabilityReport(abscissae=abscissae, margin=margin, reliable=margin > 0.0)


def _check_pd(M: np.ndarray, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    scale = max(1.0, float(np.abs(M).max()))
    if M.ndim != 2 or M.shape[0] != M.shape[1] or float(np.abs(M - M.T).max()) > 1e-10 * scale:
        raise DomainError(f"{name} must be a symmetric square matrix")
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise DomainError(f"{name} must be positive definite") from None
    return 0.5 * (M + M.T)


def _initial_stabilizing_gain(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """A full gain L with A - B L Hurwitz, via the pole-shifting trick.

    With beta > ||A||_F the matrix -(A + beta I) is Hurwitz; the Lyapunov
    solution Z of (A + beta I) Z + Z (A + beta I)^T = 2 B B^T then gives
    L = B^T Z^{-1} with (A - B L) Z + Z (A - B L)^T = -2 beta Z < 0.
    """
    d = A.shape[0]
    if spectral_abscissa(A) < 0.0:
        return np.zeros((B.shape[1], d))
    beta = 1.0 + float(np.linalg.norm(A, "fro"))
    Z = solve_lyapunov(-(A + beta * np.eye(d)), 2.0 * B @ B.T)
    try:
        L = np.linalg.solve(Z, B).T
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            "stabilizing initialization failed (uncontrollable unstable modes?)"
        ) from exc
    if spectral_abscissa(A - B @ L) >= 0.0:
        raise NumericalError("pole-shifting initialization did not stabilize the plant")
    return L


def solve_care_newton(
    A: np.ndarray,
    B: np.ndarray,
    R: np.ndarray,
    Q: np.ndarray,
    tol: float = 1e-9,
    max_iter: int = 100,
) -> np.ndarray:
    """Stabilizing solution of A^T P + P A - P B R^{-1} B^T P + Q = 0.

    Newton-Kleinman iteration: each step solves one Lyapunov equation for
    the current stabilizing gain and converges quadratically from the
    pole-shifting initialization. Terminates when the Riccati residual
    drops below ``tol`` times a backward-error scale.
    """
    G = B @ np.linalg.solve(R, B.T)
    L = _initial_stabilizing_gain(A, B)
    P = None
    for _ in range(max_iter):
        A_cl = A - B @ L
        # observability-form Lyapunov equation: A_cl^T P + P A_cl + Q_k = 0
        P = solve_lyapunov(A_cl.T, Q + L.T @ R @ L)
        L = np.linalg.solve(R, B.T @ P)
        residual = float(np.linalg.norm(A.T @ P + P @ A - P @ G @ P + Q, "fro"))
        scale = (
            1.0
            + float(np.linalg.norm(Q, "fro"))
            + 2.0 * float(np.linalg.norm(A, "fro")) * float(np.linalg.norm(P, "fro"))
            + float(np.linalg.norm(G, "fro")) * float(np.linalg.norm(P, "fro")) ** 2
        )
        if residual <= tol * scale:
            return P
    raise NumericalError(f"Riccati iteration did not converge (residual {residual!r})")


def synthesize_gains(
    sys: MultiChannelSystem, opts: SynthesisOptions | None = None
) -> GainSet:
    """First reliable gain set on the doubling gain-effort ladder.

    For theta in {1, 2, 4, ..., theta_max} the stacked-input Riccati
    equation with R/theta is solved and the per-channel gains
    K_i = -theta R_i^{-1} B_i^T P are checked by verify_reliable; the
    smallest passing theta wins. Higher theta means more aggressive
    feedback, which tolerates channel outages more often.
    """
    opts = opts or SynthesisOptions()
    d = sys.d
    Q = np.eye(d) if opts.Q_weight is None else _check_pd(opts.Q_weight, "Q_weight")
    if Q.shape != (d, d):
        raise DomainError(f"Q_weight must be {d}x{d}")
    if opts.R_weights is None:
        R_blocks = [np.eye(r) for r in sys.input_dims]
    else:
        if len(opts.R_weights) != sys.n_channels:
            raise DomainError("one R weight per channel is required")
        R_blocks = [
            _check_pd(Ri, f"R_weights[{i}]") for i, Ri in enumerate(opts.R_weights)
        ]
        for i, (Ri, r) in enumerate(zip(R_blocks, sys.input_dims)):
            if Ri.shape != (r, r):
                raise DomainError(f"R_weights[{i}] must be {r}x{r}")

    B_full = np.hstack(sys.B)
    R_full = _block_diag(R_blocks)
    splits = np.cumsum(sys.input_dims)[:-1]

    best_report: ReliabilityReport | None = None
    theta = 1.0
    while theta <= opts.theta_max * (1.0 + 1e-12):
        P = solve_care_newton(sys.A, B_full, R_full / theta, Q)
        K_full = -theta * np.linalg.solve(R_full, B_full.T @ P)
        gains = GainSet(np.split(K_full, splits, axis=0))
        report = verify_reliable(sys, gains)
        if report.reliable and report.margin >= opts.margin_floor:
            return gains
        if best_report is None or report.margin > best_report.margin:
            best_report = report
        theta *= 2.0
    raise SynthesisFailedError(
        f"no theta <= {opts.theta_max:g} produced a reliable gain set "
        f"(best margin {best_report.margin!r}); this is not a certificate "
        "of impossibility",
        best_report=best_report,
    )


def _block_diag(blocks: Sequence[np.ndarray]) -> np.ndarray:
    total = sum(b.shape[0] for b in blocks)
    out = np.zeros((total, total))
    at = 0
    for b in blocks:
        out[at : at + b.shape[0], at : at + b.shape[0]] = b
        at += b.shape[0]
    return out
