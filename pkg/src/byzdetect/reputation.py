"""Reputation-based filtering and the enhanced (E-) detectors.

Each regular sensor's empirical codeword pmf over the elapsed time steps is
compared with the benchmark R_ij = min(A_ij1, A_ij0); sensors whose total
deviation exceeds ``tau`` are dropped before fusion, and the residual
Byzantine fraction shrinks accordingly.

State arrays may carry a leading batch axis (independent trials); the
Monte Carlo engine advances thousands of timelines at once.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .detectors import (
    P_MAX,
    P_TOL,
    DetectorVerdict,
    FusionContext,
    check_reports,
    decide,
    glrtrs_batch,
    lmptrs_batch,
    mle_sparsity,
    x_hat_from_counts,
)
from .sensing import SensorBank, SignalModel

NOMINAL_P = 0.05
ALPHA_UPDATES = ("current", "cumulative", "kept")
FILTER_HISTORIES = ("inclusive", "previous")
BASES = ("GLRTRS", "LMPTRS")


@dataclass
class ReputationState:
    """Per-sensor history for the regular (non-reference) sensors.

    ``counts`` is (..., n, K) and sums to ``t`` along the last axis;
    ``ref_top``/``ref_total`` accumulate reference reports for the attack
    estimate.
    """

    counts: np.ndarray
    t: int
    alpha: float
    alpha_t: np.ndarray
    flagged_ever: np.ndarray
    ref_top: np.ndarray
    ref_total: np.ndarray

    @classmethod
    def initial(cls, n_sensors: int, n_codewords: int, alpha: float, batch: Optional[int] = None) -> "ReputationState":
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
        lead = () if batch is None else (batch,)
        return cls(
            counts=np.zeros(lead + (n_sensors, n_codewords)),
            t=0,
            alpha=float(alpha),
            alpha_t=np.full(lead, float(alpha)),
            flagged_ever=np.zeros(lead + (n_sensors,), dtype=bool),
            ref_top=np.zeros(lead),
            ref_total=np.zeros(lead),
        )

    def copy(self) -> "ReputationState":
        return copy.deepcopy(self)


def reputation_filter(state: ReputationState, honest_pmfs_h0, honest_pmfs_h1, tau: float) -> np.ndarray:
    """Keep-mask: sensor i survives iff sum_j |R_ij - counts_ij / t| <= tau."""
    if state.t < 1:
        raise ValueError("reputation filter needs at least one time step")
    if not tau > 0:
        raise ValueError("tau must be positive")
    bench = np.minimum(np.asarray(honest_pmfs_h0, dtype=float), np.asarray(honest_pmfs_h1, dtype=float))
    deviation = np.sum(np.abs(bench - state.counts / state.t), axis=-1)
    return deviation <= tau


def record_reports(state: ReputationState, reports, n_codewords: int):
    """Add one time step of regular-sensor reports, (..., n) in 1..K, to the counts."""
    r = np.asarray(reports)
    check_reports(r, n_codewords)
    state.counts += r[..., None] == np.arange(1, n_codewords + 1)
    state.t += 1


def record_reference(state: ReputationState, top, total):
    state.ref_top = state.ref_top + np.asarray(top, dtype=float)
    state.ref_total = state.ref_total + np.asarray(total, dtype=float)


def residual_alpha(state: ReputationState, keep, n_regular: int, alpha_update: str = "kept"):
    """Residual Byzantine fraction after filtering.

    ``current``: alpha - (#dropped now)/(N - N_ref). ``cumulative``: the same
    with every sensor dropped at any step so far. ``kept``: Byzantines left
    among the kept sensors if every dropped sensor was Byzantine,
    (alpha (N - N_ref) - #dropped) / #kept. All are clamped to [0, alpha].
    """
    if alpha_update == "current":
        flagged = np.sum(~keep, axis=-1)
    elif alpha_update == "cumulative":
        flagged = np.sum(state.flagged_ever, axis=-1)
    elif alpha_update == "kept":
        flagged = np.sum(~keep, axis=-1)
        kept = n_regular - flagged
        frac = np.maximum(0.0, state.alpha * n_regular - flagged) / np.maximum(kept, 1)
        return np.where(flagged == 0, state.alpha, np.minimum(frac, state.alpha))
    else:
        raise ValueError(f"alpha_update must be one of {ALPHA_UPDATES}")
    return np.maximum(0.0, state.alpha - flagged / n_regular)


def effective_attack(x_hat, alpha: float, alpha_t):
    """x_eff = P_A_hat * alpha_t with P_A_hat = x_hat / alpha."""
    x_hat = np.asarray(x_hat, dtype=float)
    alpha_t = np.asarray(alpha_t, dtype=float)
    if alpha == 0.0:
        if np.any(x_hat > 0):
            raise ValueError("inconsistent prior: alpha is 0 but the reference sensors see an attack")
        return np.zeros(np.broadcast(x_hat, alpha_t).shape)
    pa_hat = x_hat / alpha
    # exact collapse to the base detector when nothing has been flagged
    return np.where(alpha_t == alpha, x_hat, pa_hat * alpha_t)


@dataclass
class EnhancedStep:
    statistic: np.ndarray
    threshold: np.ndarray
    decide_h1: np.ndarray
    keep: np.ndarray
    x_hat: np.ndarray
    x_eff: np.ndarray
    p_hat: Optional[np.ndarray]


def enhanced_step(
    ctx: FusionContext,
    state: ReputationState,
    reports,
    ref_top,
    ref_total,
    base: str,
    target_pfa: float,
    tau: float,
    nominal_p: float = NOMINAL_P,
    alpha_update: str = "kept",
    p_max: float = P_MAX,
    tol: float = P_TOL,
    keep_override=None,
    filter_history: str = "previous",
) -> EnhancedStep:
    """Advance a batched state by one time step and fuse that step's reports.

    ``reports`` is (B, n) for the regular sensors; ``ref_top``/``ref_total``
    are this step's reference-sensor counts. ``keep_override`` replaces the
    filter output (oracle runs with known roles).

    ``filter_history="inclusive"`` judges sensors on steps 1..t, the current
    reports included; ``"previous"`` judges them on steps 1..t-1 only (all
    sensors kept at t = 1), so the kept set does not depend on the reports
    being fused.
    """
    if base not in BASES:
        raise ValueError(f"base must be one of {BASES}")
    if filter_history not in FILTER_HISTORIES:
        raise ValueError(f"filter_history must be one of {FILTER_HISTORIES}")
    reports = np.atleast_2d(np.asarray(reports))
    b = reports.shape[0]
    judged = state.copy() if filter_history == "previous" else None
    record_reports(state, reports, ctx.k)
    record_reference(state, ref_top, ref_total)
    x_hat = x_hat_from_counts(state.ref_top, state.ref_total)

    a0 = ctx.a0[ctx.index]
    if base == "GLRTRS":
        # benchmark pmf under H1 at the unfiltered GLRTRS sparsity estimate
        p_bench = mle_sparsity(ctx, ctx.counts(reports), x_hat, p_max, tol)
    else:
        p_bench = np.full(b, nominal_p)
    a1 = ctx.a1(p_bench)[:, ctx.index]

    if keep_override is None:
        if judged is None:
            keep = reputation_filter(state, a0, a1, tau)
        elif judged.t == 0:
            keep = np.ones(state.flagged_ever.shape, dtype=bool)
        else:
            keep = reputation_filter(judged, a0, a1, tau)
    else:
        keep = np.broadcast_to(np.asarray(keep_override, dtype=bool), state.flagged_ever.shape).copy()
    state.flagged_ever |= ~keep
    state.alpha_t = residual_alpha(state, keep, reports.shape[-1], alpha_update)
    x_eff = effective_attack(x_hat, state.alpha, state.alpha_t)

    counts = ctx.counts(reports, keep)
    sizes = ctx.kept_sizes(keep)
    p_hat = None
    if base == "GLRTRS":
        stat, thr, p_hat = glrtrs_batch(ctx, counts, x_eff, target_pfa, sizes, p_max, tol)
    else:
        stat, thr = lmptrs_batch(ctx, counts, x_eff, target_pfa, sizes)
    return EnhancedStep(stat, thr, decide(stat, thr), keep, x_hat, x_eff, p_hat)


def enhanced_decide(
    reports_t,
    reference_reports_t,
    state: ReputationState,
    model: SignalModel,
    sensors: SensorBank,
    base: str = "GLRTRS",
    alpha_known: Optional[float] = None,
    target_pfa: float = 0.4,
    tau: float = 0.5,
    nominal_p: float = NOMINAL_P,
    alpha_update: str = "kept",
    mirror: bool = False,
    keep_override=None,
    filter_history: str = "previous",
):
    """E-GLRTRS / E-LMPTRS for one time step of one timeline.

    ``sensors`` are the regular sensors behind ``reports_t``. Returns
    ``(verdict, new_state)``; the input state is left untouched.
    """
    new = state.copy()
    if alpha_known is not None:
        if not 0.0 <= alpha_known <= 1.0:
            raise ValueError(f"alpha_known must lie in [0, 1], got {alpha_known}")
        new.alpha = float(alpha_known)
    ctx = FusionContext(model, sensors)
    ref = np.asarray(reference_reports_t).ravel()
    check_reports(ref, ctx.k)
    top = np.count_nonzero(ref == (1 if mirror else ctx.k))
    batched = _add_batch_axis(new)
    step = enhanced_step(
        ctx, batched, np.asarray(reports_t).reshape(1, -1), top, ref.size,
        base, target_pfa, tau, nominal_p, alpha_update, keep_override=keep_override, filter_history=filter_history,
    )
    new = _drop_batch_axis(batched)
    verdict = DetectorVerdict(
        float(step.statistic[0]),
        float(step.threshold[0]),
        bool(step.decide_h1[0]),
        p_hat=None if step.p_hat is None else float(step.p_hat[0]),
        x_hat=float(step.x_hat[0]),
        keep_mask=step.keep[0],
    )
    return verdict, new


def _add_batch_axis(s: ReputationState) -> ReputationState:
    return ReputationState(
        s.counts[None], s.t, s.alpha, np.atleast_1d(s.alpha_t), s.flagged_ever[None],
        np.atleast_1d(s.ref_top), np.atleast_1d(s.ref_total),
    )


def _drop_batch_axis(s: ReputationState) -> ReputationState:
    return ReputationState(
        s.counts[0], s.t, s.alpha, float(s.alpha_t[0]), s.flagged_ever[0],
        float(s.ref_top[0]), float(s.ref_total[0]),
    )
