"""Fusion rules: clairvoyant LRT, GLRT, quantized LMPT, GLRTRS and LMPTRS.

All rules are linear in the codeword indicators, sum_i sum_j I(u_i = v_j) W_ij,
and differ only in how the weights W and the threshold are built. The
batched helpers (leading axis = independent trials) are what the Monte Carlo
engine calls; the public ``*_decide`` functions wrap them for one report
vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .analysis import calibrated_threshold, weighted_moments
from .channel import AttackParams, mixture_from_x
from .numerics import golden_section_max
from .sensing import Hypothesis, SensorBank, SignalModel, cell_probabilities, cell_probability_slope

P_MAX = 0.5
P_TOL = 1e-6
_TINY = 1e-300


@dataclass
class DetectorVerdict:
    statistic: float
    threshold: float
    decide_h1: bool
    p_hat: Optional[float] = None
    x_hat: Optional[float] = None
    keep_mask: Optional[np.ndarray] = None


def decide(statistic, threshold):
    """H1 iff the statistic strictly exceeds the threshold; ties go to H0."""
    return np.asarray(statistic) > np.asarray(threshold)


class FusionContext:
    """Per-group quantities for a set of detection sensors.

    Built once per (model, sensors) pair; every batched rule takes codeword
    counts of shape (B, G, K) over the G sensor groups.
    """

    def __init__(self, model: SignalModel, sensors: SensorBank):
        self.model = model
        self.sensors = sensors
        index, thr, gain2, sizes = sensors.groups()
        self.index = index
        self.thresholds = thr
        self.gain2 = gain2
        self.sizes = sizes.astype(float)
        self.k = sensors.n_codewords
        self.n_groups = thr.shape[0]
        self.a0 = cell_probabilities(thr, np.sqrt(model.sigma_n2) * np.ones_like(gain2))
        self.slope0 = cell_probability_slope(thr, gain2, model, p=0.0)

    def a1(self, p) -> np.ndarray:
        """H1 honest pmfs at sparsity ``p`` of shape (B,), giving (B, G, K)."""
        p = np.atleast_1d(np.asarray(p, dtype=float))
        beta = np.sqrt(self.model.sigma_n2 + p[:, None] * self.model.sigma_x2 * self.gain2[None, :])
        return cell_probabilities(self.thresholds[None], beta)

    def counts(self, reports, keep=None) -> np.ndarray:
        """Codeword counts per group, (B, G, K), from reports (B, n) in 1..K."""
        reports = np.atleast_2d(np.asarray(reports))
        check_reports(reports, self.k)
        b, n = reports.shape
        if n != self.index.size:
            raise ValueError(f"expected {self.index.size} reports per trial, got {n}")
        slots = self.n_groups * self.k
        flat = (np.arange(b)[:, None] * slots + self.index[None, :] * self.k + (reports - 1)).ravel()
        w = None if keep is None else np.asarray(keep, dtype=float).ravel()
        return np.bincount(flat, weights=w, minlength=b * slots).reshape(b, self.n_groups, self.k).astype(float)

    def kept_sizes(self, keep) -> np.ndarray:
        """Number of kept sensors per group, (B, G)."""
        keep = np.atleast_2d(np.asarray(keep, dtype=float))
        b = keep.shape[0]
        flat = (np.arange(b)[:, None] * self.n_groups + self.index[None, :]).ravel()
        return np.bincount(flat, weights=keep.ravel(), minlength=b * self.n_groups).reshape(b, self.n_groups)


def check_reports(reports, k: int):
    r = np.asarray(reports)
    if r.size and (r.min() < 1 or r.max() > k):
        raise ValueError(f"codewords must lie in 1..{k}")


def _as_batch(x, b):
    return np.broadcast_to(np.asarray(x, dtype=float), (b,)).copy()


def _fused(counts, weights):
    return np.sum(counts * weights, axis=(-2, -1))


# ---------------------------------------------------------------------------
# sparsity MLE
# ---------------------------------------------------------------------------


def mle_sparsity(ctx: FusionContext, counts, x=0.0, p_max: float = P_MAX, tol: float = P_TOL):
    """p_hat = argmax_p sum_ij n_ij log P(u = v_j | H1, p, x) on [0, p_max], per trial."""
    counts = np.asarray(counts, dtype=float)
    b = counts.shape[0]
    x = _as_batch(x, b)

    def loglik(p):
        pmf = mixture_from_x(ctx.a1(p), x)
        return np.sum(counts * np.log(np.maximum(pmf, _TINY)), axis=(1, 2))

    p_hat, _ = golden_section_max(loglik, np.zeros(b), np.full(b, p_max), tol=tol)
    return p_hat


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------


def glrt_group_weights(ctx: FusionContext, p_hat, x=0.0) -> np.ndarray:
    """F_ij = f_ij1 - f_ij0 with f the mixture pmf; x = 0 gives g_ij = A_ij1 - A_ij0."""
    p_hat = np.atleast_1d(p_hat)
    x = _as_batch(x, p_hat.size)
    return mixture_from_x(ctx.a1(p_hat), x) - mixture_from_x(np.broadcast_to(ctx.a0, (p_hat.size,) + ctx.a0.shape), x)


def lmpt_group_weights(ctx: FusionContext) -> np.ndarray:
    if np.any(ctx.a0 <= 0):
        raise ValueError("vanishing cell probability: LMPT weight undefined")
    return ctx.slope0 / ctx.a0


def lmptrs_group_weights(ctx: FusionContext, x) -> np.ndarray:
    """d/dp log P(u = v_j | H1, p, x) at p = 0, shape (B, G, K)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    f = mixture_from_x(np.broadcast_to(ctx.a0, (x.size,) + ctx.a0.shape), x)
    if np.any(f <= 0):
        raise ValueError("nonpositive mixture probability: LMPTRS weight undefined")
    shrink = (1.0 - x * ctx.k / (ctx.k - 1))[:, None, None]
    return ctx.slope0 * shrink / f


def lrt_group_weights(ctx: FusionContext, p: float, x: float) -> np.ndarray:
    f1 = mixture_from_x(ctx.a1(p)[0], x)
    f0 = mixture_from_x(ctx.a0, x)
    if np.any(f1 <= 0) or np.any(f0 <= 0):
        raise ValueError("zero-probability codeword in the LRT")
    return np.log(f1) - np.log(f0)


# ---------------------------------------------------------------------------
# batched rules; each returns (statistic, threshold, extra)
# ---------------------------------------------------------------------------


def _threshold(weights, pmf_h0, sizes, target_pfa):
    mean0, var0 = weighted_moments(weights, pmf_h0, sizes)
    return calibrated_threshold(mean0, var0, target_pfa)


def glrtrs_batch(ctx, counts, x_hat, target_pfa, sizes=None, p_max=P_MAX, tol=P_TOL):
    """GLRTRS on group counts; x_hat = 0 is the attack-free GLRT."""
    b = counts.shape[0]
    x_hat = _as_batch(x_hat, b)
    sizes = ctx.sizes if sizes is None else sizes
    p_hat = mle_sparsity(ctx, counts, x_hat, p_max, tol)
    w = glrt_group_weights(ctx, p_hat, x_hat)
    pmf0 = mixture_from_x(np.broadcast_to(ctx.a0, w.shape), x_hat)
    return _fused(counts, w), _threshold(w, pmf0, sizes, target_pfa), p_hat


def lmptrs_batch(ctx, counts, x_hat, target_pfa, sizes=None):
    """LMPTRS on group counts; x_hat = 0 is the attack-free quantized LMPT."""
    b = counts.shape[0]
    x_hat = _as_batch(x_hat, b)
    sizes = ctx.sizes if sizes is None else sizes
    w = lmptrs_group_weights(ctx, x_hat)
    pmf0 = mixture_from_x(np.broadcast_to(ctx.a0, w.shape), x_hat)
    return _fused(counts, w), _threshold(w, pmf0, sizes, target_pfa)


def lrt_threshold(ctx, p, x, target_pfa=None, priors=(0.5, 0.5)):
    """PFA-calibrated LRT threshold, or the Bayes threshold ln(pi0/pi1) when target_pfa is None."""
    if target_pfa is None:
        return float(np.log(priors[0] / priors[1]))
    w = lrt_group_weights(ctx, p, x)
    return float(_threshold(w, mixture_from_x(ctx.a0, x), ctx.sizes, target_pfa))


# ---------------------------------------------------------------------------
# reference-sensor estimator
# ---------------------------------------------------------------------------


def x_hat_from_counts(top, total):
    """1 - (reports on the dominant codeword) / (all reference reports), clamped to [0, 1]."""
    top = np.asarray(top, dtype=float)
    total = np.asarray(total, dtype=float)
    if np.any(total <= 0):
        raise ValueError("no reference reports to estimate the attack parameter from")
    return np.clip(1.0 - top / total, 0.0, 1.0)


def estimate_attack_parameter(reference_reports, q: int, mirror: bool = False) -> float:
    """MLE of x = alpha * P_A from reference sensors that always emit one codeword when honest.

    ``reference_reports`` holds codewords from any number of reference
    sensors and time steps. ``mirror`` selects reference quantizers that
    pile their mass on v_1 rather than v_{2^q}.
    """
    r = np.asarray(reference_reports).ravel()
    if r.size == 0:
        raise ValueError("no reference reports to estimate the attack parameter from")
    k = 2**q
    check_reports(r, k)
    top = 1 if mirror else k
    return float(x_hat_from_counts(np.count_nonzero(r == top), r.size))


# ---------------------------------------------------------------------------
# single-trial API
# ---------------------------------------------------------------------------


def _single(reports):
    return np.asarray(reports).reshape(1, -1)


def lrt_statistic(reports, model_true: SignalModel, attack_true: AttackParams, sensors: SensorBank) -> float:
    """sum_i log P(u_i | H1) / P(u_i | H0) with the true sparsity and attack."""
    ctx = FusionContext(model_true, sensors)
    w = lrt_group_weights(ctx, model_true.p, attack_true.x)
    return float(_fused(ctx.counts(_single(reports)), w)[0])


def lrt_decide(reports, model_true, attack_true, sensors, target_pfa=0.4, priors=(0.5, 0.5)) -> DetectorVerdict:
    ctx = FusionContext(model_true, sensors)
    stat = lrt_statistic(reports, model_true, attack_true, sensors)
    thr = lrt_threshold(ctx, model_true.p, attack_true.x, target_pfa, priors)
    return DetectorVerdict(stat, thr, bool(decide(stat, thr)))


def glrt_decide(reports, model: SignalModel, sensors: SensorBank, threshold=None, target_pfa=0.4, p_max=P_MAX) -> DetectorVerdict:
    """Attack-free GLRT. ``threshold=None`` calibrates to ``target_pfa`` assuming honest sensors."""
    ctx = FusionContext(model, sensors)
    stat, thr, p_hat = glrtrs_batch(ctx, ctx.counts(_single(reports)), 0.0, target_pfa, p_max=p_max)
    thr = float(thr[0]) if threshold is None else float(threshold)
    return DetectorVerdict(float(stat[0]), thr, bool(decide(stat[0], thr)), p_hat=float(p_hat[0]))


def lmpt_weights(model: SignalModel, sensors: SensorBank, at_p: float = 0.0) -> np.ndarray:
    """Per-sensor LMPT weights d/dp log A_{i,j,1}, shape (N, K)."""
    a1 = sensors.pmfs(model.with_p(at_p), Hypothesis.H1)
    if np.any(a1 <= 0):
        raise ValueError("vanishing cell probability: LMPT weight undefined")
    return cell_probability_slope(sensors.thresholds, sensors.gain2, model, p=at_p) / a1


def lmpt_threshold(model: SignalModel, sensors: SensorBank, target_pfa: float) -> float:
    """Attack-free PFA-calibrated threshold for the quantized LMPT."""
    w = lmpt_weights(model, sensors)
    return float(_threshold(w, sensors.pmfs(model, Hypothesis.H0), None, target_pfa))


def lmpt_decide(reports, weights, threshold: float) -> DetectorVerdict:
    w = np.asarray(weights, dtype=float)
    r = np.asarray(reports).ravel()
    check_reports(r, w.shape[1])
    stat = float(np.sum(w[np.arange(r.size), r - 1]))
    return DetectorVerdict(stat, float(threshold), bool(decide(stat, threshold)))


def lmptrs_weights(model: SignalModel, sensors: SensorBank, x_hat: float) -> np.ndarray:
    """Per-sensor LMPTRS weights, the p-derivative of the log mixture pmf at p = 0."""
    ctx = FusionContext(model, sensors)
    return lmptrs_group_weights(ctx, x_hat)[0][ctx.index]


def _reference_x_hat(reference_reports, k, mirror):
    return estimate_attack_parameter(reference_reports, int(np.log2(k)), mirror)


def glrtrs_decide(
    reports,
    reference_reports,
    model: SignalModel,
    sensors: SensorBank,
    target_pfa: float = 0.4,
    p_max: float = P_MAX,
    mirror: bool = False,
) -> DetectorVerdict:
    """GLRT with reference sensors.

    ``sensors`` are the detection (non-reference) sensors that produced
    ``reports``; x is estimated from ``reference_reports`` and plugged into
    both the sparsity MLE and the adaptive threshold.
    """
    ctx = FusionContext(model, sensors)
    x_hat = _reference_x_hat(reference_reports, ctx.k, mirror)
    stat, thr, p_hat = glrtrs_batch(ctx, ctx.counts(_single(reports)), x_hat, target_pfa, p_max=p_max)
    return DetectorVerdict(float(stat[0]), float(thr[0]), bool(decide(stat[0], thr[0])), p_hat=float(p_hat[0]), x_hat=x_hat)


def lmptrs_decide(
    reports,
    reference_reports,
    model: SignalModel,
    sensors: SensorBank,
    target_pfa: float = 0.4,
    mirror: bool = False,
) -> DetectorVerdict:
    ctx = FusionContext(model, sensors)
    x_hat = _reference_x_hat(reference_reports, ctx.k, mirror)
    stat, thr = lmptrs_batch(ctx, ctx.counts(_single(reports)), x_hat, target_pfa)
    return DetectorVerdict(float(stat[0]), float(thr[0]), bool(decide(stat[0], thr[0])), x_hat=x_hat)
