"""Seeded, chunked Monte Carlo over a sweep grid.

Work is split into (coordinate, chunk) items. Every item derives its random
streams from ``SeedSequence(seed, spawn_key=(coordinate, chunk, branch))``,
so the results do not depend on how many workers run the items or in which
order; partial sums are merged in item order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..analysis import PerformancePoint, StatisticMoments, calibrated_threshold, predict_performance, weighted_moments
from ..channel import byzantine_codeword_pmf, flip_codewords, mixture_from_x
from ..detectors import (
    DetectorVerdict,
    FusionContext,
    decide,
    glrt_group_weights,
    glrtrs_batch,
    lmpt_group_weights,
    lmptrs_batch,
    lmptrs_group_weights,
    lrt_group_weights,
    lrt_threshold,
    x_hat_from_counts,
)
from ..reputation import ReputationState, enhanced_step
from ..sensing import (
    Hypothesis,
    SensorBank,
    SensorSpec,
    make_reference_thresholds,
    quantize_array,
    sample_network_observations,
)
from .config import Coordinate, ExperimentConfig

RS_DETECTORS = ("GLRTRS", "LMPTRS", "E-GLRTRS", "E-LMPTRS")
P_HAT_DETECTORS = ("GLRT", "GLRTRS", "E-GLRTRS")
_EPS = 1e-9


@dataclass
class SweepRecord:
    detector: str
    q: int
    alpha: float
    p_attack: float
    t: int
    pe_emp: float
    pe_ci: float
    pd_emp: float
    pf_emp: float
    pe_analytic: float
    pd_analytic: float
    pf_analytic: float
    x_hat_mean: float
    p_hat_mean: float
    n_reference: int
    filter_tau: float
    error: str = ""


@dataclass
class BranchTrace:
    """Per-step outputs of one detector under one hypothesis, arrays (T, B)."""

    statistic: np.ndarray
    threshold: np.ndarray
    decide_h1: np.ndarray
    x_hat: Optional[np.ndarray] = None
    p_hat: Optional[np.ndarray] = None


@dataclass
class ChunkResult:
    """Partial sums of one (coordinate, chunk) item, per detector and recorded step."""

    trials: int
    alarms_h0: dict = field(default_factory=dict)
    alarms_h1: dict = field(default_factory=dict)
    x_hat_sum: dict = field(default_factory=dict)
    p_hat_sum: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)


def _floor_count(alpha: float, n: int) -> int:
    return int(math.floor(alpha * n + _EPS))


class Network:
    """Per-coordinate quantities shared by all trials."""

    def __init__(self, cfg: ExperimentConfig, coord: Coordinate):
        self.cfg = cfg
        self.coord = coord
        self.model = cfg.model
        self.k = 2**coord.q
        self.n = coord.n_sensors
        self.n_ref = coord.n_reference
        self.n_reg = self.n - self.n_ref
        reg = cfg.regular_thresholds(coord.q)
        ref = make_reference_thresholds(SensorSpec(0, reg), cfg.reference_offset, cfg.mirror)
        self.regular_thresholds = np.asarray(reg)
        self.reference_thresholds = np.asarray(ref)
        self.top = 1 if cfg.mirror else self.k
        self.gain2 = np.full(self.n, cfg.gain2)
        self.ctx_all = FusionContext(self.model, SensorBank.homogeneous(self.n, reg, cfg.gain2))
        self.ctx_reg = FusionContext(self.model, SensorBank.homogeneous(self.n_reg, reg, cfg.gain2))
        self.n_byz_ref = _floor_count(coord.alpha, self.n_ref)
        self.n_byz_reg = _floor_count(coord.alpha, self.n_reg)
        self._lrt = None

    def lrt(self):
        """LRT weights and threshold with the true p and x (the clairvoyant benchmark)."""
        if self._lrt is None:
            w = lrt_group_weights(self.ctx_all, self.model.p, self.coord.x)
            pfa = self.cfg.target_pfa if self.cfg.lrt_threshold == "adaptive" else None
            thr = lrt_threshold(self.ctx_all, self.model.p, self.coord.x, pfa, self.cfg.priors)
            self._lrt = (w, thr)
        return self._lrt

    def assign_roles(self, rng, b: int) -> np.ndarray:
        """Byzantine mask (B, N); references occupy the first N_ref columns."""
        if self.cfg.roles == "iid":
            return rng.random((b, self.n)) < self.coord.alpha
        return np.concatenate([_random_subset(rng, b, self.n_ref, self.n_byz_ref), _random_subset(rng, b, self.n_reg, self.n_byz_reg)], axis=1)


def _random_subset(rng, b, n, k):
    ranks = np.argsort(np.argsort(rng.random((b, n)), axis=1), axis=1)
    return ranks < k


def _branch_streams(cfg: ExperimentConfig, coord_idx: int, chunk_idx: int, h: int):
    key = (coord_idx, chunk_idx, 0 if cfg.crn else h)
    roles, noise, signal, flips = np.random.SeedSequence(cfg.seed, spawn_key=key).spawn(4)
    return tuple(np.random.default_rng(s) for s in (roles, noise, signal, flips))


def simulate_branch(net: Network, h: int, b: int, streams) -> dict:
    """Run every configured detector over T steps of ``b`` independent timelines under hypothesis ``h``."""
    cfg, coord = net.cfg, net.coord
    role_rng, noise_rng, signal_rng, flip_rng = streams
    byz = net.assign_roles(role_rng, b)
    T = cfg.time_steps
    dets = cfg.detectors
    out = {d: BranchTrace(np.zeros((T, b)), np.zeros((T, b)), np.zeros((T, b), dtype=bool)) for d in dets}
    for d in dets:
        if d in RS_DETECTORS:
            out[d].x_hat = np.zeros((T, b))
        if d in P_HAT_DETECTORS:
            out[d].p_hat = np.zeros((T, b))
    errors = {}
    states = {
        d: ReputationState.initial(net.n_reg, net.k, coord.alpha, batch=b)
        for d in dets
        if d.startswith("E-")
    }
    ref_top = np.zeros(b)
    ref_total = np.zeros(b)

    for t in range(T):
        y = sample_network_observations(net.model, net.gain2, h, noise_rng, b, cfg.surrogate, signal_rng=signal_rng)
        u_all = quantize_array(y, net.regular_thresholds)
        u_ref = quantize_array(y[:, : net.n_ref], net.reference_thresholds)
        flip = byz & (flip_rng.random((b, net.n)) < coord.p_attack)
        shift = flip_rng.integers(1, net.k, size=(b, net.n))
        r_all = flip_codewords(u_all, flip, shift, net.k)
        r_ref = flip_codewords(u_ref, flip[:, : net.n_ref], shift[:, : net.n_ref], net.k)
        r_reg = r_all[:, net.n_ref :]
        step_top = np.count_nonzero(r_ref == net.top, axis=1).astype(float)
        ref_top += step_top
        ref_total += net.n_ref

        counts_all = None
        counts_reg = None
        for d in dets:
            if d in errors:
                continue
            tr = out[d]
            try:
                if d in ("LRT", "GLRT", "LMPT") and counts_all is None:
                    counts_all = net.ctx_all.counts(r_all)
                if d in ("GLRTRS", "LMPTRS") and counts_reg is None:
                    counts_reg = net.ctx_reg.counts(r_reg)
                if d == "LRT":
                    w, thr = net.lrt()
                    stat = np.sum(counts_all * w, axis=(-2, -1))
                    thr = np.full(b, thr)
                elif d == "GLRT":
                    stat, thr, tr.p_hat[t] = glrtrs_batch(net.ctx_all, counts_all, 0.0, cfg.target_pfa, p_max=cfg.p_max)
                elif d == "LMPT":
                    stat, thr = lmptrs_batch(net.ctx_all, counts_all, 0.0, cfg.target_pfa)
                elif d in ("GLRTRS", "LMPTRS"):
                    x_hat = x_hat_from_counts(ref_top, ref_total)
                    tr.x_hat[t] = x_hat
                    if d == "GLRTRS":
                        stat, thr, tr.p_hat[t] = glrtrs_batch(net.ctx_reg, counts_reg, x_hat, cfg.target_pfa, p_max=cfg.p_max)
                    else:
                        stat, thr = lmptrs_batch(net.ctx_reg, counts_reg, x_hat, cfg.target_pfa)
                else:
                    step = enhanced_step(
                        net.ctx_reg,
                        states[d],
                        r_reg,
                        step_top,
                        np.full(b, float(net.n_ref)),
                        d[2:],
                        cfg.target_pfa,
                        coord.filter_tau,
                        cfg.nominal_p,
                        cfg.alpha_update,
                        cfg.p_max,
                        filter_history=cfg.filter_history,
                    )
                    stat, thr = step.statistic, step.threshold
                    tr.x_hat[t] = step.x_hat
                    if step.p_hat is not None:
                        tr.p_hat[t] = step.p_hat
            except (ValueError, FloatingPointError, ArithmeticError) as exc:
                errors[d] = f"{type(exc).__name__}: {exc}"
                continue
            tr.statistic[t] = stat
            tr.threshold[t] = thr
            tr.decide_h1[t] = decide(stat, thr)
    return out, errors


def simulate_batch(cfg: ExperimentConfig, coord: Coordinate, b: int, streams_h0, streams_h1, net: Optional[Network] = None):
    """Both hypotheses for ``b`` trials; returns ``(traces_h0, traces_h1, errors)``."""
    net = net or Network(cfg, coord)
    tr0, err0 = simulate_branch(net, Hypothesis.H0, b, streams_h0)
    tr1, err1 = simulate_branch(net, Hypothesis.H1, b, streams_h1)
    return tr0, tr1, {**err0, **err1}


def recorded_steps(cfg: ExperimentConfig) -> list:
    return list(range(cfg.time_steps)) if cfg.record_steps == "all" else [cfg.time_steps - 1]


def run_chunk(cfg: ExperimentConfig, coord_idx: int, chunk_idx: int) -> ChunkResult:
    coord = cfg.coordinates()[coord_idx]
    start = chunk_idx * cfg.chunk_size
    b = min(cfg.chunk_size, cfg.trials - start)
    net = Network(cfg, coord)
    tr0, tr1, errors = simulate_batch(
        cfg,
        coord,
        b,
        _branch_streams(cfg, coord_idx, chunk_idx, 0),
        _branch_streams(cfg, coord_idx, chunk_idx, 1),
        net,
    )
    steps = recorded_steps(cfg)
    res = ChunkResult(trials=b, errors=errors)
    for d in cfg.detectors:
        if d in errors:
            continue
        res.alarms_h0[d] = tr0[d].decide_h1[steps].sum(axis=1)
        res.alarms_h1[d] = tr1[d].decide_h1[steps].sum(axis=1)
        if tr0[d].x_hat is not None:
            res.x_hat_sum[d] = tr0[d].x_hat[steps].sum(axis=1) + tr1[d].x_hat[steps].sum(axis=1)
        if tr1[d].p_hat is not None:
            res.p_hat_sum[d] = tr1[d].p_hat[steps].sum(axis=1)
    return res


def run_trial(cfg: ExperimentConfig, coord: Coordinate, rng: np.random.Generator) -> dict:
    """One Monte Carlo draw; returns ``{detector: (verdict_h0, verdict_h1)}`` at the last step.

    Detectors that raised are mapped to the error message instead.
    """
    seeds = rng.integers(0, 2**63, size=2)
    streams = [tuple(np.random.default_rng(s) for s in np.random.SeedSequence(int(seed)).spawn(4)) for seed in seeds]
    if cfg.crn:
        streams[1] = tuple(np.random.default_rng(s) for s in np.random.SeedSequence(int(seeds[0])).spawn(4))
    tr0, tr1, errors = simulate_batch(cfg, coord, 1, streams[0], streams[1])
    out = {}
    for d in cfg.detectors:
        if d in errors:
            out[d] = errors[d]
            continue
        out[d] = tuple(_verdict(tr, -1) for tr in (tr0[d], tr1[d]))
    return out


def _verdict(tr: BranchTrace, t: int) -> DetectorVerdict:
    return DetectorVerdict(
        float(tr.statistic[t, 0]),
        float(tr.threshold[t, 0]),
        bool(tr.decide_h1[t, 0]),
        p_hat=None if tr.p_hat is None else float(tr.p_hat[t, 0]),
        x_hat=None if tr.x_hat is None else float(tr.x_hat[t, 0]),
    )


# ---------------------------------------------------------------------------
# analytic predictions
# ---------------------------------------------------------------------------


def analytic_point(net: Network, detector: str) -> Optional[PerformancePoint]:
    """Gaussian-approximation Pd/Pf/Pe with estimates replaced by their true values.

    The E-detectors depend on the filter history and have no closed form here.
    """
    if detector.startswith("E-"):
        return None
    cfg, coord = net.cfg, net.coord
    x = coord.x
    rs = detector in RS_DETECTORS
    ctx = net.ctx_reg if rs else net.ctx_all
    if ctx.n_groups != 1:
        return None
    n = net.n_reg if rs else net.n
    n_byz = net.n_byz_reg if rs else net.n_byz_reg + net.n_byz_ref
    a0 = ctx.a0[0]
    a1 = ctx.a1(cfg.p)[0, 0]
    if detector == "LRT":
        w, thr = net.lrt()
        w = w[0]
    else:
        x_used = x if rs else 0.0
        if detector in ("GLRT", "GLRTRS"):
            w = glrt_group_weights(ctx, np.array([cfg.p]), x_used)[0, 0]
        elif detector == "LMPT":
            w = lmpt_group_weights(ctx)[0]
        else:
            w = lmptrs_group_weights(ctx, x_used)[0, 0]
        mean0, var0 = weighted_moments(w, mixture_from_x(a0, x_used), n)
        thr = float(calibrated_threshold(mean0, var0, cfg.target_pfa))
    m = StatisticMoments(*_composed_moments(w, a0, n, n_byz, coord, cfg.roles), *_composed_moments(w, a1, n, n_byz, coord, cfg.roles))
    return predict_performance(m, thr, cfg.priors)


def _composed_moments(w, honest, n, n_byz, coord, roles):
    if roles == "iid":
        return weighted_moments(w, mixture_from_x(honest, coord.x), n)
    pmfs = np.stack([honest, byzantine_codeword_pmf(honest, coord.p_attack)])
    mean, var = weighted_moments(np.stack([w, w]), pmfs, np.array([n - n_byz, n_byz]))
    return float(mean), float(var)


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def _chunk_task(args):
    return run_chunk(*args)


def run_sweep(cfg: ExperimentConfig, workers: Optional[int] = None) -> list:
    """All records of a sweep, ordered by (detector, coordinate, step)."""
    workers = cfg.workers if workers is None else workers
    coords = cfg.coordinates()
    n_chunks = math.ceil(cfg.trials / cfg.chunk_size)
    tasks = [(cfg, ci, ch) for ci in range(len(coords)) for ch in range(n_chunks)]
    if workers <= 1 or len(tasks) == 1:
        results = [_chunk_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_chunk_task, tasks))

    steps = recorded_steps(cfg)
    records = {d: [] for d in cfg.detectors}
    for ci, coord in enumerate(coords):
        chunk_results = results[ci * n_chunks : (ci + 1) * n_chunks]
        net = Network(cfg, coord)
        for d in cfg.detectors:
            err = next((r.errors[d] for r in chunk_results if d in r.errors), "")
            if err:
                for t in steps:
                    records[d].append(_failed_record(d, coord, t + 1, err))
                continue
            records[d].extend(_merge(cfg, net, d, chunk_results, steps))
    return [r for d in cfg.detectors for r in records[d]]


def _merge(cfg, net, d, chunk_results, steps):
    coord = net.coord
    n = cfg.trials
    h0 = np.zeros(len(steps))
    h1 = np.zeros(len(steps))
    xs = np.zeros(len(steps))
    ps = np.zeros(len(steps))
    for r in chunk_results:
        h0 += r.alarms_h0[d]
        h1 += r.alarms_h1[d]
        if d in r.x_hat_sum:
            xs += r.x_hat_sum[d]
        if d in r.p_hat_sum:
            ps += r.p_hat_sum[d]
    try:
        ana = analytic_point(net, d)
    except ValueError:
        ana = None
    pi0, pi1 = cfg.priors
    out = []
    for i, t in enumerate(steps):
        pf = h0[i] / n
        pd = h1[i] / n
        pe = pi0 * pf + pi1 * (1.0 - pd)
        out.append(
            SweepRecord(
                detector=d,
                q=coord.q,
                alpha=coord.alpha,
                p_attack=coord.p_attack,
                t=t + 1,
                pe_emp=pe,
                pe_ci=1.96 * math.sqrt(pe * (1.0 - pe) / n),
                pd_emp=pd,
                pf_emp=pf,
                pe_analytic=math.nan if ana is None else ana.pe,
                pd_analytic=math.nan if ana is None else ana.pd,
                pf_analytic=math.nan if ana is None else ana.pf,
                x_hat_mean=xs[i] / (2 * n) if d in RS_DETECTORS else math.nan,
                p_hat_mean=ps[i] / n if d in P_HAT_DETECTORS else math.nan,
                n_reference=coord.n_reference,
                filter_tau=coord.filter_tau,
            )
        )
    return out


def _failed_record(d, coord, t, err):
    nan = math.nan
    return SweepRecord(d, coord.q, coord.alpha, coord.p_attack, t, nan, nan, nan, nan, nan, nan, nan, nan, nan, coord.n_reference, coord.filter_tau, err)
