"""Monte Carlo study of the reference-sensor attack estimator against its CRLB.

Every reference report independently comes from a Byzantine sensor with
probability alpha, which then flips it with probability P_A. The number of
reports on the dominant codeword is then exactly Binomial(n, f_top) with
f_top the mixture pmf of the shifted quantizer, so it is drawn directly.
H0 and H1 alternate between replications.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..analysis import crlb_attack_parameter
from ..channel import mixture_from_x
from ..detectors import x_hat_from_counts
from ..sensing import Hypothesis, SensorSpec, honest_codeword_pmf, make_reference_thresholds
from .config import ExperimentConfig
from .output import OutputError, format_number

ESTIMATOR_COLUMNS = ("q", "alpha", "p_attack", "x", "n_samples", "replications", "x_hat_mean", "x_hat_var", "crlb", "var_ratio")


@dataclass
class EstimatorRecord:
    q: int
    alpha: float
    p_attack: float
    x: float
    n_samples: int
    replications: int
    x_hat_mean: float
    x_hat_var: float
    crlb: float
    var_ratio: float


def top_probabilities(cfg: ExperimentConfig, q: int, x: float) -> tuple:
    """P(report = dominant codeword) for a reference sensor under H0 and H1."""
    base = SensorSpec(0, cfg.regular_thresholds(q), cfg.gain2)
    ref = SensorSpec(0, make_reference_thresholds(base, cfg.reference_offset, cfg.mirror), cfg.gain2, True)
    top = 0 if cfg.mirror else 2**q - 1
    return tuple(float(mixture_from_x(honest_codeword_pmf(cfg.model, ref, h), x)[top]) for h in (Hypothesis.H0, Hypothesis.H1))


def sample_estimates(cfg: ExperimentConfig, q: int, alpha: float, p_attack: float, n_samples: int, n_reps: int, rng) -> np.ndarray:
    """``n_reps`` independent estimates, each from ``n_samples`` reference reports."""
    f0, f1 = top_probabilities(cfg, q, alpha * p_attack)
    prob = np.where(np.arange(n_reps) % 2 == 0, f0, f1)
    return x_hat_from_counts(rng.binomial(n_samples, prob), n_samples)


def run_estimator(cfg: ExperimentConfig) -> list:
    """One record per (q, alpha, P_A, N_ref * T) with T from ``cfg.estimator_steps``."""
    records = []
    n_ref = cfg.n_reference[0]
    grid = [(q, a, pa) for q in cfg.q_bits for a in cfg.alphas for pa in cfg.p_attacks]
    for ci, (q, a, pa) in enumerate(grid):
        for si, steps in enumerate(cfg.estimator_steps):
            n = n_ref * int(steps)
            rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(ci, si)))
            est = sample_estimates(cfg, q, a, pa, n, cfg.trials, rng)
            x = a * pa
            crlb = crlb_attack_parameter(x, n) if 0.0 < x < 1.0 else 0.0
            var = float(np.var(est, ddof=1)) if est.size > 1 else math.nan
            records.append(EstimatorRecord(q, a, pa, x, n, cfg.trials, float(np.mean(est)), var, crlb, var / crlb if crlb > 0 else math.nan))
    return records


def render_estimator_csv(records) -> str:
    lines = [",".join(ESTIMATOR_COLUMNS)]
    for r in records:
        d = dataclasses.asdict(r)
        lines.append(",".join(str(d[c]) if c in ("q", "n_samples", "replications") else format_number(float(d[c])) for c in ESTIMATOR_COLUMNS))
    return "\n".join(lines) + "\n"


def emit_estimator_csv(records, path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(render_estimator_csv(records))
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path
