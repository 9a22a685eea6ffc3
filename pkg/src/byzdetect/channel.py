"""Byzantine report channel and the honest/Byzantine mixture pmf."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sensing import Hypothesis, SensorBank, SignalModel


class BlindingError(ValueError):
    pass


@dataclass(frozen=True)
class AttackParams:
    alpha: float
    p_attack: float

    def __post_init__(self):
        for name in ("alpha", "p_attack"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    @property
    def x(self) -> float:
        return self.alpha * self.p_attack


def byzantine_report(z, p_attack: float, rng: np.random.Generator, n_codewords: int):
    """Flip codeword(s) ``z`` to a uniformly chosen different codeword w.p. ``p_attack``."""
    z = np.asarray(z)
    flip = rng.random(z.shape) < p_attack
    shift = rng.integers(1, n_codewords, size=z.shape)
    out = flip_codewords(z, flip, shift, n_codewords)
    return int(out) if out.ndim == 0 else out


def flip_codewords(z, flip, shift, n_codewords: int):
    """Apply pre-drawn flip decisions; ``shift`` in 1..K-1 picks the wrong codeword."""
    z = np.asarray(z)
    moved = (z - 1 + shift) % n_codewords + 1
    return np.where(flip, moved, z)


def byzantine_codeword_pmf(honest, p_attack: float) -> np.ndarray:
    honest = np.asarray(honest, dtype=float)
    k = honest.shape[-1]
    return honest * (1.0 - p_attack) + (1.0 - honest) * p_attack / (k - 1)


def mixture_from_x(honest, x) -> np.ndarray:
    """Report pmf when a fraction of reports x = alpha * P_A is corrupted.

    ``x`` may be an array broadcasting against the leading axes of ``honest``.
    """
    honest = np.asarray(honest, dtype=float)
    k = honest.shape[-1]
    x = np.asarray(x, dtype=float)
    if x.ndim:
        x = x.reshape(x.shape + (1,) * (honest.ndim - x.ndim))
    return honest + x * (1.0 / (k - 1) - honest - honest / (k - 1))


def mixture_codeword_pmf(honest, attack: AttackParams) -> np.ndarray:
    return mixture_from_x(honest, attack.x)


def blinding_product(sensors: SensorBank, model: SignalModel, weights) -> float:
    """Attack strength alpha * P_A at which a linear fusion statistic is blind.

    With per-report corruption x the mean of sum_ij I(u_i = v_j) d_ij is
    sum A_j d_j + x * sum (1/(K-1) - K/(K-1) A_j) d_j, so the H1/H0 mean gap
    is (1 - x K/(K-1)) * sum (A_j1 - A_j0) d_j and vanishes at the returned x.
    """
    d = np.asarray(weights, dtype=float)
    if not np.all(np.isfinite(d)):
        raise ValueError("fusion weights must be finite")
    k = sensors.n_codewords
    delta = sensors.pmfs(model, Hypothesis.H1) - sensors.pmfs(model, Hypothesis.H0)
    num = float(np.sum(delta * d))
    den = float(np.sum(k / (k - 1) * delta * d))
    if den == 0.0:
        raise BlindingError("weights orthogonal to attack direction")
    return num / den
