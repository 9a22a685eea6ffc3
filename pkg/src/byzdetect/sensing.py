"""Sparse-signal observation model, q-bit quantizer and honest codeword pmfs.

Codewords are numbered 1..2**q as in v_1..v_{2^q}; arrays of codeword
probabilities are indexed from 0, so codeword ``j`` lives at position
``j - 1``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .numerics import normal_pdf, q_tail, q_tail_inverse

DEFAULT_REFERENCE_OFFSET = 6.0
ASSUMPTION_TOLERANCE = 1e-6


class Hypothesis(enum.IntEnum):
    H0 = 0
    H1 = 1


class Role(str, enum.Enum):
    HONEST = "honest"
    BYZANTINE = "byzantine"


@dataclass(frozen=True)
class SignalModel:
    p: float
    sigma_x2: float = 5.0
    sigma_n2: float = 1.0
    M: int = 500

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"sparsity degree must lie in [0, 1], got {self.p}")
        if self.sigma_x2 <= 0 or self.sigma_n2 <= 0:
            raise ValueError("signal and noise variances must be positive")
        if self.M < 1:
            raise ValueError("signal dimension M must be >= 1")

    def with_p(self, p: float) -> "SignalModel":
        return SignalModel(p, self.sigma_x2, self.sigma_n2, self.M)


@dataclass(frozen=True)
class SensorSpec:
    """One sensor: quantizer thresholds tau_0 = -inf < ... < tau_{2^q} = +inf."""

    id: int
    thresholds: tuple
    gain2: float = 1.0
    is_reference: bool = False
    role: Role = Role.HONEST

    def __post_init__(self):
        t = np.asarray(self.thresholds, dtype=float)
        object.__setattr__(self, "thresholds", tuple(float(v) for v in t))
        n = t.size - 1
        if n < 2 or n & (n - 1):
            raise ValueError(f"need 2**q + 1 thresholds, got {t.size}")
        if t[0] != -np.inf or t[-1] != np.inf:
            raise ValueError("outer thresholds must be -inf and +inf")
        if np.any(np.diff(t) <= 0):
            raise ValueError(f"thresholds must be strictly increasing: {self.thresholds}")
        if self.gain2 < 0:
            raise ValueError("gain2 must be nonnegative")

    @property
    def n_codewords(self) -> int:
        return len(self.thresholds) - 1

    @property
    def q(self) -> int:
        return self.n_codewords.bit_length() - 1


def full_thresholds(inner) -> tuple:
    """Wrap finite thresholds with -inf/+inf."""
    return (-np.inf, *[float(v) for v in inner], np.inf)


def equiprobable_thresholds(q: int, sigma_n2: float = 1.0) -> tuple:
    """Thresholds that make every codeword equally likely under H0."""
    k = 2**q
    probs = np.arange(k - 1, 0, -1) / k
    inner = np.sqrt(sigma_n2) * q_tail_inverse(probs)
    return full_thresholds(np.atleast_1d(inner))


def beta_from(model: SignalModel, gain2, h) -> np.ndarray:
    """Observation standard deviation, vectorized over ``gain2`` and ``model.p``."""
    if int(h) == Hypothesis.H0:
        return np.sqrt(model.sigma_n2) * np.ones_like(np.asarray(gain2, dtype=float))
    return np.sqrt(model.sigma_n2 + model.p * model.sigma_x2 * np.asarray(gain2, dtype=float))


def beta_h(model: SignalModel, sensor: SensorSpec, h) -> float:
    return float(beta_from(model, sensor.gain2, h))


def sample_support(model: SignalModel, rng: np.random.Generator, shape=()) -> np.ndarray:
    """Bernoulli(p) sparsity pattern(s) of length M, shape ``shape + (M,)``."""
    return rng.random(tuple(shape) + (model.M,)) < model.p


def sample_sparse_observation(
    model: SignalModel,
    sensor: SensorSpec,
    h,
    rng: np.random.Generator,
    size=None,
    support=None,
):
    """Draw y = h^T x + n from the Bernoulli-Gaussian model, literally.

    ``support`` optionally fixes the 0/1 sparsity pattern (length M) so
    that several sensors can share it; otherwise a fresh pattern is drawn
    per sample. Under H0 only the noise term is returned.
    """
    shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
    noise = rng.normal(0.0, np.sqrt(model.sigma_n2), size=shape)
    if int(h) == Hypothesis.H0:
        return noise if shape else float(noise)
    M = model.M
    if support is None:
        s = sample_support(model, rng, shape)
    else:
        s = np.broadcast_to(np.asarray(support, dtype=bool), shape + (M,))
    x = rng.normal(0.0, np.sqrt(model.sigma_x2), size=shape + (M,)) * s
    hv = rng.standard_normal(shape + (M,))
    hv *= np.sqrt(sensor.gain2) / np.linalg.norm(hv, axis=-1, keepdims=True)
    y = np.sum(hv * x, axis=-1) + noise
    return y if shape else float(y)


def sample_asymptotic_observation(model: SignalModel, sensor: SensorSpec, h, rng, size=None):
    """Gaussian surrogate y ~ N(0, beta_h^2)."""
    y = rng.normal(0.0, beta_h(model, sensor, h), size=size)
    return y if size is not None else float(y)


def sample_network_observations(model: SignalModel, gain2, h, rng, n_trials: int, surrogate="asymptotic", signal_rng=None):
    """Observations for a whole network, shape ``(n_trials, n_sensors)``.

    ``signal_rng`` (default: ``rng``) supplies the signal part, so that a
    caller can keep the noise stream aligned between H0 and H1 runs.

    With ``surrogate="exact_bg"`` each trial draws one sparsity pattern
    shared by all sensors. Only the active entries matter: given k active
    positions, h_s^T x_s / ||h|| is Gaussian with variance
    sigma_x^2 * gain2 * U / (U + V), U ~ chi2(k), V ~ chi2(M - k), which
    reproduces the literal construction in distribution at O(1) cost per
    sensor.
    """
    gain2 = np.asarray(gain2, dtype=float)
    n = gain2.size
    noise = rng.normal(0.0, np.sqrt(model.sigma_n2), size=(n_trials, n))
    if int(h) == Hypothesis.H0 or model.p == 0.0:
        return noise
    rng = rng if signal_rng is None else signal_rng
    if surrogate == "asymptotic":
        scale = np.sqrt(model.p * model.sigma_x2 * gain2)
        # sum of independent Gaussians keeps the N(0, beta_1^2) law
        return noise + rng.standard_normal((n_trials, n)) * scale
    if surrogate != "exact_bg":
        raise ValueError(f"unknown surrogate {surrogate!r}")
    k = rng.binomial(model.M, model.p, size=(n_trials, 1)).astype(float)
    u = 2.0 * rng.standard_gamma(np.broadcast_to(k / 2.0, (n_trials, n)))
    v = 2.0 * rng.standard_gamma(np.broadcast_to((model.M - k) / 2.0, (n_trials, n)))
    frac = np.divide(u, u + v, out=np.zeros_like(u), where=(u + v) > 0)
    xi = rng.standard_normal((n_trials, n))
    return noise + xi * np.sqrt(model.sigma_x2 * gain2 * frac)


def quantize_array(y, thresholds) -> np.ndarray:
    """Codewords for observations ``y`` (..., N) against thresholds (N, K+1).

    Intervals are left-closed: a value equal to tau_j maps to codeword j+1.
    """
    inner = np.asarray(thresholds, dtype=float)[..., 1:-1]
    y = np.asarray(y, dtype=float)
    return 1 + np.sum(y[..., None] >= inner, axis=-1)


def quantize(y, sensor: SensorSpec):
    out = quantize_array(y, np.asarray(sensor.thresholds))
    return int(out) if np.ndim(out) == 0 else out


def cell_probabilities(thresholds, beta) -> np.ndarray:
    """A_j = Q(tau_{j-1}/beta) - Q(tau_j/beta) for every cell.

    ``thresholds`` has shape (..., K+1) and ``beta`` broadcasts against the
    leading dimensions. Cells lying entirely below zero are evaluated
    through the lower tail so that tiny probabilities keep their precision.
    """
    t = np.asarray(thresholds, dtype=float)
    b = np.asarray(beta, dtype=float)[..., None]
    z = t / b
    lo, hi = z[..., :-1], z[..., 1:]
    upper = q_tail(lo) - q_tail(hi)
    lower = q_tail(-hi) - q_tail(-lo)
    return np.clip(np.where(hi <= 0.0, lower, upper), 0.0, 1.0)


def _tau_pdf(t, b):
    # tau * phi(tau / beta), with the +-inf thresholds contributing zero
    finite = np.isfinite(t)
    safe = np.where(finite, t, 0.0)
    return np.where(finite, safe * normal_pdf(safe / b), 0.0)


def cell_probability_slope(thresholds, gain2, model: SignalModel, p=None) -> np.ndarray:
    """d A_{j,1} / d p, the sparsity derivative of the H1 cell probabilities."""
    p = model.p if p is None else p
    t = np.asarray(thresholds, dtype=float)
    g = np.asarray(gain2, dtype=float)
    b = np.sqrt(model.sigma_n2 + np.asarray(p, dtype=float) * model.sigma_x2 * g)
    scale = (model.sigma_x2 * g / (2.0 * b**3))[..., None]
    bb = b[..., None]
    tp = _tau_pdf(t, bb)
    return scale * (tp[..., :-1] - tp[..., 1:])


def honest_codeword_pmf(model: SignalModel, sensor: SensorSpec, h) -> np.ndarray:
    return cell_probabilities(np.asarray(sensor.thresholds), beta_h(model, sensor, h))


def make_reference_thresholds(base: SensorSpec, offset: float = DEFAULT_REFERENCE_OFFSET, mirror: bool = False) -> tuple:
    """Shift a regular quantizer so that a single codeword absorbs all mass.

    The finite thresholds keep their spacing and move down until the top one
    sits ``offset`` below the smallest regular threshold (so v_{2^q} is sent
    almost surely). ``mirror=True`` moves them up instead, favouring v_1.
    """
    inner = np.asarray(base.thresholds[1:-1], dtype=float)
    if mirror:
        shifted = inner + (inner.max() - inner.min()) + offset
    else:
        shifted = inner - (inner.max() - inner.min()) - offset
    return full_thresholds(shifted)


def assumption_check(model: SignalModel, sensor: SensorSpec, tol: float = ASSUMPTION_TOLERANCE):
    """Does the sensor send one fixed codeword under both hypotheses?

    Returns ``(holds, mass)`` where ``mass`` is the smaller, over H0 and H1,
    of the probability of the extreme codeword (v_{2^q}, or v_1 when that
    one dominates).
    """
    masses = []
    for h in Hypothesis:
        pmf = honest_codeword_pmf(model, sensor, h)
        masses.append(max(pmf[0], pmf[-1]))
    mass = float(min(masses))
    return mass >= 1.0 - tol, mass


@dataclass
class SensorBank:
    """Array view of a network, one row per sensor.

    ``thresholds`` is (N, K+1) including the infinite ends. Sensors with
    identical quantizer and gain form a group; detectors work on per-group
    codeword counts, which keeps homogeneous networks cheap.
    """

    thresholds: np.ndarray
    gain2: np.ndarray
    is_reference: np.ndarray = None
    _groups: tuple = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.thresholds = np.atleast_2d(np.asarray(self.thresholds, dtype=float))
        n = self.thresholds.shape[0]
        self.gain2 = np.broadcast_to(np.asarray(self.gain2, dtype=float), (n,)).copy()
        if self.is_reference is None:
            self.is_reference = np.zeros(n, dtype=bool)
        self.is_reference = np.asarray(self.is_reference, dtype=bool)
        k = self.thresholds.shape[1] - 1
        if k < 2 or k & (k - 1):
            raise ValueError("each sensor needs 2**q + 1 thresholds")
        if np.any(np.diff(self.thresholds, axis=1) <= 0):
            raise ValueError("thresholds must be strictly increasing")

    @classmethod
    def from_specs(cls, specs) -> "SensorBank":
        specs = list(specs)
        return cls(
            np.array([s.thresholds for s in specs]),
            np.array([s.gain2 for s in specs]),
            np.array([s.is_reference for s in specs]),
        )

    @classmethod
    def homogeneous(cls, n: int, thresholds, gain2: float = 1.0) -> "SensorBank":
        t = np.asarray(thresholds, dtype=float)
        return cls(np.tile(t, (n, 1)), np.full(n, gain2))

    def __len__(self):
        return self.thresholds.shape[0]

    @property
    def n_codewords(self) -> int:
        return self.thresholds.shape[1] - 1

    def spec(self, i: int) -> SensorSpec:
        return SensorSpec(i, tuple(self.thresholds[i]), float(self.gain2[i]), bool(self.is_reference[i]))

    def subset(self, idx) -> "SensorBank":
        return SensorBank(self.thresholds[idx], self.gain2[idx], self.is_reference[idx])

    def groups(self):
        """``(index, thresholds, gain2, sizes)`` for the distinct sensor types."""
        if self._groups is None:
            key = np.column_stack([self.thresholds, self.gain2])
            uniq, index = np.unique(key, axis=0, return_inverse=True)
            index = np.asarray(index).reshape(-1)
            sizes = np.bincount(index, minlength=uniq.shape[0])
            self._groups = (index, uniq[:, :-1], uniq[:, -1], sizes)
        return self._groups

    def pmfs(self, model: SignalModel, h) -> np.ndarray:
        """Honest codeword pmfs, shape (N, K)."""
        return cell_probabilities(self.thresholds, beta_from(model, self.gain2, h))
