"""Experiment configuration: a flat YAML mapping whose keys mirror ExperimentConfig."""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from ..sensing import SignalModel, equiprobable_thresholds, full_thresholds
from ..reputation import ALPHA_UPDATES, FILTER_HISTORIES

DETECTORS = ("LRT", "GLRT", "LMPT", "GLRTRS", "LMPTRS", "E-GLRTRS", "E-LMPTRS")
THRESHOLD_SCHEMES = ("equiprobable_h0", "explicit")
SURROGATES = ("asymptotic", "exact_bg")
ROLE_MODES = ("stratified", "iid")
LRT_THRESHOLDS = ("adaptive", "bayes")
RECORD_STEPS = ("last", "all")
_SWEEP_KEYS = ("q_bits", "alphas", "p_attacks", "n_reference", "filter_tau", "estimator_steps")
KINDS = ("sweep", "estimator")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Coordinate:
    """One point of the sweep grid."""

    q: int
    alpha: float
    p_attack: float
    n_reference: int
    n_sensors: int
    filter_tau: float

    @property
    def x(self) -> float:
        return self.alpha * self.p_attack


@dataclass
class ExperimentConfig:
    """Everything a sweep needs. List-valued fields are sweep axes.

    ``n_regular_fixed`` (when set) keeps N - N_ref constant while
    ``n_reference`` varies, so each coordinate has its own network size.
    """

    n_sensors: int = 280
    n_reference: tuple = (80,)
    n_regular_fixed: Optional[int] = None
    q_bits: tuple = (1,)
    p: float = 0.1
    sigma_x2: float = 5.0
    sigma_n2: float = 1.0
    M: int = 500
    gain2: float = 1.0
    alphas: tuple = (0.3,)
    p_attacks: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    detectors: tuple = ("GLRT", "GLRTRS", "LRT")
    target_pfa: float = 0.4
    priors: tuple = (0.5, 0.5)
    trials: int = 10_000
    time_steps: int = 1
    record_steps: str = "last"
    seed: int = 20240101
    threshold_scheme: str = "equiprobable_h0"
    thresholds: dict = field(default_factory=dict)
    reference_offset: float = 6.0
    mirror: bool = False
    filter_tau: tuple = (0.5,)
    alpha_update: str = "kept"
    filter_history: str = "previous"
    nominal_p: float = 0.05
    p_max: float = 0.5
    surrogate: str = "asymptotic"
    roles: str = "stratified"
    crn: bool = False
    lrt_threshold: str = "adaptive"
    chunk_size: int = 500
    workers: int = 1
    kind: str = "sweep"
    estimator_steps: tuple = (1, 10, 100)

    def __post_init__(self):
        for key in _SWEEP_KEYS:
            v = getattr(self, key)
            setattr(self, key, tuple(v) if isinstance(v, (list, tuple)) else (v,))
        self.detectors = tuple(self.detectors) if not isinstance(self.detectors, str) else (self.detectors,)
        self.priors = tuple(float(v) for v in self.priors)
        self.thresholds = {int(k): tuple(float(x) for x in (v if isinstance(v, (list, tuple)) else [v])) for k, v in (self.thresholds or {}).items()}
        self.validate()

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.trials >= 1, "trials must be >= 1")
        need(self.time_steps >= 1, "time_steps must be >= 1")
        need(self.chunk_size >= 1, "chunk_size must be >= 1")
        need(self.workers >= 1, "workers must be >= 1")
        need(all(1 <= q <= 8 for q in self.q_bits), "q_bits must lie in 1..8")
        for n_ref in self.n_reference:
            n = self.network_size(n_ref)
            need(0 < n_ref < n, f"need 0 < n_reference < n_sensors, got {n_ref} and {n}")
        need(all(0.0 <= a <= 1.0 for a in self.alphas), "alphas must lie in [0, 1]")
        need(all(0.0 <= a <= 1.0 for a in self.p_attacks), "p_attacks must lie in [0, 1]")
        need(all(t > 0 for t in self.filter_tau), "filter_tau must be positive")
        need(all(int(t) >= 1 for t in self.estimator_steps), "estimator_steps must be >= 1")
        need(0.0 < self.target_pfa < 1.0, "target_pfa must lie in (0, 1)")
        need(len(self.priors) == 2 and abs(sum(self.priors) - 1.0) < 1e-12 and min(self.priors) > 0, "priors must be two positive numbers summing to 1")
        need(0.0 < self.p_max <= 1.0, "p_max must lie in (0, 1]")
        need(0.0 < self.nominal_p <= self.p_max, "nominal_p must lie in (0, p_max]")
        need(self.reference_offset > 0, "reference_offset must be positive")
        unknown = [d for d in self.detectors if d not in DETECTORS]
        need(not unknown and self.detectors, f"unknown detectors {unknown}; valid: {', '.join(DETECTORS)}")
        for name, value, valid in (
            ("threshold_scheme", self.threshold_scheme, THRESHOLD_SCHEMES),
            ("surrogate", self.surrogate, SURROGATES),
            ("roles", self.roles, ROLE_MODES),
            ("lrt_threshold", self.lrt_threshold, LRT_THRESHOLDS),
            ("record_steps", self.record_steps, RECORD_STEPS),
            ("alpha_update", self.alpha_update, ALPHA_UPDATES),
            ("filter_history", self.filter_history, FILTER_HISTORIES),
            ("kind", self.kind, KINDS),
        ):
            need(value in valid, f"{name} must be one of {valid}, got {value!r}")
        try:
            SignalModel(self.p, self.sigma_x2, self.sigma_n2, self.M)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for q in self.q_bits:
            need(np.all(np.diff(self.regular_thresholds(q)) > 0), f"q={q} thresholds must be strictly increasing")

    @property
    def model(self) -> SignalModel:
        return SignalModel(self.p, self.sigma_x2, self.sigma_n2, self.M)

    def network_size(self, n_reference: int) -> int:
        return self.n_sensors if self.n_regular_fixed is None else self.n_regular_fixed + n_reference

    def regular_thresholds(self, q: int) -> tuple:
        if self.threshold_scheme == "equiprobable_h0":
            return equiprobable_thresholds(q, self.sigma_n2)
        if q not in self.thresholds:
            raise ConfigError(f"explicit threshold scheme has no thresholds for q={q}")
        inner = self.thresholds[q]
        if len(inner) != 2**q - 1:
            raise ConfigError(f"q={q} needs {2**q - 1} finite thresholds, got {len(inner)}")
        return full_thresholds(inner)

    def coordinates(self) -> list:
        """Sweep grid in a fixed order: q, n_reference, alpha, p_attack, filter_tau."""
        out = []
        for q, n_ref, a, pa, tau in itertools.product(self.q_bits, self.n_reference, self.alphas, self.p_attacks, self.filter_tau):
            out.append(Coordinate(q, float(a), float(pa), int(n_ref), self.network_size(n_ref), float(tau)))
        return out

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        d["thresholds"] = {k: list(v) for k, v in self.thresholds.items()}
        return d


_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def config_from_mapping(data: dict, **overrides) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a key-value mapping")
    merged = {**data, **{k: v for k, v in overrides.items() if v is not None}}
    unknown = sorted(set(merged) - _FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    merged = {k: tuple(v) if isinstance(v, list) else v for k, v in merged.items()}
    try:
        return ExperimentConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a YAML config; keyword overrides (e.g. from CLI flags) win over file values."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return config_from_mapping(data, **overrides)
