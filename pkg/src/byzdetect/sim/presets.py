"""Named experiments at the reference operating point.

All presets share N = 280 sensors of which N_ref = 80 are reference
sensors, sigma_n^2 = 1, sigma_x^2 = 5, alpha = 0.3, PFA = 0.4, equal priors
and 10^4 trials per point; they differ in the swept axis.
"""

from __future__ import annotations

from .config import ConfigError, ExperimentConfig

P_ATTACK_GRID = tuple(round(0.1 * i, 1) for i in range(11))
# explicit quantizers: a single threshold at 0 carries no information for q = 1
DEFAULT_THRESHOLDS = {1: (-0.6,), 2: (-1.0, 0.0, 1.0)}
ENHANCED_STEPS = 30

BASE = dict(
    n_sensors=280,
    n_reference=(80,),
    sigma_n2=1.0,
    sigma_x2=5.0,
    p=0.1,
    alphas=(0.3,),
    target_pfa=0.4,
    priors=(0.5, 0.5),
    trials=10_000,
    threshold_scheme="explicit",
    thresholds=DEFAULT_THRESHOLDS,
)

_PRESETS = {
    "fig2": ("Pe vs P_A: GLRTRS against GLRT and the clairvoyant LRT", dict(
        q_bits=(1, 2), p_attacks=P_ATTACK_GRID, detectors=("LRT", "GLRT", "GLRTRS"),
    )),
    "fig3": ("Pe vs P_A: E-GLRTRS for two filter thresholds", dict(
        q_bits=(1, 2), p_attacks=P_ATTACK_GRID, detectors=("LRT", "GLRTRS", "E-GLRTRS"),
        filter_tau=(0.5, 0.7), time_steps=ENHANCED_STEPS,
    )),
    "fig4": ("Pe vs time step: GLRTRS with N - N_ref = 200 and two N_ref", dict(
        q_bits=(1,), p_attacks=(0.5,), detectors=("GLRTRS",), n_reference=(20, 80),
        n_regular_fixed=200, time_steps=30, record_steps="all",
    )),
    "fig5": ("Pe vs P_A: LMPTRS against the quantized LMPT and the clairvoyant LRT", dict(
        q_bits=(1, 2), p_attacks=P_ATTACK_GRID, detectors=("LRT", "LMPT", "LMPTRS"),
    )),
    "fig6": ("Pe vs P_A: E-LMPTRS for two filter thresholds", dict(
        q_bits=(1, 2), p_attacks=P_ATTACK_GRID, detectors=("LRT", "LMPT", "LMPTRS", "E-LMPTRS"),
        filter_tau=(0.5, 0.7), time_steps=ENHANCED_STEPS,
    )),
    "estimator": ("Attack-parameter estimator: mean and variance against the CRLB", dict(
        kind="estimator", q_bits=(1, 2), p_attacks=(0.5, 1.0), estimator_steps=(1, 10, 100),
    )),
    "blinding": ("Pe around the blinding point: every Byzantine flips with P_A", dict(
        q_bits=(1, 2), alphas=(1.0,), p_attacks=(0.0, 0.25, 0.5, 0.625, 0.75, 0.875, 1.0),
        detectors=("GLRT", "LMPT"),
    )),
}


def preset_names() -> list:
    return list(_PRESETS)


def describe(name: str) -> str:
    return _PRESETS[name][0]


def preset(name: str, **overrides) -> ExperimentConfig:
    if name not in _PRESETS:
        raise ConfigError(f"unknown preset {name!r}; valid presets: {', '.join(_PRESETS)}")
    fields = {**BASE, **_PRESETS[name][1], **{k: v for k, v in overrides.items() if v is not None}}
    return ExperimentConfig(**fields)
