"""Built-in scalar models: two base-family comparison sets and a perturbation study."""

from __future__ import annotations

import json

import numpy as np

from .matrixops import InvalidInputError
from .model import THETA_SLOTS, ModelParams, make_symmetric_base

_FOLLOWER_CROSSING = dict(
    T=2.0, A_1=-0.8, B_1=0.2, C_1=0.1, E_1=1.0, F_1=0.1, G_1=-0.5, Q_1=1.0, R_1=1.0, Qbar_1=0.0,
    sigma_1=0.1, A_ab=-1.0, D_ab=1.0, Q_alpha=1.0, R_alpha=1.0, Qbar_alpha=0.0,
    sigma_alpha=0.1, sigma_beta=0.1, mean_eta_alpha=2.0, mean_eta_beta=4.0, mean_eta_1=5.0,
)

# aligned leader interests (positive cross-coupling, negative cost coupling)
SET_IA = dict(_FOLLOWER_CROSSING, B_alpha=0.8, G_alpha=-0.8)
# conflicting leader interests
SET_IB = dict(_FOLLOWER_CROSSING, B_alpha=-0.8, G_alpha=0.8)

PERTURBATION_BASE = dict(
    T=2.0, A_1=-1.2, B_1=0.2, C_1=0.1, E_1=1.0, F_1=0.2, G_1=-0.1, Q_1=1.0, R_1=1.0,
    Fbar_1=0.2, Gbar_1=-0.1, Qbar_1=0.2, sigma_1=0.1,
    A_ab=-1.0, B_alpha=0.4, D_ab=1.0, G_alpha=-0.4, Q_alpha=1.0, R_alpha=1.0,
    Gbar_alpha=-0.4, Qbar_alpha=0.2, sigma_alpha=0.1, sigma_beta=0.1,
    mean_eta_alpha=1.0, mean_eta_beta=1.0, mean_eta_1=0.0,
)

# direction of the symmetry-breaking perturbation, per unit delta
PERTURBATION_PATTERN = {"C_1": 1.0, "D_1": -1.0, "M_1": 1.0, "B_alpha": -0.25, "C_alpha": 1.0, "C_beta": 1.0}

SCALE_FACTOR = 2.0


def crossing_ia(mean_eta_1: float = 5.0) -> ModelParams:
    return make_symmetric_base(dict(SET_IA, mean_eta_1=mean_eta_1), SCALE_FACTOR)


def crossing_ib(mean_eta_1: float = 5.0) -> ModelParams:
    return make_symmetric_base(dict(SET_IB, mean_eta_1=mean_eta_1), SCALE_FACTOR)


def perturbation_base(mean_eta_1: float = 0.0) -> ModelParams:
    return make_symmetric_base(dict(PERTURBATION_BASE, mean_eta_1=mean_eta_1), SCALE_FACTOR)


def validate_pattern(pattern: dict) -> dict:
    unknown = set(pattern) - set(THETA_SLOTS)
    if unknown:
        raise InvalidInputError(f"unknown pattern slots: {sorted(unknown)}")
    return {k: float(v) for k, v in pattern.items()}


def perturb(base: ModelParams, pattern: dict, delta: float) -> ModelParams:
    """Shift every slot in ``pattern`` by ``delta`` times its direction."""
    pattern = validate_pattern(pattern)
    changes = {name: getattr(base, name) + delta * coef for name, coef in pattern.items()}
    return base.replace(**changes)


def load_pattern(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict) or not all(np.isscalar(v) for v in data.values()):
        raise InvalidInputError(f"{path}: expected an object of slot -> number")
    return validate_pattern(data)


BUILTIN = {
    "crossing_ia": crossing_ia,
    "crossing_ib": crossing_ib,
    "perturbation_base": perturbation_base,
}
