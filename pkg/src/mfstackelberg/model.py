"""Model parameters, validation, the symmetric base family and the model distance."""

from __future__ import annotations

import dataclasses
import enum
import json
from dataclasses import dataclass
from pathlib import Path as FsPath

import numpy as np
import scipy.linalg

from .matrixops import InvalidInputError, lambda_min_sym

# Parameter slots in the fixed order used by the model distance.
THETA_SLOTS = (
    "A_alpha", "B_alpha", "C_alpha", "D_alpha", "sigma_alpha",
    "A_beta", "B_beta", "C_beta", "D_beta", "sigma_beta",
    "A_1", "B_1", "C_1", "D_1", "E_1", "sigma_1",
    "F_alpha", "G_alpha", "M_alpha", "Q_alpha", "R_alpha",
    "F_beta", "G_beta", "M_beta", "Q_beta", "R_beta",
    "F_1", "G_1", "H_1", "M_1", "Q_1", "R_1",
    "Fbar_alpha", "Gbar_alpha", "Mbar_alpha", "Qbar_alpha",
    "Fbar_beta", "Gbar_beta", "Mbar_beta", "Qbar_beta",
    "Fbar_1", "Gbar_1", "Hbar_1", "Mbar_1", "Qbar_1",
)

VECTOR_SLOTS = frozenset({"M_alpha", "M_beta", "M_1", "Mbar_alpha", "Mbar_beta", "Mbar_1"})

MOMENT_KEYS = ("mean_eta_alpha", "mean_eta_beta", "mean_eta_1",
               "cov_eta_1", "cov_eta_alpha", "cov_eta_beta")

JSON_KEYS = frozenset(THETA_SLOTS) | {"T"} | frozenset(MOMENT_KEYS)

# Row/column dimension of every slot, in terms of the dimension names below.
_SHAPES = {
    "A_alpha": ("na", "na"), "B_alpha": ("na", "nb"), "C_alpha": ("na", "n1"),
    "D_alpha": ("na", "ma"), "sigma_alpha": ("na", "da"),
    "A_beta": ("nb", "na"), "B_beta": ("nb", "nb"), "C_beta": ("nb", "n1"),
    "D_beta": ("nb", "mb"), "sigma_beta": ("nb", "db"),
    "A_1": ("n1", "n1"), "B_1": ("n1", "n1"), "C_1": ("n1", "na"), "D_1": ("n1", "nb"),
    "E_1": ("n1", "m1"), "sigma_1": ("n1", "d1"),
    "F_alpha": ("na", "n1"), "G_alpha": ("na", "nb"), "M_alpha": ("na",),
    "Q_alpha": ("na", "na"), "R_alpha": ("ma", "ma"),
    "F_beta": ("nb", "n1"), "G_beta": ("nb", "na"), "M_beta": ("nb",),
    "Q_beta": ("nb", "nb"), "R_beta": ("mb", "mb"),
    "F_1": ("n1", "n1"), "G_1": ("n1", "na"), "H_1": ("n1", "nb"), "M_1": ("n1",),
    "Q_1": ("n1", "n1"), "R_1": ("m1", "m1"),
    "Fbar_alpha": ("na", "n1"), "Gbar_alpha": ("na", "nb"), "Mbar_alpha": ("na",),
    "Qbar_alpha": ("na", "na"),
    "Fbar_beta": ("nb", "n1"), "Gbar_beta": ("nb", "na"), "Mbar_beta": ("nb",),
    "Qbar_beta": ("nb", "nb"),
    "Fbar_1": ("n1", "n1"), "Gbar_1": ("n1", "na"), "Hbar_1": ("n1", "nb"), "Mbar_1": ("n1",),
    "Qbar_1": ("n1", "n1"),
    "mean_eta_alpha": ("na",), "mean_eta_beta": ("nb",), "mean_eta_1": ("n1",),
    "cov_eta_1": ("n1", "n1"), "cov_eta_alpha": ("na", "na"), "cov_eta_beta": ("nb", "nb"),
}


class GameKind(enum.Enum):
    """Mode of interaction between the two leaders."""

    NASH = "nash"
    PARETO = "pareto"

    @classmethod
    def parse(cls, value) -> "GameKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError as exc:
            raise InvalidInputError(f"unknown game kind {value!r}") from exc


def _coerce(name: str, value) -> np.ndarray:
    a = np.asarray(value, dtype=float)
    if len(_SHAPES[name]) == 1:
        a = np.atleast_1d(a)
        if a.ndim != 1:
            raise InvalidInputError(f"{name} must be a vector, got shape {a.shape}")
    else:
        a = np.atleast_2d(a)
        if a.ndim != 2:
            raise InvalidInputError(f"{name} must be a matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} has non-finite entries")
    a = a.copy()
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Every coefficient of the leader-follower model plus initial moments.

    Matrices are stored as read-only 2-D arrays and the affine targets
    ``M*`` and the means as 1-D arrays.  Leader covariances default to
    zero (deterministic leader initial states).
    """

    T: float
    A_alpha: np.ndarray
    B_alpha: np.ndarray
    C_alpha: np.ndarray
    D_alpha: np.ndarray
    sigma_alpha: np.ndarray
    A_beta: np.ndarray
    B_beta: np.ndarray
    C_beta: np.ndarray
    D_beta: np.ndarray
    sigma_beta: np.ndarray
    A_1: np.ndarray
    B_1: np.ndarray
    C_1: np.ndarray
    D_1: np.ndarray
    E_1: np.ndarray
    sigma_1: np.ndarray
    F_alpha: np.ndarray
    G_alpha: np.ndarray
    M_alpha: np.ndarray
    Q_alpha: np.ndarray
    R_alpha: np.ndarray
    F_beta: np.ndarray
    G_beta: np.ndarray
    M_beta: np.ndarray
    Q_beta: np.ndarray
    R_beta: np.ndarray
    F_1: np.ndarray
    G_1: np.ndarray
    H_1: np.ndarray
    M_1: np.ndarray
    Q_1: np.ndarray
    R_1: np.ndarray
    Fbar_alpha: np.ndarray
    Gbar_alpha: np.ndarray
    Mbar_alpha: np.ndarray
    Qbar_alpha: np.ndarray
    Fbar_beta: np.ndarray
    Gbar_beta: np.ndarray
    Mbar_beta: np.ndarray
    Qbar_beta: np.ndarray
    Fbar_1: np.ndarray
    Gbar_1: np.ndarray
    Hbar_1: np.ndarray
    Mbar_1: np.ndarray
    Qbar_1: np.ndarray
    mean_eta_alpha: np.ndarray
    mean_eta_beta: np.ndarray
    mean_eta_1: np.ndarray
    cov_eta_1: np.ndarray = None
    cov_eta_alpha: np.ndarray = None
    cov_eta_beta: np.ndarray = None

    def __post_init__(self):
        T = float(self.T)
        if not np.isfinite(T) or T <= 0:
            raise InvalidInputError("horizon T must be positive and finite")
        object.__setattr__(self, "T", T)
        for name in THETA_SLOTS + ("mean_eta_alpha", "mean_eta_beta", "mean_eta_1"):
            object.__setattr__(self, name, _coerce(name, getattr(self, name)))
        covs = {"cov_eta_1": len(self.mean_eta_1), "cov_eta_alpha": len(self.mean_eta_alpha),
                "cov_eta_beta": len(self.mean_eta_beta)}
        for name, n in covs.items():
            value = getattr(self, name)
            object.__setattr__(self, name, _coerce(name, np.zeros((n, n)) if value is None else value))
        self._check_shapes()

    def _check_shapes(self):
        dims = {
            "na": self.A_alpha.shape[0], "nb": self.B_beta.shape[0], "n1": self.A_1.shape[0],
            "ma": self.D_alpha.shape[1], "mb": self.D_beta.shape[1], "m1": self.E_1.shape[1],
            "da": self.sigma_alpha.shape[1], "db": self.sigma_beta.shape[1], "d1": self.sigma_1.shape[1],
        }
        for name, spec in _SHAPES.items():
            want = tuple(dims[s] for s in spec)
            got = getattr(self, name).shape
            if got != want:
                raise InvalidInputError(f"{name} has shape {got}, expected {want}")

    @property
    def dims(self) -> dict:
        return {
            "n_alpha": self.A_alpha.shape[0], "n_beta": self.B_beta.shape[0], "n_1": self.A_1.shape[0],
            "m_alpha": self.D_alpha.shape[1], "m_beta": self.D_beta.shape[1], "m_1": self.E_1.shape[1],
            "d_alpha": self.sigma_alpha.shape[1], "d_beta": self.sigma_beta.shape[1],
            "d_1": self.sigma_1.shape[1],
        }

    @property
    def is_scalar(self) -> bool:
        return all(v == 1 for v in self.dims.values())

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def theta_vector(self) -> np.ndarray:
        """All slot entries flattened in slot order."""
        return np.concatenate([getattr(self, n).ravel() for n in THETA_SLOTS])

    def to_dict(self) -> dict:
        out = {"T": self.T}
        for name in THETA_SLOTS + MOMENT_KEYS:
            out[name] = getattr(self, name).tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        unknown = set(data) - JSON_KEYS
        if unknown:
            raise InvalidInputError(f"unknown model keys: {sorted(unknown)}")
        required = set(THETA_SLOTS) | {"T", "mean_eta_alpha", "mean_eta_beta", "mean_eta_1"}
        missing = required - set(data)
        if missing:
            raise InvalidInputError(f"missing model keys: {sorted(missing)}")
        return cls(**data)


def load_model(path) -> ModelParams:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise InvalidInputError(f"{path}: expected a JSON object")
    return ModelParams.from_dict(data)


def save_model(p: ModelParams, path) -> None:
    FsPath(path).write_text(json.dumps(p.to_dict(), indent=2) + "\n", encoding="utf-8")


def _is_spd(m, strict: bool = True, tol: float = 0.0) -> bool:
    if not np.allclose(m, m.T, atol=1e-12, rtol=0):
        return False
    lam = lambda_min_sym(m)
    return lam > tol if strict else lam >= -1e-12


def validate(p: ModelParams) -> list[str]:
    """Return every violated standing assumption; an empty list means valid."""
    out = []
    for name in ("Q_alpha", "Q_beta", "Q_1", "R_alpha", "R_beta", "R_1"):
        if not _is_spd(getattr(p, name)):
            out.append(f"{name} not positive definite")
    for name in ("Qbar_alpha", "Qbar_beta", "Qbar_1"):
        if not _is_spd(getattr(p, name), strict=False):
            out.append(f"{name} not positive semi-definite")
    for name in ("D_alpha", "D_beta", "E_1"):
        m = getattr(p, name)
        if np.linalg.matrix_rank(m) < m.shape[1]:
            out.append(f"{name} not full column rank")
    for name in ("cov_eta_1", "cov_eta_alpha", "cov_eta_beta"):
        if not _is_spd(getattr(p, name), strict=False):
            out.append(f"{name} not positive semi-definite")
    return out


def require_valid(p: ModelParams) -> None:
    problems = validate(p)
    if problems:
        raise InvalidInputError("invalid model: " + "; ".join(problems))


# Free inputs of the symmetric base family and their defaults.
BASE_INPUTS = {
    "T": None, "A_1": None, "B_1": None, "C_1": None, "E_1": None, "F_1": 0.0, "G_1": 0.0,
    "Q_1": None, "R_1": None, "Fbar_1": 0.0, "Gbar_1": 0.0, "Qbar_1": 0.0,
    "A_ab": None, "B_alpha": None, "D_ab": None, "G_alpha": 0.0, "Q_alpha": None, "R_alpha": None,
    "Gbar_alpha": 0.0, "Qbar_alpha": 0.0,
    "sigma_alpha": 0.0, "sigma_beta": 0.0, "sigma_1": 0.0,
    "mean_eta_alpha": 0.0, "mean_eta_beta": 0.0, "mean_eta_1": 0.0, "cov_eta_1": 0.0,
}


def make_symmetric_base(inputs: dict, k: float) -> ModelParams:
    """Build a scalar model of the symmetric base family with scale factor ``k``.

    ``inputs`` supplies the free coefficients listed in :data:`BASE_INPUTS`;
    ``A_ab`` is the common self-coupling ``A_alpha = B_beta`` and ``D_ab``
    the common control gain.  Every other coefficient follows from ``k``.
    """
    k = float(k)
    if not np.isfinite(k) or k <= 0:
        raise InvalidInputError("scale factor k must be positive")
    unknown = set(inputs) - set(BASE_INPUTS)
    if unknown:
        raise InvalidInputError(f"unknown base-model inputs: {sorted(unknown)}")
    v = dict(BASE_INPUTS)
    v.update(inputs)
    missing = [name for name, val in v.items() if val is None]
    if missing:
        raise InvalidInputError(f"missing base-model inputs: {missing}")
    v = {name: float(val) for name, val in v.items()}
    zero = 0.0
    return ModelParams(
        T=v["T"],
        A_alpha=v["A_ab"], B_alpha=v["B_alpha"], C_alpha=zero, D_alpha=v["D_ab"], sigma_alpha=v["sigma_alpha"],
        A_beta=v["B_alpha"] / k**2, B_beta=v["A_ab"], C_beta=zero, D_beta=v["D_ab"], sigma_beta=v["sigma_beta"],
        A_1=v["A_1"], B_1=v["B_1"], C_1=v["C_1"], D_1=k * v["C_1"], E_1=v["E_1"], sigma_1=v["sigma_1"],
        F_alpha=zero, G_alpha=v["G_alpha"], M_alpha=zero, Q_alpha=v["Q_alpha"], R_alpha=v["R_alpha"],
        F_beta=zero, G_beta=v["G_alpha"] / k**2, M_beta=zero, Q_beta=k**2 * v["Q_alpha"],
        R_beta=k**2 * v["R_alpha"],
        F_1=v["F_1"], G_1=v["G_1"], H_1=k * v["G_1"], M_1=zero, Q_1=v["Q_1"], R_1=v["R_1"],
        Fbar_alpha=zero, Gbar_alpha=v["Gbar_alpha"], Mbar_alpha=zero, Qbar_alpha=v["Qbar_alpha"],
        Fbar_beta=zero, Gbar_beta=v["Gbar_alpha"] / k**2, Mbar_beta=zero, Qbar_beta=k**2 * v["Qbar_alpha"],
        Fbar_1=v["Fbar_1"], Gbar_1=v["Gbar_1"], Hbar_1=k * v["Gbar_1"], Mbar_1=zero, Qbar_1=v["Qbar_1"],
        mean_eta_alpha=v["mean_eta_alpha"], mean_eta_beta=v["mean_eta_beta"], mean_eta_1=v["mean_eta_1"],
        cov_eta_1=v["cov_eta_1"],
    )


def base_scale_factor(p: ModelParams, tol: float = 1e-12) -> float | None:
    """Return ``k`` if ``p`` belongs to the symmetric base family, else ``None``."""
    if not p.is_scalar:
        return None
    s = {name: float(getattr(p, name).ravel()[0]) for name in THETA_SLOTS}

    def close(a, b):
        return abs(a - b) <= tol * max(1.0, abs(a), abs(b))

    zeros = ("C_alpha", "C_beta", "F_alpha", "F_beta", "Fbar_alpha", "Fbar_beta",
             "M_1", "M_alpha", "M_beta", "Mbar_1", "Mbar_alpha", "Mbar_beta")
    if any(not close(s[n], 0.0) for n in zeros):
        return None
    if s["Q_alpha"] <= 0 or s["Q_beta"] <= 0:
        return None
    k = float(np.sqrt(s["Q_beta"] / s["Q_alpha"]))
    checks = [
        (s["A_alpha"], s["B_beta"]),
        (s["B_alpha"], k**2 * s["A_beta"]),
        (s["D_alpha"], s["D_beta"]),
        (s["G_alpha"], k**2 * s["G_beta"]),
        (s["R_alpha"], s["R_beta"] / k**2),
        (s["C_1"], s["D_1"] / k),
        (s["H_1"], k * s["G_1"]),
        (s["Gbar_alpha"], k**2 * s["Gbar_beta"]),
        (s["Qbar_alpha"], s["Qbar_beta"] / k**2),
        (s["Hbar_1"], k * s["Gbar_1"]),
    ]
    if all(close(a, b) for a, b in checks):
        return k
    return None


def require_base(p: ModelParams, unit: bool = False) -> float:
    k = base_scale_factor(p, tol=1e-9)
    if k is None:
        raise InvalidInputError("model is not in the symmetric base family")
    if unit and abs(k - 1.0) > 1e-9:
        raise InvalidInputError(f"model has scale factor k = {k}; rescale to k = 1 first")
    return k


def rescale_beta(p: ModelParams, k: float) -> ModelParams:
    """Change variables to ``x_beta -> k x_beta`` and ``v_beta -> k v_beta``.

    All three cost functionals keep their values, so optimal costs are unchanged.
    """
    k = float(k)
    return p.replace(
        B_alpha=p.B_alpha / k, A_beta=k * p.A_beta, C_beta=k * p.C_beta, sigma_beta=k * p.sigma_beta,
        D_1=p.D_1 / k, H_1=p.H_1 / k, Hbar_1=p.Hbar_1 / k,
        G_alpha=p.G_alpha / k, Gbar_alpha=p.Gbar_alpha / k,
        F_beta=k * p.F_beta, G_beta=k * p.G_beta, M_beta=k * p.M_beta,
        Q_beta=p.Q_beta / k**2, R_beta=p.R_beta / k**2,
        Fbar_beta=k * p.Fbar_beta, Gbar_beta=k * p.Gbar_beta, Mbar_beta=k * p.Mbar_beta,
        Qbar_beta=p.Qbar_beta / k**2,
        mean_eta_beta=k * p.mean_eta_beta, cov_eta_beta=k**2 * p.cov_eta_beta,
    )


def reduce_to_unit_k(p: ModelParams) -> ModelParams:
    """Rescale a base-family model with factor ``k`` to the equivalent ``k = 1`` model."""
    k = require_base(p)
    if abs(k - 1.0) <= 1e-15:
        return p
    return rescale_beta(p, k)


def _initial_distance_sq(p1: ModelParams, p2: ModelParams) -> float:
    mean = np.concatenate([p1.mean_eta_alpha - p2.mean_eta_alpha, p1.mean_eta_beta - p2.mean_eta_beta,
                           p1.mean_eta_1 - p2.mean_eta_1])
    out = float(mean @ mean)
    # smallest E|eta1 - eta2|^2 over couplings of the two Gaussian laws
    for name in ("cov_eta_alpha", "cov_eta_beta", "cov_eta_1"):
        c1, c2 = getattr(p1, name), getattr(p2, name)
        if np.array_equal(c1, c2):
            continue
        r1 = scipy.linalg.sqrtm(c1)
        cross = scipy.linalg.sqrtm(r1 @ c2 @ r1)
        out += float(np.real(np.trace(c1 + c2 - 2.0 * cross)))
    return out


def model_distance(p1: ModelParams, p2: ModelParams) -> float:
    """Max of the slot-wise sup-norm distance and the initial-state mean-square distance."""
    if p1.dims != p2.dims:
        raise InvalidInputError("models have different dimensions")
    theta = float(np.max(np.abs(p1.theta_vector() - p2.theta_vector()), initial=0.0))
    return max(theta, _initial_distance_sq(p1, p2))
