"""Block matrices of the coupled forward-backward systems and the follower cost weights."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .matrixops import InvalidInputError
from .model import GameKind, ModelParams, require_base, require_valid

STATE_BLOCKS = ("x_alpha", "x_beta", "z", "s_alpha", "s_beta")
ADJOINT_BLOCKS = ("p_alpha", "p_beta", "zeta", "r_alpha", "r_beta")


@dataclass(frozen=True)
class BlockLayout:
    """Index ranges of the five blocks of the stacked state and adjoint vectors."""

    sizes: tuple

    @classmethod
    def from_params(cls, p: ModelParams) -> "BlockLayout":
        n1 = p.A_1.shape[0]
        return cls((p.A_alpha.shape[0], p.B_beta.shape[0], n1, n1, n1))

    @property
    def size(self) -> int:
        return int(sum(self.sizes))

    @property
    def offsets(self) -> tuple:
        return tuple(int(v) for v in np.concatenate([[0], np.cumsum(self.sizes)]))

    def slice(self, block) -> slice:
        i = block if isinstance(block, int) else _block_index(block)
        off = self.offsets
        return slice(off[i], off[i + 1])

    def split(self, v) -> dict:
        """Split a stacked vector into its named state blocks."""
        v = np.asarray(v)
        return {name: v[self.slice(i)] for i, name in enumerate(STATE_BLOCKS)}

    def split_adjoint(self, v) -> dict:
        v = np.asarray(v)
        return {name: v[self.slice(i)] for i, name in enumerate(ADJOINT_BLOCKS)}

    def stack(self, parts) -> np.ndarray:
        """Inverse of :meth:`split` (accepts either naming scheme or a sequence)."""
        if isinstance(parts, dict):
            names = STATE_BLOCKS if STATE_BLOCKS[0] in parts else ADJOINT_BLOCKS
            parts = [parts[n] for n in names]
        out = [np.atleast_1d(np.asarray(x, dtype=float)) for x in parts]
        for x, n in zip(out, self.sizes):
            if x.shape != (n,):
                raise InvalidInputError(f"block of shape {x.shape} does not fit size {n}")
        return np.concatenate(out)


def _block_index(name: str) -> int:
    if name in STATE_BLOCKS:
        return STATE_BLOCKS.index(name)
    if name in ADJOINT_BLOCKS:
        return ADJOINT_BLOCKS.index(name)
    raise InvalidInputError(f"unknown block {name!r}")


def _blocks(rows, sizes) -> np.ndarray:
    """Assemble a square matrix from a 5x5 grid of blocks, ``0`` meaning a zero block."""
    out = np.zeros((sum(sizes), sum(sizes)))
    off = np.concatenate([[0], np.cumsum(sizes)])
    for i, row in enumerate(rows):
        for j, blk in enumerate(row):
            if isinstance(blk, int) and blk == 0:
                continue
            out[off[i]:off[i + 1], off[j]:off[j + 1]] = blk
    return out


def _spd_inverse(r: np.ndarray) -> np.ndarray:
    c = scipy.linalg.cho_factor(r)
    return scipy.linalg.cho_solve(c, np.eye(r.shape[0]))


@dataclass(frozen=True, eq=False)
class AssembledSystem:
    """Coefficients of the stacked forward-backward system for one game kind.

    The state ``x`` stacks both leaders, the mean field and two auxiliary
    follower-coupling states; the adjoint ``p`` stacks the matching
    co-states.  The adjoint is ``p = Gamma x + g`` with ``Gamma`` solving
    ``-Gamma' = Gamma A + C Gamma - Gamma B Gamma + D``, ``Gamma(T) = E``.
    """

    game: GameKind
    layout: BlockLayout
    T: float
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    E: np.ndarray
    M: np.ndarray
    h: np.ndarray
    Sigma: np.ndarray
    x0_mean: np.ndarray
    x0_cov: np.ndarray

    @property
    def size(self) -> int:
        return self.layout.size

    def to_json(self) -> str:
        """Debug dump of every block, suitable for golden-file comparisons."""
        data = {"game": self.game.value, "T": self.T, "layout": list(self.layout.sizes)}
        for name in ("A", "B", "C", "D", "E", "M", "h", "Sigma", "x0_mean", "x0_cov"):
            data[name] = getattr(self, name).tolist()
        return json.dumps(data, indent=2)


def _adjoint_weights(Q_a, G_a, F_a, Q_b, G_b, F_b, Q_1, G_1, H_1, F_1, sizes):
    """Quadratic weight block shared by the running (plain) and terminal (barred) data."""
    n1 = sizes[2]
    I = np.eye(n1)
    QaFa, QbFb, Q1F = Q_a @ F_a, Q_b @ F_b, Q_1 @ (I - F_1)
    return _blocks([
        [Q_a, -Q_a @ G_a, -QaFa, -(Q_1 @ G_1).T, 0],
        [-Q_b @ G_b, Q_b, -QbFb, 0, -(Q_1 @ H_1).T],
        [-Q_1 @ G_1, -Q_1 @ H_1, Q1F, 0, 0],
        [-QaFa.T, QaFa.T @ G_a, QaFa.T @ F_a, Q1F.T, 0],
        [QbFb.T @ G_b, -QbFb.T, QbFb.T @ F_b, 0, Q1F.T],
    ], sizes)


def _cooperative_correction(Q_a, G_a, F_a, Q_b, G_b, F_b, Q_1, G_1, H_1, sizes):
    """Extra weight picked up when each leader also minimizes the other's cost."""
    QbGb, QaGa = Q_b @ G_b, Q_a @ G_a
    return _blocks([
        [QbGb.T @ G_b, -QbGb.T, QbGb.T @ F_b, 0, -(Q_1 @ G_1).T],
        [-QaGa.T, QaGa.T @ G_a, QaGa.T @ F_a, -(Q_1 @ H_1).T, 0],
        [0, 0, 0, 0, 0],
        [0, 0, 0, 0, 0],
        [0, 0, 0, 0, 0],
    ], sizes)


def _affine_weights(Q_a, F_a, M_a, Q_b, F_b, M_b, Q_1, M_1):
    return [-Q_a @ M_a, -Q_b @ M_b, -Q_1 @ M_1, (Q_a @ F_a).T @ M_a, (Q_b @ F_b).T @ M_b]


def assemble(p: ModelParams, game) -> AssembledSystem:
    """Build the block system for the Nash or Pareto game between the leaders.

    Parameters
    ----------
    p : ModelParams
        A valid model.
    game : GameKind or str
        ``"nash"`` or ``"pareto"``.

    Returns
    -------
    AssembledSystem
    """
    game = GameKind.parse(game)
    require_valid(p)
    lay = BlockLayout.from_params(p)
    sz = lay.sizes
    n1 = p.A_1.shape[0]
    A1B1 = p.A_1 + p.B_1

    A = _blocks([
        [p.A_alpha, p.B_alpha, p.C_alpha, 0, 0],
        [p.A_beta, p.B_beta, p.C_beta, 0, 0],
        [p.C_1, p.D_1, A1B1, 0, 0],
        [0, 0, 0, p.A_1, 0],
        [0, 0, 0, 0, p.A_1],
    ], sz)
    S1 = p.E_1 @ _spd_inverse(p.R_1) @ p.E_1.T
    B = scipy.linalg.block_diag(
        p.D_alpha @ _spd_inverse(p.R_alpha) @ p.D_alpha.T,
        p.D_beta @ _spd_inverse(p.R_beta) @ p.D_beta.T,
        S1, S1, S1,
    )
    B = 0.5 * (B + B.T)

    running = (p.Q_alpha, p.G_alpha, p.F_alpha, p.Q_beta, p.G_beta, p.F_beta, p.Q_1, p.G_1, p.H_1)
    terminal = (p.Qbar_alpha, p.Gbar_alpha, p.Fbar_alpha, p.Qbar_beta, p.Gbar_beta, p.Fbar_beta,
                p.Qbar_1, p.Gbar_1, p.Hbar_1)
    D = _adjoint_weights(*running, p.F_1, sz)
    E = _adjoint_weights(*terminal, p.Fbar_1, sz)
    M = _affine_weights(p.Q_alpha, p.F_alpha, p.M_alpha, p.Q_beta, p.F_beta, p.M_beta, p.Q_1, p.M_1)
    h = _affine_weights(p.Qbar_alpha, p.Fbar_alpha, p.Mbar_alpha, p.Qbar_beta, p.Fbar_beta, p.Mbar_beta,
                        p.Qbar_1, p.Mbar_1)

    if game is GameKind.NASH:
        C = _blocks([
            [p.A_alpha.T, 0, 0, p.C_1.T, 0],
            [0, p.B_beta.T, 0, 0, p.D_1.T],
            [0, 0, p.A_1.T, 0, 0],
            [p.C_alpha.T, 0, 0, A1B1.T, 0],
            [0, p.C_beta.T, 0, 0, A1B1.T],
        ], sz)
    else:
        C = _blocks([
            [p.A_alpha.T, p.A_beta.T, 0, p.C_1.T, p.C_1.T],
            [p.B_alpha.T, p.B_beta.T, 0, p.D_1.T, p.D_1.T],
            [0, 0, p.A_1.T, 0, 0],
            [p.C_alpha.T, 0, 0, A1B1.T, 0],
            [0, p.C_beta.T, 0, 0, A1B1.T],
        ], sz)
        D = D + _cooperative_correction(*running, sz)
        E = E + _cooperative_correction(*terminal, sz)
        M[0] = M[0] + (p.Q_beta @ p.G_beta).T @ p.M_beta
        M[1] = M[1] + (p.Q_alpha @ p.G_alpha).T @ p.M_alpha
        h[0] = h[0] + (p.Qbar_beta @ p.Gbar_beta).T @ p.Mbar_beta
        h[1] = h[1] + (p.Qbar_alpha @ p.Gbar_alpha).T @ p.Mbar_alpha

    da, db = p.sigma_alpha.shape[1], p.sigma_beta.shape[1]
    Sigma = np.zeros((lay.size, da + db))
    Sigma[lay.slice(0), :da] = p.sigma_alpha
    Sigma[lay.slice(1), da:] = p.sigma_beta

    x0_mean = lay.stack([p.mean_eta_alpha, p.mean_eta_beta, p.mean_eta_1, np.zeros(n1), np.zeros(n1)])
    # the mean-field block starts at E[eta_1] deterministically
    x0_cov = scipy.linalg.block_diag(p.cov_eta_alpha, p.cov_eta_beta, np.zeros((3 * n1, 3 * n1)))

    arrays = dict(A=A, B=B, C=C, D=D, E=E, M=np.concatenate(M), h=np.concatenate(h), Sigma=Sigma,
                  x0_mean=x0_mean, x0_cov=x0_cov)
    for a in arrays.values():
        a.setflags(write=False)
    return AssembledSystem(game=game, layout=lay, T=p.T, **arrays)


@dataclass(frozen=True)
class ReducedSystem:
    """Three-by-three system on (x_alpha, x_beta, z) for a unit-scale base model.

    The scalar fields are the common leader coefficients: ``a`` is the
    self-coupling, ``b`` the cross-coupling, ``s = D^2/R`` and
    ``s1 = E_1^2/R_1`` the control gains and ``A_tilde = A_1 + a + b``.
    """

    game: GameKind
    A_b0: np.ndarray
    B_b0: np.ndarray
    C_b0: np.ndarray
    D_b0: np.ndarray
    E_b0: np.ndarray
    a: float
    b: float
    d: float
    Q: float
    R: float
    G: float
    Gbar: float
    Qbar: float
    s: float
    s1: float
    A_tilde: float


def _scalar(m) -> float:
    return float(np.asarray(m).ravel()[0])


def assemble_reduced(p: ModelParams, game) -> ReducedSystem:
    """Build the reduced 3x3 system of a base-family model with unit scale factor."""
    game = GameKind.parse(game)
    require_base(p, unit=True)
    require_valid(p)
    v = {n: _scalar(getattr(p, n)) for n in (
        "A_alpha", "B_alpha", "D_alpha", "Q_alpha", "R_alpha", "G_alpha", "Gbar_alpha", "Qbar_alpha",
        "A_1", "B_1", "C_1", "E_1", "R_1", "Q_1", "F_1", "G_1", "Qbar_1", "Fbar_1", "Gbar_1")}
    a, b, c = v["A_alpha"], v["B_alpha"], v["C_1"]
    s = v["D_alpha"] ** 2 / v["R_alpha"]
    s1 = v["E_1"] ** 2 / v["R_1"]
    Q, G, Qb, Gb = v["Q_alpha"], v["G_alpha"], v["Qbar_alpha"], v["Gbar_alpha"]
    A1, B1 = v["A_1"], v["B_1"]

    A_b0 = np.array([[a, b, 0.0], [b, a, 0.0], [c, c, A1 + B1]])
    B_b0 = np.diag([s, s, s1])
    if game is GameKind.NASH:
        C_b0 = np.array([[a, 0.0, 0.0], [0.0, a, 0.0], [0.0, 0.0, A1]])
        lead, lead_bar = [[Q, -Q * G], [-Q * G, Q]], [[Qb, -Qb * Gb], [-Qb * Gb, Qb]]
    else:
        C_b0 = np.array([[a, b, 0.0], [b, a, 0.0], [0.0, 0.0, A1]])
        lead = [[Q * (1 + G * G), -2 * Q * G], [-2 * Q * G, Q * (1 + G * G)]]
        lead_bar = [[Qb * (1 + Gb * Gb), -2 * Qb * Gb], [-2 * Qb * Gb, Qb * (1 + Gb * Gb)]]

    def weight(block, Q1, F1, G1):
        out = np.zeros((3, 3))
        out[:2, :2] = block
        out[2] = [-Q1 * G1, -Q1 * G1, Q1 * (1 - F1)]
        return out

    return ReducedSystem(
        game=game, A_b0=A_b0, B_b0=B_b0, C_b0=C_b0,
        D_b0=weight(lead, v["Q_1"], v["F_1"], v["G_1"]),
        E_b0=weight(lead_bar, v["Qbar_1"], v["Fbar_1"], v["Gbar_1"]),
        a=a, b=b, d=v["D_alpha"], Q=Q, R=v["R_alpha"], G=G, Gbar=Gb, Qbar=Qb,
        s=s, s1=s1, A_tilde=A1 + a + b,
    )


@dataclass(frozen=True, eq=False)
class CostWeights:
    """Weights of the follower's cost written as a quadratic form in the stacked state."""

    q: np.ndarray
    qbar: np.ndarray
    i3: np.ndarray
    Q_bold: np.ndarray
    Qbar_bold: np.ndarray
    S1: np.ndarray
    # affine-target terms: q Q1 M1, qbar Qbar1 Mbar1, M1' Q1 M1, Mbar1' Qbar1 Mbar1
    qQM: np.ndarray
    qbarQM: np.ndarray
    MQM: float
    MQMbar: float

    def R_of_t(self, gamma: np.ndarray) -> np.ndarray:
        """Running weight induced by the follower's own feedback on the mean field."""
        row = self.i3.T @ gamma
        return row.T @ self.S1 @ row


def cost_weights(p: ModelParams) -> CostWeights:
    """Stacking matrices and quadratic weights of the follower's cost."""
    require_valid(p)
    lay = BlockLayout.from_params(p)
    n1 = p.A_1.shape[0]
    I = np.eye(n1)

    def stack(G, H, F):
        return np.vstack([-G.T, -H.T, (I - F).T, np.zeros((n1, n1)), np.zeros((n1, n1))])

    q = stack(p.G_1, p.H_1, p.F_1)
    qbar = stack(p.Gbar_1, p.Hbar_1, p.Fbar_1)
    i3 = np.zeros((lay.size, n1))
    i3[lay.slice(2)] = I
    Q_bold = q @ p.Q_1 @ q.T
    Qbar_bold = qbar @ p.Qbar_1 @ qbar.T
    S1 = p.E_1 @ _spd_inverse(p.R_1) @ p.E_1.T
    return CostWeights(q=q, qbar=qbar, i3=i3, Q_bold=0.5 * (Q_bold + Q_bold.T),
                       Qbar_bold=0.5 * (Qbar_bold + Qbar_bold.T), S1=0.5 * (S1 + S1.T),
                       qQM=q @ p.Q_1 @ p.M_1, qbarQM=qbar @ p.Qbar_1 @ p.Mbar_1,
                       MQM=float(p.M_1 @ p.Q_1 @ p.M_1), MQMbar=float(p.Mbar_1 @ p.Qbar_1 @ p.Mbar_1))
