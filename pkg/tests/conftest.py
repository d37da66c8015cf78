import numpy as np
import pytest

from mfstackelberg.fixtures import crossing_ia, crossing_ib, perturbation_base
from mfstackelberg.model import ModelParams, make_symmetric_base

ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ia():
    return crossing_ia()


@pytest.fixture(scope="session")
def ib():
    return crossing_ib()


@pytest.fixture(scope="session")
def pert_base():
    return perturbation_base()


def random_model(rng: np.random.Generator, na=1, nb=1, n1=1, affine=True, noise=True) -> ModelParams:
    """Small random valid model with moderate couplings."""

    def m(r, c, scale=0.3):
        return rng.uniform(-scale, scale, (r, c))

    def spd(n, lo=0.5):
        a = rng.uniform(-0.5, 0.5, (n, n))
        return a @ a.T + lo * np.eye(n)

    def vec(n, scale=0.5):
        return rng.uniform(-scale, scale, n) if affine else np.zeros(n)

    return ModelParams(
        T=float(rng.uniform(0.5, 1.5)),
        A_alpha=m(na, na) - np.eye(na), B_alpha=m(na, nb), C_alpha=m(na, n1), D_alpha=np.eye(na),
        sigma_alpha=0.2 * np.eye(na) if noise else np.zeros((na, na)),
        A_beta=m(nb, na), B_beta=m(nb, nb) - np.eye(nb), C_beta=m(nb, n1), D_beta=np.eye(nb),
        sigma_beta=0.2 * np.eye(nb) if noise else np.zeros((nb, nb)),
        A_1=m(n1, n1) - np.eye(n1), B_1=m(n1, n1), C_1=m(n1, na), D_1=m(n1, nb), E_1=np.eye(n1),
        sigma_1=0.2 * np.eye(n1) if noise else np.zeros((n1, n1)),
        F_alpha=m(na, n1), G_alpha=m(na, nb), M_alpha=vec(na), Q_alpha=spd(na), R_alpha=spd(na),
        F_beta=m(nb, n1), G_beta=m(nb, na), M_beta=vec(nb), Q_beta=spd(nb), R_beta=spd(nb),
        F_1=m(n1, n1), G_1=m(n1, na), H_1=m(n1, nb), M_1=vec(n1), Q_1=spd(n1), R_1=spd(n1),
        Fbar_alpha=m(na, n1), Gbar_alpha=m(na, nb), Mbar_alpha=vec(na), Qbar_alpha=spd(na, 0.1),
        Fbar_beta=m(nb, n1), Gbar_beta=m(nb, na), Mbar_beta=vec(nb), Qbar_beta=spd(nb, 0.1),
        Fbar_1=m(n1, n1), Gbar_1=m(n1, na), Hbar_1=m(n1, nb), Mbar_1=vec(n1), Qbar_1=spd(n1, 0.1),
        mean_eta_alpha=rng.uniform(-1, 1, na), mean_eta_beta=rng.uniform(-1, 1, nb),
        mean_eta_1=rng.uniform(-1, 1, n1), cov_eta_1=0.1 * np.eye(n1) if noise else np.zeros((n1, n1)),
    )


def random_base_inputs(rng: np.random.Generator, case: int) -> dict:
    """Inputs of a unit-scale base model with the sign pattern of the given comparison regime."""
    lead = 1 if case in (1, 2) else -1
    fol = 1 if case in (1, 3) else -1

    def u(a, b):
        return float(rng.uniform(a, b))

    return dict(
        T=u(0.5, 2), A_1=u(-1.5, -0.5), B_1=u(0, 0.3), C_1=fol * u(0.05, 0.5), E_1=1.0, F_1=u(0, 0.3),
        G_1=-fol * u(0.1, 0.6), Q_1=u(0.5, 2), R_1=u(0.5, 2), Fbar_1=u(0, 0.3), Gbar_1=-fol * u(0, 0.3),
        Qbar_1=u(0.1, 1), sigma_1=0.1, A_ab=u(-1.5, -0.5), B_alpha=lead * u(0.1, 0.8), D_ab=1.0,
        G_alpha=-lead * u(0.1, 0.8), Q_alpha=u(0.5, 2), R_alpha=u(0.5, 2), Gbar_alpha=-lead * u(0.1, 0.5),
        Qbar_alpha=u(0.1, 1), sigma_alpha=0.1, sigma_beta=0.1, mean_eta_alpha=u(0.5, 3),
        mean_eta_beta=u(0.5, 3), mean_eta_1=u(-3, 3),
    )


def random_base(rng: np.random.Generator, case: int, k: float = 1.0) -> ModelParams:
    return make_symmetric_base(random_base_inputs(rng, case), k)
