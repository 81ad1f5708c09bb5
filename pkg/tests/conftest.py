import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ddbt import data, oracle
from ddbt.pipeline import Stages

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# realizations used throughout; chosen once from a scan of seeds 0-199
INFORMATIVE_SEEDS = (2, 3, 6)  # informative for every sigma up to 0.03
SWEEP_SEED = 63  # also informative at sigma = 0.05
SIGMAS = (0.002, 0.005, 0.01, 0.03, 0.05)


def make_config(sigma=0.01, seed=SWEEP_SEED, r=3, **extra):
    cfg = {
        "system": data.BUILTIN_ALIAS,
        "L": 200,
        "input": {"type": "paper"},
        "noise": {"sigma": sigma, "phi_scale": 1.35},
        "seed": seed,
        "order_r": r,
    }
    cfg.update(extra)
    return cfg


@pytest.fixture(scope="session")
def true_system():
    return oracle.builtin_true_system()


@pytest.fixture(scope="session")
def stages_cache():
    cache = {}

    def get(sigma=0.01, seed=SWEEP_SEED, r=3):
        key = (sigma, seed, r)
        if key not in cache:
            cache[key] = Stages(make_config(sigma, seed, r))
        return cache[key]

    return get


@pytest.fixture(scope="session")
def run01(stages_cache):
    """Fully evaluated stages at sigma = 0.01."""
    return stages_cache(0.01)


def random_regular_psi(rng, p, q, spread=1.0):
    """Random regular QMI matrix with a random center."""
    S = rng.standard_normal((p, p))
    S = S @ S.T + 0.1 * np.eye(p)
    N22 = rng.standard_normal((q, q))
    N22 = -(N22 @ N22.T + 0.1 * np.eye(q))
    Zc = spread * rng.standard_normal((p, q))
    return np.block([[S - Zc @ N22 @ Zc.T, -Zc @ N22], [-(Zc @ N22).T, N22]])


def random_stable(rng, n, m, p, radius=0.9):
    A = rng.standard_normal((n, n))
    rho = np.max(np.abs(np.linalg.eigvals(A)))
    A *= radius / max(rho, 1e-12)
    return data.StateSpaceModel(A, rng.standard_normal((n, m)), rng.standard_normal((p, n)), rng.standard_normal((p, m)))


# acceptance reporting -------------------------------------------------------------

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}")
