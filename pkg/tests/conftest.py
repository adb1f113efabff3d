import numpy as np
import pytest

from mospca import grassmann
from mospca.data import center

ORTHO_TOL = 1e-8

# worst ||L'L - I||_F seen across every geodesic step taken in the session
ORTHO_WORST = {"value": 0.0, "steps": 0}


@pytest.fixture(autouse=True)
def _orthonormality_guard(monkeypatch):
    step = grassmann.geodesic_step

    def checked(L, C, t, factors=None):
        out = step(L, C, t, factors)
        err = grassmann.orthonormality_error(out)
        ORTHO_WORST["value"] = max(ORTHO_WORST["value"], err)
        ORTHO_WORST["steps"] += 1
        assert err <= ORTHO_TOL, f"iterate left the manifold: ||L'L - I|| = {err}"
        return out

    monkeypatch.setattr(grassmann, "geodesic_step", checked)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def regression_data(rng, n=40, p=6, q=2, rank=None, noise=0.1):
    X = rng.standard_normal((n, p)) @ np.diag(np.linspace(2.0, 0.5, p))
    B = rng.standard_normal((p, q))
    if rank is not None:
        B = B[:, :1] @ rng.standard_normal((1, q)) if rank == 1 else B
    Y = X @ B + noise * rng.standard_normal((n, q))
    return center(X, Y, "regression")


def classification_data(rng, n=40, p=6, q=3, scale=1.0):
    X = rng.standard_normal((n, p)) @ np.diag(np.linspace(2.0, 0.5, p))
    W = scale * rng.standard_normal((p, q))
    logits = X @ W
    P = np.exp(logits - logits.max(axis=1, keepdims=True))
    P /= P.sum(axis=1, keepdims=True)
    labels = np.array([rng.choice(q, p=row) for row in P])
    labels[:q] = np.arange(q)  # every class present
    return center(X, labels, "classification", n_classes=q)


# -- acceptance reporting ------------------------------------------------------

ACCEPTANCE = {}


@pytest.fixture
def report():
    def record(k, ok, detail):
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        line = f"criterion {k}: {status} - {detail}"
        ACCEPTANCE[k] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
