import numpy as np
import pytest

from occo.model import ModelDims

ACCEPTANCE: list[tuple[str, bool, str]] = []


def record(name: str, ok: bool, detail: str) -> None:
    """Remember an acceptance verdict; all of them are printed at the end of the run."""
    ACCEPTANCE.append((name, bool(ok), detail))
    print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


TOY_DIMS = ModelDims(point_mlp_widths=(8, 8), embed_dim=8, coarse_widths=(16,), n_coarse=8,
                     grid_side=2, fold_mlp_widths=(8,))


@pytest.fixture
def toy_dims():
    return TOY_DIMS


def random_cloud(rng, n):
    """Mix of volume and surface samples so both dense and sparse hulls show up."""
    kind = rng.integers(3)
    if kind == 0:
        return rng.uniform(-1, 1, (n, 3))
    if kind == 1:
        p = rng.normal(size=(n, 3))
        p /= np.linalg.norm(p, axis=1, keepdims=True)
        return p * rng.uniform(0.4, 1.0, 3)
    return rng.normal(scale=0.4, size=(n, 3)).clip(-1, 1)
