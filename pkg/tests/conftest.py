import numpy as np
import pytest

from skimattn.numerics import tensor as T


def random_boxes(rng, n, batch=None):
    """Valid normalized boxes: sorted coordinate pairs on the [0, 1000] grid."""
    shape = (n, 2, 2) if batch is None else (batch, n, 2, 2)
    a = rng.integers(0, 1001, size=shape)
    lo, hi = a.min(axis=-2), a.max(axis=-2)
    return np.stack([lo[..., 0], lo[..., 1], hi[..., 0], hi[..., 1]], axis=-1)


def tensor_params(shapes, rng, std=0.3, grad=True):
    return {k: T.Tensor(rng.normal(0, std, size=s), requires_grad=grad, name=k) for k, s in shapes.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------- acceptance report

CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    n, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    ok = rep.passed and CRITERIA.get(n, (True,))[0]
    CRITERIA[n] = (ok, title, detail if rep.passed else (detail or "see failure above"))


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, title, detail = CRITERIA[n]
        line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}: {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
