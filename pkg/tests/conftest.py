import numpy as np
import pytest

from unbiased_mvsde import Model, set_backend


def linear_model(rate=1.0, sigma=0.0, dim=1, kernel=None):
    """dX = -rate X dt + sigma dW with an optional kernel plugged into the drift."""

    def drift(x, s):
        return -rate * x + (0.0 if kernel is None else s[..., None])

    def diffusion(x, s):
        return np.broadcast_to(sigma * np.eye(dim), np.shape(x)[:-1] + (dim, dim))

    kw = {} if kernel is None else {"kernel1": kernel}
    return Model(name="linear", dim=dim, drift=drift, diffusion=diffusion, x0=np.zeros(dim), **kw)


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    set_backend(request.param)
    yield request.param
    set_backend(None)


CW_SEED = 20240601
CW_M = 10 ** 4


@pytest.fixture(scope="session")
def cw_replicates():
    """The Curie-Weiss replicate pool at default settings (shared by several tests)."""
    from unbiased_mvsde import EstimatorConfig, curie_weiss, run_replicates

    return run_replicates(curie_weiss(), EstimatorConfig(), CW_M, CW_SEED)


def pytest_terminal_summary(terminalreporter):
    acc = terminalreporter.config.pluginmanager.get_plugin("test_acceptance")
    results = getattr(acc, "RESULTS", None)
    if not results:
        import sys

        results = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
