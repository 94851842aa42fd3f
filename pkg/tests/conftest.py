import numpy as np
import pytest

from seetrack.model import ModelSpec, chain_blocks, init_float_model, quantize_model
from seetrack.sparse import SparseTensor, from_dense


def random_sparse(rng, h, w, c, density, integer=True, lo=-128, hi=128):
    """Random tensor with exactly round(density * h * w) active sites (at least one)."""
    n = max(1, int(round(density * h * w)))
    keys = np.sort(rng.choice(h * w, size=n, replace=False))
    if integer:
        feats = rng.integers(lo, hi, size=(n, c)).astype(np.int8)
    else:
        feats = rng.standard_normal((n, c))
    return SparseTensor.from_keys((h, w, c), keys, feats)


def random_counts(rng, h, w, c, density, max_count=4):
    """Voxel-like input: non-negative int32 counts, every active site has a nonzero channel."""
    d = np.zeros((h, w, c), np.int32)
    m = rng.random((h, w)) < density
    vals = rng.integers(0, max_count + 1, (int(m.sum()), c))
    vals[:, 0] = np.maximum(vals[:, 0], 1)
    d[m] = vals
    return from_dense(d)


def small_spec(h=32, w=32, c_in=3, rows=((4, 16, 1), (4, 24, 2)), stem=16, gru=8):
    return ModelSpec(c_in, stem, chain_blocks(stem, rows), gru, h, w)


def quantized_pair(rng, spec, n_calib=6, density=0.1):
    fm = init_float_model(spec, rng)
    calib = [random_counts(rng, spec.height, spec.width, spec.input_channels, density) for _ in range(n_calib)]
    return fm, quantize_model(fm, calib), calib


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting: one PASS/FAIL line per criterion in the terminal summary

_CRITERIA: dict[int, list[tuple[str, str]]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _CRITERIA.setdefault(mark.args[0], []).append((item.name, rep.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        checks = _CRITERIA[n]
        bad = [name for name, o in checks if o != "passed"]
        status = "PASS" if not bad else "FAIL"
        detail = f"{len(checks)} checks" + (f"; failing: {', '.join(bad)}" if bad else "")
        terminalreporter.write_line(f"criterion {n}: {status} ({detail})")
