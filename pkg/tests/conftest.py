import itertools

import numpy as np
import pytest

from mstnet import tensor as tn
from mstnet.ctc import collapse


def numeric_grad(f, x: np.ndarray, h=1e-5) -> np.ndarray:
    """Central finite differences of scalar ``f`` w.r.t. array ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + h
        up = f()
        x[i] = old - h
        down = f()
        x[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def rel_err(a, b):
    """Max abs difference over the larger of the two gradient scales."""
    scale = max(np.abs(a).max(), np.abs(b).max(), 1e-12)
    return np.abs(a - b).max() / scale


def check_grads(build, shapes, seed, h=1e-5, positive=()):
    """Compare backprop with finite differences for ``build(*tensors) -> Tensor``.

    The scalar objective is ``sum(out * probe)`` with a fixed random probe so
    every output element contributes.
    """
    rng = np.random.default_rng(seed)
    arrays = []
    for i, s in enumerate(shapes):
        a = rng.normal(size=s)
        if i in positive:
            a = np.abs(a) + 0.5
        arrays.append(a)
    probe_shape = build(*[tn.Tensor(a) for a in arrays]).shape
    probe = rng.normal(size=probe_shape)

    def objective(ts):
        return tn.sum(tn.mul(build(*ts), tn.Tensor(probe)))

    ts = [tn.Tensor(a, requires_grad=True) for a in arrays]
    tn.backward(objective(ts))
    worst = 0.0
    for t, a in zip(ts, arrays):
        num = numeric_grad(lambda: objective([tn.Tensor(x) for x in arrays]).item(), a, h)
        worst = max(worst, rel_err(t.grad, num))
    return worst


def brute_force_ctc(log_probs: np.ndarray, target) -> float:
    """-ln of the summed probability of every path collapsing to ``target``."""
    t_len, n_cls = log_probs.shape
    blank = n_cls - 1
    total = -np.inf
    for path in itertools.product(range(n_cls), repeat=t_len):
        if collapse(path, blank) == tuple(target):
            total = np.logaddexp(total, sum(log_probs[t, c] for t, c in enumerate(path)))
    return -total


def brute_force_decode(log_probs: np.ndarray):
    """Most probable label sequence: every path is enumerated and its
    probability credited to its collapsed labelling, which scores every
    candidate sequence of length <= T exactly (unreached ones have p = 0)."""
    t_len, n_cls = log_probs.shape
    blank = n_cls - 1
    scores = {}
    for path in itertools.product(range(n_cls), repeat=t_len):
        lab = collapse(path, blank)
        lp = sum(log_probs[t, c] for t, c in enumerate(path))
        scores[lab] = np.logaddexp(scores.get(lab, -np.inf), lp)
    best = min(scores, key=lambda k: (-scores[k], k))
    return best, scores[best]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def edit_script_counts(ref, hyp):
    """Every (ins, del, sub) triple reachable by some edit script turning ref into hyp.

    Matches are free; a script may also substitute a word by itself, which
    never helps and is skipped.
    """
    from functools import lru_cache

    ref, hyp = tuple(ref), tuple(hyp)

    @lru_cache(maxsize=None)
    def go(i, j):
        if i == len(ref) and j == len(hyp):
            return frozenset({(0, 0, 0)})
        out = set()
        if i < len(ref) and j < len(hyp):
            same = ref[i] == hyp[j]
            for a, d, s in go(i + 1, j + 1):
                out.add((a, d, s + (0 if same else 1)))
        if j < len(hyp):
            out.update((a + 1, d, s) for a, d, s in go(i, j + 1))
        if i < len(ref):
            out.update((a, d + 1, s) for a, d, s in go(i + 1, j))
        return frozenset(out)

    return go(0, 0)


# -- acceptance summary -------------------------------------------------------

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): an acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    number, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    _ACCEPTANCE[number] = (title, "PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"{status} {number}. {title}" + (f" | {detail}" if detail else ""))
