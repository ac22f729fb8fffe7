"""Shared test helpers: finite-difference oracles and naive reference ops.

The gradient oracle here is intentionally independent of the library's
backward pass: it only ever calls forward evaluations.
"""

import numpy as np
import pytest


def numeric_gradient(f, arrays, h=1e-5):
    """Central-difference gradient of the scalar ``f()`` wrt each array.

    ``f`` must read the arrays in-place (they are perturbed and restored).
    """
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            gf[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def max_rel_err(a, b):
    """Max elementwise |a - b| / max(1, |a|, |b|)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def directional_check(loss_fn, params, rng, trials=50, h=1e-5, tol=1e-4):
    """Check autodiff gradients against directional central differences.

    Computes the full analytic gradient once, then probes ``trials`` random
    unit directions in parameter space with two forward evaluations each.
    Returns the worst relative error observed.
    """
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    grads = [np.array(p.grad) for p in params]
    worst = 0.0
    for _ in range(trials):
        vs = [rng.standard_normal(p.data.shape) for p in params]
        norm = np.sqrt(sum(float((v * v).sum()) for v in vs))
        vs = [v / norm for v in vs]
        analytic = sum(float((g * v).sum()) for g, v in zip(grads, vs))
        for p, v in zip(params, vs):
            p.data += h * v
        fp = float(loss_fn().data)
        for p, v in zip(params, vs):
            p.data -= 2.0 * h * v
        fm = float(loss_fn().data)
        for p, v in zip(params, vs):
            p.data += h * v
        numeric = (fp - fm) / (2.0 * h)
        worst = max(worst, abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric)))
    return worst


def naive_conv2d(x, w, b=None, stride=(1, 1), pads=((0, 0), (0, 0))):
    """Direct triple-loop convolution oracle (NHWC, full depth mixing)."""
    sy, sx = stride
    (pt, pb), (pl, pr) = pads
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    bsz, h, wdt, cin = xp.shape
    kh, kw, _, cout = w.shape
    oh = (h - kh) // sy + 1
    ow = (wdt - kw) // sx + 1
    out = np.zeros((bsz, oh, ow, cout), dtype=x.dtype)
    for n in range(bsz):
        for y in range(oh):
            for xx in range(ow):
                patch = xp[n, y * sy : y * sy + kh, xx * sx : xx * sx + kw, :]
                out[n, y, xx, :] = np.tensordot(patch, w, axes=([0, 1, 2], [0, 1, 2]))
    if b is not None:
        out += b
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    """One PASS/FAIL line per acceptance criterion as the suite runs."""
    if report.when != "call" or "test_acceptance.py::test_criterion" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1].replace("test_criterion_", "")
    num, _, label = name.partition("_")
    verdict = "PASS" if report.passed else "FAIL"
    print(f"\n[acceptance] criterion {int(num):2d} ({label.replace('_', ' ')}): {verdict}", flush=True)
