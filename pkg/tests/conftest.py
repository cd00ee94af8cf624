"""Shared test helpers: independent oracles and a gradient checker.

The oracles here deliberately avoid the library's own fast paths:
the DFT oracle is the O(T^2) definition sum, and the gradient checker
uses central finite differences on the raw float64 arrays.
"""

import numpy as np
import pytest

from tsgeo import autodiff as ad
from tsgeo.autodiff import Tensor


def naive_rdft(signal):
    """One-sided DFT straight from the definition, O(T^2).

    bins[f] = sum_t signal[t] * exp(-2i*pi*t*f/T) for f = 0..floor(T/2).
    """
    signal = np.asarray(signal, dtype=np.float64)
    t = signal.shape[0]
    n_bins = t // 2 + 1
    out = np.zeros(n_bins, dtype=np.complex128)
    for f in range(n_bins):
        acc = 0.0 + 0.0j
        for n in range(t):
            acc += signal[n] * np.exp(-2j * np.pi * n * f / t)
        out[f] = acc
    return out


def numeric_grad(f, arrays, eps=1e-5):
    """Central-difference gradient of scalar f w.r.t. each array."""
    grads = []
    for i, a in enumerate(arrays):
        a = np.asarray(a, dtype=np.float64)
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            hi = f(*arrays)
            flat[j] = orig - eps
            lo = f(*arrays)
            flat[j] = orig
            gflat[j] = (hi - lo) / (2.0 * eps)
        grads.append(g)
    return grads


def gradcheck(build, arrays, rel=1e-4, eps=1e-5):
    """Compare backward() gradients against central finite differences.

    ``build(*tensors)`` must return a scalar loss tensor.  The error is
    measured per input as max|analytic - numeric| relative to the
    numeric gradient's largest entry (floored at 1 so near-zero
    gradients are compared absolutely).
    """
    arrays = [np.ascontiguousarray(a, dtype=np.float64) for a in arrays]
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = build(*tensors)
    ad.backward(loss)

    def scalar(*arrs):
        return build(*[Tensor(a.copy()) for a in arrs]).item()

    numeric = numeric_grad(scalar, arrays, eps=eps)
    for i, (t, n) in enumerate(zip(tensors, numeric)):
        a = t.grad if t.grad is not None else np.zeros_like(n)
        denom = max(np.max(np.abs(n)), 1.0)
        err = np.max(np.abs(a - n)) / denom
        assert err <= rel, (
            f"gradient mismatch on input {i}: max rel err {err:.3e} > {rel:.0e}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
