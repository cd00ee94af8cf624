"""Adam optimizer tests: reference-formula agreement, convergence on a
small quadratic, and state handling."""

import numpy as np
import pytest

from tsgeo import autodiff as ad
from tsgeo.autodiff import Tensor
from tsgeo.optim import AdamState, adam_init, adam_step


def reference_adam(grads, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8,
                   x0=0.0):
    """Textbook Adam on a scalar, given a fixed gradient sequence."""
    m = v = 0.0
    x = x0
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mh = m / (1 - beta1 ** t)
        vh = v / (1 - beta2 ** t)
        x -= lr * mh / (np.sqrt(vh) + eps)
    return x


def test_matches_reference_formula():
    rng = np.random.default_rng(7)
    grads = rng.normal(size=6)
    p = Tensor(np.array([0.0]), requires_grad=True)
    states = adam_init([p], lr=0.01)
    for g in grads:
        p.grad = np.array([g])
        adam_step([p], states)
    assert np.isclose(p.data[0], reference_adam(grads, lr=0.01), atol=1e-14)


def test_first_step_moves_by_about_lr():
    # bias correction makes the very first update ~lr * sign(grad)
    p = Tensor(np.array([1.0, -1.0]), requires_grad=True)
    states = adam_init([p], lr=0.05)
    p.grad = np.array([3.0, -0.002])
    adam_step([p], states)
    assert np.allclose(p.data, [1.0 - 0.05, -1.0 + 0.05], atol=1e-3)


def test_converges_on_quadratic():
    target = np.array([2.0, -3.0, 0.5])
    p = Tensor(np.zeros(3), requires_grad=True)
    states = adam_init([p], lr=0.1)
    for _ in range(500):
        loss = ad.mean(ad.square(ad.subtract(p, Tensor(target))))
        ad.backward(loss)
        adam_step([p], states)
    assert np.allclose(p.data, target, atol=1e-3)


def test_step_clears_gradient_and_counts():
    p = Tensor(np.zeros(2), requires_grad=True)
    states = adam_init([p])
    p.grad = np.ones(2)
    adam_step([p], states)
    assert p.grad is None
    assert states[0].step_count == 1


def test_missing_gradient_rejected():
    p = Tensor(np.zeros(2), requires_grad=True)
    states = adam_init([p])
    with pytest.raises(ValueError):
        adam_step([p], states)


def test_param_state_count_mismatch_rejected():
    p = Tensor(np.zeros(2), requires_grad=True)
    p.grad = np.ones(2)
    with pytest.raises(ValueError):
        adam_step([p], [])


def test_state_shape_mismatch_rejected():
    p = Tensor(np.zeros(3), requires_grad=True)
    p.grad = np.ones(3)
    bad = AdamState(first_moment=np.zeros(2), second_moment=np.zeros(2))
    with pytest.raises(ValueError):
        adam_step([p], [bad])


def test_no_partial_update_on_missing_grad():
    a = Tensor(np.zeros(2), requires_grad=True)
    b = Tensor(np.zeros(2), requires_grad=True)
    states = adam_init([a, b])
    a.grad = np.ones(2)
    with pytest.raises(ValueError):
        adam_step([a, b], states)
    # validation happens before any parameter moves
    assert np.array_equal(a.data, np.zeros(2))
    assert states[0].step_count == 0
