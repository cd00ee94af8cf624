"""Differentiable shape-aware loss components and the combined objective.

All components take (T, N) engine tensors and return scalar tensors:

* diff_loss: MSE between first-order differences; blind to vertical
  shifts, sensitive to shape.
* freq_loss: one-sided spectrum comparison that matches the dominant
  bins of the ground truth and suppresses everything else.
* perceptual_loss: squared distance between frozen temporal-extractor
  features.
* satl_total: alpha*diff + beta*freq + gamma*perceptual + delta*MSE.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .spectral import Spectrum, fold_weights, rfft_adjoint, top_k_bins


@dataclass
class LossWeights:
    alpha: float = 0.2
    beta: float = 0.2
    gamma: float = 0.1
    delta: float = 0.5
    k_ratio: float = 0.1

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not 0.0 < self.k_ratio <= 1.0:
            raise ValueError(f"k_ratio must be in (0, 1], got {self.k_ratio}")

    def top_k(self, t: int) -> int:
        return max(1, int(self.k_ratio * t))


def _as_2d_tensor(x) -> Tensor:
    if not isinstance(x, Tensor):
        x = Tensor(x)
    if x.data.ndim == 1:
        x = ad.reshape(x, (x.data.shape[0], 1))
    if x.data.ndim != 2:
        raise ValueError(f"loss inputs must be (T, N), got shape {x.data.shape}")
    return x


def _check_pair(x: Tensor, y: Tensor):
    if x.data.shape != y.data.shape:
        raise ValueError(
            f"prediction shape {x.data.shape} != target shape {y.data.shape}")


def mse_loss(x, y) -> Tensor:
    x, y = _as_2d_tensor(x), _as_2d_tensor(y)
    _check_pair(x, y)
    return ad.mean(ad.square(ad.subtract(x, y)))


def diff_loss(x, y) -> Tensor:
    """Mean squared error between first-order temporal differences."""
    x, y = _as_2d_tensor(x), _as_2d_tensor(y)
    _check_pair(x, y)
    t = x.data.shape[0]
    if t < 2:
        raise ValueError(f"diff_loss needs T >= 2, got T={t}")

    def first_diff(s):
        return ad.subtract(ad.slice_axis(s, 0, 1, t), ad.slice_axis(s, 0, 0, t - 1))

    return ad.mean(ad.square(ad.subtract(first_diff(x), first_diff(y))))


def freq_loss(x, y, weights: LossWeights | None = None) -> Tensor:
    """Spectral loss: match top-k bins of the target, suppress the rest.

    Per channel, with X = rfft(x_c) and Y = rfft(y_c) and the dominant
    set taken from Y:

        (1/sqrt(T)) * (sum_dom |X_f - Y_f| + sum_offdom |X_f|)

    averaged over channels.  |.| is the complex modulus, so phase errors
    are penalized.  The gradient flows to x only, through the analytic
    DFT adjoint; the modulus gradient at zero magnitude is 0.
    """
    weights = weights or LossWeights()
    x, y = _as_2d_tensor(x), _as_2d_tensor(y)
    _check_pair(x, y)
    t, n = x.data.shape
    if t < 2:
        raise ValueError(f"freq_loss needs T >= 2, got T={t}")
    k = weights.top_k(t)
    xd, yd = x.data, y.data
    scale = 1.0 / np.sqrt(t)
    fold = fold_weights(t)

    spectra, masks = [], []
    total = 0.0
    for c in range(n):
        xs = np.fft.rfft(xd[:, c])
        ys = np.fft.rfft(yd[:, c])
        dom = top_k_bins(Spectrum(ys, t), k).mask(xs.shape[0])
        total += scale * (np.abs((xs - ys)[dom]).sum() + np.abs(xs[~dom]).sum())
        spectra.append((xs, ys))
        masks.append(dom)
    value = total / n

    def back(g):
        gout = float(np.asarray(g).reshape(()))
        gx = np.empty_like(xd)
        for c in range(n):
            xs, ys = spectra[c]
            dom = masks[c]
            num = np.where(dom, xs - ys, xs)
            mag = np.abs(num)
            cot = np.where(mag > 0, num / np.where(mag > 0, mag, 1.0), 0.0)
            cot *= gout * scale / n
            gx[:, c] = rfft_adjoint(cot / fold, t)
        return (gx,)

    return ad.graph_node(np.float64(value), (x,), back, "freq-loss")


def perceptual_loss(x, y, extractor) -> Tensor:
    """Squared feature distance under a frozen temporal extractor.

    (1/d_z) * ||f(x_c) - f(y_c)||^2, averaged over channels.  The
    extractor parameters receive no gradient.
    """
    from .perceptual import extract_temporal

    if extractor is None:
        raise ValueError("perceptual_loss requires a trained extractor")
    extractor = extractor.frozen()
    x, y = _as_2d_tensor(x), _as_2d_tensor(y)
    _check_pair(x, y)
    t, n = x.data.shape
    if t != extractor.input_t:
        raise ValueError(
            f"series length {t} does not match extractor input length "
            f"{extractor.input_t}")
    inv_dz = 1.0 / extractor.d_z
    total = None
    for c in range(n):
        zx = extract_temporal(extractor, ad.reshape(ad.slice_axis(x, 1, c, c + 1), (t,)))
        zy = extract_temporal(extractor, Tensor(y.data[:, c]))
        term = ad.scalar_multiply(ad.tensor_sum(ad.square(ad.subtract(zx, zy))), inv_dz)
        total = term if total is None else ad.add(total, term)
    return ad.scalar_multiply(total, 1.0 / n)


def satl_total(x, y, weights: LossWeights | None = None, extractor=None) -> Tensor:
    """The combined objective.

    Zero-weighted components are skipped entirely, so gamma == 0 needs
    no extractor and (alpha, beta, gamma) == 0 with delta == 1 reduces
    to plain MSE bit-exactly.
    """
    weights = weights or LossWeights()
    x, y = _as_2d_tensor(x), _as_2d_tensor(y)
    _check_pair(x, y)
    terms = []
    if weights.alpha > 0:
        terms.append(ad.scalar_multiply(diff_loss(x, y), weights.alpha))
    if weights.beta > 0:
        terms.append(ad.scalar_multiply(freq_loss(x, y, weights), weights.beta))
    if weights.gamma > 0:
        terms.append(ad.scalar_multiply(perceptual_loss(x, y, extractor),
                                        weights.gamma))
    if weights.delta > 0:
        terms.append(ad.scalar_multiply(mse_loss(x, y), weights.delta))
    if not terms:
        return Tensor(np.float64(0.0))
    total = terms[0]
    for term in terms[1:]:
        total = ad.add(total, term)
    return total
