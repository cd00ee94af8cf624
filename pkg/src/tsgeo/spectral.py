"""Real-input DFT with an analytic adjoint, plus dominant-bin selection.

The adjoint is what makes the frequency-domain loss differentiable: it
maps a cotangent on the one-sided spectrum back to the time domain,
folding the mirrored negative frequencies of a real signal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Spectrum:
    """One-sided spectrum of a real signal: floor(T/2)+1 complex bins."""

    bins: np.ndarray
    source_length: int

    @property
    def n_bins(self) -> int:
        return self.bins.shape[0]

    def magnitudes(self) -> np.ndarray:
        return np.abs(self.bins)


@dataclass
class DominantSet:
    """Sorted top-k bin indices of a reference spectrum."""

    indices: np.ndarray
    k: int

    def mask(self, n_bins: int) -> np.ndarray:
        m = np.zeros(n_bins, dtype=bool)
        m[self.indices] = True
        return m


def rfft(signal: np.ndarray) -> Spectrum:
    """One-sided DFT: bins[f] = sum_t signal[t] * exp(-2i*pi*t*f/T)."""
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1:
        raise ValueError(f"rfft expects a 1-D signal, got shape {signal.shape}")
    t = signal.shape[0]
    if t < 2:
        raise ValueError(f"rfft needs at least 2 samples, got {t}")
    if not np.all(np.isfinite(signal)):
        raise ValueError("rfft input contains non-finite values")
    return Spectrum(bins=np.fft.rfft(signal), source_length=t)


def fold_weights(t: int) -> np.ndarray:
    """Multiplicity of each one-sided bin in the full Hermitian spectrum.

    1 for DC, 1 for the Nyquist bin when T is even, 2 elsewhere.
    """
    n_bins = t // 2 + 1
    w = np.full(n_bins, 2.0)
    w[0] = 1.0
    if t % 2 == 0:
        w[-1] = 1.0
    return w


def rfft_adjoint(cotangent: np.ndarray, t: int) -> np.ndarray:
    """Adjoint of rfft under the folded (Hermitian) spectrum pairing.

    Satisfies  Re<rfft(s), c>_folded == <s, rfft_adjoint(c, T)>  where
    the folded pairing counts interior bins twice.  Imaginary parts of
    the DC and Nyquist cotangent entries cannot influence a real signal
    and drop out.
    """
    cot = np.asarray(cotangent, dtype=np.complex128)
    n_bins = t // 2 + 1
    if cot.shape != (n_bins,):
        raise ValueError(
            f"cotangent shape {cot.shape} does not match {n_bins} bins for T={t}")
    full = np.zeros(t, dtype=np.complex128)
    full[:n_bins] = cot
    if t > 2:
        tail_stop = n_bins - 1 if t % 2 == 0 else n_bins
        full[-1:-tail_stop:-1] = np.conj(cot[1:tail_stop])
    return t * np.fft.ifft(full).real


def folded_inner(spectrum: Spectrum, cotangent: np.ndarray) -> float:
    """Re<X, c> with interior bins counted twice (the adjoint's pairing)."""
    w = fold_weights(spectrum.source_length)
    return float(np.sum(w * (spectrum.bins * np.conj(cotangent)).real))


def top_k_bins(reference: Spectrum, k: int) -> DominantSet:
    """The k largest-magnitude bins of the reference spectrum.

    k is clamped to the number of bins; magnitude ties break toward the
    lower frequency index.
    """
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    mags = reference.magnitudes()
    k = min(k, mags.shape[0])
    order = np.argsort(-mags, kind="stable")[:k]
    return DominantSet(indices=np.sort(order), k=k)
