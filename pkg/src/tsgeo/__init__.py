"""Geometric structure similarity for time series, a shape-aware
training loss, and the small autodiff engine that powers them."""

from .autodiff import Tensor, backward, graph_node
from .forecast import (ForecasterParams, WindowDataset, evaluate, forecast,
                       make_benchmark_series, make_windows, predict,
                       run_comparison, train_forecaster)
from .imaging import (RenderConfig, SeriesImage, downscale, export_image,
                      normalize_pair, normalize_single, render, render_pair)
from .losses import (LossWeights, diff_loss, freq_loss, mse_loss,
                     perceptual_loss, satl_total)
from .metric import TgsiConfig, TgsiReport, tgsi
from .optim import AdamState, adam_init, adam_step
from .perceptual import (AutoencoderParams, ExtractorParams, PerceptualBundle,
                         TrainReport, encode_image, extract_temporal,
                         load_bundle, save_bundle, train_autoencoder,
                         train_extractor, train_perceptual_bundle)
from .series import TimeSeries, as_series
from .spectral import (DominantSet, Spectrum, fold_weights, rfft,
                       rfft_adjoint, top_k_bins)
from .validation import (DeformationSpec, SweepResult, deform,
                         gen_base_sequence, mse_blindness_demo, pearson,
                         similarity_sweep)

__version__ = "0.1.0"

__all__ = [
    "Tensor", "backward", "graph_node",
    "ForecasterParams", "WindowDataset", "evaluate", "forecast",
    "make_benchmark_series", "make_windows", "predict", "run_comparison",
    "train_forecaster",
    "RenderConfig", "SeriesImage", "downscale", "export_image",
    "normalize_pair", "normalize_single", "render", "render_pair",
    "LossWeights", "diff_loss", "freq_loss", "mse_loss", "perceptual_loss",
    "satl_total",
    "TgsiConfig", "TgsiReport", "tgsi",
    "AdamState", "adam_init", "adam_step",
    "AutoencoderParams", "ExtractorParams", "PerceptualBundle", "TrainReport",
    "encode_image", "extract_temporal", "load_bundle", "save_bundle",
    "train_autoencoder", "train_extractor", "train_perceptual_bundle",
    "TimeSeries", "as_series",
    "DominantSet", "Spectrum", "fold_weights", "rfft", "rfft_adjoint",
    "top_k_bins",
    "DeformationSpec", "SweepResult", "deform", "gen_base_sequence",
    "mse_blindness_demo", "pearson", "similarity_sweep",
    "__version__",
]
