"""Two-stage perceptual feature pipeline.

Stage one trains a convolutional autoencoder on rendered series images
so its latent space encodes geometric structure.  Stage two trains a
transformer-based temporal extractor to reproduce those latents straight
from the raw series, which lets the perceptual loss run entirely in the
time-series modality.  The trained pair is saved as a binary bundle.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .imaging import RenderConfig, normalize_single, render
from .optim import adam_init, adam_step

ENCODER_CHANNELS = (1, 16, 32, 64, 128)
CONV_KERNEL = 3
CONV_STRIDE = 2
CONV_PAD = 1

BUNDLE_MAGIC = b"TSGEO-PB"
BUNDLE_VERSION = 1


class BundleFormatError(ValueError):
    """Checkpoint file is not a readable bundle (bad magic, version,
    truncation, or checksum)."""


@dataclass
class TrainReport:
    curve: List[float]
    final_loss: float
    seed: int
    config: Dict


def _uniform_init(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def _conv_dims(h, w, n_layers):
    dims = [(h, w)]
    for _ in range(n_layers):
        h = (h + 2 * CONV_PAD - CONV_KERNEL) // CONV_STRIDE + 1
        w = (w + 2 * CONV_PAD - CONV_KERNEL) // CONV_STRIDE + 1
        dims.append((h, w))
    return dims


@dataclass
class AutoencoderParams:
    """Convolutional autoencoder: 4 stride-2 conv layers to a latent
    vector, mirrored by transposed convolutions on the way back."""

    d_z: int
    input_h: int
    input_w: int
    params: Dict[str, Tensor]

    @property
    def dims(self):
        return _conv_dims(self.input_h, self.input_w, 4)

    def parameters(self) -> List[Tensor]:
        return list(self.params.values())

    def frozen(self) -> "AutoencoderParams":
        frozen = {k: Tensor(v.data) for k, v in self.params.items()}
        return AutoencoderParams(self.d_z, self.input_h, self.input_w, frozen)


def init_autoencoder(d_z: int, input_h: int, input_w: int, rng) -> AutoencoderParams:
    dims = _conv_dims(input_h, input_w, 4)
    h4, w4 = dims[-1]
    if h4 < 1 or w4 < 1:
        raise ValueError(f"image {input_h}x{input_w} too small for 4 conv layers")
    feat = ENCODER_CHANNELS[-1] * h4 * w4
    p: Dict[str, Tensor] = {}
    for i in range(4):
        cin, cout = ENCODER_CHANNELS[i], ENCODER_CHANNELS[i + 1]
        fan = cin * CONV_KERNEL * CONV_KERNEL
        p[f"enc_conv{i}_w"] = _uniform_init(rng, (cout, cin, CONV_KERNEL, CONV_KERNEL), fan)
        p[f"enc_conv{i}_b"] = _uniform_init(rng, (cout,), fan)
    p["enc_fc_w"] = _uniform_init(rng, (feat, d_z), feat)
    p["enc_fc_b"] = _uniform_init(rng, (d_z,), feat)
    p["dec_fc_w"] = _uniform_init(rng, (d_z, feat), d_z)
    p["dec_fc_b"] = _uniform_init(rng, (feat,), d_z)
    for i in range(4):
        cin = ENCODER_CHANNELS[4 - i]
        cout = ENCODER_CHANNELS[3 - i]
        fan = cin * CONV_KERNEL * CONV_KERNEL
        p[f"dec_conv{i}_w"] = _uniform_init(rng, (cin, cout, CONV_KERNEL, CONV_KERNEL), fan)
        p[f"dec_conv{i}_b"] = _uniform_init(rng, (cout,), fan)
    return AutoencoderParams(d_z=d_z, input_h=input_h, input_w=input_w, params=p)


def _as_image_tensor(img, h, w) -> Tensor:
    t = img if isinstance(img, Tensor) else Tensor(img)
    if t.data.ndim == 2:
        t = ad.reshape(t, (1, t.data.shape[0], t.data.shape[1]))
    if t.data.shape != (1, h, w):
        raise ValueError(
            f"image shape {t.data.shape[-2:]} does not match trained dims "
            f"({h}, {w})")
    return t


def encode_image(p: AutoencoderParams, img) -> Tensor:
    """Forward pass to the latent vector (length d_z)."""
    x = _as_image_tensor(img, p.input_h, p.input_w)
    for i in range(4):
        x = ad.relu(ad.conv2d(x, p.params[f"enc_conv{i}_w"], p.params[f"enc_conv{i}_b"],
                              stride=CONV_STRIDE, padding=CONV_PAD))
    flat = ad.reshape(x, (1, x.data.size))
    z = ad.linear(flat, p.params["enc_fc_w"], p.params["enc_fc_b"])
    return ad.reshape(z, (p.d_z,))


def decode_latent(p: AutoencoderParams, z: Tensor) -> Tensor:
    """Latent vector back to a (1, H, W) image; last layer is linear."""
    dims = p.dims
    h4, w4 = dims[-1]
    seed = ad.linear(ad.reshape(z, (1, p.d_z)), p.params["dec_fc_w"],
                     p.params["dec_fc_b"])
    x = ad.relu(ad.reshape(seed, (ENCODER_CHANNELS[-1], h4, w4)))
    for i in range(4):
        src_h, _ = dims[4 - i]
        tgt_h, tgt_w = dims[3 - i]
        opad_h = tgt_h - ((src_h - 1) * CONV_STRIDE - 2 * CONV_PAD + CONV_KERNEL)
        x = ad.conv2d_transpose(x, p.params[f"dec_conv{i}_w"],
                                p.params[f"dec_conv{i}_b"], stride=CONV_STRIDE,
                                padding=CONV_PAD, output_padding=opad_h)
        if i < 3:
            x = ad.relu(x)
    return x


def autoencoder_forward(p: AutoencoderParams, img) -> Tensor:
    return decode_latent(p, encode_image(p, img))


def train_autoencoder(images: Sequence[np.ndarray], epochs: int = 30,
                      lr: float = 0.001, batch: int = 16, seed: int = 0,
                      d_z: int = 128) -> Tuple[AutoencoderParams, TrainReport]:
    """Stage one: reconstruction training on rendered channel images.

    Deterministic given the seed; the per-epoch mean reconstruction
    loss is recorded.
    """
    images = [np.asarray(im, dtype=np.float64) for im in images]
    if not images:
        raise ValueError("train_autoencoder: empty image dataset")
    h, w = images[0].shape
    for im in images[1:]:
        if im.shape != (h, w):
            raise ValueError(
                f"inconsistent image dims: {im.shape} vs {(h, w)}")
    rng = np.random.default_rng(seed)
    model = init_autoencoder(d_z, h, w, rng)
    params = model.parameters()
    states = adam_init(params, lr=lr)
    curve = []
    for _ in range(epochs):
        order = rng.permutation(len(images))
        epoch_loss = 0.0
        for start in range(0, len(order), batch):
            chunk = order[start:start + batch]
            losses = []
            for idx in chunk:
                target = Tensor(images[idx][None, :, :])
                recon = autoencoder_forward(model, images[idx])
                losses.append(ad.mean(ad.square(ad.subtract(recon, target))))
            total = losses[0]
            for term in losses[1:]:
                total = ad.add(total, term)
            batch_loss = ad.scalar_multiply(total, 1.0 / len(chunk))
            ad.backward(batch_loss)
            adam_step(params, states)
            epoch_loss += batch_loss.item() * len(chunk)
        curve.append(epoch_loss / len(order))
    report = TrainReport(curve=curve, final_loss=curve[-1] if curve else float("nan"),
                         seed=seed,
                         config={"epochs": epochs, "lr": lr, "batch": batch,
                                 "d_z": d_z, "input_h": h, "input_w": w,
                                 "n_images": len(images)})
    return model, report


@dataclass
class ExtractorParams:
    """Temporal feature extractor: one transformer encoder block over
    per-timestep embeddings, mean-pooled, then a two-layer MLP."""

    d_z: int
    input_t: int
    d_model: int
    n_heads: int
    ff_hidden: int
    mlp_hidden: int
    params: Dict[str, Tensor]

    def parameters(self) -> List[Tensor]:
        return list(self.params.values())

    def frozen(self) -> "ExtractorParams":
        frozen = {k: Tensor(v.data) for k, v in self.params.items()}
        return ExtractorParams(self.d_z, self.input_t, self.d_model, self.n_heads,
                               self.ff_hidden, self.mlp_hidden, frozen)


def init_extractor(d_z: int, input_t: int, rng, d_model: int = 64,
                   n_heads: int = 4, ff_hidden: int = 256,
                   mlp_hidden: int = 256) -> ExtractorParams:
    if d_model % n_heads:
        raise ValueError(f"d_model {d_model} not divisible by {n_heads} heads")
    p: Dict[str, Tensor] = {}
    p["embed_w"] = _uniform_init(rng, (1, d_model), 1)
    p["embed_b"] = _uniform_init(rng, (d_model,), 1)
    for name in ("wq", "wk", "wv", "wo"):
        p[f"attn_{name}"] = _uniform_init(rng, (d_model, d_model), d_model)
        p[f"attn_{name}b"] = _uniform_init(rng, (d_model,), d_model)
    p["ffn_w1"] = _uniform_init(rng, (d_model, ff_hidden), d_model)
    p["ffn_b1"] = _uniform_init(rng, (ff_hidden,), d_model)
    p["ffn_w2"] = _uniform_init(rng, (ff_hidden, d_model), ff_hidden)
    p["ffn_b2"] = _uniform_init(rng, (d_model,), ff_hidden)
    p["mlp_w1"] = _uniform_init(rng, (d_model, mlp_hidden), d_model)
    p["mlp_b1"] = _uniform_init(rng, (mlp_hidden,), d_model)
    p["mlp_w2"] = _uniform_init(rng, (mlp_hidden, d_z), mlp_hidden)
    p["mlp_b2"] = _uniform_init(rng, (d_z,), mlp_hidden)
    return ExtractorParams(d_z=d_z, input_t=input_t, d_model=d_model,
                           n_heads=n_heads, ff_hidden=ff_hidden,
                           mlp_hidden=mlp_hidden, params=p)


def sinusoidal_encoding(t_len: int, d_model: int) -> np.ndarray:
    pos = np.arange(t_len)[:, None]
    i = np.arange(d_model // 2)[None, :]
    angles = pos / np.power(10000.0, 2.0 * i / d_model)
    pe = np.zeros((t_len, d_model))
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles)
    return pe


def extract_temporal(p: ExtractorParams, series) -> Tensor:
    """Forward pass: length-T single channel to a d_z feature vector."""
    x = series if isinstance(series, Tensor) else Tensor(series)
    if x.data.ndim != 1:
        raise ValueError(f"extractor expects a 1-D series, got {x.data.shape}")
    t = x.data.shape[0]
    if t != p.input_t:
        raise ValueError(
            f"series length {t} does not match trained length {p.input_t}")
    pr = p.params
    h = ad.linear(ad.reshape(x, (t, 1)), pr["embed_w"], pr["embed_b"])
    h = ad.add(h, Tensor(sinusoidal_encoding(t, p.d_model)))

    q = ad.linear(h, pr["attn_wq"], pr["attn_wqb"])
    k = ad.linear(h, pr["attn_wk"], pr["attn_wkb"])
    v = ad.linear(h, pr["attn_wv"], pr["attn_wvb"])
    dh = p.d_model // p.n_heads
    heads = []
    for i in range(p.n_heads):
        qi = ad.slice_axis(q, 1, i * dh, (i + 1) * dh)
        ki = ad.slice_axis(k, 1, i * dh, (i + 1) * dh)
        vi = ad.slice_axis(v, 1, i * dh, (i + 1) * dh)
        scores = ad.scalar_multiply(ad.matmul(qi, ki, transpose_b=True),
                                    1.0 / np.sqrt(dh))
        heads.append(ad.matmul(ad.softmax(scores, axis=-1), vi))
    attn_out = ad.linear(ad.concatenate(heads, axis=1), pr["attn_wo"],
                         pr["attn_wob"])
    h = ad.layer_norm(ad.add(h, attn_out))

    f = ad.linear(ad.relu(ad.linear(h, pr["ffn_w1"], pr["ffn_b1"])),
                  pr["ffn_w2"], pr["ffn_b2"])
    h = ad.layer_norm(ad.add(h, f))

    pooled = ad.reshape(ad.mean(h, axis=0), (1, p.d_model))
    z = ad.linear(ad.relu(ad.linear(pooled, pr["mlp_w1"], pr["mlp_b1"])),
                  pr["mlp_w2"], pr["mlp_b2"])
    return ad.reshape(z, (p.d_z,))


def render_window(series_1d: np.ndarray, image_height: int,
                  image_expand: int) -> np.ndarray:
    """Render one 1-D window to the (H, W) image the pipeline trains on."""
    cfg = RenderConfig(height=image_height, expand=image_expand,
                       downscale_window=1)
    xn, _ = normalize_single(np.asarray(series_1d, dtype=np.float64))
    return render(xn, cfg).channels[0]


def train_extractor(series_dataset: Sequence[np.ndarray],
                    frozen_encoder: AutoencoderParams, epochs: int = 10,
                    lr: float = 0.001, batch: int = 16, seed: int = 0,
                    image_height: int = 64, image_expand: int = 32,
                    ) -> Tuple[ExtractorParams, TrainReport]:
    """Stage two: align temporal features with the frozen image latents."""
    data = [np.asarray(s, dtype=np.float64).ravel() for s in series_dataset]
    if not data:
        raise ValueError("train_extractor: empty series dataset")
    t_len = data[0].shape[0]
    for s in data[1:]:
        if s.shape[0] != t_len:
            raise ValueError("train_extractor: series lengths differ")
    encoder = frozen_encoder.frozen()
    rng = np.random.default_rng(seed)
    model = init_extractor(frozen_encoder.d_z, t_len, rng)
    params = model.parameters()
    states = adam_init(params, lr=lr)

    targets = []
    for s in data:
        img = render_window(s, image_height, image_expand)
        targets.append(encode_image(encoder, img).data.copy())

    curve = []
    inv_dz = 1.0 / model.d_z
    for _ in range(epochs):
        order = rng.permutation(len(data))
        epoch_loss = 0.0
        for start in range(0, len(order), batch):
            chunk = order[start:start + batch]
            losses = []
            for idx in chunk:
                z = extract_temporal(model, Tensor(data[idx]))
                diff = ad.subtract(z, Tensor(targets[idx]))
                losses.append(ad.scalar_multiply(
                    ad.tensor_sum(ad.square(diff)), inv_dz))
            total = losses[0]
            for term in losses[1:]:
                total = ad.add(total, term)
            batch_loss = ad.scalar_multiply(total, 1.0 / len(chunk))
            ad.backward(batch_loss)
            adam_step(params, states)
            epoch_loss += batch_loss.item() * len(chunk)
        curve.append(epoch_loss / len(order))
    report = TrainReport(curve=curve, final_loss=curve[-1] if curve else float("nan"),
                         seed=seed,
                         config={"epochs": epochs, "lr": lr, "batch": batch,
                                 "d_z": model.d_z, "input_t": t_len,
                                 "image_height": image_height,
                                 "image_expand": image_expand,
                                 "n_series": len(data)})
    return model, report


@dataclass
class PerceptualBundle:
    """Trained autoencoder + extractor pair with their training curves."""

    autoencoder: AutoencoderParams
    extractor: ExtractorParams
    ae_report: TrainReport
    ex_report: TrainReport
    image_height: int = 64
    image_expand: int = 32


def train_perceptual_bundle(windows: Sequence[np.ndarray], d_z: int = 128,
                            epochs_ae: int = 30, epochs_ex: int = 10,
                            lr: float = 0.001, batch: int = 16, seed: int = 0,
                            image_height: int = 64, image_expand: int = 32,
                            ) -> PerceptualBundle:
    """Both training stages end to end on a set of 1-D windows."""
    windows = [np.asarray(w, dtype=np.float64).ravel() for w in windows]
    images = [render_window(w, image_height, image_expand) for w in windows]
    ae, ae_report = train_autoencoder(images, epochs=epochs_ae, lr=lr,
                                      batch=batch, seed=seed, d_z=d_z)
    ex, ex_report = train_extractor(windows, ae, epochs=epochs_ex, lr=lr,
                                    batch=batch, seed=seed,
                                    image_height=image_height,
                                    image_expand=image_expand)
    return PerceptualBundle(autoencoder=ae, extractor=ex, ae_report=ae_report,
                            ex_report=ex_report, image_height=image_height,
                            image_expand=image_expand)


# ---------------------------------------------------------------------------
# bundle serialization: magic, version, JSON meta, shape table with
# little-endian float64 payloads, trailing CRC32

def _pack_params(out: bytearray, params: Dict[str, Tensor]):
    out += struct.pack("<I", len(params))
    for name, tensor in params.items():
        enc = name.encode()
        out += struct.pack("<H", len(enc)) + enc
        shape = tensor.data.shape
        out += struct.pack("<B", len(shape))
        out += struct.pack(f"<{len(shape)}I", *shape)
        out += tensor.data.astype("<f8").tobytes()


def _unpack_params(buf: memoryview, pos: int):
    (count,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    params: Dict[str, Tensor] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = bytes(buf[pos:pos + nlen]).decode()
        pos += nlen
        (ndim,) = struct.unpack_from("<B", buf, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", buf, pos)
        pos += 4 * ndim
        size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        data = np.frombuffer(buf, dtype="<f8", count=size, offset=pos)
        pos += 8 * size
        params[name] = Tensor(data.reshape(shape))
    return params, pos


def _report_dict(r: TrainReport):
    return {"curve": r.curve, "final_loss": r.final_loss, "seed": r.seed,
            "config": r.config}


def _report_from(d) -> TrainReport:
    return TrainReport(curve=list(d["curve"]), final_loss=d["final_loss"],
                       seed=d["seed"], config=dict(d["config"]))


def save_bundle(bundle: PerceptualBundle, path):
    meta = {
        "d_z": bundle.autoencoder.d_z,
        "input_h": bundle.autoencoder.input_h,
        "input_w": bundle.autoencoder.input_w,
        "input_t": bundle.extractor.input_t,
        "d_model": bundle.extractor.d_model,
        "n_heads": bundle.extractor.n_heads,
        "ff_hidden": bundle.extractor.ff_hidden,
        "mlp_hidden": bundle.extractor.mlp_hidden,
        "image_height": bundle.image_height,
        "image_expand": bundle.image_expand,
        "ae_report": _report_dict(bundle.ae_report),
        "ex_report": _report_dict(bundle.ex_report),
    }
    payload = bytearray()
    payload += BUNDLE_MAGIC
    payload += struct.pack("<I", BUNDLE_VERSION)
    meta_bytes = json.dumps(meta, sort_keys=True).encode()
    payload += struct.pack("<I", len(meta_bytes)) + meta_bytes
    _pack_params(payload, bundle.autoencoder.params)
    _pack_params(payload, bundle.extractor.params)
    payload += struct.pack("<I", zlib.crc32(bytes(payload)))
    with open(path, "wb") as fh:
        fh.write(bytes(payload))


def load_bundle(path) -> PerceptualBundle:
    """Read a bundle; parameters come back frozen (requires_grad False)."""
    raw = open(path, "rb").read()
    if len(raw) < len(BUNDLE_MAGIC) + 8 or not raw.startswith(BUNDLE_MAGIC):
        raise BundleFormatError(f"{path} is not a perceptual bundle")
    (stored_crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(raw[:-4]) != stored_crc:
        raise BundleFormatError(f"{path}: checksum failure, file corrupted")
    try:
        buf = memoryview(raw)
        pos = len(BUNDLE_MAGIC)
        (version,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        if version != BUNDLE_VERSION:
            raise BundleFormatError(
                f"{path}: bundle version {version} not supported "
                f"(expected {BUNDLE_VERSION})")
        (mlen,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        meta = json.loads(bytes(buf[pos:pos + mlen]).decode())
        pos += mlen
        ae_params, pos = _unpack_params(buf, pos)
        ex_params, pos = _unpack_params(buf, pos)
    except (struct.error, KeyError, json.JSONDecodeError) as exc:
        raise BundleFormatError(f"{path}: truncated or malformed bundle: {exc}")
    ae = AutoencoderParams(d_z=meta["d_z"], input_h=meta["input_h"],
                           input_w=meta["input_w"], params=ae_params)
    ex = ExtractorParams(d_z=meta["d_z"], input_t=meta["input_t"],
                         d_model=meta["d_model"], n_heads=meta["n_heads"],
                         ff_hidden=meta["ff_hidden"],
                         mlp_hidden=meta["mlp_hidden"], params=ex_params)
    return PerceptualBundle(autoencoder=ae, extractor=ex,
                            ae_report=_report_from(meta["ae_report"]),
                            ex_report=_report_from(meta["ex_report"]),
                            image_height=meta["image_height"],
                            image_expand=meta["image_expand"])
