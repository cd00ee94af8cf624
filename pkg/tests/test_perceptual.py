"""Tests for the two-stage perceptual pipeline and its bundle format."""

import struct
import zlib

import numpy as np
import pytest

from tsgeo import autodiff as ad
from tsgeo.autodiff import Tensor
from tsgeo.perceptual import (
    BUNDLE_MAGIC,
    BUNDLE_VERSION,
    BundleFormatError,
    PerceptualBundle,
    _conv_dims,
    autoencoder_forward,
    decode_latent,
    encode_image,
    extract_temporal,
    init_autoencoder,
    init_extractor,
    load_bundle,
    render_window,
    save_bundle,
    sinusoidal_encoding,
    train_autoencoder,
    train_extractor,
    train_perceptual_bundle,
)


def tiny_autoencoder(seed=7, d_z=6, h=16, w=16):
    rng = np.random.default_rng(seed)
    return init_autoencoder(d_z, h, w, rng)


class TestConvDims:
    def test_each_layer_ceil_halves(self):
        # k=3, s=2, p=1 gives out = (d - 1) // 2 + 1 = ceil(d / 2)
        dims = _conv_dims(64, 96, 4)
        assert dims == [(64, 96), (32, 48), (16, 24), (8, 12), (4, 6)]

    def test_odd_sizes_round_up(self):
        assert _conv_dims(7, 5, 2) == [(7, 5), (4, 3), (2, 2)]

    def test_dims_property_matches_helper(self):
        ae = tiny_autoencoder()
        assert ae.dims == _conv_dims(16, 16, 4)


class TestAutoencoderInit:
    def test_parameter_shapes(self):
        ae = tiny_autoencoder(d_z=6, h=16, w=16)
        p = ae.params
        assert p["enc_conv0_w"].data.shape == (16, 1, 3, 3)
        assert p["enc_conv3_w"].data.shape == (128, 64, 3, 3)
        assert p["enc_conv3_b"].data.shape == (128,)
        # 16x16 collapses to 1x1 after four stride-2 layers
        feat = 128 * 1 * 1
        assert p["enc_fc_w"].data.shape == (feat, 6)
        assert p["dec_fc_w"].data.shape == (6, feat)
        # decoder convs mirror the encoder: (c_in, c_out, k, k)
        assert p["dec_conv0_w"].data.shape == (128, 64, 3, 3)
        assert p["dec_conv3_w"].data.shape == (16, 1, 3, 3)
        assert len(p) == 20

    def test_all_params_require_grad(self):
        ae = tiny_autoencoder()
        assert all(t.requires_grad for t in ae.parameters())

    def test_degenerate_image_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError, match="too small"):
            init_autoencoder(4, 0, 16, rng)

    def test_deterministic_given_rng(self):
        a = tiny_autoencoder(seed=5)
        b = tiny_autoencoder(seed=5)
        for k in a.params:
            assert np.array_equal(a.params[k].data, b.params[k].data)


class TestAutoencoderForward:
    def test_encode_shape(self, rng):
        ae = tiny_autoencoder(d_z=6)
        z = encode_image(ae, rng.random((16, 16)))
        assert z.data.shape == (6,)

    def test_decode_restores_input_shape(self, rng):
        ae = tiny_autoencoder(d_z=6)
        out = decode_latent(ae, Tensor(rng.random(6)))
        assert out.data.shape == (1, 16, 16)

    def test_roundtrip_shape_on_uneven_image(self, rng):
        # 32x16 bottlenecks at (2, 1); the transposed stack must still
        # land exactly back on the input dims
        ae = tiny_autoencoder(d_z=4, h=32, w=16)
        out = autoencoder_forward(ae, rng.random((32, 16)))
        assert out.data.shape == (1, 32, 16)

    def test_wrong_image_dims_rejected(self, rng):
        ae = tiny_autoencoder()
        with pytest.raises(ValueError, match="does not match trained dims"):
            encode_image(ae, rng.random((16, 12)))

    def test_channel_first_input_accepted(self, rng):
        ae = tiny_autoencoder()
        img = rng.random((16, 16))
        flat = encode_image(ae, img)
        chan = encode_image(ae, img[None, :, :])
        np.testing.assert_array_equal(flat.data, chan.data)

    def test_gradients_reach_every_parameter(self, rng):
        ae = tiny_autoencoder()
        img = rng.random((16, 16))
        loss = ad.mean(ad.square(ad.subtract(autoencoder_forward(ae, img),
                                             Tensor(img[None, :, :]))))
        ad.backward(loss)
        for name, t in ae.params.items():
            assert t.grad is not None, name
            assert np.any(t.grad != 0.0), name

    def test_frozen_copy_shares_data_but_not_grads(self, rng):
        ae = tiny_autoencoder()
        frozen = ae.frozen()
        for k in ae.params:
            assert np.shares_memory(frozen.params[k].data, ae.params[k].data)
            assert not frozen.params[k].requires_grad
        loss = ad.tensor_sum(encode_image(frozen, rng.random((16, 16))))
        ad.backward(loss)
        assert all(t.grad is None for t in frozen.parameters())


class TestAutoencoderTraining:
    def make_images(self, n=4, h=16, w=16, seed=3):
        rng = np.random.default_rng(seed)
        return [rng.random((h, w)) for _ in range(n)]

    def test_curve_shrinks_and_has_one_point_per_epoch(self):
        ae, report = train_autoencoder(self.make_images(), epochs=4,
                                       batch=2, seed=0, d_z=6)
        assert len(report.curve) == 4
        assert all(np.isfinite(report.curve))
        assert report.curve[-1] < report.curve[0]
        assert report.final_loss == report.curve[-1]

    def test_training_is_deterministic(self):
        imgs = self.make_images()
        a, ra = train_autoencoder(imgs, epochs=2, batch=2, seed=11, d_z=4)
        b, rb = train_autoencoder(imgs, epochs=2, batch=2, seed=11, d_z=4)
        assert ra.curve == rb.curve
        for k in a.params:
            assert np.array_equal(a.params[k].data, b.params[k].data)

    def test_report_records_configuration(self):
        _, report = train_autoencoder(self.make_images(n=3), epochs=1,
                                      batch=2, seed=2, d_z=4)
        assert report.seed == 2
        assert report.config["d_z"] == 4
        assert report.config["input_h"] == 16
        assert report.config["n_images"] == 3

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            train_autoencoder([], epochs=1)

    def test_inconsistent_dims_rejected(self, rng):
        imgs = [rng.random((16, 16)), rng.random((16, 12))]
        with pytest.raises(ValueError, match="inconsistent"):
            train_autoencoder(imgs, epochs=1)


class TestSinusoidalEncoding:
    def test_shape_and_first_position(self):
        pe = sinusoidal_encoding(5, 8)
        assert pe.shape == (5, 8)
        # position 0: sin(0)=0 in even slots, cos(0)=1 in odd slots
        np.testing.assert_array_equal(pe[0], [0, 1, 0, 1, 0, 1, 0, 1])

    def test_matches_closed_form(self):
        d = 6
        pe = sinusoidal_encoding(4, d)
        for pos in range(4):
            for i in range(d // 2):
                angle = pos / 10000.0 ** (2.0 * i / d)
                assert pe[pos, 2 * i] == pytest.approx(np.sin(angle))
                assert pe[pos, 2 * i + 1] == pytest.approx(np.cos(angle))

    def test_distinct_positions_get_distinct_codes(self):
        pe = sinusoidal_encoding(50, 16)
        assert len({tuple(row) for row in np.round(pe, 12)}) == 50


class TestExtractor:
    def tiny(self, seed=99):
        rng = np.random.default_rng(seed)
        return init_extractor(4, 6, rng, d_model=8, n_heads=2, ff_hidden=12,
                              mlp_hidden=10)

    def test_head_split_must_be_exact(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError, match="not divisible"):
            init_extractor(4, 6, rng, d_model=10, n_heads=4)

    def test_parameter_shapes(self):
        ex = self.tiny()
        p = ex.params
        assert p["embed_w"].data.shape == (1, 8)
        assert p["attn_wq"].data.shape == (8, 8)
        assert p["attn_wqb"].data.shape == (8,)
        assert p["ffn_w1"].data.shape == (8, 12)
        assert p["mlp_w2"].data.shape == (10, 4)
        assert len(p) == 18

    def test_feature_vector_shape(self, rng):
        ex = self.tiny()
        z = extract_temporal(ex, rng.standard_normal(6))
        assert z.data.shape == (4,)

    def test_rejects_matrix_input(self, rng):
        with pytest.raises(ValueError, match="1-D"):
            extract_temporal(self.tiny(), rng.standard_normal((2, 6)))

    def test_rejects_mismatched_length(self, rng):
        with pytest.raises(ValueError, match="length"):
            extract_temporal(self.tiny(), rng.standard_normal(7))

    def test_gradients_reach_every_parameter(self, rng):
        ex = self.tiny()
        loss = ad.tensor_sum(ad.square(extract_temporal(
            ex, rng.standard_normal(6))))
        ad.backward(loss)
        for name, t in ex.params.items():
            assert t.grad is not None, name

    def test_frozen_copy_shares_data(self):
        ex = self.tiny()
        frozen = ex.frozen()
        for k in ex.params:
            assert np.shares_memory(frozen.params[k].data, ex.params[k].data)
            assert not frozen.params[k].requires_grad
        assert (frozen.d_z, frozen.input_t) == (ex.d_z, ex.input_t)


class TestRenderWindow:
    def test_one_column_per_sample(self):
        img = render_window(np.linspace(0.0, 1.0, 8), 16, 2)
        assert img.shape == (16, 8)

    def test_values_span_unit_interval(self, rng):
        img = render_window(rng.standard_normal(12), 20, 3)
        assert img.min() >= 0.0
        assert img.max() == pytest.approx(1.0)

    def test_expand_widens_the_stripe(self):
        series = np.linspace(0.0, 1.0, 8)
        thin = render_window(series, 32, 1)
        thick = render_window(series, 32, 8)
        assert np.count_nonzero(thick) > np.count_nonzero(thin)

    def test_constant_series_still_renders(self):
        img = render_window(np.full(6, 2.5), 16, 2)
        assert img.shape == (16, 6)
        assert np.isfinite(img).all()


class TestExtractorTraining:
    def setup_data(self, n=3, t=16, seed=21):
        rng = np.random.default_rng(seed)
        return [rng.standard_normal(t) for _ in range(n)]

    def test_smoke_run_produces_curve(self):
        series = self.setup_data()
        ae = tiny_autoencoder(d_z=4, h=16, w=16)
        ex, report = train_extractor(series, ae, epochs=2, batch=2, seed=0,
                                     image_height=16, image_expand=2)
        assert ex.input_t == 16
        assert ex.d_z == 4
        assert len(report.curve) == 2
        assert all(np.isfinite(report.curve))
        assert report.config["n_series"] == 3

    def test_encoder_stays_frozen(self):
        series = self.setup_data()
        ae = tiny_autoencoder(d_z=4, h=16, w=16)
        before = {k: v.data.copy() for k, v in ae.params.items()}
        train_extractor(series, ae, epochs=1, batch=2, seed=0,
                        image_height=16, image_expand=2)
        for k, v in ae.params.items():
            assert np.array_equal(v.data, before[k])
            assert v.grad is None

    def test_deterministic_given_seed(self):
        series = self.setup_data()
        ae = tiny_autoencoder(d_z=4, h=16, w=16)
        _, ra = train_extractor(series, ae, epochs=1, batch=2, seed=5,
                                image_height=16, image_expand=2)
        _, rb = train_extractor(series, ae, epochs=1, batch=2, seed=5,
                                image_height=16, image_expand=2)
        assert ra.curve == rb.curve

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            train_extractor([], tiny_autoencoder(), epochs=1)

    def test_ragged_lengths_rejected(self, rng):
        series = [rng.standard_normal(8), rng.standard_normal(9)]
        with pytest.raises(ValueError, match="lengths differ"):
            train_extractor(series, tiny_autoencoder(), epochs=1)


class TestBundleRoundtrip:
    def small_bundle(self, seed=4):
        rng = np.random.default_rng(seed)
        windows = [rng.standard_normal(16) for _ in range(3)]
        return train_perceptual_bundle(windows, d_z=4, epochs_ae=2,
                                       epochs_ex=2, batch=2, seed=seed,
                                       image_height=16, image_expand=2)

    def test_end_to_end_training_wires_both_stages(self):
        bundle = self.small_bundle()
        assert bundle.autoencoder.d_z == 4
        assert bundle.extractor.input_t == 16
        assert bundle.ae_report.config["epochs"] == 2
        assert bundle.ex_report.config["epochs"] == 2
        assert (bundle.image_height, bundle.image_expand) == (16, 2)

    def test_save_load_preserves_everything(self, tmp_path):
        bundle = self.small_bundle()
        path = tmp_path / "tiny.tspb"
        save_bundle(bundle, path)
        back = load_bundle(path)
        for k, v in bundle.autoencoder.params.items():
            np.testing.assert_array_equal(back.autoencoder.params[k].data, v.data)
        for k, v in bundle.extractor.params.items():
            np.testing.assert_array_equal(back.extractor.params[k].data, v.data)
        assert back.ae_report.curve == bundle.ae_report.curve
        assert back.ex_report.config == bundle.ex_report.config
        assert back.extractor.n_heads == bundle.extractor.n_heads
        assert (back.image_height, back.image_expand) == (16, 2)

    def test_loaded_parameters_are_frozen(self, tmp_path):
        path = tmp_path / "tiny.tspb"
        save_bundle(self.small_bundle(), path)
        back = load_bundle(path)
        assert not any(t.requires_grad for t in back.autoencoder.parameters())
        assert not any(t.requires_grad for t in back.extractor.parameters())

    def test_serialization_is_byte_stable(self, tmp_path):
        bundle = self.small_bundle()
        p1, p2 = tmp_path / "a.tspb", tmp_path / "b.tspb"
        save_bundle(bundle, p1)
        save_bundle(bundle, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_file_starts_with_magic(self, tmp_path):
        path = tmp_path / "tiny.tspb"
        save_bundle(self.small_bundle(), path)
        assert path.read_bytes().startswith(BUNDLE_MAGIC)

    def test_wrong_magic_rejected(self, tmp_path):
        path = tmp_path / "bogus.tspb"
        path.write_bytes(b"NOTABUNDLE" + b"\x00" * 64)
        with pytest.raises(BundleFormatError, match="not a perceptual bundle"):
            load_bundle(path)

    def test_short_file_rejected(self, tmp_path):
        path = tmp_path / "stub.tspb"
        path.write_bytes(BUNDLE_MAGIC)
        with pytest.raises(BundleFormatError):
            load_bundle(path)

    def test_corruption_caught_by_checksum(self, tmp_path):
        path = tmp_path / "tiny.tspb"
        save_bundle(self.small_bundle(), path)
        raw = bytearray(path.read_bytes())
        raw[len(raw) // 2] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(BundleFormatError, match="checksum"):
            load_bundle(path)

    def test_truncation_caught(self, tmp_path):
        path = tmp_path / "tiny.tspb"
        save_bundle(self.small_bundle(), path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) // 2])
        with pytest.raises(BundleFormatError):
            load_bundle(path)

    def test_unknown_version_rejected(self, tmp_path):
        path = tmp_path / "tiny.tspb"
        save_bundle(self.small_bundle(), path)
        raw = bytearray(path.read_bytes())[:-4]
        struct.pack_into("<I", raw, len(BUNDLE_MAGIC), BUNDLE_VERSION + 9)
        raw += struct.pack("<I", zlib.crc32(bytes(raw)))
        path.write_bytes(bytes(raw))
        with pytest.raises(BundleFormatError, match="version"):
            load_bundle(path)
