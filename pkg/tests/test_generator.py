import inspect

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from osdg import numerics as nx
from osdg.datasets import ColoredSample, SplitSpec, colorize, make_split
from osdg.generator import (BlendLaw, BlendSpec, DegenerateInputError, GeneratorTrainConfig,
                            LearnedGenerator, OracleGenerator, blend_semantics,
                            palette_from_normal, reconstruction_error, train_generator)
from osdg.glyphs import render_digit

G = OracleGenerator()
palettes = st.tuples(*[st.floats(0, 1) for _ in range(3)]).filter(lambda p: max(p) > 1e-3)


def glyph(digit, seed=0):
    return render_digit(digit, np.random.default_rng(seed)) / 255.0


@pytest.fixture(scope="module")
def small_splits(raw_digits):
    return make_split(raw_digits, SplitSpec(n_train=800, n_test=100, n_val=200, seed=5))


@pytest.fixture(scope="module")
def learned(small_splits):
    return train_generator(small_splits["train"].images,
                           GeneratorTrainConfig(hidden=128, epochs=2, seed=1))


class TestOracleEncoders:
    def test_red_glyph_recovers_gray(self):
        g = glyph(3)
        np.testing.assert_allclose(G.encode_semantic(colorize(g, (1, 0, 0))), g,
                                   rtol=0, atol=1e-12)

    def test_black_gives_zero_code(self):
        assert not G.encode_semantic(np.zeros((3, 28, 28))).any()

    def test_two_colorizations_same_code(self):
        g = glyph(5)
        a = G.encode_semantic(colorize(g, (1, 0, 0)))
        b = G.encode_semantic(colorize(g, (0, 1, 0)))
        assert np.array_equal(a, b)

    def test_known_palette_rescales(self):
        g = glyph(2)
        s = G.encode_semantic(colorize(g, (0.5, 0.25, 0)), palette=(0.5, 0.25, 0))
        np.testing.assert_allclose(s, g, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("palette", [(1, 0, 0), (0, 1, 0), (0.5, 0.5, 0), (0.2, 0.4, 0.8)])
    def test_variation_proportional_to_palette(self, palette):
        x = colorize(glyph(8), palette)
        # direct oracle: average the foreground pixels by hand
        fg = x.max(axis=0) > 0
        direct = np.array([x[c][fg].mean() for c in range(3)])
        v = G.encode_variation(x)
        np.testing.assert_allclose(v, direct / direct.max(), rtol=0, atol=1e-12)
        np.testing.assert_allclose(v, np.array(palette) / max(palette), rtol=0, atol=1e-12)

    def test_variation_of_black_is_degenerate(self):
        with pytest.raises(DegenerateInputError):
            G.encode_variation(np.zeros((3, 28, 28)))


class TestOracleDecode:
    @settings(max_examples=40)
    @given(palettes, st.integers(0, 9), st.integers(0, 200))
    def test_round_trip(self, palette, digit, seed):
        x = colorize(glyph(digit, seed), palette)
        back = G.decode(G.encode_semantic(x), G.encode_variation(x))
        np.testing.assert_allclose(back, x, rtol=0, atol=1e-12)

    def test_zero_code_is_black(self):
        assert not G.decode(np.zeros((28, 28)), (0.3, 1, 0)).any()

    def test_white_palette_is_grayscale(self):
        s = glyph(4)
        out = G.decode(s, (1, 1, 1))
        for c in range(3):
            assert np.array_equal(out[c], s)

    def test_flat_code_accepted(self):
        s = glyph(4)
        assert np.array_equal(G.decode(s.reshape(-1), (1, 0, 0)), G.decode(s, (1, 0, 0)))

    def test_clamps(self):
        out = G.decode(np.full((28, 28), 3.0), (1, 0.5, 0))
        assert out.max() == 1.0 and out.min() == 0.0


class TestDomainTransfer:
    @settings(max_examples=25)
    @given(palettes, st.integers(0, 9), st.integers(0, 2**32 - 1))
    def test_semantics_preserved(self, palette, digit, seed):
        x = colorize(glyph(digit), palette)
        y = G.domain_transfer(x, np.random.default_rng(seed))
        np.testing.assert_allclose(G.encode_semantic(y), G.encode_semantic(x), rtol=0, atol=1e-12)

    def test_variation_matches_sampled_palette(self):
        x = colorize(glyph(6), (0, 1, 0))
        y = G.domain_transfer(x, np.random.default_rng(9))
        expected = palette_from_normal(np.random.default_rng(9).standard_normal((1, 3)))[0]
        np.testing.assert_allclose(G.encode_variation(y), expected, rtol=0, atol=1e-6)

    def test_deterministic(self):
        x = colorize(glyph(1), (1, 0, 0))
        a = G.domain_transfer(x, nx.rng_stream(4))
        b = G.domain_transfer(x, nx.rng_stream(4))
        assert a.tobytes() == b.tobytes()

    def test_palette_from_normal(self):
        p = palette_from_normal(np.array([[-2.0, 1.0, 0.5]]))
        assert p.tolist() == [[1.0, 0.5, 0.25]]


class TestBlend:
    def test_identity_bit_exact(self):
        s1 = np.random.default_rng(0).normal(size=784)
        out = blend_semantics(s1, np.ones(784), BlendSpec(1.0, 0.0))
        assert out.tobytes() == s1.tobytes()

    def test_half_half(self):
        out = blend_semantics([2.0, 0.0], [0.0, 2.0], BlendSpec(0.5, 0.5))
        assert out.tolist() == [1.0, 1.0]

    @given(arrays(np.float64, 16, elements=st.floats(-10, 10)),
           arrays(np.float64, 16, elements=st.floats(-10, 10)),
           *[st.floats(-50, 50) for _ in range(4)])
    def test_linearity(self, s1, s2, a, b, a2, b2):
        lhs = (blend_semantics(s1, s2, BlendSpec(a, b))
               + blend_semantics(s1, s2, BlendSpec(a2, b2)))
        rhs = blend_semantics(s1, s2, BlendSpec(a + a2, b + b2))
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(nx.ShapeError):
            blend_semantics(np.zeros(3), np.zeros(4), BlendSpec(1, 1))

    def test_range_enforced(self):
        with pytest.raises(ValueError):
            BlendSpec(101.0, 0.0)

    def test_law_respects_ranges(self):
        law = BlendLaw()
        a, b = law.draw(np.random.default_rng(0), 5000)
        mags = np.abs(np.concatenate([a, b]))
        assert mags.min() >= 0.25 and mags.max() <= 4.0
        assert 0.4 < (a > 0).mean() < 0.6
        # log-uniform: median magnitude is the geometric mean of the bounds
        assert np.median(mags) == pytest.approx(1.0, abs=0.1)

    def test_uniform_law_clipped_ranges(self):
        law = BlendLaw("uniform", alpha_range=(-2, 3), beta_range=(0, 1))
        a, b = law.draw(np.random.default_rng(0), 1000)
        assert a.min() >= -2 and a.max() <= 3 and b.min() >= 0 and b.max() <= 1

    def test_unknown_law(self):
        with pytest.raises(ValueError):
            BlendLaw("gaussian")


class TestSynthOod:
    def sample(self, digit, palette, label=None, seed=0):
        return ColoredSample(colorize(glyph(digit, seed), palette),
                             digit if label is None else label, 0)

    def test_same_label_rejected(self):
        with pytest.raises(nx.ContractError):
            G.synth_ood(self.sample(3, (1, 0, 0)), self.sample(3, (0, 1, 0), seed=1),
                        nx.rng_stream(0))

    def test_ood_input_rejected(self):
        with pytest.raises(nx.ContractError):
            G.synth_ood(self.sample(3, (1, 0, 0)), self.sample(5, (1, 0, 0), label=-1),
                        nx.rng_stream(0))

    def test_identity_draw_is_transfer(self):
        law = BlendLaw(magnitude=(1.0, 1.0), alpha_range=(1.0, 1.0), beta_range=(0.0, 0.0))
        x1, x2 = self.sample(3, (1, 0, 0)), self.sample(5, (0, 1, 0))
        out = G.synth_ood(x1, x2, nx.rng_stream(2), law)
        np.testing.assert_allclose(G.encode_semantic(out), G.encode_semantic(x1.image),
                                   rtol=0, atol=1e-12)

    def test_deterministic_batch(self, small_splits):
        tr = small_splits["train"].subset(slice(0, 32))
        a = G.synth_ood_batch(tr.images, tr.labels, nx.rng_stream(1))
        b = G.synth_ood_batch(tr.images, tr.labels, nx.rng_stream(1))
        assert a.tobytes() == b.tobytes()
        assert a.min() >= 0 and a.max() <= 1

    def test_single_label_batch_rejected(self):
        x = np.stack([colorize(glyph(1, s), (1, 0, 0)) for s in range(3)])
        with pytest.raises(nx.ContractError):
            G.synth_ood_batch(x, np.zeros(3, int), nx.rng_stream(0))

    def test_blend_is_far_from_every_glyph(self, raw_digits):
        # exhaustive scan over 100 ID glyphs, compared in semantic space
        ref = raw_digits.images[:100]
        x3 = colorize(raw_digits.images[np.flatnonzero(raw_digits.labels == 3)[0]], (1, 0, 0))
        x5 = colorize(raw_digits.images[np.flatnonzero(raw_digits.labels == 5)[0]], (0, 1, 0))
        synth = G.synth_ood(ColoredSample(x3, 3, 0), ColoredSample(x5, 5, 1), nx.rng_stream(3))
        s = G.encode_semantic(synth)
        nearest = np.abs(ref - s).sum(axis=(1, 2)).min()
        g = raw_digits.images[0]
        same_glyph = np.abs(G.encode_semantic(colorize(g, (1, 0, 0)))
                            - G.encode_semantic(colorize(g, (0, 0, 1)))).sum()
        assert nearest > same_glyph
        # and far in an absolute sense: more than a tenth of a glyph's ink
        assert nearest > 0.1 * ref.sum(axis=(1, 2)).mean()


class TestLearned:
    def test_reconstruction(self, learned, small_splits):
        held_out = small_splits["val"].images
        err = reconstruction_error(learned, held_out)
        assert err <= 0.05
        # better than predicting an all-black image
        assert err < np.abs(held_out).mean()

    def test_returned_frozen(self, learned):
        assert learned.frozen
        assert all(not p.requires_grad for p in learned.parameters())

    def test_pca_start_is_exact_linear_autoencoder(self, small_splits):
        x = small_splits["train"].images[:200]
        Gl = LearnedGenerator(semantic_dim=4, variation_dim=2, hidden=16).init_from_pca(x)
        flat = x.reshape(len(x), -1)
        mu = flat.mean(0)
        _, _, vt = np.linalg.svd(flat - mu, full_matrices=False)
        manual = (flat - mu) @ vt[:6].T @ vt[:6] + mu
        out = Gl._decode(*Gl._encode(nx.Tensor(flat))).data
        np.testing.assert_allclose(out, manual, rtol=0, atol=1e-9)

    def test_pca_needs_room(self):
        with pytest.raises(ValueError):
            LearnedGenerator(semantic_dim=32, variation_dim=8, hidden=64).init_from_pca(
                np.zeros((3, 3, 28, 28)))

    def test_same_signatures_as_oracle(self):
        for name in ("encode_semantic", "encode_variation", "decode", "domain_transfer",
                     "synth_ood", "synth_ood_batch", "sample_variation"):
            assert hasattr(LearnedGenerator, name)
            lp = list(inspect.signature(getattr(LearnedGenerator, name)).parameters)
            op = list(inspect.signature(getattr(OracleGenerator, name)).parameters)
            assert op[:len(lp)] == lp

    def test_shapes(self, learned, small_splits):
        x = small_splits["train"].images[:5]
        s, v = learned.encode_semantic(x), learned.encode_variation(x)
        assert s.shape == (5, 32) and v.shape == (5, 8)
        assert learned.decode(s, v).shape == (5, 3, 28, 28)
        assert learned.domain_transfer(x[0], nx.rng_stream(0)).shape == (3, 28, 28)

    def test_state_round_trip(self, learned, small_splits):
        clone = LearnedGenerator.from_state(learned.state())
        x = small_splits["val"].images[:4]
        assert np.array_equal(clone.decode(clone.encode_semantic(x), clone.encode_variation(x)),
                              learned.decode(learned.encode_semantic(x),
                                             learned.encode_variation(x)))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_raises(self, small_splits):
        cfg = GeneratorTrainConfig(hidden=96, epochs=1, lr=1e12, pca_init=False)
        with pytest.raises(nx.TrainingError):
            train_generator(small_splits["train"].images[:256], cfg)
