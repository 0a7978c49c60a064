import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from osdg import detectors as d
from osdg.numerics import ContractError

from oracles import mixture_neg_log_density

logit_rows = arrays(np.float64, (6, 4), elements=st.floats(-20, 20))


class TestEnergyScore:
    def test_two_zeros(self):
        assert d.energy_score([0.0, 0.0]) == pytest.approx(-math.log(2), abs=1e-15)

    def test_margin(self):
        # a single-logit row has energy -z, so a sample trained to -7 sits below -5
        assert d.energy_score([[7.0]])[0] < -5.0

    def test_single_class_ranking(self):
        z = np.array([[3.0], [-1.0], [0.5], [10.0]])
        assert np.array_equal(np.argsort(d.energy_score(z)), np.argsort(-z[:, 0]))


class TestMSP:
    def test_uniform(self):
        assert d.msp_score([0.0, 0.0]) == pytest.approx(0.5, abs=1e-15)

    def test_confident(self):
        assert d.msp_score([100.0, 0.0]) == pytest.approx(0.0, abs=1e-40)

    def test_range(self):
        s = d.msp_score(np.random.default_rng(0).normal(size=(50, 5)) * 4)
        assert s.min() >= 0 and s.max() <= 1 - 1 / 5

    @given(logit_rows, st.floats(-100, 100))
    def test_shift_invariance(self, z, c):
        np.testing.assert_allclose(d.msp_score(z + c), d.msp_score(z), rtol=0, atol=1e-12)


@settings(max_examples=50)
@given(logit_rows, arrays(np.float64, 6, elements=st.floats(-50, 50)))
def test_rankings_invariant_to_per_sample_shift(z, c):
    shifted = z + c[:, None]
    # msp is exactly shift invariant; energy shifts by -c, so compare after undoing it
    np.testing.assert_allclose(d.msp_score(shifted), d.msp_score(z), rtol=0, atol=1e-12)
    np.testing.assert_allclose(d.energy_score(shifted) + c, d.energy_score(z), rtol=0, atol=1e-9)


class TestGaussianFit:
    def test_mean(self):
        model = d.fit_gaussian_density([[0.0, 0.0], [2.0, 2.0]], [0, 0])
        assert model.means.tolist() == [[1.0, 1.0]]

    def test_zero_scatter(self):
        model = d.fit_gaussian_density(np.ones((5, 3)), np.zeros(5, int), ridge=1e-3)
        np.testing.assert_array_equal(model.cov, 1e-3 * np.eye(3))

    def test_two_blob_means(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(40, 3)) + 5
        b = rng.normal(size=(25, 3)) - 5
        feats = np.r_[a, b]
        labels = np.r_[np.zeros(40, int), np.ones(25, int)]
        model = d.fit_gaussian_density(feats, labels)
        np.testing.assert_allclose(model.means[0], a.mean(0), rtol=0, atol=1e-9)
        np.testing.assert_allclose(model.means[1], b.mean(0), rtol=0, atol=1e-9)
        assert model.priors.sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(model.priors, [40 / 65, 25 / 65])
        assert np.array_equal(model.cov, model.cov.T)
        assert np.all(np.linalg.eigvalsh(model.cov) > 0)
        np.testing.assert_allclose(model.chol @ model.chol.T, model.cov, rtol=0, atol=1e-12)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            d.fit_gaussian_density([[0.0], [1.0], [2.0]], [0, 0, 1])

    def test_singular_advises_larger_ridge(self):
        with pytest.raises(d.NumericError, match="larger ridge"):
            d.fit_gaussian_density(np.ones((4, 2)), [0, 0, 1, 1], ridge=-1.0)

    def test_fit_idempotent(self):
        rng = np.random.default_rng(1)
        f, y = rng.normal(size=(30, 4)), rng.integers(0, 3, 30)
        a, b = d.fit_gaussian_density(f, y), d.fit_gaussian_density(f, y)
        assert a.chol.tobytes() == b.chol.tobytes() and a.means.tobytes() == b.means.tobytes()


def isotropic(mu, r):
    return d.GaussianClassDensity(np.atleast_2d(mu).astype(float), np.eye(r), np.array([1.0]),
                                  np.eye(r), np.array([0]), 0.0)


class TestGaussianScore:
    def test_standard_normal_mode(self):
        s = d.gaussian_density_score(isotropic([0.0, 0.0], 2), [0.0, 0.0])
        assert s == pytest.approx(math.log(2 * math.pi), abs=1e-12)
        assert s == pytest.approx(1.837877, abs=1e-6)

    def test_monotone_along_ray(self):
        model = isotropic([1.0, -2.0, 0.5], 3)
        direction = np.array([0.3, 0.9, -0.2])
        ts = np.linspace(0, 10, 50)
        scores = d.gaussian_density_score(model, model.means[0] + ts[:, None] * direction)
        assert np.all(np.diff(scores) > 0)

    @given(arrays(np.float64, 4, elements=st.floats(-10, 10)))
    def test_closed_form(self, x):
        model = isotropic([0.5, 0.0, -1.0, 2.0], 4)
        expected = 0.5 * np.sum((x - model.means[0]) ** 2) + 2 * math.log(2 * math.pi)
        assert d.gaussian_density_score(model, x) == pytest.approx(expected, abs=1e-9)

    def test_mixture_matches_direct_summation(self):
        rng = np.random.default_rng(2)
        feats = np.r_[rng.normal(size=(20, 3)), rng.normal(size=(30, 3)) + 2,
                      rng.normal(size=(25, 3)) - 1]
        labels = np.repeat([0, 1, 2], [20, 30, 25])
        model = d.fit_gaussian_density(feats, labels, ridge=1e-2)
        probes = rng.normal(size=(10, 3)) * 3
        got = d.gaussian_density_score(model, probes)
        for x, g in zip(probes, got):
            ref = mixture_neg_log_density(x, model.means, model.cov, model.priors)
            assert g == pytest.approx(ref, abs=1e-9)

    def test_far_points_stay_finite(self):
        s = d.gaussian_density_score(isotropic([0.0], 1), [[1e4]])
        assert np.isfinite(s).all()


class TestDetectorInterface:
    def test_no_fit_detectors_reject_state(self):
        for kind in ("energy", "msp"):
            det = d.make_detector(kind)
            assert not det.requires_fit
            with pytest.raises(ContractError):
                det.fit(np.zeros((2, 2)), [0, 1])
            with pytest.raises(ContractError):
                det.state

    def test_ddu_before_fit(self):
        with pytest.raises(ContractError):
            d.make_detector("ddu").score(np.zeros((1, 2)), None)

    def test_ddu_repeat_scoring_bit_identical(self):
        rng = np.random.default_rng(0)
        det = d.make_detector("gaussian_density", ridge=1e-2).fit(rng.normal(size=(40, 3)),
                                                                  rng.integers(0, 2, 40))
        x = rng.normal(size=(7, 3))
        assert det.kind == "ddu"
        assert det.score(x, None).tobytes() == det.score(x, None).tobytes()

    def test_ocsvm_slot(self):
        with pytest.raises(NotImplementedError):
            d.make_detector("ocsvm").fit(np.zeros((2, 2)), [0, 1])

    def test_unknown(self):
        with pytest.raises(ValueError):
            d.make_detector("knn")


class TestFeatureDump:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        labels, feats, logits = rng.integers(-1, 5, 9), rng.normal(size=(9, 6)), rng.normal(size=(9, 5))
        d.write_feature_dump(tmp_path / "f.bin", labels, feats, logits)
        back = d.read_feature_dump(tmp_path / "f.bin")
        assert np.array_equal(back[0], labels)
        assert back[1].tobytes() == feats.tobytes() and back[2].tobytes() == logits.tobytes()

    def test_layout(self, tmp_path):
        d.write_feature_dump(tmp_path / "f.bin", [-1], [[1.5, 2.0]], [[0.25]])
        raw = (tmp_path / "f.bin").read_bytes()
        assert raw[:12] == (1).to_bytes(4, "little") + (2).to_bytes(4, "little") + (1).to_bytes(4, "little")
        assert raw[12:16] == (-1).to_bytes(4, "little", signed=True)
        assert np.frombuffer(raw[16:], "<f8").tolist() == [1.5, 2.0, 0.25]

    def test_truncated(self, tmp_path):
        d.write_feature_dump(tmp_path / "f.bin", [0], [[1.0]], [[1.0]])
        (tmp_path / "g.bin").write_bytes((tmp_path / "f.bin").read_bytes()[:-3])
        with pytest.raises(ValueError):
            d.read_feature_dump(tmp_path / "g.bin")
