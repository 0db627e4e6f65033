import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from avfce.channels import make_dataset
from avfce.estimators import AVFEstimator, LMMSEEstimator, LSEstimator
from avfce.signal import complex_awgn
from avfce.validation import check_channels, check_nfe, check_noise_variance


@pytest.fixture(scope="module")
def data():
    H = make_dataset("gaussian", 64, 0, 4, 4).samples
    noisy = H + complex_awgn(H.shape, 0.1, np.random.default_rng(0))
    return H, noisy


@pytest.fixture(scope="module")
def fitted_avf(data):
    return AVFEstimator(hidden_planes=4, iterations=3, batch_size=4, lr=1e-3, warmup_steps=0,
                        log_every=0).fit(data[0])


def test_ls_estimator(data):
    H, noisy = data
    est = LSEstimator().fit(H)
    np.testing.assert_array_equal(est.predict(noisy), noisy)
    assert est.score(noisy, H) == pytest.approx(10.0, abs=0.5)


def test_lmmse_estimator_params_and_prediction(data):
    H, noisy = data
    est = LMMSEEstimator(noise_variance=0.1, covariance="identity")
    assert est.get_params() == {"noise_variance": 0.1, "covariance": "identity"}
    est.fit(H)
    np.testing.assert_allclose(est.predict(noisy), noisy / 1.1, atol=1e-14)
    np.testing.assert_allclose(est.predict(noisy, noise_variance=1.0), noisy / 2.0, atol=1e-14)


def test_lmmse_requires_noise_variance(data):
    est = LMMSEEstimator().fit(data[0])
    with pytest.raises(ValueError, match="noise_variance"):
        est.predict(data[1])


def test_not_fitted():
    with pytest.raises(NotFittedError):
        LMMSEEstimator(noise_variance=0.1).predict(np.zeros((1, 2, 2)))
    with pytest.raises(NotFittedError):
        AVFEstimator().predict(np.zeros((1, 2, 2)))


def test_avf_get_set_params_and_clone():
    est = AVFEstimator(mix_ratio=0.0, nfe=4)
    params = est.get_params()
    assert params["mix_ratio"] == 0.0 and params["nfe"] == 4 and params["lr_schedule"] == "constant"
    twin = clone(est).set_params(nfe=2)
    assert twin.nfe == 2 and est.nfe == 4


def test_avf_fit_predict(fitted_avf, data):
    H, noisy = data
    assert len(fitted_avf.loss_curve_) == 3
    out = fitted_avf.predict(noisy)
    assert out.shape == noisy.shape and np.iscomplexobj(out)
    assert fitted_avf.predict(noisy[0]).shape == (1, 4, 4)
    assert np.isfinite(fitted_avf.score(noisy, H))


def test_avf_predict_takes_no_noise_level(fitted_avf, data):
    with pytest.raises(TypeError):
        fitted_avf.predict(data[1], noise_variance=0.1)


def test_avf_shape_guard(fitted_avf):
    with pytest.raises(ValueError, match="antenna shape"):
        fitted_avf.predict(np.zeros((1, 4, 8)))


def test_avf_checkpoint_roundtrip(fitted_avf, data):
    ckpt = fitted_avf.to_checkpoint()
    back = AVFEstimator.from_checkpoint(ckpt, nfe=1)
    np.testing.assert_array_equal(back.predict(data[1]), fitted_avf.predict(data[1]))
    assert back.get_params()["hidden_planes"] == 4


def test_validation_helpers():
    assert check_channels(np.ones((2, 3))).shape == (1, 2, 3)
    with pytest.raises(TypeError):
        check_channels(np.array(["a"]))
    with pytest.raises(ValueError, match="NaN"):
        check_channels(np.full((1, 2, 2), np.nan))
    with pytest.raises(ValueError, match="empty"):
        check_channels(np.zeros((0, 2, 2)))
    with pytest.raises(ValueError):
        check_noise_variance(-1)
    assert check_nfe(3.0) == 3
    with pytest.raises(ValueError):
        check_nfe(0)
