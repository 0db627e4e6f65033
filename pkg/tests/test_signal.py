import numpy as np
import pytest

from avfce.channels import steering_vector
from avfce.signal import (
    PilotMatrix,
    SnrSpec,
    complex_awgn,
    from_angular,
    ls_decorrelate,
    pack,
    to_angular,
    transmit,
    unpack,
)


def cn(shape, rng):
    return np.sqrt(0.5) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def test_snr_bookkeeping():
    assert SnrSpec(10.0).noise_variance == pytest.approx(0.1)
    assert SnrSpec(-10.0).snr_linear == pytest.approx(0.1)
    assert SnrSpec(float("inf")).noise_variance == 0.0


@pytest.mark.parametrize("n", [1, 4, 64])
def test_dft_and_identity_pilots_are_unitary(n):
    assert PilotMatrix.dft(n).unitary
    assert PilotMatrix.identity(n).unitary


def test_non_unitary_pilot_rejected_by_decorrelation(rng):
    pilots = PilotMatrix(2.0 * np.eye(4))
    assert not pilots.unitary
    with pytest.raises(ValueError, match="unitary"):
        ls_decorrelate(np.zeros((2, 4)), pilots)


def test_tall_pilot_block(rng):
    # Np > Ntx with orthonormal rows is still unitary in the P P^H = I sense
    q, _ = np.linalg.qr(cn((6, 6), rng))
    pilots = PilotMatrix(q[:4])
    assert pilots.unitary and pilots.n_pilots == 6
    H = cn((3, 4), rng)
    Y = transmit(H, pilots, SnrSpec(float("inf")), rng)
    np.testing.assert_allclose(ls_decorrelate(Y, pilots), H, atol=1e-10)


def test_noiseless_identity_transmit_is_exact(rng):
    H = cn((3, 5), rng)
    Y = transmit(H, PilotMatrix.identity(5), SnrSpec(float("inf")), rng)
    np.testing.assert_array_equal(Y, H)


def test_transmit_dimension_mismatch(rng):
    with pytest.raises(ValueError, match="tx antennas"):
        transmit(np.zeros((2, 3)), PilotMatrix.identity(4), SnrSpec(0.0), rng)


def test_transmit_noise_power(rng):
    H = cn((10_000, 4, 8), rng)
    pilots = PilotMatrix.dft(8)
    Y = transmit(H, pilots, SnrSpec(5.0), rng)
    measured = np.mean(np.abs(Y - H @ pilots.P) ** 2)
    assert abs(measured / SnrSpec(5.0).noise_variance - 1) < 0.02


def test_noise_entries_uncorrelated(rng):
    N = complex_awgn((100_000, 2, 2), 0.3, rng).reshape(100_000, 4)
    corr = (N.conj().T @ N) / len(N) / 0.3
    off = corr[~np.eye(4, dtype=bool)]
    assert np.max(np.abs(off)) < 0.01
    # circular symmetry: pseudo-covariance vanishes
    assert abs(np.mean(N[:, 0] ** 2)) / 0.3 < 0.01


@pytest.mark.parametrize("pilots", [PilotMatrix.identity(8), PilotMatrix.dft(8)], ids=["identity", "dft"])
def test_decorrelate_noiseless_recovers_channel(pilots, rng):
    H = cn((3, 4, 8), rng)
    Y = transmit(H, pilots, SnrSpec(float("inf")), rng)
    np.testing.assert_allclose(ls_decorrelate(Y, pilots), H, rtol=0, atol=1e-10)


def test_identity_pilot_decorrelation_is_passthrough(rng):
    Y = cn((4, 6), rng)
    np.testing.assert_array_equal(ls_decorrelate(Y, PilotMatrix.identity(6)), Y)


def test_decorrelated_noise_stays_white(rng):
    pilots = PilotMatrix.dft(16)
    sigma2 = SnrSpec(0.0).noise_variance
    H = cn((10_000, 4, 16), rng)
    err = ls_decorrelate(transmit(H, pilots, SnrSpec(0.0), rng), pilots) - H
    assert abs(np.mean(np.abs(err) ** 2) / sigma2 - 1) < 0.02


def test_angular_transform_is_unitary(rng):
    H = cn((5, 16, 64), rng)
    A = to_angular(H)
    np.testing.assert_allclose(np.linalg.norm(A, axis=(-2, -1)), np.linalg.norm(H, axis=(-2, -1)), rtol=1e-10)
    np.testing.assert_allclose(from_angular(A), H, rtol=0, atol=1e-10)
    np.testing.assert_allclose(to_angular(from_angular(H)), H, rtol=0, atol=1e-10)
    np.testing.assert_allclose(
        np.linalg.norm(from_angular(H), axis=(-2, -1)), np.linalg.norm(H, axis=(-2, -1)), rtol=1e-10
    )


def test_angular_matches_explicit_dft_matrices(rng):
    H = cn((4, 8), rng)

    def F(n):
        k = np.arange(n)
        return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)

    np.testing.assert_allclose(to_angular(H), F(4) @ H @ F(8).T, atol=1e-12)


def test_on_grid_rank_one_has_single_angular_coefficient():
    n_rx, n_tx = 8, 16
    a = steering_vector(n_rx, np.arcsin(2 * 3 / n_rx))
    b = steering_vector(n_tx, np.arcsin(2 * -5 / n_tx))
    A = to_angular(np.outer(a, b.conj()))
    mags = np.abs(A).ravel()
    top = np.argmax(mags)
    assert mags[top] == pytest.approx(np.sqrt(n_rx * n_tx))
    assert np.max(np.delete(mags, top)) < 1e-10 * mags[top]
    # and the inverse maps a single bin back to the outer product
    B = np.zeros_like(A)
    B.ravel()[top] = A.ravel()[top]
    np.testing.assert_allclose(from_angular(B), np.outer(a, b.conj()), atol=1e-10)


def test_pack_roundtrip(rng):
    H = cn((3, 4, 5), rng)
    X = pack(H)
    assert X.shape == (3, 2, 4, 5) and X.dtype == np.float64
    np.testing.assert_array_equal(X[:, 0], H.real)
    np.testing.assert_array_equal(unpack(X), H)
    with pytest.raises(ValueError, match="2 planes"):
        unpack(np.zeros((3, 4, 5)))
