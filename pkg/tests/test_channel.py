import numpy as np
import pytest

from spatial_holes.channel import (MultipathProfile, NoiseModel, StructuredChannel, draw_taps,
                                   freq_response)
from spatial_holes.signal import BlockVec, ConfigurationError

from conftest import cgauss


def test_profile_validation():
    assert MultipathProfile.uniform(10).tap_variances == (0.1,) * 10
    with pytest.raises(ConfigurationError):
        MultipathProfile((0.5, 0.4))


def test_noise_model_snr():
    nm = NoiseModel.from_snr_db(13.0)
    assert abs(nm.snr_db - 13.0) < 1e-9
    with pytest.raises(ConfigurationError):
        NoiseModel(0.0)


def test_draw_taps_moments(rng):
    taps = draw_taps(MultipathProfile.uniform(10), rng, size=100_000)
    per_tap = np.mean(np.abs(taps) ** 2, axis=0)
    np.testing.assert_allclose(per_tap, 0.1, atol=0.005)
    assert abs(np.mean(np.sum(np.abs(taps) ** 2, axis=1)) - 1) < 0.02
    flat = draw_taps(MultipathProfile((1.0,)), rng, size=100_000)
    assert abs(np.mean(np.abs(flat) ** 2) - 1) < 0.02


def test_freq_response_examples(rng):
    np.testing.assert_allclose(freq_response([1], 4), [1, 1, 1, 1])
    np.testing.assert_allclose(freq_response([0, 1], 4), [1, -1j, -1, 1j], atol=1e-15)
    with pytest.raises(ConfigurationError):
        freq_response(np.ones(5), 4)


def test_freq_response_matches_explicit_sum(rng):
    taps = cgauss(rng, 10)
    k = np.arange(72)[:, None]
    t = np.arange(10)[None, :]
    explicit = np.sum(taps * np.exp(-2j * np.pi * k * t / 72), axis=1)
    np.testing.assert_allclose(freq_response(taps, 72), explicit, atol=1e-12)


def test_freq_response_unit_power(rng):
    taps = draw_taps(MultipathProfile.uniform(10), rng, size=100_000)
    h = freq_response(taps, 72)
    assert np.max(np.abs(np.mean(np.abs(h) ** 2, axis=0) - 1)) < 0.02


def test_apply_examples():
    ch = StructuredChannel(np.array([[[2, 3]]]))
    np.testing.assert_allclose(ch.apply(BlockVec([[1, 1]])), [2, 3])
    assert not np.any(ch.apply(BlockVec.zeros(1, 2)))


def test_apply_matches_dense(rng):
    ch = StructuredChannel(cgauss(rng, (2, 3, 4)))
    x = BlockVec(cgauss(rng, (3, 4)))
    np.testing.assert_allclose(ch.apply(x), ch.dense() @ x.data, atol=1e-13)


def test_apply_adjoint_examples():
    ch = StructuredChannel(np.array([[[2j]]]))
    np.testing.assert_allclose(ch.apply_adjoint([1]).data, [-2j])
    assert not np.any(ch.apply_adjoint([0]).data)


def test_adjoint_identity_many(rng):
    for _ in range(100):
        ns, npu, L = rng.integers(1, [6, 9, 40])
        ch = StructuredChannel(cgauss(rng, (ns, npu, L)))
        x = BlockVec(cgauss(rng, (npu, L)))
        r = cgauss(rng, ns * L)
        lhs = np.vdot(r, ch.apply(x))
        rhs = np.vdot(ch.apply_adjoint(r).data, x.data)
        assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


def test_dimension_checks(small_channel):
    with pytest.raises(ConfigurationError):
        small_channel.apply(BlockVec.zeros(2, 4))
    with pytest.raises(ConfigurationError):
        small_channel.apply_adjoint(np.zeros(7))


def test_structure_single_user_block(rng, small_channel):
    x = np.zeros((3, 4), complex)
    x[1] = cgauss(rng, 4)
    H = small_channel.dense()
    masked = H.copy()
    masked[:, :4] = 0
    masked[:, 8:] = 0
    np.testing.assert_allclose(small_channel.apply(BlockVec(x)), masked @ x.ravel(), atol=1e-13)


def test_subcarrier_matrix(rng, small_channel):
    ch = StructuredChannel(np.array([[[5, 6]]]))
    np.testing.assert_array_equal(ch.subcarrier_matrix(1), [[6]])
    ramp = StructuredChannel(np.tile(freq_response([0, 1], 4), (2, 3, 1)))
    np.testing.assert_allclose(ramp.subcarrier_matrix(0), np.ones((2, 3)))
    for k in range(4):
        m = small_channel.subcarrier_matrix(k)
        np.testing.assert_array_equal(m, small_channel.responses[:, :, k])
    with pytest.raises(IndexError):
        small_channel.subcarrier_matrix(4)


def test_per_subcarrier_factorization(rng, small_channel):
    x = BlockVec(cgauss(rng, (3, 4)))
    y = small_channel.apply(x).reshape(2, 4)
    for k in range(4):
        np.testing.assert_allclose(y[:, k], small_channel.subcarrier_matrix(k) @ x.blocks[:, k],
                                   atol=1e-14)


def test_op_norm_sq(rng):
    ch = StructuredChannel(np.array([[[2, 3]]]))
    assert ch.op_norm_sq(tol=1e-6) == pytest.approx(9, rel=1e-5)
    assert StructuredChannel(np.ones((1, 1, 5))).op_norm_sq() == pytest.approx(1, rel=2e-3)
    ch = StructuredChannel(cgauss(rng, (3, 4, 6)))
    H = ch.dense()
    top = np.linalg.eigvalsh(H.conj().T @ H)[-1]
    est = ch.op_norm_sq(tol=1e-4)
    assert top * (1 - 1e-4) <= est <= top * (1 + 2e-4)


def test_dense_size_cap(rng):
    with pytest.raises(ConfigurationError):
        StructuredChannel(np.ones((1, 8, 129))).dense()


def test_channel_csv_roundtrip(tmp_path, small_channel):
    p = tmp_path / "h.csv"
    small_channel.to_csv(p)
    assert p.read_text().splitlines()[0] == "rx,user,subcarrier,re,im"
    back = StructuredChannel.from_csv(p)
    np.testing.assert_array_equal(back.responses, small_channel.responses)


def test_random_channel_unit_energy(rng):
    prof = MultipathProfile.uniform(10)
    acc = np.zeros(72)
    n = 0
    for _ in range(200):
        ch = StructuredChannel.random(4, 8, 72, prof, rng)
        acc += np.sum(np.abs(ch.responses) ** 2, axis=(0, 1))
        n += 32
    assert np.max(np.abs(acc / n - 1)) < 0.06
    assert abs(acc.mean() / n - 1) < 0.02
