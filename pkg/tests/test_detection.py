import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfidd.detection import (RECEIVER_MODES, SoftSymbolState, StackedModel, detect_all,
                             interference_covariance, mmse_filter, modified_pic_detect,
                             receiver_soft_state)
from cfidd.modem import qpsk


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_model(seed, NL=8, K=2, M=1, s2=0.3):
    rng = np.random.default_rng(seed)
    return rng, StackedModel(crandn(rng, NL, K + M), s2, K)


def test_scalar_wiener_filter():
    A = np.zeros((3, 1), complex)
    A[0, 0] = 1.0
    w = mmse_filter(StackedModel(A, 1.0, 1), 0, [1.0])
    np.testing.assert_allclose(w, [0.5, 0, 0], atol=1e-15)


def test_no_interference_reduces_to_sherman_morrison():
    rng, model = random_model(1, NL=6, K=2, M=2, s2=0.4)
    w = mmse_filter(model, 1, np.zeros(4))
    a = model.A[:, 1]
    ref = a / (0.4 + np.vdot(a, a).real)
    np.testing.assert_allclose(w, ref, rtol=1e-12)


def test_filter_matches_dense_solve():
    rng, model = random_model(2, NL=8, K=2, M=1)
    v = rng.uniform(0.1, 1.0, 3)
    for d in range(3):
        C = model.noise_var * np.eye(8, dtype=complex)
        for i in range(3):
            a = model.A[:, i]
            C += (1.0 if i == d else v[i]) * np.outer(a, a.conj())
        ref = np.linalg.lstsq(C, model.A[:, d], rcond=None)[0]
        np.testing.assert_allclose(mmse_filter(model, d, v), ref, rtol=1e-9)


def test_perfect_priors_cancel_exactly():
    rng, model = random_model(3, NL=8, K=3, M=2, s2=0.0)
    r = qpsk().points[rng.integers(0, 4, 5)]
    y = model.A @ r
    soft = SoftSymbolState(r.copy(), np.zeros(5))
    for d in range(5):
        w = mmse_filter(model, d, soft.variances + 1e-3)
        out = modified_pic_detect(model, y, d, soft, w)
        assert out.r_tilde == pytest.approx(out.mu * r[d], abs=1e-12)


def test_zero_priors_is_linear_mmse():
    rng, model = random_model(4)
    y = crandn(rng, 8)
    soft = SoftSymbolState.no_prior(3)
    w = mmse_filter(model, 0, soft.variances)
    out = modified_pic_detect(model, y, 0, soft, w)
    assert out.r_tilde == pytest.approx(np.vdot(w, y), abs=1e-14)


def test_pic_output_term_by_term():
    rng, model = random_model(5, NL=6, K=2, M=2)
    y = crandn(rng, 6)
    means = crandn(rng, 4)
    var = rng.uniform(0, 1, 4)
    soft = SoftSymbolState(means, var)
    d = 2
    w = mmse_filter(model, d, var)
    out = modified_pic_detect(model, y, d, soft, w)
    r_tilde = np.vdot(w, y)
    for i in range(4):
        if i != d:
            r_tilde -= np.vdot(w, model.A[:, i]) * means[i]
    sigma = model.noise_var * np.vdot(w, w).real
    for i in range(4):
        if i != d:
            sigma += var[i] * abs(np.vdot(w, model.A[:, i])) ** 2
    assert out.r_tilde == pytest.approx(r_tilde, abs=1e-12)
    assert out.mu == pytest.approx(np.vdot(w, model.A[:, d]), abs=1e-14)
    assert out.sigma_z2 == pytest.approx(sigma, rel=1e-12)


def reference_detect(model, Y, soft, mode):
    soft = receiver_soft_state(mode, soft, model.K)
    S, T = soft.means.shape
    out = np.zeros((3, S, T), complex)
    for t in range(T):
        st_t = SoftSymbolState(soft.means[:, t], soft.variances[:, t])
        for d in range(S):
            w = mmse_filter(model, d, st_t.variances)
            o = modified_pic_detect(model, Y[:, t], d, st_t, w)
            out[:, d, t] = o.r_tilde, o.mu, o.sigma_z2
    return out


@pytest.mark.parametrize("mode", RECEIVER_MODES)
def test_batched_detector_matches_reference(mode):
    rng, model = random_model(6, NL=4, K=2, M=1, s2=0.2)
    T = 7
    Y = crandn(rng, 4, T)
    soft = SoftSymbolState(0.5 * crandn(rng, 3, T), rng.uniform(0.01, 1.0, (3, T)))
    got = detect_all(model, Y, soft, mode)
    ref = reference_detect(model, Y, soft, mode)
    np.testing.assert_allclose(got.r_tilde, ref[0], rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(got.mu, ref[1], rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(got.sigma_z2, ref[2].real, rtol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 3), st.integers(0, 3))
def test_batched_detector_property(seed, K, M):
    rng, model = random_model(seed, NL=6, K=K, M=M, s2=0.5)
    S = K + M
    Y = crandn(rng, 6, 3)
    soft = SoftSymbolState(crandn(rng, S, 3), rng.uniform(0, 1, (S, 3)))
    got = detect_all(model, Y, soft)
    ref = reference_detect(model, Y, soft, "modified_pic_icl_ocl")
    np.testing.assert_allclose(got.r_tilde, ref[0], rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(got.sigma_z2, ref[2].real, rtol=1e-8, atol=1e-12)


def test_without_ocl_pic_variants_coincide():
    rng, model = random_model(7, NL=6, K=3, M=0)
    Y = crandn(rng, 6, 5)
    soft = SoftSymbolState(crandn(rng, 3, 5), rng.uniform(0, 1, (3, 5)))
    a = detect_all(model, Y, soft, "pic_icl")
    b = detect_all(model, Y, soft, "modified_pic_icl_ocl")
    np.testing.assert_array_equal(a.r_tilde, b.r_tilde)
    np.testing.assert_array_equal(a.sigma_z2, b.sigma_z2)


def test_perfect_priors_high_snr_decisions_exact():
    rng, model = random_model(8, NL=16, K=4, M=2, s2=1e-12)
    const = qpsk()
    r = const.points[rng.integers(0, 4, (6, 50))]
    Y = model.A @ r + np.sqrt(1e-12) * crandn(rng, 16, 50)
    out = detect_all(model, Y, SoftSymbolState(r, np.zeros((6, 50))))
    est = out.r_tilde / out.mu
    dec = const.points[np.argmin(np.abs(est[..., None] - const.points), axis=-1)]
    np.testing.assert_array_equal(dec, r)
    assert np.all(np.abs(out.mu) ** 2 / out.sigma_z2 > 1e8)


def test_noise_floor_on_post_filter_variance():
    rng, model = random_model(9, NL=6, K=2, M=2)
    v = rng.uniform(0.1, 1, 4)
    w = mmse_filter(model, 0, v)
    out = modified_pic_detect(model, np.zeros(6), 0, SoftSymbolState(np.zeros(4), v), w)
    assert out.sigma_z2 > model.noise_var * np.vdot(w, w).real
    v0 = np.zeros(4)
    out0 = modified_pic_detect(model, np.zeros(6), 0, SoftSymbolState(np.zeros(4), v0), w)
    assert out0.sigma_z2 == pytest.approx(model.noise_var * np.vdot(w, w).real, rel=1e-12)


def test_mmse_filter_is_locally_optimal():
    rng, model = random_model(10, NL=5, K=2, M=1, s2=0.3)
    S, d, n = 3, 0, 10000
    var = np.array([1.0, 0.4, 0.7])
    means = 0.5 * crandn(rng, S)
    means[d] = 0
    # matched statistics: interferers are their mean plus residual of the stated energy
    r = means[:, None] + np.sqrt(var)[:, None] * crandn(rng, S, n)
    r[d] = crandn(rng, n)
    y = model.A @ r + np.sqrt(model.noise_var) * crandn(rng, 5, n)
    clean = y - model.A @ np.where(np.arange(S) == d, 0, means)[:, None]
    w = mmse_filter(model, d, var)

    def mse(v):
        return np.mean(np.abs(r[d] - v.conj() @ clean) ** 2)

    best = mse(w)
    for _ in range(100):
        delta = 0.05 * np.linalg.norm(w) * crandn(rng, 5)
        assert mse(w + delta) >= best - 3e-3 * best


def test_sinr_drops_when_interference_grows():
    rng, model = random_model(11, NL=6, K=3, M=2)
    for _ in range(50):
        v = rng.uniform(0, 1, 5)
        i = rng.integers(1, 5)
        bigger = v.copy()
        bigger[i] += rng.uniform(0.01, 1)

        def sinr(var):
            w = mmse_filter(model, 0, var)
            mu = np.vdot(w, model.A[:, 0])
            Q = interference_covariance(model, 0, var)
            return abs(mu) ** 2 / np.vdot(w, Q @ w).real

        assert sinr(bigger) <= sinr(v) * (1 + 1e-12)


def test_receiver_views():
    soft = SoftSymbolState(np.ones(4, complex), np.full(4, 0.2))
    lin = receiver_soft_state("linear_icl_ocl", soft, 2)
    np.testing.assert_array_equal(lin.means, 0)
    np.testing.assert_array_equal(lin.variances, 1)
    pic = receiver_soft_state("pic_icl", soft, 2)
    np.testing.assert_array_equal(pic.means, [1, 1, 0, 0])
    np.testing.assert_array_equal(pic.variances, [0.2, 0.2, 1, 1])
    with pytest.raises(ValueError):
        receiver_soft_state("sic", soft, 2)
