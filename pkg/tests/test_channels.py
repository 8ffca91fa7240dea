import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from symdet.channels import (BPSK, OOK, Constellation, Dataset, FmChannel, MimoChannel, build_spatial_H,
                             db_to_linear, exp_decay_taps, export_dataset_csv, fm_loglik, fm_loglik_table,
                             fm_sample, gen_dataset, mimo_sample, perturb_H, perturb_taps,
                             perturbed_channel, read_observations_csv, read_taps, snr_to_noise_var,
                             state_from_symbols, state_labels, state_symbols, write_taps)
from symdet.numkit import LOG_2PI


class ZeroNoise:
    """Stand-in generator whose Gaussian draws are all zero."""

    def standard_normal(self, shape=None):
        return np.zeros(shape)


def test_constellation_validation():
    assert BPSK.M == 2 and OOK.points == (0.0, 1.0)
    with pytest.raises(ValueError):
        Constellation((1.0,))
    with pytest.raises(ValueError):
        Constellation((1.0, 1.0))
    np.testing.assert_array_equal(BPSK.index_of([-1, 1, 1]), [0, 1, 1])


@pytest.mark.parametrize("gamma", [0.1, 0.2, 1.0, 2.0])
def test_exp_decay_first_tap_is_one(gamma):
    assert exp_decay_taps(5, gamma)[0] == 1.0


def test_exp_decay_examples():
    np.testing.assert_allclose(exp_decay_taps(4, math.log(2)), [1, 0.5, 0.25, 0.125], rtol=1e-15)
    np.testing.assert_allclose(exp_decay_taps(4, 0.2), [math.exp(-0.2 * t) for t in range(4)], rtol=1e-15)
    with pytest.raises(ValueError):
        exp_decay_taps(4, 0.0)
    with pytest.raises(ValueError):
        exp_decay_taps(0, 1.0)


def test_tap_file_round_trip(tmp_path):
    taps = np.array([1.0, 0.3, -0.125])
    write_taps(tmp_path / "h.txt", taps)
    np.testing.assert_array_equal(read_taps(tmp_path / "h.txt"), taps)


def test_state_indexing_is_little_endian():
    tab = state_symbols(2, 3)
    # state 1 = newest symbol is index 1, older ones index 0
    np.testing.assert_array_equal(tab[1], [1, 0, 0])
    assert state_from_symbols([0, 0, 1], 2) == 1
    assert state_from_symbols([1, 0, 0], 2) == 4
    for u in range(8):
        assert state_from_symbols(tab[u][::-1], 2) == u


def test_state_labels_use_prehistory_padding():
    labels = state_labels(np.array([1, 0, 1]), 2, 3)[0]
    # i=1: [pad, pad, 1] -> 1; i=2: [pad, 1, 0] -> 2; i=3: [1, 0, 1] -> 5
    np.testing.assert_array_equal(labels, [1, 2, 5])


def test_fm_sample_deterministic_part():
    ch = FmChannel("awgn", [1.0], 4.0)
    assert fm_sample(ch, np.array([1]), ZeroNoise())[0] == pytest.approx(2.0)


def test_fm_sample_noiseless_isi_matches_convolution():
    ch = FmChannel("awgn", [1.0, 0.5, 0.25], 1.0)
    s = np.array([1, 0, 1, 1])
    v = BPSK.values[s]
    x = np.concatenate([[-1.0, -1.0], v])
    expect = [x[i + 2] + 0.5 * x[i + 1] + 0.25 * x[i] for i in range(4)]
    np.testing.assert_allclose(fm_sample(ch, s, None, noiseless=True), expect, atol=1e-15)


def test_fm_sample_mean_monte_carlo(rng):
    ch = FmChannel("awgn", exp_decay_taps(2, 0.5), db_to_linear(3.0))
    s = np.array([1, 0])
    n = 100000
    y = fm_sample(ch, np.tile(s, (n, 1)), rng)[:, 1]
    mean = math.sqrt(ch.rho) * (ch.taps[0] * -1 + ch.taps[1] * 1)
    assert abs(y.mean() - mean) < 3 / math.sqrt(n)


def test_poisson_zero_state_rate_one(rng):
    ch = FmChannel("poisson", [1.0, 0.5], 10.0, OOK)
    y = fm_sample(ch, np.zeros((50000, 2), dtype=int), rng)
    assert abs(y.mean() - 1.0) < 3 / math.sqrt(y.size)
    assert ch.state_rates()[0] == 1.0


def test_poisson_rejects_non_positive_rate(rng):
    ch = FmChannel("poisson", [1.0], 4.0, BPSK)
    with pytest.raises(ValueError):
        fm_sample(ch, np.array([0]), rng)


def test_fm_loglik_examples():
    ch = FmChannel("awgn", [1.0, 0.5], 2.0)
    for state in range(4):
        assert fm_loglik(ch, ch.state_means()[state], state) == pytest.approx(-0.5 * LOG_2PI)
    pc = FmChannel("poisson", [1.0, 0.5], 9.0, OOK)
    for state in range(4):
        assert fm_loglik(pc, 0, state) == pytest.approx(-pc.state_rates()[state])


@pytest.mark.parametrize("state", range(4))
def test_fm_loglik_normalizes(state):
    ch = FmChannel("awgn", [1.0, 0.3], 3.0)
    val, _ = integrate.quad(lambda y: math.exp(fm_loglik(ch, y, state)), -30, 30, limit=200)
    assert abs(val - 1) < 1e-6
    pc = FmChannel("poisson", [1.0, 0.3], 25.0, OOK)
    total = np.exp(fm_loglik_table(pc, np.arange(200))[:, state]).sum()
    assert abs(total - 1) < 1e-6


def test_loglik_table_matches_scalar(rng):
    ch = FmChannel("awgn", exp_decay_taps(3, 0.2), 5.0)
    y = rng.standard_normal(6)
    tab = fm_loglik_table(ch, y)
    assert tab.shape == (6, 8)
    for i in range(6):
        for s in range(8):
            assert tab[i, s] == pytest.approx(fm_loglik(ch, y[i], s), abs=1e-12)


def test_sampled_pairs_have_finite_loglik(rng):
    pc = FmChannel("poisson", [1.0, 0.6], 30.0, OOK)
    s = rng.integers(0, 2, 500)
    y = fm_sample(pc, s, rng)
    ll = fm_loglik_table(pc, y)[np.arange(500), state_labels(s, 2, 2)[0]]
    assert np.all(np.isfinite(ll))


def test_spatial_H():
    H = build_spatial_H(2, 2)
    np.testing.assert_allclose(H, [[1, math.exp(-1)], [math.exp(-1), 1]], rtol=1e-15)
    H6 = build_spatial_H(6, 6)
    assert np.all(np.diag(H6) == 1) and np.array_equal(H6, H6.T)
    assert build_spatial_H(3, 5).shape == (3, 5)


def test_mimo_sample_noiseless_and_mean(rng):
    H = build_spatial_H(3, 3)
    ch = MimoChannel("gaussian", H, 0.5)
    s = np.array([0, 1, 1])
    np.testing.assert_allclose(mimo_sample(ch, s, rng, noiseless=True), H @ BPSK.values[s], atol=1e-15)
    one = MimoChannel("gaussian", [[1.0]], 1.0)
    y = mimo_sample(one, np.ones((100000, 1), dtype=int), rng)
    assert abs(y.mean() - 1) < 3 / math.sqrt(len(y))


def test_mimo_poisson_zero_input_rates():
    ch = MimoChannel("poisson", build_spatial_H(4, 4), 0.1, OOK)
    np.testing.assert_array_equal(ch.rates(np.zeros(4)), np.ones(4))
    with pytest.raises(ValueError):
        MimoChannel("poisson", build_spatial_H(2, 2), 0.1, BPSK).rates(np.array([-1.0, -1.0]))


def test_snr_definition():
    assert snr_to_noise_var(10.0) == pytest.approx(0.1)


def test_perturb_zero_is_identity(rng):
    h = exp_decay_taps(4, 0.2)
    assert np.array_equal(perturb_taps(h, 0.0, rng), h)
    H = build_spatial_H(4, 4)
    assert np.array_equal(perturb_H(H, 0.0, rng), H)


def test_perturb_taps_variance(rng):
    h = exp_decay_taps(3, 0.5)
    d = np.array([perturb_taps(h, 0.1, rng) - h for _ in range(10000)])
    np.testing.assert_allclose(d.var(axis=0), 0.1, rtol=0.05)


def test_perturb_H_variance_scales_with_magnitude(rng):
    H = np.array([[1.0, 0.0], [0.25, 2.0]])
    d = np.array([perturb_H(H, 0.1, rng) - H for _ in range(10000)])
    assert np.all(d[:, 0, 1] == 0)
    for (i, k) in [(0, 0), (1, 0), (1, 1)]:
        assert d[:, i, k].var() == pytest.approx(0.1 * abs(H[i, k]), rel=0.1)


def test_perturbed_poisson_channel_stays_valid(rng):
    pc = FmChannel("poisson", [1.0, 0.05], 100.0, OOK)
    for _ in range(50):
        assert np.all(perturbed_channel(pc, 0.5, rng).taps >= 0)


def test_gen_dataset_isi(rng):
    ch = FmChannel("awgn", exp_decay_taps(3, 0.2), 4.0)
    ds = gen_dataset(ch, 50, 40, rng)
    assert len(ds) == 2000 and ds.y.shape == (40, 50)
    np.testing.assert_array_equal(ds.states, state_labels(ds.symbols, 2, 3))
    # first label of each block sees only pre-history plus the first symbol
    np.testing.assert_array_equal(ds.states[:, 0], ds.symbols[:, 0])
    p = ds.symbols.mean()
    assert abs(p - 0.5) < 3 * math.sqrt(0.25 / ds.symbols.size)


def test_gen_dataset_mimo_with_csi_error(rng):
    ch = MimoChannel("gaussian", build_spatial_H(3, 3), 0.1)
    ds = gen_dataset(ch, 10, 7, rng, csi_error=0.1)
    assert ds.symbols.shape == (70, 3) and ds.y.shape == (70, 3)
    np.testing.assert_array_equal(ds.states, ds.symbols @ np.array([1, 2, 4]))


@given(blocklen=st.integers(1, 30), n_blocks=st.integers(1, 5), L=st.integers(1, 4))
def test_gen_dataset_sizes(blocklen, n_blocks, L):
    ch = FmChannel("awgn", exp_decay_taps(L, 0.3), 2.0)
    ds = gen_dataset(ch, blocklen, n_blocks, np.random.default_rng(0))
    assert len(ds) == blocklen * n_blocks
    assert ds.states.max() < 2 ** L


def test_dataset_csv_round_trip(tmp_path, rng):
    ch = FmChannel("awgn", exp_decay_taps(2, 0.2), 4.0)
    ds = gen_dataset(ch, 5, 2, rng)
    export_dataset_csv(ds, tmp_path / "d.csv")
    header = (tmp_path / "d.csv").read_text().splitlines()[0]
    assert header == "block,i,s,state_index,y"
    np.testing.assert_array_equal(read_observations_csv(tmp_path / "d.csv")[:, 0], ds.y.ravel())
    mch = MimoChannel("gaussian", build_spatial_H(2, 3), 0.1)
    mds = gen_dataset(mch, 4, 1, rng)
    export_dataset_csv(mds, tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "block,i,s_1,s_2,s_3,state_index,y_1,y_2"
    np.testing.assert_array_equal(read_observations_csv(tmp_path / "m.csv"), mds.y)
