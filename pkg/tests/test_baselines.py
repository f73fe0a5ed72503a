import numpy as np
import pytest

from hybridmimo.analog import design_analog_precoder, design_analog_processor_relaxed
from hybridmimo.baselines import (
    Codebook,
    array_response_codebook,
    direct_phase_projection,
    full_digital,
    full_digital_se,
    omp_hybrid,
    phase_projection_codebook,
)
from hybridmimo.channel import MmWaveParams, gen_mmwave, gen_rayleigh
from hybridmimo.core import Objective, complete_transceiver
from hybridmimo.linalg import dft_unitary, phase_projection, svd_ordered
from hybridmimo.simulate import spectral_efficiency


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


# ---------------------------------------------------------------------------
# full digital
# ---------------------------------------------------------------------------


def test_full_digital_identity_channel():
    h = np.eye(2, dtype=complex)
    f, g = full_digital(h, np.eye(2), 2.0, 2)
    np.testing.assert_allclose(np.linalg.norm(f) ** 2, 2.0, atol=1e-9)
    se = full_digital_se(h, np.eye(2), 2.0, 2)
    np.testing.assert_allclose(se, 2.0, atol=1e-10)  # 2 * log2(2)


def test_full_digital_single_stream_beamforming():
    rng = np.random.default_rng(0)
    h = crandn(rng, 4, 6)
    p = 3.0
    se = full_digital_se(h, np.eye(4), p, 1)
    s1 = svd_ordered(h).sigma[0]
    np.testing.assert_allclose(se, np.log2(1 + s1 ** 2 * p), atol=1e-10)


def test_full_digital_beats_random_precoders():
    rng = np.random.default_rng(1)
    h = crandn(rng, 4, 4)
    r_n = np.eye(4)
    p = 2.0
    se_opt = full_digital_se(h, r_n, p, 4)
    for _ in range(10_000):
        f = crandn(rng, 4, 4)
        f *= np.sqrt(p) / np.linalg.norm(f)
        gamma = f.conj().T @ h.conj().T @ h @ f
        se = np.log2(np.real(np.linalg.det(np.eye(4) + gamma)))
        assert se <= se_opt + 1e-9


def test_full_digital_rejects_bad_power():
    with pytest.raises(ValueError):
        full_digital(np.eye(2), np.eye(2), 0.0, 2)


# ---------------------------------------------------------------------------
# codebooks
# ---------------------------------------------------------------------------


def test_array_response_codebook_feasible():
    cb = array_response_codebook(16, size=64)
    assert cb.columns.shape == (16, 64)
    np.testing.assert_allclose(np.abs(cb.columns), 1.0, atol=1e-12)


def test_phase_projection_codebook_sides():
    rng = np.random.default_rng(2)
    h = crandn(rng, 5, 7)
    tx = phase_projection_codebook(h, "tx")
    rx = phase_projection_codebook(h, "rx")
    assert tx.columns.shape == (7, 5)
    assert rx.columns.shape == (5, 7)


def test_codebook_rejects_non_unit_modulus():
    with pytest.raises(ValueError):
        Codebook(columns=np.ones((3, 2)) * 0.5, origin="array_response")


# ---------------------------------------------------------------------------
# OMP hybrid
# ---------------------------------------------------------------------------


def test_omp_selects_planted_columns():
    # channel whose optimal precoder columns are two DFT codewords
    n, m, d = 8, 4, 2
    rng = np.random.default_rng(3)
    w = np.sqrt(n) * dft_unitary(n)
    v_cols = w[:, [1, 5]] / np.sqrt(n)  # orthonormal
    u = np.linalg.qr(crandn(rng, m, d))[0]
    h = u @ np.diag([3.0, 2.0]) @ v_cols.conj().T
    tx_cb = Codebook(columns=w, origin="array_response")
    rx_cb = phase_projection_codebook(h, "rx")
    t = omp_hybrid(h, np.eye(m), tx_cb, rx_cb, d, d, power=4.0)
    # residual of the least-squares fit is essentially zero
    f_opt, _ = full_digital(h, np.eye(m), 4.0, d)
    coef, *_ = np.linalg.lstsq(t.f_a, f_opt, rcond=None)
    assert np.linalg.norm(f_opt - t.f_a @ coef) < 1e-8
    t.validate(4.0)
    np.testing.assert_allclose(t.transmit_power, 4.0, atol=1e-9)


def test_omp_power_renormalized_exactly():
    rng = np.random.default_rng(4)
    h = gen_rayleigh(12, 8, rng).h
    tx_cb = phase_projection_codebook(h, "tx")
    rx_cb = phase_projection_codebook(h, "rx")
    t = omp_hybrid(h, np.eye(8), tx_cb, rx_cb, 4, 3, power=5.0)
    np.testing.assert_allclose(t.transmit_power, 5.0, atol=1e-9)
    t.validate(5.0)


def test_omp_residual_nonincreasing():
    from hybridmimo.baselines import _omp_select

    rng = np.random.default_rng(5)
    h = gen_rayleigh(12, 8, rng).h
    target, _ = full_digital(h, np.eye(8), 2.0, 3)
    cb = phase_projection_codebook(h, "tx")
    _, norms = _omp_select(target, cb, 5)
    assert np.all(np.diff(norms) <= 1e-12)


def test_omp_codebook_too_small():
    rng = np.random.default_rng(6)
    h = gen_rayleigh(6, 4, rng).h
    cb = Codebook(columns=phase_projection(crandn(rng, 6, 2)), origin="array_response")
    rx_cb = phase_projection_codebook(h, "rx")
    with pytest.raises(ValueError):
        omp_hybrid(h, np.eye(4), cb, rx_cb, 3, 2, 1.0)


# ---------------------------------------------------------------------------
# direct phase projection
# ---------------------------------------------------------------------------


def test_direct_projection_feasible_and_valid():
    rng = np.random.default_rng(7)
    h = gen_rayleigh(10, 6, rng).h
    t = direct_phase_projection(h, np.eye(6), 3, 2, power=2.0)
    t.validate(2.0)
    assert t.f_a.shape == (10, 3)
    assert t.g_a.shape == (3, 6)


def test_full_digital_dominates_hybrids_per_trial():
    rng = np.random.default_rng(8)
    params = MmWaveParams()
    for _ in range(5):
        chan = gen_mmwave(params, 16, 8, rng)
        h, r_n = chan.h, chan.r_n
        p, n_rf, d = 4.0, 3, 2
        se_fd = full_digital_se(h, r_n, p, d)

        direct = direct_phase_projection(h, r_n, n_rf, d, p)
        assert spectral_efficiency(h, r_n, direct) <= se_fd + 1e-9

        pre = design_analog_precoder(svd_ordered(h).v[:, :n_rf])
        proc = design_analog_processor_relaxed(svd_ordered(h).u[:, :n_rf], r_n)
        t = complete_transceiver(h, r_n, pre.matrix, proc.matrix,
                                 Objective.capacity(), p, d)
        assert spectral_efficiency(h, r_n, t) <= se_fd + 1e-9
