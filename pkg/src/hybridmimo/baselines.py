"""Reference designs: the unconstrained full-digital transceiver, greedy
codebook-based hybrid precoding (orthogonal matching pursuit on the
full-digital target), and direct phase projection of the singular-vector
slices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import steering_vector
from .core import (
    HybridTransceiver,
    Objective,
    complete_transceiver,
    lmmse_digital_processor,
)
from .linalg import NumericalError, phase_projection, svd_ordered, waterfill

__all__ = [
    "Codebook",
    "array_response_codebook",
    "path_steering_codebook",
    "phase_projection_codebook",
    "full_digital",
    "full_digital_se",
    "omp_hybrid",
    "direct_phase_projection",
]


@dataclass(frozen=True)
class Codebook:
    """Candidate unit-modulus analog columns, one per codeword."""

    columns: np.ndarray
    origin: str

    def __post_init__(self):
        if np.abs(np.abs(self.columns) - 1.0).max(initial=0.0) > 1e-9:
            raise ValueError("codebook columns must be unit modulus")

    @property
    def size(self) -> int:
        return self.columns.shape[1]


def array_response_codebook(n_antennas: int, size: int = 64, spacing: float = 0.5) -> Codebook:
    """ULA steering vectors on a uniform angle grid over [-pi/2, pi/2),
    rescaled to unit-modulus entries."""
    angles = -np.pi / 2 + np.pi * np.arange(size) / size
    cols = steering_vector(n_antennas, angles, spacing) * np.sqrt(n_antennas)
    return Codebook(columns=cols, origin="array_response")


def path_steering_codebook(n_antennas: int, angles_rad, spacing: float = 0.5) -> Codebook:
    """Steering vectors at given path angles (the perfect-CSI dictionary
    used by sparse-channel pursuit), rescaled to unit-modulus entries."""
    angles_rad = np.atleast_1d(np.asarray(angles_rad, dtype=float))
    cols = steering_vector(n_antennas, angles_rad, spacing) * np.sqrt(n_antennas)
    if cols.ndim == 1:
        cols = cols[:, None]
    return Codebook(columns=cols, origin="array_response")


def phase_projection_codebook(h: np.ndarray, side: str = "tx") -> Codebook:
    """Codebook from the phase projection of the channel itself: columns
    of ``P(H^H)`` for the transmit side, columns of ``P(H)`` for the
    receive side."""
    h = np.asarray(h, dtype=complex)
    if side == "tx":
        cols = phase_projection(h.conj().T)
    elif side == "rx":
        cols = phase_projection(h)
    else:
        raise ValueError(f"side must be 'tx' or 'rx', got {side!r}")
    return Codebook(columns=cols, origin="phase_projection_of_H")


def full_digital(
    h: np.ndarray,
    r_n: np.ndarray,
    power: float,
    n_streams: int,
    objective: Objective = Objective.capacity(),
) -> tuple[np.ndarray, np.ndarray]:
    """Unconstrained transceiver: water-filled singular-vector precoder on
    the whitened channel plus the LMMSE combiner.

    Returns ``(F, G)`` with ``F`` of shape (N, D) and ``G`` of shape
    (D, M).
    """
    if power <= 0:
        raise ValueError(f"power budget must be positive, got {power}")
    h = np.asarray(h, dtype=complex)
    n_rx, n_tx = h.shape
    if n_streams > min(n_tx, n_rx):
        raise ValueError("stream count exceeds the channel rank bound")
    w, v = np.linalg.eigh((np.asarray(r_n) + np.asarray(r_n).conj().T) / 2)
    rn_inv_sqrt = (v / np.sqrt(w)) @ v.conj().T
    svd = svd_ordered(rn_inv_sqrt @ h)
    gains = svd.sigma[:n_streams] ** 2
    active = gains > 1e-12 * max(float(gains.max(initial=0.0)), 1e-300)
    p = np.zeros(n_streams)
    if active.any():
        if objective.tag in ("capacity", "nonlinear_equal_streams"):
            p[active] = waterfill(gains[active], power, "capacity")
        else:
            if objective.tag == "weighted_mse":
                weights = svd_ordered(objective.weight).sigma[:n_streams] ** 2
            else:
                weights = np.ones(n_streams)
            p[active] = waterfill(gains[active], power, "weighted_mse", weights=weights[active])
    f = svd.v[:, :n_streams] * np.sqrt(p)
    # LMMSE combiner G = F^H H^H (H F F^H H^H + R_n)^-1
    t = h @ f
    bracket = t @ t.conj().T + r_n
    g = np.linalg.solve(bracket.conj().T, t).conj().T
    return f, g


def full_digital_se(h: np.ndarray, r_n: np.ndarray, power: float, n_streams: int) -> float:
    """Spectral efficiency of the capacity-optimal full-digital design:
    ``sum(log2(1 + gains * p))`` in bits/s/Hz."""
    w, v = np.linalg.eigh((np.asarray(r_n) + np.asarray(r_n).conj().T) / 2)
    rn_inv_sqrt = (v / np.sqrt(w)) @ v.conj().T
    sigma = svd_ordered(rn_inv_sqrt @ np.asarray(h)).sigma[:n_streams]
    gains = sigma ** 2
    active = gains > 1e-12 * max(float(gains.max(initial=0.0)), 1e-300)
    p = np.zeros_like(gains)
    if active.any():
        p[active] = waterfill(gains[active], power, "capacity")
    return float(np.sum(np.log2(1.0 + gains * p)))


def _omp_select(target: np.ndarray, codebook: Codebook, n_select: int) -> tuple[np.ndarray, np.ndarray]:
    """Greedy column selection: pick the codeword best correlated with the
    running least-squares residual against ``target``.

    Returns the selected columns and the per-step residual norms.
    """
    if codebook.size < n_select:
        raise ValueError(f"codebook has {codebook.size} columns, need {n_select}")
    cols = codebook.columns
    available = list(range(codebook.size))
    chosen: list[int] = []
    residual = target.copy()
    res_norms = []
    for _ in range(n_select):
        corr = cols[:, available].conj().T @ residual
        scores = np.sum(np.abs(corr) ** 2, axis=1)
        best = available[int(np.argmax(scores))]
        chosen.append(best)
        available.remove(best)
        sel = cols[:, chosen]
        coef, *_ = np.linalg.lstsq(sel, target, rcond=None)
        residual = target - sel @ coef
        res_norms.append(float(np.linalg.norm(residual)))
    return cols[:, chosen], np.array(res_norms)


def omp_hybrid(
    h: np.ndarray,
    r_n: np.ndarray,
    tx_codebook: Codebook,
    rx_codebook: Codebook,
    n_rf: int,
    n_streams: int,
    power: float,
) -> HybridTransceiver:
    """Hybrid design by greedy pursuit of the full-digital target.

    The analog precoder columns come from ``tx_codebook`` (dimension N)
    and the analog processor rows from ``rx_codebook`` (dimension M);
    digital stages are a least-squares fit renormalized to the power
    budget at the transmitter and LMMSE at the receiver.
    """
    f_opt, _ = full_digital(h, r_n, power, n_streams)
    f_a, _ = _omp_select(f_opt, tx_codebook, n_rf)
    f_d, *_ = np.linalg.lstsq(f_a, f_opt, rcond=None)
    f = f_a @ f_d
    used = np.real(np.trace(f @ f.conj().T))
    if used <= 0:
        raise NumericalError("pursuit produced a zero precoder")
    f_d = f_d * np.sqrt(power / used)
    f = f_a @ f_d

    # receiver side mirrors the transmitter: pursue the MMSE combiner of
    # the precoder actually chosen, so the selected columns span the
    # subspace the signal occupies
    t = h @ f
    bracket = t @ t.conj().T + r_n
    w_mmse = np.linalg.solve(bracket.conj().T, t).conj().T  # D x M
    g_a_cols, _ = _omp_select(w_mmse.conj().T, rx_codebook, n_rf)
    g_a = g_a_cols.conj().T
    g_d = lmmse_digital_processor(h, r_n, f_a, f_d, g_a)
    return HybridTransceiver(f_a=f_a, f_d=f_d, g_a=g_a, g_d=g_d,
                             b=np.zeros((n_streams, n_streams)), kind="linear")


def direct_phase_projection(
    h: np.ndarray,
    r_n: np.ndarray,
    n_rf: int,
    n_streams: int,
    power: float,
    objective: Objective = Objective.capacity(),
    kind: str = "linear",
) -> HybridTransceiver:
    """Hybrid design with analog stages set to the raw phase patterns of
    the leading singular-vector slices; digital stages are the standard
    completion on the induced effective channel."""
    h = np.asarray(h, dtype=complex)
    n_rx, n_tx = h.shape
    if n_rf > min(n_tx, n_rx):
        raise ValueError("RF-chain count exceeds min(N, M)")
    w, v = np.linalg.eigh((np.asarray(r_n) + np.asarray(r_n).conj().T) / 2)
    rn_inv_sqrt = (v / np.sqrt(w)) @ v.conj().T
    svd = svd_ordered(rn_inv_sqrt @ h)
    f_a = phase_projection(svd.v[:, :n_rf])
    g_a = phase_projection(svd.u[:, :n_rf].conj().T)
    return complete_transceiver(h, r_n, f_a, g_a, objective, power, n_streams, kind)
