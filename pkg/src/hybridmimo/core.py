"""Unified MSE-matrix transceiver framework.

Everything here is built around one object: the linear MSE matrix
``(I + Gamma)^-1`` of the LMMSE-equalized hybrid link, where ``Gamma``
is the matrix SNR. Nonlinear (THP / decision-feedback) transceivers are
the same matrix congruence-transformed by ``(I + B)`` with a strictly
lower-triangular feedback matrix ``B``. The module provides:

* the matrix SNR and MSE matrices,
* the optimal digital processor (LMMSE) and the optimal feedback
  matrix (Cholesky construction),
* the optimal unitary rotation ``Q`` for each objective family,
* the water-filled diagonal digital precoder on the effective channel
  induced by fixed analog stages,
* a one-call designer that assembles a full transceiver from given
  analog matrices.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    NumericalError,
    OrderedSvd,
    cholesky_lower,
    dft_unitary,
    gmd,
    svd_ordered,
    waterfill,
)

__all__ = [
    "Objective",
    "HybridTransceiver",
    "EffectiveChannel",
    "snr_matrix",
    "mse_matrix_linear",
    "mse_matrix_general",
    "mse_matrix_for_processor",
    "lmmse_digital_processor",
    "optimal_feedback_b",
    "optimal_q",
    "effective_channel",
    "digital_precoder",
    "evaluate_objective",
    "complete_transceiver",
]

_SCHUR_BY_TAG = {
    "capacity": "not_applicable",
    "sum_mse": "add_concave",
    "max_mse": "add_convex",
    "weighted_mse": "add_concave",
    "nonlinear_equal_streams": "mult_convex",
}


@dataclass(frozen=True)
class Objective:
    """A performance metric together with its Schur classification.

    ``weight`` is the (full-rank) weight matrix of the weighted-MSE
    metric and is ignored by every other tag.
    """

    tag: str
    weight: np.ndarray | None = None

    def __post_init__(self):
        if self.tag not in _SCHUR_BY_TAG:
            raise ValueError(f"unknown objective tag {self.tag!r}")
        if self.tag == "weighted_mse":
            if self.weight is None:
                raise ValueError("weighted_mse requires a weight matrix")
            w = np.asarray(self.weight)
            if w.ndim != 2 or w.shape[0] != w.shape[1]:
                raise ValueError("weight matrix must be square")
            if np.linalg.matrix_rank(w) < w.shape[0]:
                raise ValueError("weight matrix must be full rank")

    @property
    def schur_class(self) -> str:
        return _SCHUR_BY_TAG[self.tag]

    @classmethod
    def capacity(cls) -> "Objective":
        return cls("capacity")

    @classmethod
    def sum_mse(cls) -> "Objective":
        return cls("sum_mse")

    @classmethod
    def max_mse(cls) -> "Objective":
        return cls("max_mse")

    @classmethod
    def weighted_mse(cls, weight: np.ndarray) -> "Objective":
        return cls("weighted_mse", np.asarray(weight, dtype=complex))

    @classmethod
    def nonlinear_equal_streams(cls) -> "Objective":
        return cls("nonlinear_equal_streams")


@dataclass(frozen=True)
class HybridTransceiver:
    """The full design tuple: analog/digital precoders, analog/digital
    processors, and the feedback matrix.

    ``kind`` is "linear", "thp" (feedback at the transmitter) or "dfd"
    (decision feedback at the receiver); for "linear" the feedback
    matrix is zero.
    """

    f_a: np.ndarray
    f_d: np.ndarray
    g_a: np.ndarray
    g_d: np.ndarray
    b: np.ndarray
    kind: str = "linear"

    @property
    def transmit_power(self) -> float:
        f = self.f_a @ self.f_d
        return float(np.real(np.trace(f @ f.conj().T)))

    def modulus_residual(self) -> float:
        return float(max(np.abs(np.abs(self.f_a) - 1.0).max(),
                         np.abs(np.abs(self.g_a) - 1.0).max()))

    def validate(self, power_budget: float, tol: float = 1e-9) -> None:
        if self.kind not in ("linear", "thp", "dfd"):
            raise ValueError(f"unknown transceiver kind {self.kind!r}")
        if self.modulus_residual() > tol:
            raise ValueError("analog matrices are not constant modulus")
        if self.transmit_power > power_budget + tol:
            raise ValueError("transmit power exceeds the budget")
        if np.abs(np.triu(self.b)).max(initial=0.0) > tol:
            raise ValueError("feedback matrix must be strictly lower triangular")
        if self.kind == "linear" and np.abs(self.b).max(initial=0.0) > tol:
            raise ValueError("linear transceiver must have zero feedback")


@dataclass(frozen=True)
class EffectiveChannel:
    """Noise-whitened channel compressed onto the analog subspaces.

    ``mat`` is the L-by-L matrix ``Pi_L @ R_n^-1/2 @ H @ Pi_R`` where
    ``Pi_L`` and ``Pi_R`` are the partial isometries induced by the
    analog processor and precoder.
    """

    mat: np.ndarray
    svd: OrderedSvd
    pi_l: np.ndarray
    pi_r: np.ndarray
    f_a: np.ndarray
    g_a: np.ndarray
    meta: dict = field(default_factory=dict)


def _herm_sqrt_and_inv_sqrt(a: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    a = (a + a.conj().T) / 2.0
    w, v = np.linalg.eigh(a)
    if w[0] <= 1e-14 * max(w[-1], 1e-300):
        raise NumericalError(f"{what} is numerically singular")
    rw = np.sqrt(w)
    return (v * rw) @ v.conj().T, (v / rw) @ v.conj().T


def snr_matrix(h, r_n, f_a, f_d, g_a) -> np.ndarray:
    """Matrix SNR ``F^H H^H G_A^H (G_A R_n G_A^H)^-1 G_A H F`` with
    ``F = F_A @ F_D``; Hermitian positive semidefinite."""
    t = g_a @ h @ f_a @ f_d
    cov = g_a @ r_n @ g_a.conj().T
    try:
        sol = np.linalg.solve((cov + cov.conj().T) / 2.0, t)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("analog-processed noise covariance is singular") from exc
    gamma = t.conj().T @ sol
    return (gamma + gamma.conj().T) / 2.0


def mse_matrix_linear(h, r_n, f_a, f_d, g_a) -> np.ndarray:
    """Linear-transceiver MSE matrix ``(I + Gamma)^-1``."""
    gamma = snr_matrix(h, r_n, f_a, f_d, g_a)
    phi = np.linalg.inv(np.eye(gamma.shape[0]) + gamma)
    return (phi + phi.conj().T) / 2.0


def mse_matrix_general(phi_linear: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Nonlinear MSE matrix ``(I + B) @ Phi_L @ (I + B)^H``."""
    phi_linear = np.asarray(phi_linear)
    b = np.asarray(b)
    if phi_linear.shape != b.shape:
        raise ValueError("feedback matrix shape must match the MSE matrix")
    ib = np.eye(b.shape[0]) + b
    return ib @ phi_linear @ ib.conj().T


def mse_matrix_for_processor(h, r_n, f_a, f_d, g_a, g_d, b=None) -> np.ndarray:
    """MSE matrix for an arbitrary (not necessarily optimal) digital
    processor: ``(T - (I+B))(T - (I+B))^H + G_D G_A R_n G_A^H G_D^H``
    with ``T = G_D G_A H F_A F_D`` and unit symbol covariance."""
    t = g_d @ g_a @ h @ f_a @ f_d
    d = t.shape[0]
    ib = np.eye(d) if b is None else np.eye(d) + b
    e = t - ib
    noise = g_d @ g_a @ r_n @ g_a.conj().T @ g_d.conj().T
    return e @ e.conj().T + noise


def lmmse_digital_processor(h, r_n, f_a, f_d, g_a, b=None) -> np.ndarray:
    """MSE-optimal digital processor ``(I+B) T^H (T T^H + G_A R_n G_A^H)^-1``
    with ``T = G_A H F_A F_D``; with ``b`` omitted or zero this is the
    plain LMMSE equalizer."""
    t = g_a @ h @ f_a @ f_d
    bracket = t @ t.conj().T + g_a @ r_n @ g_a.conj().T
    try:
        g_lin = np.linalg.solve(bracket.conj().T, t).conj().T
    except np.linalg.LinAlgError as exc:
        raise NumericalError("LMMSE normal equations are singular") from exc
    if b is None:
        return g_lin
    return (np.eye(b.shape[0]) + b) @ g_lin


def optimal_feedback_b(phi_linear: np.ndarray) -> np.ndarray:
    """Feedback matrix ``diag(L) @ L^-1 - I`` from the Cholesky factor of
    the linear MSE matrix; the resulting nonlinear MSE matrix has n-th
    diagonal entry exactly ``L[n, n]**2``.

    Eigenvalues below 1e-12 are clamped (with a warning) before the
    factorization, since the linear MSE matrix is positive definite in
    exact arithmetic.
    """
    phi = np.asarray(phi_linear)
    phi = (phi + phi.conj().T) / 2.0
    w = np.linalg.eigvalsh(phi)
    if w[0] <= 0 or w[0] < 1e-12 * max(w[-1], 1e-300):
        warnings.warn("clamping near-zero MSE eigenvalues before Cholesky", RuntimeWarning)
        wq, vq = np.linalg.eigh(phi)
        wq = np.maximum(wq, 1e-12 * max(w[-1], 1e-30))
        phi = (vq * wq) @ vq.conj().T
    l = cholesky_lower(phi)
    b = np.diag(np.diag(l)) @ np.linalg.inv(l) - np.eye(l.shape[0])
    return np.tril(b, -1)


def effective_channel(h, r_n, f_a, g_a) -> EffectiveChannel:
    """Compress the noise-whitened channel onto the column space of the
    analog precoder and the row space of the analog processor."""
    f_a = np.asarray(f_a)
    gram = f_a.conj().T @ f_a
    n_rf = f_a.shape[1]
    if np.linalg.matrix_rank(gram) < n_rf:
        raise NumericalError("analog precoder is rank deficient")
    _, gram_inv_sqrt = _herm_sqrt_and_inv_sqrt(gram, "analog precoder Gram matrix")
    pi_r = f_a @ gram_inv_sqrt

    rn_sqrt, rn_inv_sqrt = _herm_sqrt_and_inv_sqrt(np.asarray(r_n), "noise covariance")
    cov = g_a @ r_n @ g_a.conj().T
    _, cov_inv_sqrt = _herm_sqrt_and_inv_sqrt(cov, "analog-processed noise covariance")
    pi_l = cov_inv_sqrt @ g_a @ rn_sqrt

    mat = pi_l @ rn_inv_sqrt @ h @ pi_r
    return EffectiveChannel(mat=mat, svd=svd_ordered(mat), pi_l=pi_l, pi_r=pi_r,
                            f_a=f_a, g_a=np.asarray(g_a))


def _stream_weights(objective: Objective, n_streams: int) -> tuple[str, np.ndarray | None]:
    """Map an objective to a water-filling mode and weights."""
    if objective.tag in ("capacity", "nonlinear_equal_streams"):
        return "capacity", None
    if objective.tag in ("sum_mse", "max_mse"):
        return "weighted_mse", np.ones(n_streams)
    # weighted MSE: weights are the squared singular values of the
    # weight matrix, aligned largest-to-strongest stream
    sig = svd_ordered(objective.weight).sigma
    if sig.size < n_streams:
        raise ValueError("weight matrix smaller than the stream count")
    return "weighted_mse", sig[:n_streams] ** 2


def optimal_q(
    objective: Objective,
    u_gamma: np.ndarray,
    n_streams: int,
    gamma_eigvals: np.ndarray | None = None,
) -> np.ndarray:
    """Optimal unitary rotation for the given objective family.

    ``u_gamma`` holds the eigenvectors of the rotated matrix SNR with
    eigenvalues in decreasing order. The equal-diagonal (GMD) branch for
    multiplicatively Schur-convex objectives additionally needs those
    eigenvalues (``gamma_eigvals``).
    """
    u_gamma = np.asarray(u_gamma, dtype=complex)
    d = u_gamma.shape[0]
    if np.linalg.norm(u_gamma.conj().T @ u_gamma - np.eye(d)) > 1e-8:
        raise ValueError("u_gamma must be unitary")
    if objective.tag == "capacity":
        return np.eye(n_streams, dtype=complex)
    if objective.tag == "weighted_mse":
        u_a = svd_ordered(objective.weight).u[:, :n_streams]
        return u_gamma[:, :n_streams] @ u_a.conj().T

    cls = objective.schur_class
    if cls == "mult_convex":
        if gamma_eigvals is None:
            raise ValueError("the equal-diagonal rotation needs the SNR eigenvalues")
        lam = np.maximum(np.asarray(gamma_eigvals, dtype=float)[:n_streams], 0.0)
        sigma = np.diag(1.0 / np.sqrt(1.0 + lam))
        # Q = U_Gamma @ Q_g makes the Cholesky factor of (I + Gamma)^-1
        # carry a constant diagonal; Q_g is the left GMD factor of the
        # diagonal square root.
        q_g = gmd(sigma, n_streams).q
        return u_gamma[:, :n_streams] @ q_g
    if cls == "add_convex":
        return u_gamma[:, :n_streams] @ dft_unitary(n_streams).conj().T
    if cls in ("mult_concave", "add_concave"):
        return u_gamma[:, :n_streams].copy()
    raise ValueError(f"no rotation rule for objective {objective.tag!r}")


def digital_precoder(
    eff: EffectiveChannel,
    objective: Objective,
    power: float,
    n_streams: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Water-filled digital precoder on the effective channel.

    Returns the rotated precoder ``F_D_tilde = V[:, :D] @ diag(sqrt(p))``
    and the deployable ``F_D = (F_A^H F_A)^-1/2 @ F_D_tilde @ Q`` with the
    objective's optimal rotation ``Q`` already applied. Streams whose
    effective gain is numerically zero receive zero power.
    """
    if power <= 0:
        raise ValueError(f"power budget must be positive, got {power}")
    n_rf = eff.mat.shape[0]
    if n_streams > n_rf:
        raise ValueError("stream count cannot exceed the analog dimension")

    gains = eff.svd.sigma[:n_streams] ** 2
    active = gains > 1e-12 * max(float(gains.max(initial=0.0)), 1e-300)
    p = np.zeros(n_streams)
    if active.any():
        mode, weights = _stream_weights(objective, n_streams)
        w_act = weights[active] if weights is not None else None
        p[active] = waterfill(gains[active], power, mode, weights=w_act)

    f_d_tilde = eff.svd.v[:, :n_streams] * np.sqrt(p)

    snr_eigvals = p * gains  # descending by construction
    q = optimal_q(objective, np.eye(n_streams, dtype=complex), n_streams, snr_eigvals)
    _, gram_inv_sqrt = _herm_sqrt_and_inv_sqrt(eff.f_a.conj().T @ eff.f_a, "analog precoder Gram matrix")
    f_d = gram_inv_sqrt @ f_d_tilde @ q
    return f_d_tilde, f_d


def evaluate_objective(objective: Objective, phi: np.ndarray) -> float:
    """Scalar value of an objective on an MSE matrix.

    Capacity is reported in bits (``-log2 det``); the per-stream-equal
    nonlinear metric is the worst diagonal entry after the optimal
    feedback transformation.
    """
    phi = np.asarray(phi)
    if objective.tag == "capacity":
        sign, logdet = np.linalg.slogdet(phi)
        if np.real(sign) <= 0:
            raise NumericalError("MSE matrix must be positive definite")
        return float(-logdet / np.log(2.0))
    if objective.tag == "sum_mse":
        return float(np.real(np.trace(phi)))
    if objective.tag == "max_mse":
        return float(np.real(np.diag(phi)).max())
    if objective.tag == "weighted_mse":
        a = objective.weight
        return float(np.real(np.trace(a.conj().T @ phi @ a)))
    # nonlinear_equal_streams: worst stream after optimal feedback
    b = optimal_feedback_b(phi)
    return float(np.real(np.diag(mse_matrix_general(phi, b))).max())


def complete_transceiver(
    h,
    r_n,
    f_a,
    g_a,
    objective: Objective,
    power: float,
    n_streams: int,
    kind: str = "linear",
) -> HybridTransceiver:
    """Fill in the digital stages for fixed analog matrices.

    Builds the effective channel, water-fills the digital precoder with
    the objective's rotation, then attaches the optimal feedback matrix
    (for nonlinear kinds) and the LMMSE digital processor.
    """
    if kind not in ("linear", "thp", "dfd"):
        raise ValueError(f"unknown transceiver kind {kind!r}")
    if objective.tag == "nonlinear_equal_streams" and kind == "linear":
        raise ValueError("per-stream-equal objective requires a nonlinear kind")
    eff = effective_channel(h, r_n, f_a, g_a)
    _, f_d = digital_precoder(eff, objective, power, n_streams)
    phi_lin = mse_matrix_linear(h, r_n, f_a, f_d, g_a)
    if kind == "linear":
        b = np.zeros((n_streams, n_streams))
    else:
        b = optimal_feedback_b(phi_lin)
    g_d = lmmse_digital_processor(h, r_n, f_a, f_d, g_a, b if kind != "linear" else None)
    return HybridTransceiver(f_a=np.asarray(f_a), f_d=f_d, g_a=np.asarray(g_a),
                             g_d=g_d, b=b, kind=kind)
