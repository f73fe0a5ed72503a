"""Constant-modulus analog precoder / processor design.

Three designers are provided, all targeting the eigenchannel-selection
structure (the analog stages should span the leading singular subspaces
of the noise-whitened channel):

* an alternating minimization that interleaves a closed-form diagonal
  scale, a closed-form unitary rotation and an entrywise phase
  projection (the workhorse),
* an iterative equality-constrained QP on the real-stacked entries of
  the analog processor, which handles correlated noise without the
  relaxation step,
* a cheap random-candidate selection that picks, out of K phase-projected
  random rotations of the channel, the one with the best log-determinant
  SNR metric.

Plus the phase quantizer used to model finite-resolution shifters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .linalg import NumericalError, phase_projection, svd_ordered

__all__ = [
    "PhaseProjConfig",
    "QcqpConfig",
    "RandomAlgConfig",
    "AltMinResult",
    "QcqpResult",
    "design_analog_precoder",
    "design_analog_processor_relaxed",
    "design_analog_processor_qcqp",
    "design_random",
    "quantize_phases",
    "optimal_diag_scale",
    "optimal_rotation",
]


@dataclass(frozen=True)
class PhaseProjConfig:
    """Alternating-minimization knobs: stop once the per-sweep objective
    decrement falls below ``zeta`` (absolute)."""

    zeta: float = 1e-6
    max_iters: int = 200

    def __post_init__(self):
        if self.zeta <= 0 or self.max_iters < 1:
            raise ValueError("zeta must be > 0 and max_iters >= 1")


@dataclass(frozen=True)
class QcqpConfig:
    """Iterative-QP knobs.

    ``eta`` is the convexifying shift; it must satisfy
    ``eta >= lambda_max(R_n) * n_entries / 8 + ||p||^2`` (checked at
    solve time against the actual instance). ``upsilon`` is the absolute
    objective-decrement stopping threshold and ``a`` the common entry
    modulus (fixed to 1).
    """

    eta: float
    upsilon: float = 1e-6
    max_iters: int = 500
    a: float = 1.0

    def __post_init__(self):
        if self.eta <= 0 or self.upsilon <= 0 or self.max_iters < 1:
            raise ValueError("eta, upsilon must be > 0 and max_iters >= 1")

    @staticmethod
    def min_eta(r_n: np.ndarray, n_entries: int, p: np.ndarray) -> float:
        sig_max = float(np.linalg.eigvalsh((r_n + r_n.conj().T) / 2).max())
        return sig_max * n_entries / 8.0 + float(p @ p)


@dataclass(frozen=True)
class RandomAlgConfig:
    """Random-candidate selection: K draws from ``dist`` (real uniform on
    [0,1] or real standard normal)."""

    k: int = 10
    dist: str = "uniform01"
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("candidate count must be >= 1")
        if self.dist not in ("uniform01", "std_gaussian"):
            raise ValueError(f"unknown candidate distribution {self.dist!r}")


@dataclass(frozen=True)
class AltMinResult:
    """Output of the alternating phase-projection design."""

    matrix: np.ndarray
    objective: float
    n_iters: int
    # objective after each (scale, rotation, projection) step per sweep
    step_objectives: np.ndarray
    lambda_diag: np.ndarray
    q_rot: np.ndarray


@dataclass(frozen=True)
class QcqpResult:
    """Output of the iterative-QP processor design."""

    matrix: np.ndarray
    objective: float
    n_iters: int
    history: np.ndarray
    modulus_residual: float


def optimal_diag_scale(target: np.ndarray, q_rot: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Best diagonal (real) scale for ``||target @ diag(s) @ q_rot - x||_F``
    with the other two factors fixed: ``s_i = Re(q X^H target)_ii /
    (target^H target)_ii``."""
    num = np.real(np.diag(q_rot @ x.conj().T @ target))
    den = np.real(np.einsum("ij,ij->j", target.conj(), target))
    return num / den


def optimal_rotation(target: np.ndarray, scale: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Best unitary rotation for the same objective with the scale and the
    constant-modulus factor fixed: ``V_Q U_Q^H`` from the SVD of
    ``X^H @ target @ diag(scale)``."""
    svd = svd_ordered(x.conj().T @ (target * scale))
    return svd.v @ svd.u.conj().T


def _alt_min_objective(target, scale, q_rot, x) -> float:
    return float(np.linalg.norm((target * scale) @ q_rot - x) ** 2)


def _alt_min_phase(target: np.ndarray, cfg: PhaseProjConfig) -> AltMinResult:
    """Minimize ``||target @ diag(s) @ Q - X||_F^2`` over diagonal ``s``,
    unitary ``Q`` and entrywise unit-modulus ``X``.

    Every inner update is the exact minimizer of its block, so the
    objective is non-increasing after each step; the loop stops when a
    full sweep improves the objective by less than ``zeta``.
    """
    n_rf = target.shape[1]
    x = phase_projection(target)
    q_rot = np.eye(n_rf, dtype=complex)
    scale = np.ones(n_rf)
    obj = _alt_min_objective(target, scale, q_rot, x)
    steps = []
    n_iters = 0
    for n_iters in range(1, cfg.max_iters + 1):
        prev = obj
        scale = optimal_diag_scale(target, q_rot, x)
        s1 = _alt_min_objective(target, scale, q_rot, x)
        q_rot = optimal_rotation(target, scale, x)
        s2 = _alt_min_objective(target, scale, q_rot, x)
        x = phase_projection((target * scale) @ q_rot)
        obj = _alt_min_objective(target, scale, q_rot, x)
        steps.append((s1, s2, obj))
        if prev - obj < cfg.zeta:
            break
    return AltMinResult(matrix=x, objective=obj, n_iters=n_iters,
                        step_objectives=np.array(steps), lambda_diag=scale, q_rot=q_rot)


def design_analog_precoder(
    v_target: np.ndarray,
    cfg: PhaseProjConfig = PhaseProjConfig(),
) -> AltMinResult:
    """Constant-modulus precoder closest to the span of the leading right
    singular vectors of the whitened channel.

    Parameters
    ----------
    v_target : np.ndarray
        N-by-L slice of right singular vectors; must have orthonormal
        columns.
    cfg : PhaseProjConfig
        Convergence knobs.

    Returns
    -------
    AltMinResult
        ``matrix`` is the unit-modulus precoder, ``objective`` the final
        subspace-distance value.
    """
    v_target = np.asarray(v_target, dtype=complex)
    n_rf = v_target.shape[1]
    gram = v_target.conj().T @ v_target
    if np.linalg.norm(gram - np.eye(n_rf)) > 1e-8:
        raise ValueError("target must have orthonormal columns")
    return _alt_min_phase(v_target, cfg)


def design_analog_processor_relaxed(
    u_target: np.ndarray,
    r_n: np.ndarray,
    cfg: PhaseProjConfig = PhaseProjConfig(),
) -> AltMinResult:
    """Analog processor via the whitened relaxation.

    Runs the same alternating minimization on the pre-whitened target
    ``R_n^-1/2 @ u_target`` against ``G_A^H``; the relaxation is tight
    for white noise. ``matrix`` in the result is ``G_A`` (L-by-M).
    """
    u_target = np.asarray(u_target, dtype=complex)
    r_n = np.asarray(r_n)
    w, v = np.linalg.eigh((r_n + r_n.conj().T) / 2)
    if w[0] <= 1e-14 * max(w[-1], 1e-300):
        raise NumericalError("noise covariance is singular")
    rn_inv_sqrt = (v / np.sqrt(w)) @ v.conj().T
    res = _alt_min_phase(rn_inv_sqrt @ u_target, cfg)
    return AltMinResult(matrix=res.matrix.conj().T, objective=res.objective,
                        n_iters=res.n_iters, step_objectives=res.step_objectives,
                        lambda_diag=res.lambda_diag, q_rot=res.q_rot)


def _real_stack(z: np.ndarray) -> np.ndarray:
    return np.concatenate([z.real, z.imag])


def design_analog_processor_qcqp(
    u_target: np.ndarray,
    lambda_g: np.ndarray,
    q_g: np.ndarray,
    r_n: np.ndarray,
    cfg: QcqpConfig | None = None,
) -> QcqpResult:
    """Analog processor via iteratively linearized equality-constrained QPs.

    Works on the real-stacked vector of the entries of ``G_A^H``. Each
    iteration replaces the unit-modulus constraints by their tangent
    planes at the previous iterate and solves the resulting QP in closed
    form; the returned ``matrix`` is the phase projection of the final
    iterate (exactly feasible), with the pre-projection modulus residual
    reported.

    With ``cfg=None`` the convexifying shift is set exactly at its
    feasibility bound for this instance.
    """
    u_target = np.asarray(u_target, dtype=complex)
    r_n = np.asarray(r_n)
    n_rx, n_rf = u_target.shape
    lambda_g = np.asarray(lambda_g, dtype=float).reshape(-1)
    if lambda_g.size != n_rf:
        raise ValueError("diagonal scale length must match the RF-chain count")
    q_g = np.asarray(q_g, dtype=complex)

    n_entries = n_rx * n_rf  # entries of G_A^H, column-major stacking
    target = (u_target * lambda_g) @ q_g
    w_block = np.kron(np.eye(n_rf), r_n)
    w_mat = np.block([[w_block.real, -w_block.imag],
                      [w_block.imag, w_block.real]])

    wr, vr = np.linalg.eigh((r_n + r_n.conj().T) / 2)
    rn_sqrt = (vr * np.sqrt(np.maximum(wr, 0.0))) @ vr.conj().T
    c = np.kron(np.eye(n_rf), rn_sqrt).conj().T @ target.reshape(-1, order="F")
    p = _real_stack(c)
    q_const = float(np.linalg.norm(target) ** 2)

    eta_min = QcqpConfig.min_eta(r_n, n_entries, p)
    if cfg is None:
        cfg = QcqpConfig(eta=eta_min)
    elif cfg.eta < eta_min * (1 - 1e-12):
        raise ValueError(f"eta {cfg.eta} below the convexity bound {eta_min}")

    m_eta = w_mat + cfg.eta * np.eye(2 * n_entries)
    cho = scipy.linalg.cho_factor(m_eta)
    a2 = cfg.a ** 2

    def objective(r):
        return float(r @ (m_eta @ r) - 2.0 * (p @ r) + q_const)

    r = np.full(2 * n_entries, np.sqrt(2.0) / 2.0)
    obj = objective(r)
    history = [obj]
    z = scipy.linalg.cho_solve(cho, p)
    n_iters = 0
    for n_iters in range(1, cfg.max_iters + 1):
        prev = obj
        phases = np.arctan2(r[n_entries:], r[:n_entries])
        cos, sin = np.cos(phases), np.sin(phases)
        # tangent-plane matrix has orthonormal rows: row i touches
        # coordinates i and i + n_entries only
        pt = np.zeros((2 * n_entries, n_entries))
        idx = np.arange(n_entries)
        pt[idx, idx] = cos
        pt[idx + n_entries, idx] = sin
        minv_pt = scipy.linalg.cho_solve(cho, pt)
        s = pt.T @ minv_pt
        try:
            lam_half = np.linalg.solve(s, a2 * np.ones(n_entries) - pt.T @ z)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("degenerate iterate in the analog-processor QP") from exc
        r = z + minv_pt @ lam_half
        obj = objective(r)
        history.append(obj)
        if prev - obj < cfg.upsilon:
            break

    x = r[:n_entries] + 1j * r[n_entries:]
    residual = float(np.abs(np.abs(x) - cfg.a).max())
    g_a_h = phase_projection(x.reshape(n_rx, n_rf, order="F"))
    return QcqpResult(matrix=g_a_h.conj().T, objective=obj, n_iters=n_iters,
                      history=np.array(history), modulus_residual=residual)


def _log_abs_det(a: np.ndarray) -> float:
    sign, logdet = np.linalg.slogdet(a)
    if sign == 0 or not np.isfinite(logdet):
        return -np.inf
    return float(logdet)


def design_random(
    h: np.ndarray,
    r_n: np.ndarray,
    n_rf: int,
    cfg: RandomAlgConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Low-complexity analog design by random candidate selection.

    Generates K random rotations of the channel adjoint, phase-projects
    them into the feasible set, and keeps the candidate maximizing the
    absolute determinant of the induced matrix SNR (log-domain; singular
    candidates score -inf and are never picked; ties go to the lowest
    candidate index, so the result is schedule independent).
    """
    h = np.asarray(h, dtype=complex)
    r_n = np.asarray(r_n)
    n_rx, n_tx = h.shape
    rng = np.random.default_rng(cfg.seed)

    def draw(shape):
        if cfg.dist == "uniform01":
            return rng.uniform(0.0, 1.0, size=shape)
        return rng.standard_normal(shape)

    rn_inv = np.linalg.inv(r_n)
    wr, vr = np.linalg.eigh((r_n + r_n.conj().T) / 2)
    rn_inv_sqrt = (vr / np.sqrt(wr)) @ vr.conj().T
    h_whitened = rn_inv_sqrt @ h

    best_f, best_f_score = None, -np.inf
    for _ in range(cfg.k):
        f_k = phase_projection(h.conj().T @ draw((n_rx, n_rf)))
        score = _log_abs_det(f_k.conj().T @ h.conj().T @ rn_inv @ h @ f_k)
        if score > best_f_score:
            best_f, best_f_score = f_k, score

    best_g, best_g_score = None, -np.inf
    for _ in range(cfg.k):
        g_k = phase_projection(draw((n_rf, n_tx)) @ h.conj().T)
        score = _log_abs_det(g_k @ (h_whitened @ h_whitened.conj().T) @ g_k.conj().T)
        if score > best_g_score:
            best_g, best_g_score = g_k, score
    if best_f is None or best_g is None:
        raise NumericalError("all random candidates were singular")
    return best_f, best_g


def quantize_phases(a: np.ndarray, bits: int) -> np.ndarray:
    """Snap unit-modulus entries to the nearest of ``2**bits`` phases
    ``2*pi*k / 2**bits``; ties go to the smaller ``k``."""
    a = np.asarray(a, dtype=complex)
    if bits < 1:
        raise ValueError("bits must be >= 1")
    if np.abs(np.abs(a) - 1.0).max(initial=0.0) > 1e-9:
        raise ValueError("input must be unit modulus")
    levels = 2 ** bits
    step = 2.0 * np.pi / levels
    phase = np.mod(np.angle(a), 2.0 * np.pi)
    k = np.ceil(phase / step - 0.5)  # round half down -> smaller k
    k = np.mod(k, levels)
    return np.exp(1j * step * k)
