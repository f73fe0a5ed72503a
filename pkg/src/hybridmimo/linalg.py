"""Matrix decompositions, majorization predicates, water-filling and the
phase projector.

These are the numerical primitives shared by every other module: an
ordered SVD with a deterministic sign convention, a geometric mean
decomposition (GMD) with a lower-triangular equal-diagonal factor, the
entrywise phase projector onto the constant-modulus set, water-filling
power allocation, and the additive/multiplicative majorization tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NumericalError",
    "OrderedSvd",
    "GmdFactors",
    "svd_ordered",
    "gmd",
    "phase_projection",
    "dft_unitary",
    "cholesky_lower",
    "waterfill",
    "majorizes_additively",
    "majorizes_multiplicatively",
]


class NumericalError(RuntimeError):
    """A numeric-domain failure: singular system, loss of definiteness,
    rank deficiency below what an algorithm requires."""


@dataclass(frozen=True)
class OrderedSvd:
    """SVD ``A = U @ diag(sigma) @ V^H`` with ``sigma`` non-increasing.

    The first entry of each column of ``U`` whose magnitude is
    non-negligible is made real positive, so two calls on the same data
    produce identical factors.
    """

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.v.conj().T


@dataclass(frozen=True)
class GmdFactors:
    """Geometric mean decomposition ``A ~= Q @ R @ P^H``.

    ``R`` is lower triangular with a constant real diagonal equal to the
    geometric mean of the ``rank`` retained singular values; ``Q`` and
    ``P`` have orthonormal columns.
    """

    q: np.ndarray
    r: np.ndarray
    p: np.ndarray
    rank: int

    def reconstruct(self) -> np.ndarray:
        return self.q @ self.r @ self.p.conj().T


def _as_matrix(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {a.shape}")
    return a


def svd_ordered(a: np.ndarray) -> OrderedSvd:
    """Economy SVD with singular values sorted non-increasing and a fixed
    sign convention.

    Parameters
    ----------
    a : np.ndarray
        Complex (or real) matrix with finite entries.

    Returns
    -------
    OrderedSvd
        Factors with orthonormal columns; the first non-negligible entry
        of each column of ``u`` is real positive and the matching phase
        is absorbed into ``v`` so that ``u @ diag(sigma) @ v^H == a``.
    """
    a = _as_matrix(a).astype(complex)
    if not np.all(np.isfinite(a)):
        raise ValueError("input matrix contains non-finite entries")
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    v = vh.conj().T
    # np.linalg.svd already sorts descending; normalize column phases.
    for j in range(u.shape[1]):
        col = u[:, j]
        mags = np.abs(col)
        top = mags.max()
        if top == 0.0:
            continue
        k = int(np.argmax(mags > 1e-8 * top))
        phase = col[k] / abs(col[k])
        u[:, j] = col * phase.conj()
        v[:, j] = v[:, j] * phase.conj()
    return OrderedSvd(u=u, sigma=s, v=v)


def phase_projection(a: np.ndarray) -> np.ndarray:
    """Project a matrix entrywise onto the unit-modulus set.

    Each nonzero entry is divided by its magnitude; zero entries map
    to 1. Idempotent.
    """
    a = np.asarray(a, dtype=complex)
    mags = np.abs(a)
    out = np.ones_like(a)
    nz = mags > 0.0
    out[nz] = a[nz] / mags[nz]
    return out


def dft_unitary(n: int) -> np.ndarray:
    """Unitary DFT matrix with entries ``exp(-2j*pi*j*k/n) / sqrt(n)``."""
    if n < 1:
        raise ValueError(f"DFT size must be >= 1, got {n}")
    jk = np.outer(np.arange(n), np.arange(n))
    return np.exp(-2j * np.pi * jk / n) / np.sqrt(n)


def cholesky_lower(a: np.ndarray, *, herm_tol: float = 1e-12) -> np.ndarray:
    """Lower Cholesky factor ``L`` with ``L @ L^H == a``.

    Raises
    ------
    NumericalError
        If ``a`` is not Hermitian positive definite within tolerance.
    """
    a = _as_matrix(a)
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    if np.abs(a - a.conj().T).max(initial=0.0) > herm_tol * scale:
        raise NumericalError("matrix is not Hermitian within tolerance")
    try:
        return np.linalg.cholesky((a + a.conj().T) / 2.0)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("matrix is not positive definite") from exc


def _gmd_rotation_pair(d1: float, d2: float, target: float) -> tuple[np.ndarray, np.ndarray]:
    """Real 2x2 rotations (gl, gr) with gl^T @ diag(d1, d2) @ gr lower
    triangular, (1,1) entry equal to ``target`` and determinant d1*d2.

    Requires ``target`` to lie between d1 and d2.
    """
    if d1 == d2:
        eye = np.eye(2)
        return eye, eye
    c2 = (target * target - d2 * d2) / (d1 * d1 - d2 * d2)
    c = np.sqrt(min(max(c2, 0.0), 1.0))
    s = np.sqrt(max(1.0 - c * c, 0.0))
    # Right factor rotates the first column of diag(d1,d2)@g to norm `target`;
    # the left factor then zeroes its second component.
    g = np.array([[c, -s], [s, c]])
    h = np.array([[c * d1 / target, -s * d2 / target],
                  [s * d2 / target, c * d1 / target]])
    return g, h


def gmd(a: np.ndarray, rank: int) -> GmdFactors:
    """Geometric mean decomposition of the top-``rank`` part of ``a``.

    Produces ``Q R P^H`` equal to ``a`` restricted to its ``rank``
    leading singular triplets, with ``R`` lower triangular and all
    diagonal entries equal to the geometric mean of the retained
    singular values.

    Parameters
    ----------
    a : np.ndarray
        Matrix to decompose.
    rank : int
        Number of singular values to retain; they must all be strictly
        positive relative to the largest one.

    Raises
    ------
    NumericalError
        If ``rank`` exceeds the numerical rank of ``a``.
    """
    a = _as_matrix(a)
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    svd = svd_ordered(a)
    if rank > svd.sigma.size:
        raise NumericalError(f"rank {rank} exceeds min dimension {svd.sigma.size}")
    sigma = svd.sigma[:rank]
    if sigma[-1] <= 1e-13 * max(sigma[0], 1e-300):
        raise NumericalError("requested rank exceeds numerical rank")

    target = float(np.exp(np.mean(np.log(sigma))))
    r = np.diag(sigma).astype(complex)
    q = svd.u[:, :rank].copy()
    p = svd.v[:, :rank].copy()

    # Givens equalization: at step k the trailing block of r is diagonal
    # and its entries have geometric mean `target`, so the largest and
    # smallest always bracket it.
    for k in range(rank - 1):
        tail = np.real(np.diag(r)[k:])
        hi = k + int(np.argmax(tail))
        lo = k + int(np.argmin(tail))
        if hi == lo:
            continue
        # symmetric permutation bringing the bracketing pair to (k, k+1)
        perm = list(range(r.shape[0]))
        for dst, src in ((k, hi), (k + 1, lo)):
            cur = perm.index(src)
            perm[dst], perm[cur] = perm[cur], perm[dst]
        r = r[np.ix_(perm, perm)]
        q = q[:, perm]
        p = p[:, perm]

        d1 = float(np.real(r[k, k]))
        d2 = float(np.real(r[k + 1, k + 1]))
        gl, gr = _gmd_rotation_pair(d1, d2, target)
        rot_l = np.eye(rank)
        rot_r = np.eye(rank)
        rot_l[k:k + 2, k:k + 2] = gl
        rot_r[k:k + 2, k:k + 2] = gr
        r = rot_l.T @ r @ rot_r
        q = q @ rot_l
        p = p @ rot_r
        r[k, k + 1] = 0.0  # analytically zero; drop roundoff

    r = np.tril(r)
    return GmdFactors(q=q, r=r, p=p, rank=rank)


def _waterfill_capacity(gains: np.ndarray, budget: float) -> np.ndarray:
    # p_i = (mu - 1/g_i)^+ with the water level found by bisection.
    inv = 1.0 / gains
    lo = float(inv.min())
    hi = float(budget + inv.max())

    def total(mu: float) -> float:
        return float(np.maximum(mu - inv, 0.0).sum())

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if total(mid) > budget:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-12 * max(1.0, hi):
            break
    mu = 0.5 * (lo + hi)
    p = np.maximum(mu - inv, 0.0)
    # exact water level for the active set found by bisection
    active = p > 0.0
    if active.any():
        mu = (budget + inv[active].sum()) / active.sum()
        p = np.where(active, np.maximum(mu - inv, 0.0), 0.0)
    return p


def _waterfill_weighted(gains: np.ndarray, budget: float, weights: np.ndarray) -> np.ndarray:
    # p_i = (sqrt(w_i) / (sqrt(mu) sqrt(g_i)) - 1/g_i)^+ for the weighted
    # MSE objective sum_i w_i / (1 + g_i p_i); mu found by bisection.
    inv = 1.0 / gains
    wg = weights * gains

    def alloc(mu: float) -> np.ndarray:
        return np.maximum(np.sqrt(weights / (mu * gains)) - inv, 0.0)

    lo = 0.0
    hi = float(wg.max())
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= 0.0:
            break
        if alloc(mid).sum() > budget:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    mu = 0.5 * (lo + hi)
    p = alloc(mu)
    # polish: closed form for the active set makes the sum exact
    active = p > 0.0
    if active.any():
        root_mu = np.sqrt(weights[active] / gains[active]).sum() / (budget + inv[active].sum())
        p = np.where(active, np.maximum(np.sqrt(weights / gains) / root_mu - inv, 0.0), 0.0)
    return p


def waterfill(
    gains: np.ndarray,
    budget: float,
    mode: str = "capacity",
    weights: np.ndarray | None = None,
) -> np.ndarray:
    """Water-filling power allocation across parallel channels.

    Parameters
    ----------
    gains : np.ndarray
        Strictly positive channel power gains.
    budget : float
        Total power to distribute (strictly positive).
    mode : str
        ``"capacity"`` maximizes ``sum(log(1 + g_i p_i))``;
        ``"weighted_mse"`` minimizes ``sum(w_i / (1 + g_i p_i))``.
    weights : np.ndarray, optional
        Strictly positive weights, required for ``"weighted_mse"``.

    Returns
    -------
    np.ndarray
        Nonnegative allocation summing to ``budget``, in the original
        channel order.
    """
    gains = np.asarray(gains, dtype=float)
    if gains.ndim != 1 or gains.size == 0:
        raise ValueError("gains must be a non-empty 1-d array")
    if np.any(gains <= 0.0) or not np.all(np.isfinite(gains)):
        raise ValueError("gains must be strictly positive and finite")
    if budget <= 0.0:
        raise ValueError(f"budget must be positive, got {budget}")
    if mode == "capacity":
        return _waterfill_capacity(gains, float(budget))
    if mode == "weighted_mse":
        if weights is None:
            raise ValueError("weighted_mse mode requires weights")
        weights = np.asarray(weights, dtype=float)
        if weights.shape != gains.shape or np.any(weights <= 0.0):
            raise ValueError("weights must be positive and match gains")
        return _waterfill_weighted(gains, float(budget), weights)
    raise ValueError(f"unknown water-filling mode {mode!r}")


def _sorted_desc(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("majorization is defined for 1-d vectors")
    return np.sort(x)[::-1]


def majorizes_additively(x: np.ndarray, y: np.ndarray, tol: float = 1e-9) -> bool:
    """True iff ``y`` majorizes ``x`` additively: every prefix sum of the
    sorted-descending ``x`` is <= the matching prefix sum of ``y`` and
    the totals agree (absolute tolerance)."""
    xs, ys = _sorted_desc(x), _sorted_desc(y)
    if xs.size != ys.size:
        raise ValueError("vectors must have equal length")
    cx, cy = np.cumsum(xs), np.cumsum(ys)
    if np.any(cx[:-1] > cy[:-1] + tol):
        return False
    return bool(abs(cx[-1] - cy[-1]) <= tol)


def majorizes_multiplicatively(x: np.ndarray, y: np.ndarray, rtol: float = 1e-9) -> bool:
    """True iff ``y`` majorizes ``x`` multiplicatively: prefix products of
    the sorted-descending vectors compare like the additive case, with a
    relative tolerance."""
    xs, ys = _sorted_desc(x), _sorted_desc(y)
    if xs.size != ys.size:
        raise ValueError("vectors must have equal length")
    if np.any(xs < 0.0) or np.any(ys < 0.0):
        raise ValueError("multiplicative majorization needs nonnegative entries")
    px, py = np.cumprod(xs), np.cumprod(ys)
    slack = rtol * np.maximum(np.abs(px), np.abs(py))
    if np.any(px[:-1] > py[:-1] + slack[:-1]):
        return False
    return bool(abs(px[-1] - py[-1]) <= slack[-1] + 1e-300)
