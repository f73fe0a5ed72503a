"""Square-QAM modulation with Gray labeling, the lattice modulo used by
Tomlinson-Harashima precoding, the successive THP encoder and the
decision-feedback detector.

Constellations are normalized to unit average symbol energy; the modulo
base is the period that tiles the per-dimension level set, i.e.
``sqrt(order) * (level spacing)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ModulationScheme",
    "thp_modulo",
    "thp_encode",
    "dfd_detect",
]


def _gray(i: np.ndarray) -> np.ndarray:
    return i ^ (i >> 1)


_POPCOUNT8 = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)


@dataclass(frozen=True)
class ModulationScheme:
    """Unit-energy square QAM (4 = QPSK, 16 = 16-QAM, ...)."""

    order: int
    levels: np.ndarray = field(init=False, repr=False)
    constellation: np.ndarray = field(init=False, repr=False)
    modulo_base: float = field(init=False)

    def __post_init__(self):
        m = int(round(np.sqrt(self.order)))
        if m * m != self.order or m < 2:
            raise ValueError("QAM order must be a square number >= 4")
        raw = 2.0 * np.arange(m) - (m - 1)  # odd-integer grid
        scale = 1.0 / np.sqrt(2.0 * (m * m - 1) / 3.0)
        object.__setattr__(self, "levels", raw * scale)
        grid_i, grid_q = np.meshgrid(self.levels, self.levels, indexing="ij")
        object.__setattr__(self, "constellation", (grid_i + 1j * grid_q).reshape(-1))
        # tiling period: sqrt(order) steps of 2*scale per dimension
        object.__setattr__(self, "modulo_base", float(2.0 * m * scale))

    @property
    def side(self) -> int:
        return int(round(np.sqrt(self.order)))

    @property
    def bits_per_symbol(self) -> int:
        return 2 * int(np.log2(self.side))

    def draw_indices(self, rng: np.random.Generator, shape) -> tuple[np.ndarray, np.ndarray]:
        """Uniform per-dimension level indices."""
        return (rng.integers(0, self.side, size=shape),
                rng.integers(0, self.side, size=shape))

    def symbols(self, idx_i: np.ndarray, idx_q: np.ndarray) -> np.ndarray:
        return self.levels[idx_i] + 1j * self.levels[idx_q]

    def slice_indices(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Nearest-level decision per dimension."""
        m = self.side
        step = self.levels[1] - self.levels[0]
        idx_i = np.clip(np.round((z.real - self.levels[0]) / step), 0, m - 1).astype(np.int64)
        idx_q = np.clip(np.round((z.imag - self.levels[0]) / step), 0, m - 1).astype(np.int64)
        return idx_i, idx_q

    def slice_symbols(self, z: np.ndarray) -> np.ndarray:
        idx_i, idx_q = self.slice_indices(z)
        return self.symbols(idx_i, idx_q)

    def bit_errors(self, sent: tuple[np.ndarray, np.ndarray],
                   decided: tuple[np.ndarray, np.ndarray]) -> int:
        """Hamming distance of the Gray labels, summed over both
        dimensions and all symbols."""
        total = 0
        for a, b in zip(sent, decided):
            x = _gray(a.astype(np.int64)) ^ _gray(b.astype(np.int64))
            total += int(_POPCOUNT8[x & 0xFF].sum())
        return total


def thp_modulo(v: np.ndarray, base: float) -> np.ndarray:
    """Wrap real and imaginary parts into [-base/2, base/2); equivalent to
    adding a point of the lattice ``base * (Z + jZ)``. Idempotent."""
    if base <= 0:
        raise ValueError("modulo base must be positive")
    v = np.asarray(v, dtype=complex)
    re = v.real - base * np.floor((v.real + base / 2.0) / base)
    im = v.imag - base * np.floor((v.imag + base / 2.0) / base)
    return re + 1j * im


def thp_encode(a: np.ndarray, b_matrix: np.ndarray, mod: ModulationScheme) -> np.ndarray:
    """Successive interference pre-cancellation with lattice wrapping.

    ``a`` holds data symbols, one stream per row; row k of the output is
    ``modulo(a_k - sum_{l<k} B[k, l] b_l)``. With zero feedback this is
    the identity.
    """
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    d = a.shape[0]
    b_matrix = np.asarray(b_matrix)
    if b_matrix.shape != (d, d):
        raise ValueError("feedback matrix shape must match the stream count")
    out = np.zeros_like(a)
    for k in range(d):
        fb = b_matrix[k, :k] @ out[:k] if k else 0.0
        out[k] = thp_modulo(a[k] - fb, mod.modulo_base)
    return out


def dfd_detect(
    z: np.ndarray,
    b_matrix: np.ndarray,
    mod: ModulationScheme,
    genie: np.ndarray | None = None,
) -> np.ndarray:
    """Successive interference cancellation at the receiver.

    Stream k is sliced from ``z_k - sum_{l<k} B[k, l] * decision_l``.
    With ``genie`` set, the true symbols are fed back instead of the
    decisions (error-propagation-free lower bound).
    """
    z = np.atleast_2d(np.asarray(z, dtype=complex))
    d = z.shape[0]
    b_matrix = np.asarray(b_matrix)
    if b_matrix.shape != (d, d):
        raise ValueError("feedback matrix shape must match the stream count")
    decided = np.zeros_like(z)
    feedback_src = decided if genie is None else np.asarray(genie, dtype=complex)
    for k in range(d):
        fb = b_matrix[k, :k] @ feedback_src[:k] if k else 0.0
        decided[k] = mod.slice_symbols(z[k] - fb)
    return decided
