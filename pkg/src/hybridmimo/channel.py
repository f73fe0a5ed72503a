"""Channel realization generators and noise covariance models.

Provides the clustered mmWave model with half-wavelength uniform linear
arrays at both ends, an i.i.d. Rayleigh model, white and exponentially
correlated noise covariances, and a plain-text dump format for channel
matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ChannelRealization",
    "MmWaveParams",
    "gen_mmwave",
    "gen_rayleigh",
    "noise_covariance",
    "steering_vector",
    "save_matrix",
    "save_channel",
    "load_channel",
]


@dataclass(frozen=True)
class MmWaveParams:
    """Clustered-channel geometry knobs.

    Transmit path angles are uniform on ``mean_azimuth_deg +/-
    azimuth_spread_deg``; each cluster draws an omnidirectional receive
    mean angle uniform on [0, 2*pi) with the same within-cluster spread.
    """

    n_clusters: int = 2
    n_paths_per_cluster: int = 5
    mean_azimuth_deg: float = 45.0
    azimuth_spread_deg: float = 7.5
    antenna_spacing_wavelengths: float = 0.5

    def __post_init__(self):
        if self.n_clusters < 1 or self.n_paths_per_cluster < 1:
            raise ValueError("cluster and path counts must be >= 1")
        if self.azimuth_spread_deg < 0:
            raise ValueError("azimuth spread must be >= 0")
        if self.antenna_spacing_wavelengths <= 0:
            raise ValueError("antenna spacing must be > 0")


@dataclass(frozen=True)
class ChannelRealization:
    """A drawn channel: ``h`` is receive-by-transmit, ``r_n`` the noise
    covariance at the receiver."""

    h: np.ndarray
    r_n: np.ndarray
    model_tag: str
    seed: int = -1
    meta: dict = field(default_factory=dict)

    @property
    def n_rx(self) -> int:
        return self.h.shape[0]

    @property
    def n_tx(self) -> int:
        return self.h.shape[1]


def steering_vector(n: int, angle_rad: float | np.ndarray, spacing: float = 0.5) -> np.ndarray:
    """Unit-norm ULA array response ``exp(2j*pi*spacing*k*sin(angle)) / sqrt(n)``.

    ``angle_rad`` may be an array, in which case one column per angle is
    returned.
    """
    angle_rad = np.atleast_1d(np.asarray(angle_rad, dtype=float))
    k = np.arange(n)[:, None]
    a = np.exp(2j * np.pi * spacing * k * np.sin(angle_rad)[None, :]) / np.sqrt(n)
    return a if a.shape[1] > 1 else a[:, 0]


def gen_mmwave(
    params: MmWaveParams,
    n_tx: int,
    n_rx: int,
    rng: np.random.Generator,
    sigma2: float = 1.0,
) -> ChannelRealization:
    """Draw a clustered mmWave channel with ULAs at both ends.

    The channel is a sum of rank-one paths ``alpha * a_rx @ a_tx^H`` with
    standard complex Gaussian path gains, scaled so that
    ``E||H||_F^2 = n_tx * n_rx`` exactly in expectation.
    """
    if n_tx < 1 or n_rx < 1:
        raise ValueError("antenna counts must be >= 1")
    n_paths = params.n_clusters * params.n_paths_per_cluster
    spread = np.deg2rad(params.azimuth_spread_deg)
    mean_tx = np.deg2rad(params.mean_azimuth_deg)

    h = np.zeros((n_rx, n_tx), dtype=complex)
    tx_angles = np.zeros(n_paths)
    rx_angles = np.zeros(n_paths)
    path = 0
    for _ in range(params.n_clusters):
        mean_rx = rng.uniform(0.0, 2.0 * np.pi)
        for _ in range(params.n_paths_per_cluster):
            theta_tx = rng.uniform(mean_tx - spread, mean_tx + spread)
            theta_rx = rng.uniform(mean_rx - spread, mean_rx + spread)
            alpha = (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2.0)
            a_tx = steering_vector(n_tx, theta_tx, params.antenna_spacing_wavelengths)
            a_rx = steering_vector(n_rx, theta_rx, params.antenna_spacing_wavelengths)
            h += alpha * np.outer(a_rx, a_tx.conj())
            tx_angles[path] = theta_tx
            rx_angles[path] = theta_rx
            path += 1
    h *= np.sqrt(n_tx * n_rx / n_paths)
    return ChannelRealization(
        h=h,
        r_n=sigma2 * np.eye(n_rx),
        model_tag="mmwave",
        meta={
            "n_clusters": params.n_clusters,
            "n_paths_per_cluster": params.n_paths_per_cluster,
            "angle_distribution": "uniform",
            "per_path_scale": "sqrt(N*M / n_paths)",
            "tx_angles_rad": tx_angles,
            "rx_angles_rad": rx_angles,
            "antenna_spacing": params.antenna_spacing_wavelengths,
        },
    )


def gen_rayleigh(
    n_tx: int,
    n_rx: int,
    rng: np.random.Generator,
    sigma2: float = 1.0,
) -> ChannelRealization:
    """i.i.d. circularly symmetric complex Gaussian channel with unit
    entry variance, so ``E||H||_F^2 = n_tx * n_rx`` automatically."""
    if n_tx < 1 or n_rx < 1:
        raise ValueError("antenna counts must be >= 1")
    h = (rng.standard_normal((n_rx, n_tx)) + 1j * rng.standard_normal((n_rx, n_tx))) / np.sqrt(2.0)
    return ChannelRealization(h=h, r_n=sigma2 * np.eye(n_rx), model_tag="rayleigh")


def noise_covariance(
    n_rx: int,
    model: str = "white",
    sigma2: float = 1.0,
    rho: float = 0.0,
) -> np.ndarray:
    """Receiver noise covariance.

    ``"white"`` gives ``sigma2 * I``; ``"exp_correlated"`` gives
    ``sigma2 * rho**|k - l|`` which is positive definite for 0 <= rho < 1.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be > 0")
    if model == "white":
        return sigma2 * np.eye(n_rx)
    if model == "exp_correlated":
        if not 0.0 <= rho < 1.0:
            raise ValueError(f"rho must be in [0, 1), got {rho}")
        idx = np.arange(n_rx)
        return sigma2 * rho ** np.abs(idx[:, None] - idx[None, :])
    raise ValueError(f"unknown noise model {model!r}")


def save_matrix(mat: np.ndarray, tag: str, seed: int, path) -> None:
    """Write a complex matrix in the channel dump layout: one header line
    ``rows,cols,tag,seed`` then the matrix rows with real/imag parts
    interleaved, row-major."""
    mat = np.atleast_2d(np.asarray(mat, dtype=complex))
    with open(path, "w", encoding="ascii") as f:
        f.write(f"{mat.shape[0]},{mat.shape[1]},{tag},{seed}\n")
        for row in mat:
            cells = []
            for z in row:
                cells.append(f"{z.real:.17g}")
                cells.append(f"{z.imag:.17g}")
            f.write(",".join(cells) + "\n")


def save_channel(real: ChannelRealization, path) -> None:
    """Write a channel dump: one header line ``M,N,model_tag,seed`` then
    the rows of H with real/imag parts interleaved, row-major."""
    save_matrix(real.h, real.model_tag, real.seed, path)


def load_channel(path) -> ChannelRealization:
    """Read a dump written by :func:`save_channel`.

    The dump carries H only; the returned realization gets an identity
    noise covariance.
    """
    with open(path, "r", encoding="ascii") as f:
        header = f.readline().strip().split(",")
        if len(header) != 4:
            raise ValueError(f"malformed channel dump header in {path}")
        n_rx, n_tx = int(header[0]), int(header[1])
        tag, seed = header[2], int(header[3])
        h = np.zeros((n_rx, n_tx), dtype=complex)
        for i in range(n_rx):
            cells = f.readline().strip().split(",")
            if len(cells) != 2 * n_tx:
                raise ValueError(f"row {i} of {path} has {len(cells)} cells, expected {2 * n_tx}")
            vals = np.array([float(c) for c in cells])
            h[i] = vals[0::2] + 1j * vals[1::2]
    return ChannelRealization(h=h, r_n=np.eye(n_rx), model_tag=tag, seed=seed)
