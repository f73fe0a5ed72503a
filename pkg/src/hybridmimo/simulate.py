"""Monte-Carlo experiment engine: spectral-efficiency and BER sweeps over
a transmit-power grid, with deterministic per-trial random streams,
failure accounting and plot-ready CSV output.

Determinism contract: the random generator of trial ``t`` at power index
``p`` is seeded by ``(master_seed, p, t)``, so results are bit-identical
regardless of how many workers execute the trials.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from .analog import (
    RandomAlgConfig,
    design_analog_precoder,
    design_analog_processor_qcqp,
    design_analog_processor_relaxed,
    design_random,
    quantize_phases,
)
from .baselines import (
    array_response_codebook,
    direct_phase_projection,
    full_digital,
    full_digital_se,
    omp_hybrid,
    path_steering_codebook,
    phase_projection_codebook,
)
from .channel import ChannelRealization, MmWaveParams, gen_mmwave, gen_rayleigh, noise_covariance
from .core import (
    HybridTransceiver,
    Objective,
    complete_transceiver,
    lmmse_digital_processor,
    mse_matrix_linear,
    optimal_feedback_b,
    snr_matrix,
)
from .linalg import NumericalError, svd_ordered
from .signaling import ModulationScheme, dfd_detect, thp_encode, thp_modulo

__all__ = [
    "SweepConfig",
    "ResultRow",
    "SweepResult",
    "DESIGN_METHODS",
    "spectral_efficiency",
    "designed_transceiver",
    "run_se_sweep",
    "run_ber_sweep",
    "serialize_result",
    "read_result_rows",
]

DESIGN_METHODS = (
    "full-digital",
    "phase-proj",
    "phase-proj-qcqp",
    "omp",
    "direct-proj",
    "random",
)

_OBJECTIVES = {
    "capacity": Objective.capacity,
    "sum_mse": Objective.sum_mse,
    "max_mse": Objective.max_mse,
    "nonlinear_equal_streams": Objective.nonlinear_equal_streams,
}


@dataclass(frozen=True)
class SweepConfig:
    """Everything one sweep needs; validated on construction."""

    n_tx: int = 32
    n_rx: int = 16
    n_rf: int = 4
    n_streams: int = 4
    channel: str = "mmwave"
    mmwave: MmWaveParams = field(default_factory=MmWaveParams)
    noise_model: str = "white"
    noise_sigma2: float = 1.0
    noise_rho: float = 0.0
    method: str = "phase-proj"
    objective: str = "capacity"
    power_db: tuple = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
    trials: int = 200
    master_seed: int = 1
    quant_bits: int | None = None
    random_k: int = 10
    omp_grid: int = 64
    jobs: int = 1
    # BER-only knobs
    modulation_order: int = 16
    symbols_per_trial: int = 100

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if len(self.power_db) == 0:
            raise ValueError("power grid must be non-empty")
        if not (self.n_streams <= self.n_rf <= min(self.n_tx, self.n_rx)):
            raise ValueError("need D <= L <= min(N, M)")
        if self.channel not in ("mmwave", "rayleigh"):
            raise ValueError(f"unknown channel model {self.channel!r}")
        if self.method not in DESIGN_METHODS:
            raise ValueError(f"unknown design method {self.method!r}")
        if self.objective not in _OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.quant_bits is not None and self.quant_bits < 1:
            raise ValueError("quant_bits must be >= 1 when set")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    def objective_obj(self) -> Objective:
        return _OBJECTIVES[self.objective]()

    def noise(self) -> np.ndarray:
        return noise_covariance(self.n_rx, self.noise_model, self.noise_sigma2, self.noise_rho)

    def draw_channel(self, rng: np.random.Generator) -> ChannelRealization:
        if self.channel == "mmwave":
            return gen_mmwave(self.mmwave, self.n_tx, self.n_rx, rng)
        return gen_rayleigh(self.n_tx, self.n_rx, rng)


@dataclass(frozen=True)
class ResultRow:
    power_db: float
    metric: str
    mean: float
    stderr: float
    trials: int
    failures: int


@dataclass
class SweepResult:
    rows: list
    meta: dict


def spectral_efficiency(h, r_n, t: HybridTransceiver) -> float:
    """``log2 det(I + Gamma)`` of a hybrid transceiver in bits/s/Hz;
    independent of the digital processor and feedback."""
    gamma = snr_matrix(h, r_n, t.f_a, t.f_d, t.g_a)
    sign, logdet = np.linalg.slogdet(np.eye(gamma.shape[0]) + gamma)
    if np.real(sign) <= 0:
        raise NumericalError("SNR matrix produced a non-PD log-det argument")
    return max(float(logdet / np.log(2.0)), 0.0)


def _trial_rng(master_seed: int, power_index: int, trial_index: int) -> np.random.Generator:
    return np.random.default_rng((master_seed, power_index, trial_index))


def _analog_pair(cfg: SweepConfig, h, r_n, rng) -> tuple[np.ndarray, np.ndarray]:
    """Analog precoder/processor for the configured hybrid method."""
    if cfg.method in ("phase-proj", "phase-proj-qcqp"):
        w, v = np.linalg.eigh((r_n + r_n.conj().T) / 2)
        rn_inv_sqrt = (v / np.sqrt(w)) @ v.conj().T
        svd = svd_ordered(rn_inv_sqrt @ h)
        f_a = design_analog_precoder(svd.v[:, :cfg.n_rf]).matrix
        relaxed = design_analog_processor_relaxed(svd.u[:, :cfg.n_rf], r_n)
        if cfg.method == "phase-proj":
            g_a = relaxed.matrix
        else:
            g_a = design_analog_processor_qcqp(
                svd.u[:, :cfg.n_rf], relaxed.lambda_diag, relaxed.q_rot, r_n).matrix
        return f_a, g_a
    if cfg.method == "random":
        alg_seed = int(rng.integers(0, 2 ** 63))
        return design_random(h, r_n, cfg.n_rf, RandomAlgConfig(k=cfg.random_k, seed=alg_seed))
    raise ValueError(f"method {cfg.method!r} has no plain analog pair")


def designed_transceiver(cfg: SweepConfig, h, r_n, power: float,
                         rng, kind: str = "linear",
                         objective: Objective | None = None,
                         chan_meta: dict | None = None) -> HybridTransceiver:
    """Run the configured design method on one realization.

    Phase quantization, when enabled, is applied to the continuous
    analog matrices and the digital stages are recomputed on the
    quantized pair. For pursuit on clustered channels, the codebook is
    the steering dictionary of the realization's own path angles
    (``chan_meta``) when available, else a uniform angle grid.
    """
    objective = objective if objective is not None else cfg.objective_obj()
    if cfg.method == "omp":
        meta = chan_meta or {}
        if cfg.channel == "mmwave" and "tx_angles_rad" in meta:
            spacing = meta.get("antenna_spacing", 0.5)
            tx_cb = path_steering_codebook(cfg.n_tx, meta["tx_angles_rad"], spacing)
            rx_cb = path_steering_codebook(cfg.n_rx, meta["rx_angles_rad"], spacing)
        elif cfg.channel == "mmwave":
            tx_cb = array_response_codebook(cfg.n_tx, cfg.omp_grid)
            rx_cb = array_response_codebook(cfg.n_rx, cfg.omp_grid)
        else:
            tx_cb = phase_projection_codebook(h, "tx")
            rx_cb = phase_projection_codebook(h, "rx")
        t = omp_hybrid(h, r_n, tx_cb, rx_cb, cfg.n_rf, cfg.n_streams, power)
        if cfg.quant_bits is None and kind == "linear":
            return t
        f_a, g_a = t.f_a, t.g_a
    elif cfg.method == "direct-proj":
        t = direct_phase_projection(h, r_n, cfg.n_rf, cfg.n_streams, power, objective, "linear")
        if cfg.quant_bits is None and kind == "linear":
            return t
        f_a, g_a = t.f_a, t.g_a
    else:
        f_a, g_a = _analog_pair(cfg, h, r_n, rng)

    if cfg.quant_bits is not None:
        f_a = quantize_phases(f_a, cfg.quant_bits)
        g_a = quantize_phases(g_a, cfg.quant_bits)
    if cfg.method == "omp" and kind == "linear":
        # refit the least-squares digital stage on the quantized analog
        f_opt, _ = full_digital(h, r_n, power, cfg.n_streams)
        f_d, *_ = np.linalg.lstsq(f_a, f_opt, rcond=None)
        used = np.real(np.trace(f_a @ f_d @ f_d.conj().T @ f_a.conj().T))
        if used <= 0:
            raise NumericalError("quantized pursuit produced a zero precoder")
        f_d = f_d * np.sqrt(power / used)
        g_d = lmmse_digital_processor(h, r_n, f_a, f_d, g_a)
        return HybridTransceiver(f_a=f_a, f_d=f_d, g_a=g_a, g_d=g_d,
                                 b=np.zeros((cfg.n_streams, cfg.n_streams)), kind="linear")
    return complete_transceiver(h, r_n, f_a, g_a, objective, power, cfg.n_streams, kind)


def _run_banked(cfg: SweepConfig, worker, metric_names) -> SweepResult:
    """Shared sweep driver: runs ``worker(power_idx, trial_idx)`` for every
    grid cell, collecting one value bank per metric, deterministically
    ordered by trial index."""
    n_pow = len(cfg.power_db)
    banks = {m: np.full((n_pow, cfg.trials), np.nan) for m in metric_names}
    weights = {m: np.zeros((n_pow, cfg.trials)) for m in metric_names}
    failures = np.zeros(n_pow, dtype=int)

    def one(args):
        p_idx, t_idx = args
        try:
            return p_idx, t_idx, worker(p_idx, t_idx)
        except (NumericalError, np.linalg.LinAlgError):
            return p_idx, t_idx, None

    cells = [(p, t) for p in range(n_pow) for t in range(cfg.trials)]
    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            outcomes = list(pool.map(one, cells))
    else:
        outcomes = [one(c) for c in cells]

    for p_idx, t_idx, out in outcomes:
        if out is None:
            failures[p_idx] += 1
            continue
        for m, (value, weight) in out.items():
            banks[m][p_idx, t_idx] = value
            weights[m][p_idx, t_idx] = weight

    rows = []
    for m in metric_names:
        for p_idx, p_db in enumerate(cfg.power_db):
            vals = banks[m][p_idx]
            wts = weights[m][p_idx]
            ok = ~np.isnan(vals)
            n_ok = int(ok.sum())
            if n_ok == 0:
                rows.append(ResultRow(float(p_db), m, float("nan"), float("nan"),
                                      0, int(failures[p_idx])))
                continue
            if m.startswith("ber"):
                # vals hold error counts, weights hold bit counts
                bits = wts[ok].sum()
                errs = vals[ok].sum()
                ber = errs / bits
                stderr = float(np.sqrt(max(ber * (1 - ber), 0.0) / bits))
                rows.append(ResultRow(float(p_db), m, float(ber), stderr,
                                      int(bits), int(failures[p_idx])))
            else:
                mean = float(vals[ok].mean())
                stderr = float(vals[ok].std(ddof=1) / np.sqrt(n_ok)) if n_ok > 1 else 0.0
                rows.append(ResultRow(float(p_db), m, mean, stderr,
                                      n_ok, int(failures[p_idx])))
    return SweepResult(rows=rows, meta=_metadata(cfg))


def run_se_sweep(cfg: SweepConfig) -> SweepResult:
    """Spectral-efficiency sweep of one design method across the power
    grid; failed trials are excluded and counted."""
    r_n = cfg.noise()

    def worker(p_idx, t_idx):
        rng = _trial_rng(cfg.master_seed, p_idx, t_idx)
        chan = cfg.draw_channel(rng)
        h = chan.h
        power = 10.0 ** (cfg.power_db[p_idx] / 10.0)
        if cfg.method == "full-digital":
            se = full_digital_se(h, r_n, power, cfg.n_streams)
        else:
            t = designed_transceiver(cfg, h, r_n, power, rng, chan_meta=chan.meta)
            se = spectral_efficiency(h, r_n, t)
        return {"se": (se, 1.0)}

    return _run_banked(cfg, worker, ["se"])


def _ber_kinds_transceivers(cfg, h, r_n, power, rng, kinds, mod, chan_meta=None):
    """Build the per-kind transceivers for one realization; nonlinear
    kinds use the per-stream-equal design, the linear kind the
    configured objective. The THP precoder is rescaled by the measured
    transmit-symbol power so the average radiated power meets the
    budget."""
    out = {}
    base_analog = None
    for kind in kinds:
        if kind == "linear":
            out[kind] = designed_transceiver(cfg, h, r_n, power, rng, "linear",
                                             chan_meta=chan_meta)
            base_analog = (out[kind].f_a, out[kind].g_a)
        else:
            obj = Objective.nonlinear_equal_streams()
            if base_analog is None:
                t = designed_transceiver(cfg, h, r_n, power, rng, kind, obj,
                                         chan_meta=chan_meta)
                base_analog = (t.f_a, t.g_a)
            else:
                t = complete_transceiver(h, r_n, base_analog[0], base_analog[1],
                                         obj, power, cfg.n_streams, kind)
            out[kind] = t
    if "thp" in out:
        t = out["thp"]
        idx = mod.draw_indices(rng, (cfg.n_streams, 256))
        b_sym = thp_encode(mod.symbols(*idx), t.b, mod)
        c_meas = float(np.mean(np.abs(b_sym) ** 2))
        f_d = t.f_d / np.sqrt(c_meas)
        phi = mse_matrix_linear(h, r_n, t.f_a, f_d, t.g_a)
        b = optimal_feedback_b(phi)
        g_d = lmmse_digital_processor(h, r_n, t.f_a, f_d, t.g_a, b)
        out["thp"] = HybridTransceiver(f_a=t.f_a, f_d=f_d, g_a=t.g_a, g_d=g_d,
                                       b=b, kind="thp")
    return out


def run_ber_sweep(cfg: SweepConfig, mod: ModulationScheme | None = None,
                  kinds=("linear", "thp", "dfd")) -> SweepResult:
    """Uncoded BER of the end-to-end chain for the requested transceiver
    kinds, Gray-labeled square QAM, one metric row per kind."""
    mod = mod if mod is not None else ModulationScheme(cfg.modulation_order)
    for kind in kinds:
        if kind not in ("linear", "thp", "dfd"):
            raise ValueError(f"unknown transceiver kind {kind!r}")
    r_n = cfg.noise()
    noise_chol = np.linalg.cholesky((r_n + r_n.conj().T) / 2)

    def worker(p_idx, t_idx):
        rng = _trial_rng(cfg.master_seed, p_idx, t_idx)
        chan = cfg.draw_channel(rng)
        h = chan.h
        power = 10.0 ** (cfg.power_db[p_idx] / 10.0)
        ts = _ber_kinds_transceivers(cfg, h, r_n, power, rng, kinds, mod, chan.meta)
        n_sym = cfg.symbols_per_trial
        idx = mod.draw_indices(rng, (cfg.n_streams, n_sym))
        a = mod.symbols(*idx)
        noise = noise_chol @ (
            (rng.standard_normal((cfg.n_rx, n_sym))
             + 1j * rng.standard_normal((cfg.n_rx, n_sym))) / np.sqrt(2.0))
        out = {}
        for kind in kinds:
            t = ts[kind]
            b_sym = thp_encode(a, t.b, mod) if kind == "thp" else a
            y = h @ t.f_a @ t.f_d @ b_sym + noise
            z = t.g_d @ t.g_a @ y
            if kind == "thp":
                decided = mod.slice_indices(thp_modulo(z, mod.modulo_base))
            elif kind == "dfd":
                decided = mod.slice_indices(dfd_detect(z, t.b, mod))
            else:
                decided = mod.slice_indices(z)
            errs = mod.bit_errors(idx, decided)
            bits = cfg.n_streams * n_sym * mod.bits_per_symbol
            out[f"ber_{kind}"] = (float(errs), float(bits))
        return out

    return _run_banked(cfg, worker, [f"ber_{k}" for k in kinds])


def _metadata(cfg: SweepConfig) -> dict:
    cfg_dict = asdict(cfg)
    blob = json.dumps(cfg_dict, sort_keys=True, default=str)
    return {
        "config": cfg_dict,
        "master_seed": cfg.master_seed,
        "version": __version__,
        "build": hashlib.sha256(blob.encode()).hexdigest()[:12],
        "power_axis": "transmit power in dB relative to unit noise variance",
        "rng": "per-trial default_rng((master_seed, power_index, trial_index))",
    }


def serialize_result(result: SweepResult, path) -> None:
    """Write the plot-ready CSV plus a JSON metadata sidecar
    (``<path>.meta.json``) carrying the full config and seed."""
    path = str(path)
    try:
        with open(path, "w", encoding="ascii") as f:
            f.write("power_db,metric,mean,stderr,trials,failures\n")
            for r in result.rows:
                f.write(f"{r.power_db:.17g},{r.metric},{r.mean:.17g},"
                        f"{r.stderr:.17g},{r.trials},{r.failures}\n")
        with open(path + ".meta.json", "w", encoding="ascii") as f:
            json.dump(result.meta, f, sort_keys=True, indent=2, default=str)
            f.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write result to {path}: {exc}") from exc


def read_result_rows(path) -> list:
    """Parse a CSV written by :func:`serialize_result`."""
    rows = []
    with open(path, "r", encoding="ascii") as f:
        header = f.readline().strip()
        if header != "power_db,metric,mean,stderr,trials,failures":
            raise ValueError(f"unexpected result header in {path}: {header}")
        for line in f:
            cells = line.strip().split(",")
            if len(cells) != 6:
                raise ValueError(f"malformed result row in {path}: {line!r}")
            rows.append(ResultRow(float(cells[0]), cells[1], float(cells[2]),
                                  float(cells[3]), int(cells[4]), int(cells[5])))
    return rows
