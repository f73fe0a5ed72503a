"""Command-line front end.

Verbs: ``design`` (one-shot transceiver design on a single realization),
``sweep-se`` / ``sweep-ber`` (Monte-Carlo sweeps driven by a YAML config
or a shipped preset), ``gen-channel`` (write a channel dump) and
``validate-config``.

Machine-readable output (JSON summaries, written file paths) goes to
stdout; progress and diagnostics go to stderr. Exit codes: 0 success,
2 configuration error, 3 numerical failure, 4 I/O error. The
``HYBRID_MIMO_SEED`` environment variable overrides the master seed.
"""

from __future__ import annotations

import argparse
import difflib
import importlib.resources
import json
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from .channel import (
    MmWaveParams,
    gen_mmwave,
    gen_rayleigh,
    save_channel,
    save_matrix,
)
from .core import Objective, mse_matrix_general, mse_matrix_linear
from .linalg import NumericalError
from .simulate import (
    DESIGN_METHODS,
    SweepConfig,
    designed_transceiver,
    run_ber_sweep,
    run_se_sweep,
    serialize_result,
    spectral_efficiency,
)

__all__ = ["main", "ConfigError", "load_config", "validate_config", "config_to_sweep"]

_OBJECTIVE_TAGS = ("capacity", "sum_mse", "max_mse", "nonlinear_equal_streams")
_BER_KINDS = ("linear", "thp", "dfd")
_PRESETS = ("fig20", "fig21", "fig22", "fig23", "fig24_32", "fig24_64", "fig25")


class ConfigError(ValueError):
    """A configuration problem; maps to exit code 2."""


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# config loading and validation
# ---------------------------------------------------------------------------


def _line_map(text: str) -> dict:
    """Dotted key path -> 1-based line number, from the YAML node tree."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    lines: dict = {}

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for key_node, val_node in node.value:
                path = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
                lines[path] = key_node.start_mark.line + 1
                walk(val_node, path)

    if root is not None:
        walk(root, "")
    return lines


def load_config(path) -> tuple[dict, dict]:
    """Parse a YAML config; returns (data, line map)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" (line {mark.line + 1})" if mark is not None else ""
        raise ConfigError(f"{path}: not valid YAML{where}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping of sections")
    return data, _line_map(text)


def preset_path(name: str) -> Path:
    if name not in _PRESETS:
        hint = difflib.get_close_matches(name, _PRESETS, n=1)
        extra = f"; did you mean {hint[0]!r}?" if hint else ""
        raise ConfigError(f"unknown preset {name!r}{extra}")
    ref = importlib.resources.files("hybridmimo") / "presets" / f"{name}.yaml"
    return Path(str(ref))


class _Checker:
    def __init__(self, data: dict, lines: dict):
        self.data = data
        self.lines = lines
        self.errors: list = []

    def _at(self, path: str) -> str:
        probe = path.split("[", 1)[0]
        line = self.lines.get(path, self.lines.get(probe))
        while line is None and "." in probe:
            probe = probe.rsplit(".", 1)[0]
            line = self.lines.get(probe)
        return f" (line {line})" if line else ""

    def fail(self, path: str, msg: str) -> None:
        self.errors.append(f"{path}: {msg}{self._at(path)}")

    def get(self, path: str, default=None):
        node = self.data
        for part in path.split("."):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return node

    def require(self, path: str, kind, msg: str):
        val = self.get(path)
        if val is None:
            self.fail(path, f"missing; {msg}")
            return None
        if kind is float and isinstance(val, int) and not isinstance(val, bool):
            val = float(val)
        if not isinstance(val, kind) or isinstance(val, bool):
            self.fail(path, msg)
            return None
        return val


def validate_config(data: dict, lines: dict) -> list:
    """Schema and constraint check; returns a list of error strings."""
    c = _Checker(data, lines)
    known_sections = {"system", "channel", "noise", "design", "sweep", "ber"}
    for section in data:
        if section not in known_sections:
            hint = difflib.get_close_matches(str(section), sorted(known_sections), n=1)
            extra = f"; did you mean {hint[0]!r}?" if hint else ""
            c.fail(str(section), f"unknown section{extra}")

    n_tx = c.require("system.n_tx", int, "must be a positive integer")
    n_rx = c.require("system.n_rx", int, "must be a positive integer")
    n_rf = c.require("system.n_rf", int, "must be a positive integer")
    n_streams = c.require("system.n_streams", int, "must be a positive integer")
    if None not in (n_tx, n_rx, n_rf, n_streams):
        if not (1 <= n_streams <= n_rf <= min(n_tx, n_rx)):
            c.fail("system", "need 1 <= n_streams <= n_rf <= min(n_tx, n_rx)")

    model = c.require("channel.model", str, "must be 'mmwave' or 'rayleigh'")
    if model is not None and model not in ("mmwave", "rayleigh"):
        c.fail("channel.model", f"unknown channel model {model!r}")

    noise_model = c.get("noise.model", "white")
    if noise_model not in ("white", "exp_correlated"):
        c.fail("noise.model", f"unknown noise model {noise_model!r}")
    rho = c.get("noise.rho", 0.0)
    if not isinstance(rho, (int, float)) or not (0 <= float(rho) < 1):
        c.fail("noise.rho", "must satisfy 0 <= rho < 1")

    methods = c.get("design.methods")
    if not isinstance(methods, list) or not methods:
        c.fail("design.methods", "must be a non-empty list of method tags")
    else:
        for i, tag in enumerate(methods):
            if tag not in DESIGN_METHODS:
                hint = difflib.get_close_matches(str(tag), DESIGN_METHODS, n=1)
                extra = f"; did you mean {hint[0]!r}?" if hint else ""
                c.fail(f"design.methods[{i}]", f"unknown method {tag!r}{extra}")
    objective = c.get("design.objective", "capacity")
    if objective not in _OBJECTIVE_TAGS:
        hint = difflib.get_close_matches(str(objective), _OBJECTIVE_TAGS, n=1)
        extra = f"; did you mean {hint[0]!r}?" if hint else ""
        c.fail("design.objective", f"unknown objective {objective!r}{extra}")
    quant = c.get("design.quant_bits")
    if quant is not None and (not isinstance(quant, int) or quant < 1):
        c.fail("design.quant_bits", "must be a positive integer or omitted")

    grid = c.get("sweep.power_db")
    if not isinstance(grid, list) or not grid or not all(
            isinstance(p, (int, float)) for p in grid):
        c.fail("sweep.power_db", "must be a non-empty list of dB values")
    trials = c.require("sweep.trials", int, "must be a positive integer")
    if trials is not None and trials < 1:
        c.fail("sweep.trials", "must be >= 1")
    c.require("sweep.master_seed", int, "must be an integer")

    kinds = c.get("ber.kinds")
    if kinds is not None:
        if not isinstance(kinds, list) or not all(k in _BER_KINDS for k in kinds):
            c.fail("ber.kinds", f"must be a list drawn from {_BER_KINDS}")
    order = c.get("ber.modulation")
    if order is not None and order not in ("QPSK", "16QAM"):
        c.fail("ber.modulation", "must be 'QPSK' or '16QAM'")
    return c.errors


def apply_overrides(data: dict, overrides: list) -> dict:
    """Apply dotted ``key=value`` overrides; keys must already exist."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = key.split(".")
        node = data
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"override {key!r} references a missing section {part!r}")
            node = node[part]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigError(f"override {key!r} does not reference an existing key")
        node[parts[-1]] = yaml.safe_load(raw)
    return data


def config_to_sweep(data: dict, method: str, jobs: int = 1) -> SweepConfig:
    """Materialize one method's SweepConfig from a validated config."""
    chan = data.get("channel", {})
    mm = MmWaveParams(
        n_clusters=chan.get("clusters", 2),
        n_paths_per_cluster=chan.get("paths_per_cluster", 5),
        mean_azimuth_deg=chan.get("mean_azimuth_deg", 45.0),
        azimuth_spread_deg=chan.get("azimuth_spread_deg", 7.5),
        antenna_spacing_wavelengths=chan.get("antenna_spacing_wavelengths", 0.5),
    )
    seed = int(data["sweep"]["master_seed"])
    env = os.environ.get("HYBRID_MIMO_SEED")
    if env is not None:
        try:
            seed = int(env)
        except ValueError as exc:
            raise ConfigError(f"HYBRID_MIMO_SEED is not an integer: {env!r}") from exc
    ber = data.get("ber", {})
    order = {"QPSK": 4, "16QAM": 16}.get(ber.get("modulation", "16QAM"), 16)
    return SweepConfig(
        n_tx=data["system"]["n_tx"],
        n_rx=data["system"]["n_rx"],
        n_rf=data["system"]["n_rf"],
        n_streams=data["system"]["n_streams"],
        channel=chan.get("model", "mmwave"),
        mmwave=mm,
        noise_model=data.get("noise", {}).get("model", "white"),
        noise_sigma2=float(data.get("noise", {}).get("sigma2", 1.0)),
        noise_rho=float(data.get("noise", {}).get("rho", 0.0)),
        method=method,
        objective=data.get("design", {}).get("objective", "capacity"),
        power_db=tuple(float(p) for p in data["sweep"]["power_db"]),
        trials=int(data["sweep"]["trials"]),
        master_seed=seed,
        quant_bits=data.get("design", {}).get("quant_bits"),
        random_k=int(data.get("design", {}).get("random_k", 10)),
        omp_grid=int(data.get("design", {}).get("omp_grid", 64)),
        jobs=jobs,
        modulation_order=order,
        symbols_per_trial=int(ber.get("symbols_per_trial", 100)),
    )


def _load_validated(args) -> dict:
    if args.preset:
        path = preset_path(args.preset)
    elif args.config:
        path = Path(args.config)
    else:
        raise ConfigError("needs --preset or --config")
    data, lines = load_config(path)
    data = apply_overrides(data, args.set or [])
    errors = validate_config(data, lines)
    if errors:
        raise ConfigError(f"{path}: " + "; ".join(errors))
    return data


# ---------------------------------------------------------------------------
# verbs
# ---------------------------------------------------------------------------


def cmd_design(args) -> int:
    cfg = SweepConfig(
        n_tx=args.n, n_rx=args.m, n_rf=args.l, n_streams=args.d,
        channel=args.channel, method=args.method, objective=args.objective,
        power_db=(args.power_db,), trials=1, master_seed=args.seed,
        quant_bits=args.quant_bits, random_k=args.k,
    )
    seed = args.seed
    env = os.environ.get("HYBRID_MIMO_SEED")
    if env is not None:
        seed = int(env)
    rng = np.random.default_rng((seed, 0, 0))
    if cfg.channel == "mmwave":
        chan = gen_mmwave(cfg.mmwave, cfg.n_tx, cfg.n_rx, rng)
    else:
        chan = gen_rayleigh(cfg.n_tx, cfg.n_rx, rng)
    h, r_n = chan.h, chan.r_n
    power = 10.0 ** (args.power_db / 10.0)
    _say(f"designing {args.method} on a {cfg.n_rx}x{cfg.n_tx} {cfg.channel} realization")
    if args.method == "full-digital":
        from .baselines import full_digital, full_digital_se

        se = full_digital_se(h, r_n, power, cfg.n_streams)
        summary = {
            "method": args.method, "se_bits": se, "power_budget": power,
            "seed": seed, "kind": "linear",
        }
        print(json.dumps(summary, sort_keys=True))
        return 0
    t = designed_transceiver(cfg, h, r_n, power, rng, kind=args.kind,
                             chan_meta=chan.meta)
    phi_lin = mse_matrix_linear(h, r_n, t.f_a, t.f_d, t.g_a)
    phi = mse_matrix_general(phi_lin, t.b) if t.kind != "linear" else phi_lin
    summary = {
        "method": args.method,
        "kind": t.kind,
        "se_bits": spectral_efficiency(h, r_n, t),
        "per_stream_mse": [float(x) for x in np.real(np.diag(phi))],
        "modulus_residual": t.modulus_residual(),
        "power_used": t.transmit_power,
        "power_budget": power,
        "seed": seed,
        "random_k": args.k if args.method == "random" else None,
        "quant_bits": args.quant_bits,
    }
    print(json.dumps(summary, sort_keys=True))
    if args.dump:
        for name, mat in (("h", h), ("fa", t.f_a), ("fd", t.f_d),
                          ("ga", t.g_a), ("gd", t.g_d), ("b", t.b)):
            out = f"{args.dump}_{name}.csv"
            save_matrix(mat, name, seed, out)
            print(out)
    return 0


def cmd_sweep(args, kind: str) -> int:
    data = _load_validated(args)
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    methods = data["design"]["methods"]
    combined = []
    failed = []
    for method in methods:
        cfg = config_to_sweep(data, method, jobs=args.jobs)
        _say(f"[{kind}] running {method}: {cfg.trials} trials x {len(cfg.power_db)} power points")
        try:
            if kind == "se":
                result = run_se_sweep(cfg)
            else:
                kinds = tuple(data.get("ber", {}).get("kinds", ["linear", "thp", "dfd"]))
                result = run_ber_sweep(cfg, kinds=kinds)
        except (NumericalError, np.linalg.LinAlgError) as exc:
            _say(f"[{kind}] method {method} failed: {exc}")
            failed.append(method)
            continue
        path = out_dir / f"{kind}_{method}.csv"
        serialize_result(result, path)
        print(path)
        for row in result.rows:
            combined.append((row, method))
    if len(failed) == len(methods):
        _say("all methods failed")
        return 3
    combined_path = out_dir / f"{kind}_combined.csv"
    with open(combined_path, "w", encoding="ascii") as f:
        f.write("power_db,metric,mean,stderr,trials,failures\n")
        for row, method in combined:
            f.write(f"{row.power_db:.17g},{row.metric}_{method},{row.mean:.17g},"
                    f"{row.stderr:.17g},{row.trials},{row.failures}\n")
    print(combined_path)
    return 0


def cmd_gen_channel(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.model == "mmwave":
        params = MmWaveParams(n_clusters=args.clusters, n_paths_per_cluster=args.paths)
        chan = gen_mmwave(params, args.n, args.m, rng)
    else:
        chan = gen_rayleigh(args.n, args.m, rng)
    chan = type(chan)(h=chan.h, r_n=chan.r_n, model_tag=chan.model_tag,
                      seed=args.seed, meta=chan.meta)
    save_channel(chan, args.out)
    print(args.out)
    return 0


def cmd_validate_config(args) -> int:
    if args.preset:
        path = preset_path(args.preset)
    else:
        path = Path(args.config)
    data, lines = load_config(path)
    errors = validate_config(data, lines)
    if errors:
        _say(f"{path}: invalid configuration")
        for err in errors:
            _say(f"  {err}")
        return 2
    print(f"{path}: ok")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="path to a YAML sweep configuration")
    p.add_argument("--preset", help=f"shipped preset name ({', '.join(_PRESETS)})")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key (dotted path), repeatable")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybridmimo",
                                description="hybrid MIMO transceiver design and simulation")
    sub = p.add_subparsers(dest="verb", required=True)

    d = sub.add_parser("design", help="one-shot design on a single channel realization")
    d.add_argument("--method", required=True, choices=DESIGN_METHODS)
    d.add_argument("--n", type=int, default=32, help="transmit antennas")
    d.add_argument("--m", type=int, default=16, help="receive antennas")
    d.add_argument("--l", type=int, default=4, help="RF chains")
    d.add_argument("--d", type=int, default=4, help="data streams")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--k", type=int, default=10, help="random-design candidate count")
    d.add_argument("--channel", choices=("mmwave", "rayleigh"), default="mmwave")
    d.add_argument("--objective", choices=_OBJECTIVE_TAGS, default="capacity")
    d.add_argument("--kind", choices=_BER_KINDS, default="linear")
    d.add_argument("--power-db", type=float, default=10.0)
    d.add_argument("--quant-bits", type=int, default=None)
    d.add_argument("--dump", metavar="PREFIX", help="dump matrices as PREFIX_<name>.csv")
    d.set_defaults(func=cmd_design)

    for kind in ("se", "ber"):
        s = sub.add_parser(f"sweep-{kind}", help=f"{kind.upper()} Monte-Carlo sweep")
        _add_config_args(s)
        s.add_argument("--out", default=".", help="output directory for CSV files")
        s.add_argument("--jobs", type=int, default=1, help="worker threads (results identical)")
        s.set_defaults(func=lambda a, k=kind: cmd_sweep(a, k))

    g = sub.add_parser("gen-channel", help="write a channel dump CSV")
    g.add_argument("--model", choices=("mmwave", "rayleigh"), required=True)
    g.add_argument("--n", type=int, required=True, help="transmit antennas")
    g.add_argument("--m", type=int, required=True, help="receive antennas")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--clusters", type=int, default=2)
    g.add_argument("--paths", type=int, default=5)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_channel)

    v = sub.add_parser("validate-config", help="schema-check a configuration")
    v.add_argument("--config")
    v.add_argument("--preset")
    v.set_defaults(func=cmd_validate_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _say(f"config error: {exc}")
        return 2
    except (NumericalError, np.linalg.LinAlgError) as exc:
        _say(f"numerical failure: {exc}")
        return 3
    except OSError as exc:
        _say(f"i/o error: {exc}")
        return 4


if __name__ == "__main__":
    sys.exit(main())
