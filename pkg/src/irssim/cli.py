"""Command-line front end.

Subcommands: ``simulate`` (one config -> records/cdf CSVs), ``sweep`` (vary
one parameter -> sweep.csv), ``pattern`` (surface and BS radiation patterns),
``optimize`` (single realization, dump the solution and iteration traces) and
``validate`` (built-in oracle suite).  Worker count for trial parallelism
comes from the IRSSIM_WORKERS environment variable.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from typing import Optional

import numpy as np
import yaml

from . import channel as chan
from . import harness
from . import optimize as opt
from . import precoding as pc
from . import validation
from .harness import ExperimentConfig


class ConfigError(ValueError):
    """A config file or override could not be turned into an experiment."""


_ALIASES = {
    "K": "k_users",
    "N": "n_irs",
    "M1": "m1_bs_elements",
    "M2": "m2_ue_elements",
    "b": "quantizer_bits",
    "U": "starts",
}

_FIELD_NAMES = {f.name for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name: str, value):
    """Cast a raw config value onto its field type, naming the key on failure."""
    try:
        if name in ("k_users", "n_irs", "m1_bs_elements", "m2_ue_elements",
                    "paths_per_link", "trials", "seed", "starts", "max_iterations"):
            return int(value)
        if name in ("quantizer_bits", "quantizer_grid"):
            return None if value is None else int(value)
        if name in ("area_cm2", "carrier_ghz", "bandwidth_mhz", "noise_density_dbm_hz",
                    "tx_power_w", "absorption_per_m", "bs_spacing_wl", "ue_spacing_wl",
                    "room_width_m", "bs_x_m", "bs_y_m", "bs_boresight_deg",
                    "irs_normal_deg", "ue_boresight_deg", "sigma_sh_db",
                    "reflector_gain_db", "step_tolerance_rad"):
            return float(value)
        if name in ("wall_enabled", "shadow_bs_links", "shared_reflectors",
                    "include_heuristic_start", "newton_damping"):
            if isinstance(value, str):
                return value.strip().lower() in ("1", "true", "yes", "on")
            return bool(value)
        if name in ("csi", "shadow_convention", "quantized_csi"):
            return str(value)
        if name == "ue_region_m":
            region = tuple(float(v) for v in value)
            if len(region) != 4:
                raise ValueError("expected [x_min, x_max, y_min, y_max]")
            return region
        if name == "algorithms":
            if isinstance(value, str):
                value = [v for v in value.replace(",", " ").split() if v]
            return tuple(str(v).upper() for v in value)
        if name == "irs_reflection":
            if isinstance(value, (list, tuple)):
                return complex(float(value[0]), float(value[1]))
            return complex(value)
        if name == "qos_weights":
            return None if value is None else tuple(float(v) for v in value)
        if name == "wall_material":
            return value
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key {name!r}: cannot parse {value!r} ({exc})") from exc
    raise ConfigError(f"unknown config key {name!r}")


def parse_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Resolve a config file plus overrides into an ExperimentConfig.

    An empty (or missing) file yields the reference defaults.  Unknown keys,
    malformed values and infeasible populations are reported with the
    offending key path.
    """
    data = {}
    if path is not None:
        with open(path) as fh:
            loaded = yaml.safe_load(fh)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        data.update(loaded)
    if overrides:
        data.update(overrides)

    resolved = {}
    for key, value in data.items():
        name = _ALIASES.get(key, key)
        if name not in _FIELD_NAMES:
            raise ConfigError(f"unknown config key {key!r}")
        resolved[name] = _coerce(name, value)
    try:
        return ExperimentConfig(**resolved)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _collect_overrides(args) -> dict:
    overrides = {}
    for key, attr in (("K", "K"), ("N", "N"), ("M1", "M1"), ("M2", "M2"),
                      ("area_cm2", "area_cm2"), ("trials", "trials"),
                      ("seed", "seed"), ("quantizer_bits", "bits")):
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        overrides[key.strip()] = yaml.safe_load(raw)
    if getattr(args, "algorithms", None):
        overrides["algorithms"] = args.algorithms
    return overrides


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML config file (flat keys; empty = defaults)")
    parser.add_argument("--K", type=int, help="number of users")
    parser.add_argument("--N", type=int, help="number of surfaces")
    parser.add_argument("--M1", type=int, help="BS array elements")
    parser.add_argument("--M2", type=int, help="UE array elements")
    parser.add_argument("--area-cm2", dest="area_cm2", type=float, help="surface area")
    parser.add_argument("--trials", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--bits", type=int, help="phase-shifter control bits")
    parser.add_argument("--algorithms", nargs="+", help="subset of NR NRP HOP")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override any config key (repeatable)")
    parser.add_argument("--out-dir", default=".", help="output directory")


def _out(args, name: str) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def _write_summary(args, payload: dict, name: str = "summary.json") -> None:
    with open(_out(args, name), "w") as fh:
        json.dump(payload, fh, indent=2, default=_jsonable)


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, complex):
        return [value.real, value.imag]
    if dataclasses.is_dataclass(value):
        return dataclasses.asdict(value)
    raise TypeError(f"cannot serialize {type(value)}")


def _config_dict(config: ExperimentConfig) -> dict:
    d = dataclasses.asdict(config)
    d["irs_reflection"] = [config.irs_reflection.real, config.irs_reflection.imag]
    if not isinstance(d["wall_material"], (str, dict)):
        d["wall_material"] = repr(d["wall_material"])
    return d


def cmd_simulate(args) -> int:
    config = parse_config(args.config, _collect_overrides(args))
    records = harness.run_experiment(config)
    harness.write_records_csv(_out(args, "records.csv"), records)
    harness.write_cdf_csv(_out(args, "cdf.csv"), records)
    stats = harness.summarize(records, config.bandwidth_mhz * 1e6, config.k_users)
    _write_summary(args, {"config": _config_dict(config),
                          "algorithms": {a: dataclasses.asdict(s) for a, s in stats.items()}})
    for alg, s in stats.items():
        print(f"{alg}: mean SNR {s.mean_snr_db:.2f} dB, mean rate {s.mean_rate:.3f} "
              f"bit/s/Hz, throughput {s.throughput_gbps:.3f} Gbit/s "
              f"({s.failed}/{s.trials} trials failed)")
    return 0


def cmd_sweep(args) -> int:
    config = parse_config(args.config, _collect_overrides(args))
    values = [yaml.safe_load(v) for v in args.values.split(",")]
    rows = harness.sweep(config, args.param, values)
    harness.write_sweep_csv(_out(args, "sweep.csv"), rows)
    _write_summary(args, {"config": _config_dict(config), "sweep": rows})
    for row in rows:
        print(f"{row['parameter']}={row['value']} {row['algorithm']}: "
              f"mean SNR {row['mean_snr_db']} dB, throughput {row['throughput_gbps']} Gbit/s")
    return 0


def cmd_pattern(args) -> int:
    config = parse_config(args.config, _collect_overrides(args))
    scene = harness.make_scene(config)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(0, 0)))
    realization = harness.sample_realization(scene, config, rng)
    op = chan.build_operands(scene, realization)
    assignment = opt.hungarian(opt.hop_weights(op, config.q_diag))
    control = opt.hop_configure(op, assignment)
    angles = np.radians(np.arange(-89.0, 89.0 + 1e-9, args.step_deg))

    with open(_out(args, "irs_pattern.csv"), "w") as fh:
        fh.write("surface,angle_deg,gain_db\n")
        for n in range(scene.n_irs):
            gains = chan.irs_radiation_pattern(scene, n, control.delta[n], angles)
            for a, g in zip(np.degrees(angles), gains):
                fh.write(f"{n},{a:.3f},{10*math.log10(max(g, 1e-30)):.4f}\n")

    ev = chan.evaluate_channel(op, control.delta, control.psi, control.alpha)
    precoder = pc.zf_precoder(ev.h, config.q_diag, config.tx_power_w)
    gains = pc.bs_pattern(precoder.gamma, scene.bs.spacing_wl, scene.bs.elements, angles)
    with open(_out(args, "bs_pattern.csv"), "w") as fh:
        fh.write("stream,angle_deg,gain_db\n")
        for k in range(scene.n_ues):
            for a, g in zip(np.degrees(angles), gains[k]):
                fh.write(f"{k},{a:.3f},{10*math.log10(max(g, 1e-30)):.4f}\n")

    _write_summary(args, {
        "config": _config_dict(config),
        "assignment": list(assignment.irs_for_ue),
        "rotations_deg": np.degrees(control.delta),
    })
    print(f"wrote irs_pattern.csv and bs_pattern.csv to {args.out_dir}")
    return 0


def cmd_optimize(args) -> int:
    config = parse_config(args.config, _collect_overrides(args))
    scene = harness.make_scene(config)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(0, 0)))
    realization = harness.sample_realization(scene, config, rng)

    solutions = {}
    trace_rows = []
    for alg in config.algorithms:
        if alg == "HOP":
            result = opt.heuristic_optimize(scene, realization, q_diag=config.q_diag)
        else:
            result = opt.multistart(
                scene, realization, mode=alg, n_starts=config.starts,
                rng=np.random.default_rng(
                    np.random.SeedSequence(config.seed, spawn_key=(0, harness._ALG_STREAM[alg]))),
                q_diag=config.q_diag,
                include_heuristic_start=config.include_heuristic_start,
                max_iterations=config.max_iterations,
                step_tolerance=config.step_tolerance_rad,
                damping=config.newton_damping,
                collect_trace=args.trace,
            )
            if result.trace:
                trace_rows += [(alg,) + row for row in result.trace]
        solutions[alg] = {
            "objective": result.objective,
            "snr_db": result.snr_db,
            "delta_rad": result.control.delta,
            "psi_rad": result.control.psi,
            "alpha_rad": result.control.alpha,
            "iterations": result.iterations,
            "starts": result.starts,
            "converged": result.converged,
            "wall_time_s": result.wall_time_s,
        }
        print(f"{alg}: objective {result.objective:.6e}, "
              f"SNR {np.array2string(np.asarray(result.snr_db), precision=2)} dB")

    _write_summary(args, {"config": _config_dict(config), "solutions": solutions},
                   name="solution.json")
    if trace_rows:
        with open(_out(args, "trace.csv"), "w") as fh:
            fh.write("algorithm,start,iteration,objective,step_inf\n")
            for alg, lane, it, f, s in trace_rows:
                fh.write(f"{alg},{lane},{it},{f:.8e},{s:.3e}\n")
    return 0


def cmd_validate(args) -> int:
    results = validation.run_all(seed=args.seed if args.seed is not None else 0,
                                 corrupt_gradient=args.corrupt_gradient)
    for r in results:
        print(r.line())
    _write_summary(args, {"checks": [dataclasses.asdict(r) for r in results]},
                   name="validation.json")
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="irssim",
        description="Simulation and SNR optimization of surface-aided sub-THz downlinks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one experiment, write records/cdf CSVs")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="vary one config parameter, write sweep.csv")
    _add_common(p)
    p.add_argument("--param", required=True, help="config field to vary")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("pattern", help="export surface and BS radiation patterns")
    _add_common(p)
    p.add_argument("--step-deg", type=float, default=0.05, help="angle grid step")
    p.set_defaults(func=cmd_pattern)

    p = sub.add_parser("optimize", help="optimize a single seeded realization")
    _add_common(p)
    p.add_argument("--trace", action="store_true", help="dump per-start iteration traces")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("validate", help="run the built-in oracle suite")
    _add_common(p)
    p.add_argument("--corrupt-gradient", action="store_true",
                   help=argparse.SUPPRESS)  # negative-control hook for tests
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
