"""Monte Carlo harness: randomized scenarios, trial execution, statistics.

Reproducibility contract: every random quantity flows from the single
config seed through per-trial substreams keyed by (seed, trial, stream), so
records are identical regardless of worker count, and adding or removing
algorithms never perturbs the channel draws.
"""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from typing import Optional, Sequence

import numpy as np

from . import channel as chan
from . import optimize as opt
from . import precoding as pc
from .geometry import (
    BsSpec,
    ConstantReflection,
    DEFAULT_PLASTERBOARD,
    FresnelReflection,
    IrsSpec,
    Point2,
    RadioParams,
    Rect,
    Scene,
    TabulatedReflection,
    UeSpec,
    WallSpec,
)

WORKERS_ENV = "IRSSIM_WORKERS"
ALGORITHMS = ("NR", "NRP", "HOP")
SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment description (flat, explicit units).

    Defaults reproduce the reference deployment: a 10 m room with the BS at
    (0, 5) looking into it, surfaces evenly spaced along the bottom wall,
    UEs drawn uniformly from the far rectangle, 0.1 THz carrier, 100 MHz
    bandwidth, 1 W transmit power, -174 dBm/Hz noise, half-wavelength
    arrays, no molecular absorption, equal QoS weights.
    """

    # population
    k_users: int = 1
    n_irs: int = 1
    m1_bs_elements: int = 4
    m2_ue_elements: int = 1
    area_cm2: float = 100.0
    # radio
    carrier_ghz: float = 100.0
    bandwidth_mhz: float = 100.0
    noise_density_dbm_hz: float = -174.0
    tx_power_w: float = 1.0
    absorption_per_m: float = 0.0
    irs_reflection: complex = 1.0 + 0.0j
    bs_spacing_wl: float = 0.5
    ue_spacing_wl: float = 0.5
    # geometry (degrees in config; converted when the scene is built)
    room_width_m: float = 10.0
    bs_x_m: float = 0.0
    bs_y_m: float = 5.0
    bs_boresight_deg: float = 0.0
    irs_normal_deg: float = 90.0
    ue_boresight_deg: float = -90.0
    ue_region_m: tuple = (2.5, 10.0, 4.0, 10.0)
    # wall
    wall_enabled: bool = False
    wall_material: object = "plasterboard"
    # stochastic channel
    paths_per_link: int = 0
    sigma_sh_db: float = 0.0
    reflector_gain_db: float = -10.0
    shadow_convention: str = "amplitude"
    shadow_bs_links: bool = False
    shared_reflectors: bool = False
    # experiment control
    qos_weights: Optional[tuple] = None
    trials: int = 100
    seed: int = 0
    algorithms: tuple = ("HOP",)
    csi: str = "full"
    quantizer_bits: Optional[int] = None
    quantizer_grid: Optional[int] = None
    quantized_csi: str = "continuous"
    # optimizer
    starts: int = 100
    max_iterations: int = 200
    step_tolerance_rad: float = 1e-8
    include_heuristic_start: bool = True
    newton_damping: bool = True

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if min(self.m1_bs_elements, self.n_irs) < self.k_users:
            raise ValueError(
                f"zero-forcing needs min(M1, N) >= K; got M1={self.m1_bs_elements}, "
                f"N={self.n_irs}, K={self.k_users}"
            )
        if self.csi not in ("full", "los-only"):
            raise ValueError(f"csi must be 'full' or 'los-only', not {self.csi!r}")
        if self.shadow_convention not in ("amplitude", "power"):
            raise ValueError("shadow_convention must be 'amplitude' or 'power'")
        if self.quantized_csi not in ("continuous", "quantized"):
            raise ValueError("quantized_csi must be 'continuous' or 'quantized'")
        if self.quantizer_bits is not None and self.quantizer_bits < 1:
            raise ValueError("quantizer_bits must be >= 1")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ValueError(f"unknown algorithms {sorted(unknown)}; choose from {ALGORITHMS}")
        if self.qos_weights is not None and len(self.qos_weights) != self.k_users:
            raise ValueError("qos_weights must have one entry per user")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / (self.carrier_ghz * 1e9)

    @property
    def q_diag(self) -> np.ndarray:
        if self.qos_weights is None:
            return np.ones(self.k_users)
        return np.asarray(self.qos_weights, dtype=float)


def _wall_material(spec) -> object:
    if spec == "plasterboard":
        return DEFAULT_PLASTERBOARD
    if isinstance(spec, (ConstantReflection, FresnelReflection, TabulatedReflection)):
        return spec
    if isinstance(spec, dict):
        if "constant" in spec:
            re, im = spec["constant"]
            return ConstantReflection(complex(re, im))
        if "permittivity" in spec:
            re, im = spec["permittivity"]
            return FresnelReflection(complex(re, im))
        if "table" in spec:
            rows = spec["table"]  # [[angle_deg, re, im], ...]
            angles = tuple(math.radians(r[0]) for r in rows)
            values = tuple(complex(r[1], r[2]) for r in rows)
            return TabulatedReflection(angles, values)
    raise ValueError(f"unrecognized wall material spec: {spec!r}")


def make_scene(config: ExperimentConfig) -> Scene:
    """Construct the deployment the config describes.

    Surfaces sit at the centers of N equal spans of the bottom wall; nominal
    UE positions sit at the region center (Monte Carlo trials relocate
    them).
    """
    lam = config.wavelength_m
    radio = RadioParams(
        wavelength_m=lam,
        bandwidth_hz=config.bandwidth_mhz * 1e6,
        noise_density_dbm_hz=config.noise_density_dbm_hz,
        tx_power_w=config.tx_power_w,
        absorption_per_m=config.absorption_per_m,
        irs_reflection=complex(config.irs_reflection),
    )
    bs = BsSpec(
        position=Point2(config.bs_x_m, config.bs_y_m),
        boresight=math.radians(config.bs_boresight_deg),
        elements=config.m1_bs_elements,
        spacing_wl=config.bs_spacing_wl,
    )
    normal = math.radians(config.irs_normal_deg)
    spacing = config.room_width_m / config.n_irs
    surfaces = tuple(
        IrsSpec(Point2((n + 0.5) * spacing, 0.0), normal, config.area_cm2 * 1e-4)
        for n in range(config.n_irs)
    )
    x0, x1, y0, y1 = config.ue_region_m
    region = Rect(x0, x1, y0, y1)
    center = Point2(0.5 * (x0 + x1), 0.5 * (y0 + y1))
    ues = tuple(
        UeSpec(center, math.radians(config.ue_boresight_deg),
               config.m2_ue_elements, config.ue_spacing_wl)
        for _ in range(config.k_users)
    )
    wall = None
    if config.wall_enabled:
        wall = WallSpec(Point2(0.0, 0.0), Point2(config.room_width_m, 0.0),
                        _wall_material(config.wall_material))
    return Scene(radio=radio, bs=bs, irs=surfaces, ues=ues, wall=wall, ue_region=region)


def _shadow_amplitudes(rng: np.random.Generator, sigma_db: float, size,
                       convention: str) -> np.ndarray:
    """Log-normal shadowing amplitudes from a dB-domain normal draw.

    The amplitude convention maps g ~ N(0, sigma^2) dB to 10^(g/20); the
    power convention divides by 10 instead.
    """
    if sigma_db <= 0.0:
        return np.ones(size)
    g = rng.normal(0.0, sigma_db, size=size)
    div = 20.0 if convention == "amplitude" else 10.0
    return 10.0 ** (g / div)


def sample_realization(scene: Scene, config: ExperimentConfig,
                       rng: np.random.Generator) -> chan.ChannelRealization:
    """Draw one trial: UE positions, reflector points, fading coefficients.

    UE positions are i.i.d. uniform over the placement region; each
    surface->UE link gets P reflector points uniform over the same region
    (shared across surfaces when configured) with fixed-magnitude,
    uniform-phase coefficients.  BS-side links stay unfaded unless
    ``shadow_bs_links`` opts in.
    """
    k, n, p = config.k_users, config.n_irs, config.paths_per_link
    region = scene.ue_region
    ue_positions = region.sample(rng, k)

    if p > 0:
        if config.shared_reflectors:
            pts = region.sample(rng, k * p).reshape(k, 1, p, 2)
            reflectors = np.broadcast_to(pts, (k, n, p, 2)).copy()
        else:
            reflectors = region.sample(rng, k * n * p).reshape(k, n, p, 2)
        mag = 10.0 ** (config.reflector_gain_db / 20.0)
        phase = rng.uniform(0.0, 2.0 * np.pi, size=(k, n, p))
        coeff = mag * np.exp(1j * phase)
    else:
        reflectors = np.zeros((k, n, 0, 2))
        coeff = np.zeros((k, n, 0), dtype=complex)

    shadow_paths = _shadow_amplitudes(rng, config.sigma_sh_db, (k, n, p + 1),
                                      config.shadow_convention)
    shadow_wall = _shadow_amplitudes(rng, config.sigma_sh_db, (k,),
                                     config.shadow_convention)
    shadow_bs = None
    if config.shadow_bs_links:
        shadow_bs = _shadow_amplitudes(rng, config.sigma_sh_db, (n,),
                                       config.shadow_convention)
    return chan.ChannelRealization(
        ue_positions=ue_positions,
        reflectors=reflectors,
        shadow_paths=shadow_paths,
        reflector_coeff=coeff,
        shadow_wall=shadow_wall,
        shadow_bs=shadow_bs,
    )


@dataclass(frozen=True)
class TrialRecord:
    """Outcome of one algorithm on one channel draw."""

    trial: int
    algorithm: str
    snr_db: np.ndarray          # per-UE received SINR, dB
    rate: np.ndarray            # per-UE bit/s/Hz
    objective: float
    cond: float
    runtime_s: float
    failed: bool = False

    @property
    def mean_snr_db(self) -> float:
        return float(np.mean(self.snr_db))


@dataclass(frozen=True)
class CdfSeries:
    """Empirical CDF with plotting positions i/n."""

    values: np.ndarray
    probabilities: np.ndarray


def cdf(values: Sequence[float]) -> CdfSeries:
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("need at least one value")
    p = np.arange(1, v.size + 1) / v.size
    return CdfSeries(values=v, probabilities=p)


@dataclass(frozen=True)
class Summary:
    """Aggregate statistics for one algorithm across trials."""

    algorithm: str
    trials: int
    failed: int
    mean_snr_db: float          # dB-domain average (matches the CDF plots)
    mean_snr_linear_db: float   # linear-domain average, expressed in dB
    mean_rate: float
    throughput_gbps: float


def summarize(records: Sequence[TrialRecord], bandwidth_hz: float,
              n_users: int) -> dict:
    """Per-algorithm summaries; ill-conditioned trials are counted, not averaged."""
    out = {}
    for alg in sorted({r.algorithm for r in records}):
        good = [r for r in records if r.algorithm == alg and not r.failed]
        failed = sum(1 for r in records if r.algorithm == alg and r.failed)
        if good:
            snr_db = np.concatenate([r.snr_db for r in good])
            rates = np.concatenate([r.rate for r in good])
            mean_db = float(snr_db.mean())
            mean_lin_db = float(10.0 * np.log10(np.mean(10.0 ** (snr_db / 10.0))))
            mean_rate = float(rates.mean())
            tput = pc.throughput_gbps(rates, n_users, bandwidth_hz)
        else:
            mean_db = mean_lin_db = mean_rate = tput = float("nan")
        out[alg] = Summary(
            algorithm=alg, trials=len(good) + failed, failed=failed,
            mean_snr_db=mean_db, mean_snr_linear_db=mean_lin_db,
            mean_rate=mean_rate, throughput_gbps=tput,
        )
    return out


def _trial_rng(seed: int, trial: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial, stream)))


_ALG_STREAM = {"NR": 1, "NRP": 2, "HOP": 3}


def run_trial(scene: Scene, config: ExperimentConfig, trial: int) -> list:
    """Execute every configured algorithm on one seeded channel draw."""
    rng = _trial_rng(config.seed, trial, 0)
    realization = sample_realization(scene, config, rng)
    op_true = chan.build_operands(scene, realization)
    if config.csi == "los-only":
        realization_opt = realization.los_only()
        op_opt = chan.build_operands(scene, realization_opt)
    else:
        op_opt = op_true

    records = []
    for alg in config.algorithms:
        t0 = time.perf_counter()
        try:
            if alg == "HOP":
                result = opt.heuristic_optimize(scene, q_diag=config.q_diag, operands=op_opt)
            else:
                result = opt.multistart(
                    scene, mode=alg, n_starts=config.starts,
                    rng=_trial_rng(config.seed, trial, _ALG_STREAM[alg]),
                    q_diag=config.q_diag, operands=op_opt,
                    include_heuristic_start=config.include_heuristic_start,
                    max_iterations=config.max_iterations,
                    step_tolerance=config.step_tolerance_rad,
                    damping=config.newton_damping,
                )
            record = _evaluate_on_true_channel(scene, config, realization, op_true,
                                               op_opt, result, alg, trial, t0)
        except (pc.IllConditionedError, np.linalg.LinAlgError,
                opt.OptimizationError, opt.NoFeasibleAssignmentError):
            record = TrialRecord(
                trial=trial, algorithm=alg,
                snr_db=np.full(config.k_users, np.nan),
                rate=np.full(config.k_users, np.nan),
                objective=float("nan"), cond=float("inf"),
                runtime_s=time.perf_counter() - t0, failed=True,
            )
        records.append(record)
    return records


def _evaluate_on_true_channel(scene: Scene, config: ExperimentConfig,
                              realization: chan.ChannelRealization,
                              op_true: chan.ChannelOperands,
                              op_opt: chan.ChannelOperands,
                              result: opt.OptimResult, alg: str, trial: int,
                              t0: float) -> TrialRecord:
    """Build the precoder from the optimizer's channel belief, then measure
    SINR on the channel the signal actually crosses."""
    ctrl = result.control
    ev_opt = chan.evaluate_channel(op_opt, ctrl.delta, ctrl.psi, ctrl.alpha)
    h_believed = ev_opt.h
    report = pc.snr_per_ue(h_believed, config.q_diag, config.tx_power_w,
                           scene.radio.noise_power_w)
    precoder = pc.zf_precoder(h_believed, config.q_diag, config.tx_power_w)

    if config.quantizer_bits is not None:
        grids = _quantizer_grids(scene, config)
        h_true = chan.quantized_channel_matrix(
            scene, realization, ctrl.delta, ctrl.psi, ctrl.alpha,
            grids, config.quantizer_bits, operands=op_true)
        if config.quantized_csi == "quantized":
            precoder = pc.zf_precoder(h_true, config.q_diag, config.tx_power_w)
    elif op_true is op_opt:
        h_true = h_believed
    else:
        h_true = chan.evaluate_channel(op_true, ctrl.delta, ctrl.psi, ctrl.alpha).h

    sinr = pc.sinr_with_precoder(h_true, precoder, scene.radio.noise_power_w)
    return TrialRecord(
        trial=trial, algorithm=alg,
        snr_db=10.0 * np.log10(sinr),
        rate=np.log2(1.0 + sinr),
        objective=report.objective, cond=report.cond,
        runtime_s=time.perf_counter() - t0,
    )


def _quantizer_grids(scene: Scene, config: ExperimentConfig) -> list:
    """Per-surface grid sides for quantized evaluation.

    Defaults to the smallest grid whose meta-atom pitch is at most a quarter
    wavelength, the fine-grid regime the continuous model presumes.
    """
    if config.quantizer_grid is not None:
        return [config.quantizer_grid] * scene.n_irs
    lam = scene.radio.wavelength_m
    return [max(1, math.ceil(math.sqrt(s.area_m2) / (0.25 * lam))) for s in scene.irs]


def _run_trial_star(args):
    return run_trial(*args)


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None) -> list:
    """All trials for one config; flat list of TrialRecords sorted by
    (trial, algorithm).  Worker count comes from the IRSSIM_WORKERS
    environment variable unless given explicitly."""
    scene = make_scene(config)
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    tasks = [(scene, config, t) for t in range(config.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_trial_star, tasks, chunksize=8))
    else:
        chunks = [run_trial(*t) for t in tasks]
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=lambda r: (r.trial, r.algorithm))
    return records


# --- CSV output -----------------------------------------------------------------


def write_records_csv(path: str, records: Sequence[TrialRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "algorithm", "ue", "snr_db", "rate_bps_hz",
                    "objective", "cond", "runtime_s", "failed"])
        for r in records:
            for ue in range(len(r.snr_db)):
                w.writerow([r.trial, r.algorithm, ue,
                            f"{r.snr_db[ue]:.6f}", f"{r.rate[ue]:.6f}",
                            f"{r.objective:.6e}", f"{r.cond:.6e}",
                            f"{r.runtime_s:.4f}", int(r.failed)])


def write_cdf_csv(path: str, records: Sequence[TrialRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "snr_db", "probability"])
        for alg in sorted({r.algorithm for r in records}):
            vals = np.concatenate([r.snr_db for r in records
                                   if r.algorithm == alg and not r.failed])
            series = cdf(vals)
            for v, p in zip(series.values, series.probabilities):
                w.writerow([alg, f"{v:.6f}", f"{p:.6f}"])


def write_sweep_csv(path: str, rows: Sequence[dict]) -> None:
    cols = ["parameter", "value", "algorithm", "mean_snr_db", "mean_snr_linear_db",
            "mean_rate_bps_hz", "throughput_gbps", "failed", "trials"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in rows:
            w.writerow([row[c] for c in cols])


def sweep(config: ExperimentConfig, parameter: str, values: Sequence,
          workers: Optional[int] = None) -> list:
    """Run the experiment once per parameter value; rows feed sweep.csv."""
    if parameter not in {f.name for f in fields(ExperimentConfig)}:
        raise ValueError(f"unknown sweep parameter {parameter!r}")
    rows = []
    for value in values:
        cfg = replace(config, **{parameter: value})
        records = run_experiment(cfg, workers=workers)
        stats = summarize(records, cfg.bandwidth_mhz * 1e6, cfg.k_users)
        for alg, s in stats.items():
            rows.append({
                "parameter": parameter, "value": value, "algorithm": alg,
                "mean_snr_db": f"{s.mean_snr_db:.4f}",
                "mean_snr_linear_db": f"{s.mean_snr_linear_db:.4f}",
                "mean_rate_bps_hz": f"{s.mean_rate:.4f}",
                "throughput_gbps": f"{s.throughput_gbps:.4f}",
                "failed": s.failed, "trials": s.trials,
            })
    return rows
