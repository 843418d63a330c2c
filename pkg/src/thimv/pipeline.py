"""End-to-end runs: simulate, separate, beamform, measure, persist.

Layout of an output directory::

    config.resolved.json
    sim/<phantom>/rf_<i>_pos.rf, rf_<i>_neg.rf, harm_<i>.rf
    cases/<label>/{points,cysts}.pgm, {points,cysts}.dbmap, metrics.csv,
                  config.resolved.json
    sweep.csv, sweep_timing.csv, baselines.csv, compare.csv

All metric means in the CSV reports are arithmetic means over targets
(9 wire targets, 5 cysts); targets whose measurement fails are reported as
``nan`` and skipped in the means.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import io as tio
from .beamformers import beamform_image
from .core import BeamformedImage, BeamformerParams, ScanGeometry, TransmitPulse
from .errors import InvalidArgument
from .metrics import QualityReport, cyst_report, point_report
from .separation import PiPair, bandpass_2f0, pi_combine
from .simulator import (
    NOISELESS,
    POINT_DEPTHS,
    NoiseSpec,
    Phantom,
    RfSynthesizer,
    add_noise,
    derive_seed,
    make_cyst_phantom,
    make_point_phantom,
)

log = logging.getLogger(__name__)

PHANTOMS = ("points", "cysts")
PHANTOM_CHOICES = PHANTOMS + ("both",)
FAMILIES = ("K", "L", "loading", "delta")
BASELINES = ("DAS", "MV", "EIBMV_stan", "EIBMV_best")
# Gains of the best EIBMV setting reported in the literature; reference only.
REFERENCE_GAINS = {"DAS": (10.6, 78.0), "MV": (9.2, 62.0), "EIBMV_stan": (0.4, 32.0)}

SWEEP_COLUMNS = (
    "family",
    "case_index",
    "case",
    "method",
    "window",
    "K",
    "L",
    "delta_load",
    "delta_sub",
    "mean_fwhm_mm",
    "mean_cr_db",
    "mean_cnr",
    "mean_radius_err_mm",
)
METRIC_FIELDS = SWEEP_COLUMNS[-4:]
TARGET_COLUMNS = ("phantom", "target", "x_mm", "z_mm", "fwhm_mm", "cr_db", "cnr", "radius_mm", "radius_err_mm")
COMPARE_COLUMNS = (
    "baseline",
    "cr_best_db",
    "cr_baseline_db",
    "cr_gain_db",
    "cnr_best",
    "cnr_baseline",
    "cnr_gain_pct",
    "reference_cr_gain_db",
    "reference_cnr_gain_pct",
)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce a run, apart from beamformer settings."""

    n_elements: int = 132
    rx_aperture: int = 66
    pitch: float = 409e-6
    kerf: float = 20e-6
    c0: float = 1540.0
    fs: float = 50e6
    f0: float = 1.96e6
    n_cycles: float = 2.0
    tx_focus_depth: float = 50e-3
    initial_pressure: float = 1.0e6
    n_scanlines: int = 64
    depth_min: float = 20e-3
    depth_max: float = 70e-3
    depth_decimation: int = 4
    phantom: str = "both"
    seed: int = 0
    snr_db: Union[float, str] = 60.0
    bandpass: bool = True
    bandwidth: float = 0.5
    harmonic_coeff: float = 0.1
    scatter_density: float = 10.0
    dynamic_range_db: float = 50.0
    out: str = "out"

    def __post_init__(self):
        if self.phantom not in PHANTOM_CHOICES:
            raise InvalidArgument(f"phantom must be one of {PHANTOM_CHOICES}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise InvalidArgument("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "seed", int(self.seed))
        NoiseSpec(self.snr_db)
        if not self.dynamic_range_db > 0:
            raise InvalidArgument("dynamic_range_db must be positive")
        if not 0.0 < self.bandwidth < 1.0:
            raise InvalidArgument("bandwidth must lie in (0, 1)")
        # Surface geometry/pulse errors at construction time.
        self.geometry()
        self.pulse()

    def geometry(self) -> ScanGeometry:
        return ScanGeometry.reference(
            n_elements=self.n_elements,
            rx_aperture=self.rx_aperture,
            pitch=self.pitch,
            kerf=self.kerf,
            c0=self.c0,
            fs=self.fs,
            n_scanlines=self.n_scanlines,
            depth_min=self.depth_min,
            depth_max=self.depth_max,
            depth_decimation=self.depth_decimation,
        )

    def pulse(self, polarity: int = 1) -> TransmitPulse:
        return TransmitPulse(
            f0=self.f0,
            n_cycles=self.n_cycles,
            fs=self.fs,
            polarity=polarity,
            tx_focus_depth=self.tx_focus_depth,
            initial_pressure=self.initial_pressure,
        )

    @property
    def phantoms(self) -> Tuple[str, ...]:
        return PHANTOMS if self.phantom == "both" else (self.phantom,)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise InvalidArgument(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**d)
        except InvalidArgument:
            raise
        except (TypeError, ValueError) as exc:
            raise InvalidArgument(f"invalid config value: {exc}") from None

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def standard_params(config: RunConfig) -> BeamformerParams:
    """K_stan from the pulse length (2K + 1 samples), L_stan = M/2, loading 1/(100 L_stan)."""
    K = int(math.floor(config.fs * config.n_cycles / config.f0 / 2.0))
    L = max(1, round_half_up(config.rx_aperture / 2))
    return BeamformerParams(method="EIBMV", K=K, L=L, delta_load=1.0 / (100.0 * L), delta_sub=0.5)


@dataclass(frozen=True)
class SweepCase:
    family: str
    index: int
    params: BeamformerParams

    @property
    def name(self) -> str:
        return f"{self.family}{self.index}"


def case_label(params: BeamformerParams) -> str:
    """Directory-safe name that is unique for distinct parameter sets."""
    if params.method == "DAS":
        return f"DAS-{params.window}"
    return f"{params.method}-K{params.K}-L{params.L}-load{params.delta_load!r}-sub{params.delta_sub!r}"


@dataclass(frozen=True)
class SweepPlan:
    """One-at-a-time variation of K, L, loading and subspace factor."""

    cases: Tuple[SweepCase, ...]
    standard: BeamformerParams
    best: BeamformerParams

    @classmethod
    def default(cls, config: RunConfig = RunConfig(), families: Sequence[str] = FAMILIES) -> "SweepPlan":
        std = standard_params(config)
        M = config.rx_aperture
        values = {
            "K": [max(0, round_half_up(x)) for x in (0, std.K / 3, std.K / 2, std.K, 2 * std.K)],
            "L": [max(1, round_half_up(x)) for x in (1, M / 6, M / 3, M / 2, M)],
            "loading": [0.0, std.delta_load / 100, std.delta_load / 10, std.delta_load, 10 * std.delta_load],
            "delta": [0.0, 0.1, 0.5, 0.8, 1.0],
        }
        attr = {"K": "K", "L": "L", "loading": "delta_load", "delta": "delta_sub"}
        cases = []
        for fam in families:
            if fam not in FAMILIES:
                raise InvalidArgument(f"unknown sweep family {fam!r}")
            for i, v in enumerate(values[fam], start=1):
                cases.append(SweepCase(fam, i, dataclasses.replace(std, **{attr[fam]: v})))
        best = dataclasses.replace(std, K=round_half_up(1.5 * std.K), L=max(1, round_half_up(M / 3)))
        return cls(cases=tuple(cases), standard=std, best=best)

    def unique_params(self) -> List[BeamformerParams]:
        """Distinct parameter sets in order of first appearance."""
        seen = {}
        for case in self.cases:
            seen.setdefault(case.params, None)
        return list(seen)

    def baseline_params(self) -> Dict[str, BeamformerParams]:
        return {
            "DAS": BeamformerParams(method="DAS", window="rectangular", K=0, L=1, delta_load=0.0, delta_sub=0.0),
            "MV": dataclasses.replace(self.standard, method="MV"),
            "EIBMV_stan": self.standard,
            "EIBMV_best": self.best,
        }


@dataclass(frozen=True, eq=False)
class Simulation:
    """Harmonic RF frames (one per scanline) for one phantom."""

    phantom: Phantom
    frames: tuple

    def scaled(self, factor: float) -> "Simulation":
        return Simulation(self.phantom, tuple(f.replace_data(f.data * factor) for f in self.frames))


def make_phantom(config: RunConfig, kind: str) -> Phantom:
    geometry = config.geometry()
    if kind == "points":
        return make_point_phantom(geometry, harmonic_coeff=config.harmonic_coeff)
    if kind == "cysts":
        return make_cyst_phantom(
            geometry, config.seed, f0=config.f0, density=config.scatter_density, harmonic_coeff=config.harmonic_coeff
        )
    raise InvalidArgument(f"unknown phantom {kind!r}")


def simulate(config: RunConfig, kind: str, rf_dir: Optional[Path] = None) -> Simulation:
    """Pulse-inversion pairs with noise, combined and band-limited to 2 f0.

    Each transmit gets its own noise stream seeded from (seed, phantom,
    polarity, scanline), so results do not depend on execution order.
    """
    geometry = config.geometry()
    phantom = make_phantom(config, kind)
    synth = RfSynthesizer(phantom, geometry, config.pulse())
    frames = []
    for idx in range(geometry.n_scanlines):
        plus, minus = synth.pair(idx)
        plus = add_noise(plus, NoiseSpec(config.snr_db, derive_seed(config.seed, f"noise:{kind}:+", idx)))
        minus = add_noise(minus, NoiseSpec(config.snr_db, derive_seed(config.seed, f"noise:{kind}:-", idx)))
        harm = pi_combine(PiPair(plus, minus))
        if config.bandpass:
            harm = bandpass_2f0(harm, config.f0, config.bandwidth)
        if rf_dir is not None:
            tio.write_rf(rf_dir / f"rf_{idx:03d}_pos.rf", plus, geometry)
            tio.write_rf(rf_dir / f"rf_{idx:03d}_neg.rf", minus, geometry)
            tio.write_rf(rf_dir / f"harm_{idx:03d}.rf", harm, geometry)
        frames.append(harm)
    return Simulation(phantom, tuple(frames))


def simulate_all(config: RunConfig, write_rf: bool = False) -> Dict[str, Simulation]:
    out = Path(config.out)
    return {k: simulate(config, k, out / "sim" / k if write_rf else None) for k in config.phantoms}


@dataclass(frozen=True, eq=False)
class RunResult:
    params: BeamformerParams
    report: QualityReport
    images: Dict[str, BeamformedImage] = field(repr=False)
    seconds: float = 0.0
    directory: Optional[Path] = None


def form_image(config: RunConfig, sim: Simulation, params: BeamformerParams, keep_weights: bool = False) -> BeamformedImage:
    return beamform_image(
        sim.frames,
        params,
        config.geometry(),
        f0=config.f0,
        tx_focus_depth=config.tx_focus_depth,
        dynamic_range_db=config.dynamic_range_db,
        keep_weights=keep_weights,
    )


def measure(kind: str, image: BeamformedImage, phantom: Phantom) -> QualityReport:
    if kind == "points":
        return point_report(image, phantom.z.tolist())
    return cyst_report(image, phantom.cyst_centers, phantom.cyst_radius)


def _target_rows(kind: str, phantom: Phantom, report: QualityReport) -> list:
    nan = float("nan")
    rows = []
    if kind == "points":
        for i, (x, z) in enumerate(zip(phantom.x, phantom.z)):
            rows.append([kind, i, float(x) * 1e3, float(z) * 1e3, report.fwhm_mm[i], nan, nan, nan, nan])
    else:
        for i, (x, z) in enumerate(phantom.cyst_centers):
            rows.append(
                [kind, i, float(x) * 1e3, float(z) * 1e3, nan,
                 report.cr_db[i], report.cnr[i], report.radius_mm[i], report.radius_err_mm[i]]
            )
    return rows


def run_case(
    config: RunConfig,
    params: BeamformerParams,
    sims: Dict[str, Simulation],
    directory: Optional[Path] = None,
) -> RunResult:
    """Beamform and measure every simulated phantom; optionally persist."""
    t_start = time.perf_counter()
    report = QualityReport()
    images, rows = {}, []
    for kind in config.phantoms:
        sim = sims[kind]
        image = form_image(config, sim, params)
        part = measure(kind, image, sim.phantom)
        report = report.merge(part)
        images[kind] = image
        rows.extend(_target_rows(kind, sim.phantom, part))
        if directory is not None:
            tio.write_bytes(directory / f"{kind}.pgm", tio.render_image(image, config.dynamic_range_db))
            tio.write_dbmap(directory / f"{kind}.dbmap", image)
    if directory is not None:
        tio.write_csv(directory / "metrics.csv", TARGET_COLUMNS, rows)
        tio.write_json(directory / "config.resolved.json", {"config": config.to_dict(), "params": dataclasses.asdict(params)})
    return RunResult(params, report, images, time.perf_counter() - t_start, directory)


def run_single(
    config: RunConfig,
    params: BeamformerParams,
    sims: Optional[Dict[str, Simulation]] = None,
    write_rf: bool = True,
) -> RunResult:
    """Full pipeline for one parameter set, writing under ``config.out``."""
    out = Path(config.out)
    tio.write_json(out / "config.resolved.json", config.to_dict())
    if sims is None:
        sims = simulate_all(config, write_rf=write_rf)
    return run_case(config, params, sims, out / "cases" / case_label(params))


def _metric_values(report: QualityReport) -> list:
    return [report.mean_fwhm_mm, report.mean_cr_db, report.mean_cnr, report.mean_radius_err_mm]


def _param_values(p: BeamformerParams) -> list:
    return [p.method, p.window, p.K, p.L, float(p.delta_load), float(p.delta_sub)]


def params_from_row(row: dict) -> BeamformerParams:
    """Inverse of the parameter columns of a sweep or baseline CSV row."""
    return BeamformerParams(
        method=row["method"],
        window=row["window"],
        K=int(row["K"]),
        L=int(row["L"]),
        delta_load=float(row["delta_load"]),
        delta_sub=float(row["delta_sub"]),
    )


@dataclass(frozen=True, eq=False)
class SweepResult:
    rows: list
    baseline_rows: list
    results: Dict[BeamformerParams, RunResult] = field(repr=False)
    n_executions: int = 0
    seconds: float = 0.0
    csv_path: Optional[Path] = None


def run_sweep(
    config: RunConfig,
    plan: Optional[SweepPlan] = None,
    *,
    threads: int = 1,
    sims: Optional[Dict[str, Simulation]] = None,
    write_rf: bool = True,
    baselines: bool = True,
) -> SweepResult:
    """Execute every distinct case once and write the aggregated reports.

    Parameters
    ----------
    config : RunConfig
    plan : SweepPlan, optional
        Defaults to the full four-family plan for ``config``.
    threads : int
        Cases run concurrently on a thread pool; rows are aggregated in plan
        order afterwards, so the reports do not depend on this value.
    sims : dict, optional
        Pre-computed simulations keyed by phantom; simulated once otherwise.
    baselines : bool
        Also run DAS, MV and the best EIBMV setting and write
        ``baselines.csv`` plus ``compare.csv``.

    Notes
    -----
    ``sweep.csv`` holds only deterministic fields; per-case wall times go to
    ``sweep_timing.csv``.
    """
    if threads < 1:
        raise InvalidArgument("threads must be at least 1")
    plan = plan or SweepPlan.default(config)
    out = Path(config.out)
    t_start = time.perf_counter()
    tio.write_json(out / "config.resolved.json", config.to_dict())
    if sims is None:
        sims = simulate_all(config, write_rf=write_rf)

    todo = plan.unique_params()
    base = plan.baseline_params() if baselines else {}
    for p in base.values():
        if p not in todo:
            todo.append(p)

    def job(p):
        return run_case(config, p, sims, out / "cases" / case_label(p))

    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = dict(zip(todo, pool.map(job, todo)))

    rows = []
    for case in plan.cases:
        rep = results[case.params].report
        rows.append([case.family, case.index, case.name] + _param_values(case.params) + _metric_values(rep))
    csv_path = tio.write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows)
    timing = [[case_label(p), results[p].seconds] for p in todo]
    tio.write_csv(out / "sweep_timing.csv", ("case", "seconds"), timing)

    base_rows = []
    if baselines:
        for name, p in base.items():
            base_rows.append(["baseline", 0, name] + _param_values(p) + _metric_values(results[p].report))
        tio.write_csv(out / "baselines.csv", SWEEP_COLUMNS, base_rows)
        summary = compare_report(tio.read_csv(out / "baselines.csv"))
        tio.write_csv(out / "compare.csv", COMPARE_COLUMNS, summary)

    n_exec = len(plan.unique_params())
    return SweepResult(rows, base_rows, results, n_exec, time.perf_counter() - t_start, csv_path)


def contrast_gains(best: dict, base: dict) -> Tuple[float, float]:
    """CR gain (dB) and relative CNR gain (%) of ``best`` over ``base``."""
    cr_gain = float(best["mean_cr_db"]) - float(base["mean_cr_db"])
    cnr_base = float(base["mean_cnr"])
    cnr_gain = 100.0 * (float(best["mean_cnr"]) - cnr_base) / cnr_base
    return cr_gain, cnr_gain


def compare_report(rows: Iterable[dict], sweep_rows: Iterable[dict] = ()) -> list:
    """Summary rows of EIBMV_best against DAS, MV and EIBMV_stan.

    ``rows`` are CSV records with a ``case`` column. If no ``EIBMV_stan``
    record is present, the standard row of ``sweep_rows`` (the fourth K case)
    is used instead.
    """
    by_case = {r["case"]: r for r in rows}
    if "EIBMV_stan" not in by_case:
        for r in sweep_rows:
            if r["case"] == "K4":
                by_case["EIBMV_stan"] = r
    missing = [b for b in BASELINES if b not in by_case]
    if missing:
        raise InvalidArgument(f"missing baseline runs: {', '.join(missing)}")
    best = by_case["EIBMV_best"]
    out = []
    for name in ("DAS", "MV", "EIBMV_stan"):
        base = by_case[name]
        cr_gain, cnr_gain = contrast_gains(best, base)
        ref_cr, ref_cnr = REFERENCE_GAINS[name]
        out.append(
            [name, float(best["mean_cr_db"]), float(base["mean_cr_db"]), cr_gain,
             float(best["mean_cnr"]), float(base["mean_cnr"]), cnr_gain, ref_cr, ref_cnr]
        )
    return out
