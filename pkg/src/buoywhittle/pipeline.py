"""Record ingestion, sea-state partitioning, batch fitting, simulation studies and diagnostics tables.

Record CSV schema::

    # delta=0.78125 depth=inf station=B1
    time,z,x,y
    2024-01-01T00:00:00,0.12,-0.03,0.40
    ...

``time`` is ISO-8601 or epoch seconds; displacements are metres.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import classical
from .discrete import SamplingScheme
from .inference import (
    DataError,
    FitConfig,
    FrequencySelection,
    SeaStateSample,
    fit,
    initial_parameters,
    periodogram,
)
from .models import PARAMETER_NAMES, SCENARIOS, TWO_PI, Parameters, PhysicalContext
from .simulation import SimulationSpec, simulate

logger = logging.getLogger(__name__)

ESTIMATORS = ("dw", "dw_z", "whittle", "ls_mlm", "ls_mem", "moments")
MARGINAL = PARAMETER_NAMES[:4]


class ConfigError(ValueError):
    """Invalid configuration or command-line usage."""


# --------------------------------------------------------------------------
# formatting helpers
# --------------------------------------------------------------------------


def fmt(value) -> str:
    """Text form used in every output table: floats with 17 significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "" if value is None else str(value)


def dumps_json(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with floats at 17 significant digits and non-finite floats as ``null``."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + dumps_json(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (float, np.floating)):
        return format(float(obj), ".17g") if math.isfinite(obj) else "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(row.get(h)) for h in header])
    Path(path).write_text(buf.getvalue())


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


@dataclass
class PipelineConfig:
    """Settings shared by all subcommands; loaded from a flat JSON document.

    ``depth`` overrides the record header (``"inf"`` for deep water).  Study
    scenarios are keys of the built-in scenario table or objects with the
    nine parameter values.
    """

    sea_state_duration: float = 1800.0
    low_cut: float = 0.0
    high_cut: Optional[float] = None
    objective: str = "debiased"
    depth: Optional[object] = None
    gravity: float = 9.81
    max_iter: int = 200
    grad_tol: float = 1e-6
    out_dir: str = "out"
    seed: int = 0
    threads: int = 1
    # nonparametric spectra
    spectral_method: str = "multitaper"
    n_tapers: int = 8
    nperseg: int = 256
    # simulation study
    scenarios: list = field(default_factory=lambda: [1, 2, 3])
    replications: int = 10
    n: int = 2304
    delta: float = 0.78125
    estimators: list = field(default_factory=lambda: list(ESTIMATORS))
    low_cut_factor: float = 0.5
    simulation_method: str = "spectral"
    resume: bool = False
    # record synthesis (simulate subcommand)
    scenario: object = 1
    n_samples: int = 2304
    start_time: str = "2024-01-01T00:00:00"
    station: str = "synthetic"

    @classmethod
    def from_dict(cls, values: dict) -> "PipelineConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - names)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        cfg = cls(**values)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "PipelineConfig":
        values = {}
        if path is not None:
            try:
                values = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as err:
                raise ConfigError(f"cannot read configuration {path}: {err}") from err
            if not isinstance(values, dict):
                raise ConfigError("configuration must be a JSON object")
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_dict(values)

    def validate(self, delta: float | None = None) -> None:
        if self.objective not in ("debiased", "whittle"):
            raise ConfigError(f"objective must be 'debiased' or 'whittle', got {self.objective!r}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.replications < 0:
            raise ConfigError("replications must be >= 0")
        bad = sorted(set(self.estimators) - set(ESTIMATORS))
        if bad:
            raise ConfigError(f"unknown estimators: {', '.join(bad)}")
        if self.high_cut is not None and not self.low_cut < self.high_cut:
            raise ConfigError(f"low_cut ({self.low_cut}) must be below high_cut ({self.high_cut})")
        if delta is not None:
            if self.sea_state_duration / delta < 256:
                raise ConfigError("sea_state_duration must cover at least 256 samples")
            if self.high_cut is not None and self.high_cut > math.pi / delta * (1 + 1e-12):
                raise ConfigError(f"high_cut exceeds the Nyquist frequency {math.pi / delta:.6g} rad/s")

    def context(self, header_depth=None) -> PhysicalContext:
        depth = self.depth if self.depth is not None else header_depth
        if isinstance(depth, str):
            depth = math.inf if depth.lower() in ("inf", "deep", "") else float(depth)
        return PhysicalContext(gravity=self.gravity, water_depth=depth)


# --------------------------------------------------------------------------
# ingestion and partitioning
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RecordFile:
    """A validated displacement record.

    ``gaps`` lists ``(row, missing)`` pairs: ``missing`` samples are absent
    before data row ``row`` (0-based).
    """

    times: np.ndarray
    data: np.ndarray
    delta: float
    depth: Optional[float]
    station: str
    gaps: tuple = ()

    @property
    def n(self) -> int:
        return self.data.shape[0]


def _parse_time(text: str, row: int) -> float:
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    # fromisoformat (3.10) accepts only 3 or 6 fractional digits
    text = re.sub(r"\.(\d+)", lambda m: "." + (m.group(1) + "000000")[:6], text.replace("Z", "+00:00"), count=1)
    try:
        stamp = datetime.fromisoformat(text)
    except ValueError as err:
        raise DataError(f"row {row}: unparseable time {text!r}") from err
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp.timestamp()


def format_time(epoch: float) -> str:
    stamp = datetime.fromtimestamp(epoch, tz=timezone.utc)
    return stamp.strftime("%Y-%m-%dT%H:%M:%S.%f" if stamp.microsecond else "%Y-%m-%dT%H:%M:%S")


def _parse_header(line: str) -> dict:
    if not line.startswith("#"):
        raise DataError("line 1: expected a '# delta=... depth=... station=...' header")
    meta = {}
    for token in line[1:].split():
        if "=" not in token:
            raise DataError(f"line 1: malformed header token {token!r}")
        key, value = token.split("=", 1)
        meta[key.strip()] = value.strip()
    if "delta" not in meta:
        raise DataError("line 1: header lacks delta=<seconds>")
    return meta


def ingest(path) -> RecordFile:
    """Read and validate a record CSV.

    Rows are numbered from 1 after the column header.  Missing samples
    (time steps that are whole multiples of ``delta``) are flagged as gaps;
    anything else irregular is an error.
    """
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as err:
        raise DataError(f"cannot read {path}: {err}") from err
    if len(lines) < 2:
        raise DataError(f"{path}: missing header or column line")
    meta = _parse_header(lines[0])
    try:
        delta = float(meta["delta"])
    except ValueError as err:
        raise DataError(f"line 1: delta {meta['delta']!r} is not a number") from err
    if not delta > 0:
        raise DataError("line 1: delta must be positive")
    depth_text = meta.get("depth", "inf")
    try:
        depth = float(depth_text)
    except ValueError as err:
        raise DataError(f"line 1: depth {depth_text!r} is not a number or 'inf'") from err
    depth = None if math.isinf(depth) else depth
    columns = [c.strip() for c in lines[1].split(",")]
    if columns != ["time", "z", "x", "y"]:
        raise DataError(f"line 2: expected columns time,z,x,y, got {','.join(columns)}")
    times, values = [], []
    for row, line in enumerate(lines[2:], start=1):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise DataError(f"row {row}: expected 4 fields, got {len(parts)}")
        times.append(_parse_time(parts[0], row))
        try:
            vals = [float(p) for p in parts[1:]]
        except ValueError as err:
            raise DataError(f"row {row}: non-numeric displacement ({err})") from err
        if not all(math.isfinite(v) for v in vals):
            raise DataError(f"row {row}: missing or non-finite displacement")
        values.append(vals)
    if not values:
        raise DataError(f"{path}: no data rows")
    times = np.asarray(times)
    steps = np.diff(times)
    gaps = []
    for i, step in enumerate(steps):
        row = i + 2
        if step <= 0:
            raise DataError(f"row {row}: time does not increase")
        ratio = step / delta
        k = int(round(ratio))
        if k < 1 or abs(step - k * delta) > 1e-6 * max(1, k):
            raise DataError(f"row {row}: time step {step:.9g} s inconsistent with delta={delta:g}")
        if k > 1:
            gaps.append((row - 1, k - 1))
    if gaps:
        logger.warning("%s: %d gap(s) in record, %d samples missing", path.name, len(gaps), sum(g[1] for g in gaps))
    return RecordFile(times, np.asarray(values), delta, depth, meta.get("station", ""), tuple(gaps))


def write_record(path, times, data, delta, depth=None, station="synthetic") -> None:
    depth_text = "inf" if depth is None or math.isinf(depth) else fmt(float(depth))
    buf = io.StringIO()
    buf.write(f"# delta={fmt(float(delta))} depth={depth_text} station={station}\n")
    buf.write("time,z,x,y\n")
    for t, (z, x, y) in zip(times, data):
        buf.write(f"{format_time(t)},{fmt(z)},{fmt(x)},{fmt(y)}\n")
    Path(path).write_text(buf.getvalue())


def partition_sea_states(record: RecordFile, config: PipelineConfig) -> list:
    """Non-overlapping, mean-removed windows of ``sea_state_duration`` seconds.

    Windows containing a gap or a constant channel are skipped; a trailing
    partial window is dropped.
    """
    n_win = int(round(config.sea_state_duration / record.delta))
    config.validate(record.delta)
    count = record.n // n_win
    if count == 0:
        logger.warning("record of %d samples is shorter than one sea state (%d samples)", record.n, n_win)
        return []
    remainder = record.n - count * n_win
    if remainder:
        logger.info("dropping %d trailing samples (incomplete sea state)", remainder)
    gap_rows = np.array([g[0] for g in record.gaps], dtype=int)
    states = []
    for i in range(count):
        lo, hi = i * n_win, (i + 1) * n_win
        if np.any((gap_rows > lo) & (gap_rows < hi)):
            logger.warning("sea state %d spans a gap; skipped", i)
            continue
        try:
            sample = SeaStateSample.from_array(record.data[lo:hi], record.delta, start_time=format_time(record.times[lo]))
        except DataError as err:
            logger.warning("sea state %d skipped: %s", i, err)
            continue
        states.append(sample)
    return states


# --------------------------------------------------------------------------
# batch fitting
# --------------------------------------------------------------------------

FIT_COLUMNS = (
    ["sea_state", "start_time", "n", "hs"]
    + [c for name in PARAMETER_NAMES for c in (name, f"{name}_lo", f"{name}_hi")]
    + ["objective", "converged", "iterations", "gradient_norm", "boundary", "message"]
)


def _fit_task(args):
    index, sample, cfg_dict, ctx = args
    cfg = PipelineConfig(**cfg_dict)
    row = {"sea_state": index, "start_time": sample.start_time, "n": sample.n, "hs": sample.significant_wave_height}
    try:
        fc = FitConfig(objective=cfg.objective, ctx=ctx, low_cut=cfg.low_cut, high_cut=cfg.high_cut,
                       max_iter=cfg.max_iter, grad_tol=cfg.grad_tol)
        res = fit(sample, fc)
        row.update(res.as_row())
        row["message"] = res.message
    except Exception as err:  # a failing sea state must not stop the batch
        row.update({c: math.nan for c in FIT_COLUMNS if c not in row})
        row.update(converged=False, iterations=0, boundary="", message=f"{type(err).__name__}: {err}")
    logger.info("sea state %d (%s): converged=%s", index, sample.start_time, row["converged"])
    return row


def _pool_map(func, tasks, threads):
    if threads <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, tasks))


def run_fits(record: RecordFile, config: PipelineConfig) -> list:
    """Fit every sea state; one row per state in time order."""
    states = partition_sea_states(record, config)
    ctx = config.context(record.depth)
    cfg_dict = dataclasses.asdict(config)
    tasks = [(i, s, cfg_dict, ctx) for i, s in enumerate(states)]
    return _pool_map(_fit_task, tasks, config.threads)


# --------------------------------------------------------------------------
# simulation study
# --------------------------------------------------------------------------

SE_COLUMNS = [f"{name}_se" for name in PARAMETER_NAMES]
STUDY_COLUMNS = ["scenario", "replication", "estimator", "converged"] + list(PARAMETER_NAMES) + SE_COLUMNS + ["message"]


def scenario_parameters(key) -> Parameters:
    if isinstance(key, dict):
        return Parameters(**key)
    try:
        return SCENARIOS[int(key)]
    except (KeyError, ValueError, TypeError) as err:
        raise ConfigError(f"unknown scenario {key!r}") from err


def _stream_seed(seed: int, scenario_index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(scenario_index)]).generate_state(1, np.uint64)[0])


def _nan_row():
    return {name: math.nan for name in list(PARAMETER_NAMES) + SE_COLUMNS}


def study_replication(args) -> list:
    """All configured estimators on one simulated record (rows in estimator order)."""
    cfg_dict, scenario_index, scenario_label, theta, replication = args
    cfg = PipelineConfig(**cfg_dict)
    scheme = SamplingScheme(cfg.delta, cfg.n)
    ctx = PhysicalContext(gravity=cfg.gravity)
    spec = SimulationSpec(theta, scheme, ctx, seed=_stream_seed(cfg.seed, scenario_index), method=cfg.simulation_method)
    sample = simulate(spec, replication, demean=True)
    low, high = cfg.low_cut_factor * theta.omega_p, math.pi / cfg.delta
    selection = FrequencySelection.band(cfg.n, cfg.delta, low, high)
    pgram = periodogram(sample)
    init = initial_parameters(pgram, selection)
    welch = None
    marginal = None
    rows = []
    for name in cfg.estimators:
        row = {"scenario": scenario_label, "replication": replication, "estimator": name}
        row.update(_nan_row())
        try:
            if name in ("dw", "whittle", "dw_z"):
                fc = FitConfig(objective="whittle" if name == "whittle" else "debiased", ctx=ctx,
                               selection=selection, init=init, max_iter=cfg.max_iter, grad_tol=cfg.grad_tol)
                if name == "dw_z":
                    fc.channels, fc.free = (0,), MARGINAL
                res = fit(pgram, fc)
                values = res.theta_hat.as_dict()
                se = dict(zip(SE_COLUMNS, map(float, res.std_errors)))
                if name == "dw_z":
                    values = {k: values[k] for k in MARGINAL}
                    se = {f"{k}_se": se[f"{k}_se"] for k in MARGINAL}
                row.update(values)
                row.update(se)
                row["converged"], row["message"] = res.converged, res.message
            else:
                if welch is None:
                    welch = classical.cross_spectra(sample, "welch", nperseg=cfg.nperseg)
                    marginal = classical.ls_marginal_fit(welch, (low, high))
                if name == "moments":
                    spread = classical.moments_matching_fit(welch, ctx, (low, high), marginal.values)
                else:
                    method = classical.mlm_spreading if name == "ls_mlm" else classical.mem_spreading
                    spread = classical.ls_spreading_fit(method(welch, ctx), marginal.values, (low, high))
                row.update(marginal.values)
                row.update(spread.values)
                row["converged"] = marginal.converged and spread.converged
                row["message"] = "; ".join(m for m in (marginal.message, spread.message) if m)
        except Exception as err:  # recorded, never fatal for the study
            row["converged"], row["message"] = False, f"{type(err).__name__}: {err}"
        rows.append(row)
    return rows


def _mean_finite(values):
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    return float(v.mean()) if v.size else math.nan


def _angle_error(est, truth):
    return np.mod(est - truth + np.pi, TWO_PI) - np.pi


def summarise(rows: list, truths: dict) -> dict:
    """Bias, standard deviation, RMSE and median per scenario x estimator x parameter.

    Non-converged replications are excluded from the statistics and counted.
    """
    summary = {}
    for label, theta in truths.items():
        truth = theta.as_dict()
        per = {}
        for est in dict.fromkeys(r["estimator"] for r in rows if r["scenario"] == label):
            sel = [r for r in rows if r["scenario"] == label and r["estimator"] == est]
            used = [r for r in sel if r["converged"]]
            entry = {"replications": len(sel), "converged": len(used), "excluded": len(sel) - len(used), "parameters": {}}
            for name in PARAMETER_NAMES:
                vals = np.array([r[name] for r in used], dtype=float)
                vals = vals[np.isfinite(vals)]
                if vals.size == 0:
                    continue
                err = _angle_error(vals, truth[name]) if name == "phi_m" else vals - truth[name]
                entry["parameters"][name] = {
                    "truth": truth[name],
                    "n": int(vals.size),
                    "mean": float(truth[name] + err.mean()),
                    "median": float(truth[name] + np.median(err)),
                    "bias": float(err.mean()),
                    "std": float(err.std(ddof=1)) if vals.size > 1 else math.nan,
                    "rmse": float(np.sqrt(np.mean(err**2))),
                    "mean_se": _mean_finite([r[f"{name}_se"] for r in used]),
                }
            per[est] = entry
        summary[str(label)] = per
    return summary


def _read_study_rows(path: Path) -> list:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            row = {"scenario": rec["scenario"], "replication": int(rec["replication"]), "estimator": rec["estimator"],
                   "converged": rec["converged"] == "true", "message": rec["message"]}
            for name in list(PARAMETER_NAMES) + SE_COLUMNS:
                row[name] = float(rec[name]) if rec.get(name, "") not in ("", "nan") else math.nan
            rows.append(row)
    return rows


def run_sim_study(config: PipelineConfig, out_dir=None) -> dict:
    """Simulate, fit with every estimator and write ``study_replications.csv`` and ``study_summary.json``.

    Replication ``r`` of scenario ``i`` draws from the stream keyed by
    ``(seed, i)`` and ``r``, so results do not depend on worker count or order.
    With ``resume`` set, replications already in the CSV are kept.
    """
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "study_replications.csv"
    truths = {}
    tasks = []
    done = {}
    if config.resume and csv_path.exists():
        for row in _read_study_rows(csv_path):
            done.setdefault((row["scenario"], row["replication"]), []).append(row)
    cfg_dict = dataclasses.asdict(config)
    for i, key in enumerate(config.scenarios):
        theta = scenario_parameters(key)
        label = str(key) if not isinstance(key, dict) else f"custom{i}"
        truths[label] = theta
        for r in range(config.replications):
            if (label, r) not in done:
                tasks.append((cfg_dict, i, label, theta, r))
    logger.info("simulation study: %d replications to run, %d reused", len(tasks), len(done))
    results = _pool_map(study_replication, tasks, config.threads)
    rows = [row for group in done.values() for row in group] + [row for group in results for row in group]
    order = {label: i for i, label in enumerate(truths)}
    est_order = {e: i for i, e in enumerate(ESTIMATORS)}
    rows.sort(key=lambda r: (order.get(r["scenario"], len(order)), r["replication"], est_order[r["estimator"]]))
    rows = [r for r in rows if r["scenario"] in truths and r["replication"] < config.replications]
    write_csv(csv_path, STUDY_COLUMNS, rows)
    summary = {
        "seed": config.seed,
        "replications": config.replications,
        "n": config.n,
        "delta": config.delta,
        "low_cut_factor": config.low_cut_factor,
        "estimators": list(config.estimators),
        "scenarios": {label: theta.as_dict() for label, theta in truths.items()},
        "results": summarise(rows, truths),
    }
    (out / "study_summary.json").write_text(dumps_json(summary) + "\n")
    return summary


# --------------------------------------------------------------------------
# diagnostics
# --------------------------------------------------------------------------


def diagnose(record: RecordFile, config: PipelineConfig, out_dir=None) -> dict:
    """Per sea state: multitaper spectra, ``R(w)``, mean direction and ``H_s`` as long-format CSVs."""
    states = partition_sea_states(record, config)
    high = config.high_cut if config.high_cut is not None else math.pi / record.delta
    n_win = int(round(config.sea_state_duration / record.delta))
    freqs = TWO_PI * np.arange(n_win // 2 + 1) / (n_win * record.delta)
    band = (freqs >= config.low_cut) & (freqs <= high) & (freqs > 0)
    if not np.any(band):
        raise ConfigError(f"no Fourier frequencies in [{config.low_cut}, {high}] rad/s")
    ctx = config.context(record.depth)
    spectra, errors, directions, heights = [], [], [], []
    for i, sample in enumerate(states):
        est = classical.cross_spectra(sample, config.spectral_method, n_tapers=config.n_tapers, nperseg=config.nperseg)
        keep = (est.frequencies >= config.low_cut) & (est.frequencies <= high) & (est.frequencies > 0)
        diag = classical.diagnostics(est, ctx, hs=sample.significant_wave_height)
        heights.append({"sea_state": i, "start_time": sample.start_time, "hs": diag.hs})
        for k in np.flatnonzero(keep):
            F = est.values[k]
            base = {"sea_state": i, "start_time": sample.start_time, "omega": est.frequencies[k]}
            spectra.append({**base, "f_zz": F[0, 0].real, "f_xx": F[1, 1].real, "f_yy": F[2, 2].real})
            errors.append({**base, "R": diag.error_fn[k]})
            directions.append({**base, "mean_direction": diag.mean_direction[k]})
        logger.info("diagnostics for sea state %d (%s)", i, sample.start_time)
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base_cols = ["sea_state", "start_time", "omega"]
    write_csv(out / "spectrogram.csv", base_cols + ["f_zz", "f_xx", "f_yy"], spectra)
    write_csv(out / "error_function.csv", base_cols + ["R"], errors)
    write_csv(out / "mean_direction.csv", base_cols + ["mean_direction"], directions)
    write_csv(out / "hs.csv", ["sea_state", "start_time", "hs"], heights)
    return {"spectrogram": spectra, "error_function": errors, "mean_direction": directions, "hs": heights}


def simulate_record(config: PipelineConfig, out_path) -> RecordFile:
    """Write a synthetic record of ``n_samples`` from one scenario (reproducible by ``seed``)."""
    theta = scenario_parameters(config.scenario)
    ctx = config.context()
    spec = SimulationSpec(theta, SamplingScheme(config.delta, config.n_samples), ctx, seed=config.seed,
                          method=config.simulation_method)
    sample = simulate(spec)
    t0 = _parse_time(config.start_time, 0)
    times = t0 + config.delta * np.arange(config.n_samples)
    write_record(out_path, times, sample.channels, config.delta, ctx.water_depth, config.station)
    return RecordFile(times, sample.channels, config.delta, ctx.water_depth, config.station)
