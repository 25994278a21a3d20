import json
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import buoywhittle.pipeline as pipeline
from buoywhittle.cli import main
from buoywhittle.discrete import SamplingScheme
from buoywhittle.inference import DataError
from buoywhittle.models import SCENARIOS, TWO_PI, Parameters, sdf_matrix
from buoywhittle.pipeline import (
    FIT_COLUMNS,
    STUDY_COLUMNS,
    ConfigError,
    PipelineConfig,
    diagnose,
    dumps_json,
    fmt,
    ingest,
    partition_sea_states,
    run_fits,
    run_sim_study,
    write_record,
)
from buoywhittle.simulation import SimulationSpec, simulate

DELTA = 0.78125
HEADER = "# delta=0.78125 depth=inf station=fixture\ntime,z,x,y\n"


def write_rows(path, times, header=HEADER):
    lines = [f"{t},{0.1 * i},{-0.2 * i},{0.05 * i}" for i, t in enumerate(times)]
    path.write_text(header + "\n".join(lines) + "\n")
    return path


def synthetic_record(path, n, theta=SCENARIOS[1], seed=0, depth=None):
    sample = simulate(SimulationSpec(theta, SamplingScheme(DELTA, n), seed=seed))
    times = 1.7e9 + DELTA * np.arange(n)
    write_record(path, times, sample.channels, DELTA, depth, "test")
    return sample


# ---------------------------------------------------------------- ingestion


def test_ingest_ten_rows(tmp_path):
    rec = ingest(write_rows(tmp_path / "r.csv", DELTA * np.arange(10)))
    assert rec.n == 10 and rec.delta == DELTA and rec.depth is None and rec.station == "fixture"
    assert rec.gaps == ()
    np.testing.assert_allclose(rec.data[3], [0.3, -0.6, 0.15])


def test_ingest_iso_times_and_finite_depth(tmp_path):
    times = [f"2024-03-01T00:00:{DELTA * i:09.6f}" for i in range(5)]
    rec = ingest(write_rows(tmp_path / "r.csv", times, "# delta=0.78125 depth=42.5 station=b\ntime,z,x,y\n"))
    assert rec.depth == 42.5
    np.testing.assert_allclose(np.diff(rec.times), DELTA, atol=1e-6)


def test_ingest_flags_gap(tmp_path, caplog):
    t = DELTA * np.concatenate([np.arange(5), np.arange(7, 12)])  # two samples missing before row 6
    rec = ingest(write_rows(tmp_path / "r.csv", t))
    assert rec.n == 10
    assert rec.gaps == ((5, 2),)
    assert "gap" in caplog.text


def test_malformed_row_named(tmp_path):
    path = write_rows(tmp_path / "r.csv", DELTA * np.arange(10))
    lines = path.read_text().splitlines()
    lines[2 + 6] = "5.46875,0.1,abc,0.2"  # data row 7
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError, match="row 7"):
        ingest(path)


@pytest.mark.parametrize(
    "text, message",
    [
        ("time,z,x,y\n0,1,2,3\n", "line 1"),
        ("# depth=inf\ntime,z,x,y\n0,1,2,3\n", "delta"),
        (HEADER.replace("time,z,x,y", "t,z,x"), "line 2"),
        (HEADER + "0,1,2,3\n0.78125,1,2\n", "row 2"),
        (HEADER + "0,1,2,3\n0,1,2,3\n", "row 2"),
        (HEADER + "0,1,2,3\n0.5,1,2,3\n", "row 2"),
        (HEADER + "0,1,2,3\n0.78125,nan,2,3\n", "row 2"),
        (HEADER, "no data"),
    ],
)
def test_ingest_errors(tmp_path, text, message):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(DataError, match=message):
        ingest(path)


def test_write_then_ingest_round_trip(tmp_path):
    sample = synthetic_record(tmp_path / "r.csv", 64, depth=30.0)
    rec = ingest(tmp_path / "r.csv")
    assert rec.depth == 30.0
    np.testing.assert_array_equal(rec.data, sample.channels)  # 17 significant digits round-trip exactly


# ---------------------------------------------------------------- partitioning


def test_five_days_partition_into_240_states():
    n = int(5 * 86400 / DELTA)
    rec = pipeline.RecordFile(DELTA * np.arange(n), np.random.default_rng(1).standard_normal((n, 3)), DELTA, None, "s")
    states = partition_sea_states(rec, PipelineConfig())
    assert len(states) == 240
    assert {s.n for s in states} == {2304}


def test_short_record_gives_no_states(caplog):
    rec = pipeline.RecordFile(DELTA * np.arange(100), np.zeros((100, 3)), DELTA, None, "s")
    assert partition_sea_states(rec, PipelineConfig()) == []
    assert "shorter than one sea state" in caplog.text


def test_partition_floors_and_skips_gaps(caplog):
    caplog.set_level("INFO")
    n = 3 * 2304 + 100
    data = np.random.default_rng(0).standard_normal((n, 3))
    rec = pipeline.RecordFile(DELTA * np.arange(n), data, DELTA, None, "s", gaps=((2304 + 10, 3),))
    states = partition_sea_states(rec, PipelineConfig())
    assert len(states) == 2
    assert "dropping 100 trailing samples" in caplog.text
    assert "spans a gap" in caplog.text
    # windows are mean-removed copies of the record
    np.testing.assert_allclose(states[1].channels, data[4608:6912] - data[4608:6912].mean(axis=0))


def test_partition_skips_constant_channel(caplog):
    data = np.random.default_rng(0).standard_normal((2 * 2304, 3))
    data[:2304, 1] = 0.25  # stuck sensor in the first window
    rec = pipeline.RecordFile(DELTA * np.arange(data.shape[0]), data, DELTA, None, "s")
    states = partition_sea_states(rec, PipelineConfig())
    assert len(states) == 1 and "constant" in caplog.text


# ---------------------------------------------------------------- configuration and formatting


def test_config_rejects_unknown_key_and_bad_values(tmp_path):
    with pytest.raises(ConfigError, match="unknown configuration keys: bogus"):
        PipelineConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"objective": "leastsquares"})
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"low_cut": 1.0, "high_cut": 0.5})
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"estimators": ["dw", "magic"]})
    with pytest.raises(ConfigError):
        PipelineConfig().validate(delta=10.0)  # 1800 s holds fewer than 256 samples
    bad = tmp_path / "c.json"
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        PipelineConfig.load(bad)


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"seed": 5, "low_cut": 0.3, "replications": 4}))
    cfg = PipelineConfig.load(path, {"seed": 9, "replications": None})
    assert (cfg.seed, cfg.low_cut, cfg.replications) == (9, 0.3, 4)
    assert cfg.context("inf").water_depth is None
    assert PipelineConfig(depth="25").context(None).water_depth == 25.0


def test_fmt_and_json():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(True) == "true" and fmt(None) == "" and fmt(np.int64(3)) == "3"
    text = dumps_json({"a": [1.0 / 3, math.nan, math.inf], "b": {"c": True}})
    assert json.loads(text) == {"a": [float(format(1 / 3, ".17g")), None, None], "b": {"c": True}}


# ---------------------------------------------------------------- batch fitting


@pytest.fixture(scope="module")
def drifting_record(tmp_path_factory):
    """Eight sea states whose peak frequency drifts linearly from 0.75 to 0.85 rad/s."""
    path = tmp_path_factory.mktemp("drift") / "record.csv"
    peaks = np.linspace(0.75, 0.85, 8)
    chunks = []
    for i, wp in enumerate(peaks):
        spec = SimulationSpec(SCENARIOS[1].replace(omega_p=wp), SamplingScheme(DELTA, 2304), seed=11)
        chunks.append(simulate(spec, i).channels)
    data = np.concatenate(chunks)
    write_record(path, 1.7e9 + DELTA * np.arange(data.shape[0]), data, DELTA, None, "drift")
    return path, peaks


def test_fits_track_slow_drift(drifting_record):
    path, peaks = drifting_record
    rows = run_fits(ingest(path), PipelineConfig(low_cut=0.35))
    assert len(rows) == len(peaks)
    assert all(r["converged"] for r in rows)
    est = np.array([r["omega_p"] for r in rows])
    width = np.array([r["omega_p_hi"] - r["omega_p_lo"] for r in rows])
    jumps = np.abs(np.diff(est))
    assert np.all(jumps < 3 * np.minimum(width[1:], width[:-1]))
    assert np.corrcoef(est, peaks)[0, 1] > 0.9
    for r in rows:
        assert set(FIT_COLUMNS) <= set(r)
        for name in ("alpha", "omega_p", "sigma_r"):
            assert r[f"{name}_lo"] <= r[name] <= r[f"{name}_hi"]


def test_failing_sea_state_is_isolated(drifting_record, monkeypatch):
    path, _ = drifting_record
    record = ingest(path)
    real_fit = pipeline.fit

    def flaky(sample, config):
        if sample.start_time == pipeline.format_time(record.times[2304]):
            raise FloatingPointError("synthetic failure")
        return real_fit(sample, config)

    monkeypatch.setattr(pipeline, "fit", flaky)
    cfg = PipelineConfig(low_cut=0.35, max_iter=200)
    cfg.sea_state_duration = 2304 * DELTA
    rows = run_fits(pipeline.RecordFile(record.times[:3 * 2304], record.data[:3 * 2304], DELTA, None, "s"), cfg)
    assert [r["converged"] for r in rows] == [True, False, True]
    assert "synthetic failure" in rows[1]["message"]
    assert math.isnan(rows[1]["alpha"])


def test_iteration_cap_reports_nonconvergence(drifting_record):
    path, _ = drifting_record
    record = ingest(path)
    short = pipeline.RecordFile(record.times[:2304], record.data[:2304], DELTA, None, "s")
    rows = run_fits(short, PipelineConfig(low_cut=0.35, max_iter=1))
    assert len(rows) == 1 and rows[0]["converged"] is False
    assert np.isfinite(rows[0]["alpha"])


# ---------------------------------------------------------------- simulation study


def small_study(**kw):
    base = dict(scenarios=[1], replications=2, n=512, estimators=["dw", "dw_z", "moments"], seed=3)
    base.update(kw)
    return PipelineConfig(**base)


def test_study_outputs_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    summary = run_sim_study(small_study(), a)
    run_sim_study(small_study(), b)
    for name in ("study_replications.csv", "study_summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    header = (a / "study_replications.csv").read_text().splitlines()[0].split(",")
    assert header == STUDY_COLUMNS
    res = summary["results"]["1"]
    assert set(res) == {"dw", "dw_z", "moments"}
    assert set(res["dw_z"]["parameters"]) == {"alpha", "omega_p", "gamma", "r"}
    stats = res["dw"]["parameters"]["alpha"]
    assert {"truth", "n", "mean", "median", "bias", "std", "rmse", "mean_se"} <= set(stats)
    loaded = json.loads((a / "study_summary.json").read_text())
    assert loaded["results"]["1"]["dw"]["replications"] == 2


def test_study_resume_matches_fresh_run(tmp_path):
    fresh, resumed = tmp_path / "fresh", tmp_path / "resumed"
    run_sim_study(small_study(replications=3), fresh)
    run_sim_study(small_study(replications=2), resumed)
    run_sim_study(small_study(replications=3, resume=True), resumed)
    for name in ("study_replications.csv", "study_summary.json"):
        assert (fresh / name).read_bytes() == (resumed / name).read_bytes()


def test_study_parallel_equals_serial(tmp_path):
    run_sim_study(small_study(replications=3), tmp_path / "serial")
    run_sim_study(small_study(replications=3, threads=3), tmp_path / "parallel")
    for name in ("study_replications.csv", "study_summary.json"):
        assert (tmp_path / "serial" / name).read_bytes() == (tmp_path / "parallel" / name).read_bytes()


def test_nonconverged_rows_excluded_from_summary():
    truth = SCENARIOS[1]
    rows = []
    for rep, (ok, alpha) in enumerate([(True, 0.7), (True, 0.8), (False, 100.0)]):
        row = {"scenario": "1", "replication": rep, "estimator": "dw", "converged": ok}
        row.update({**truth.as_dict(), "alpha": alpha})
        row.update({f"{k}_se": 0.1 for k in truth.as_dict()})
        rows.append(row)
    entry = pipeline.summarise(rows, {"1": truth})["1"]["dw"]
    assert (entry["converged"], entry["excluded"]) == (2, 1)
    assert entry["parameters"]["alpha"]["mean"] == pytest.approx(0.75)


# ---------------------------------------------------------------- diagnostics


def test_diagnose_writes_tables(tmp_path):
    synthetic_record(tmp_path / "r.csv", 2 * 2304, seed=5)
    out = diagnose(ingest(tmp_path / "r.csv"), PipelineConfig(low_cut=0.3, high_cut=2.0), tmp_path / "out")
    assert len(out["hs"]) == 2
    for name in ("spectrogram.csv", "error_function.csv", "mean_direction.csv", "hs.csv"):
        assert (tmp_path / "out" / name).exists()
    omegas = np.array([r["omega"] for r in out["error_function"]])
    assert omegas.min() >= 0.3 and omegas.max() <= 2.0


def test_diagnose_empty_band(tmp_path):
    synthetic_record(tmp_path / "r.csv", 2304)
    with pytest.raises(ConfigError, match="no Fourier frequencies"):
        diagnose(ingest(tmp_path / "r.csv"), PipelineConfig(low_cut=1.0, high_cut=1.001), tmp_path)


# ---------------------------------------------------------------- command line


def test_cli_simulate_partition_fit(tmp_path):
    out = str(tmp_path)
    assert main(["simulate", "--out-dir", out, "--seed", "4", "--n-samples", "4700"]) == 0
    record = tmp_path / "record.csv"
    first = record.read_bytes()
    assert main(["simulate", "--out-dir", out, "--seed", "4", "--n-samples", "4700"]) == 0
    assert record.read_bytes() == first
    assert main(["partition", str(record), "--out-dir", out]) == 0
    assert len((tmp_path / "sea_states.csv").read_text().splitlines()) == 3  # two full windows
    assert main(["fit", str(record), "--out-dir", out, "--low-cut", "0.35"]) == 0
    lines = (tmp_path / "fits.csv").read_text().splitlines()
    assert lines[0].split(",") == FIT_COLUMNS and len(lines) == 3


def test_cli_config_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenarios": [2], "replications": 1, "n": 512, "estimators": ["dw"], "seed": 1}))
    assert main(["sim-study", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "study_summary.json").read_text())
    assert list(summary["results"]) == ["2"] and summary["seed"] == 1


def test_cli_exit_codes(tmp_path):
    good = tmp_path / "r.csv"
    synthetic_record(good, 2304)
    bad = tmp_path / "bad.csv"
    bad.write_text(HEADER + "0,1,2,3\nnot-a-time,1,2,3\n")
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"nonsense": True}))
    out = str(tmp_path / "o")
    assert main(["fit", str(bad), "--out-dir", out]) == 2
    assert main(["fit", str(tmp_path / "missing.csv"), "--out-dir", out]) == 2
    assert main(["fit", str(good), "--config", str(cfg), "--out-dir", out]) == 1
    assert main(["diagnose", str(good), "--low-cut", "1.0", "--high-cut", "1.001", "--out-dir", out]) == 1
    assert main(["simulate", "--scenario", "9", "--out-dir", out]) == 1
    with pytest.raises(SystemExit) as err:
        main(["fit"])
    assert err.value.code == 1
    with pytest.raises(SystemExit) as err:
        main(["bogus-command"])
    assert err.value.code == 1


def test_cli_numerical_failure_exit_code(tmp_path, monkeypatch):
    import buoywhittle.cli as cli

    def boom(*args, **kwargs):
        raise np.linalg.LinAlgError("singular")

    monkeypatch.setattr(cli, "run_sim_study", boom)
    assert main(["sim-study", "--out-dir", str(tmp_path)]) == 3


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "buoywhittle", "partition", str(tmp_path / "none.csv"),
                           "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 2
    assert "cannot read" in proc.stderr


# ---------------------------------------------------------------- properties


finite = dict(allow_nan=False, allow_infinity=False)
theta_strategy = st.builds(
    lambda a, wp, g, r, phi, beta, nu, sr, extra: Parameters(a, wp, g, r, phi, beta, nu, sr + extra, sr),
    st.floats(0.05, 5, **finite), st.floats(0.2, 2.5, **finite), st.floats(1, 8, **finite), st.floats(2, 7, **finite),
    st.floats(-10, 10, **finite), st.floats(0, 6.28, **finite), st.floats(0, 5, **finite),
    st.floats(0, 1, **finite), st.floats(0.02, 1.5, **finite),
)


@settings(max_examples=60, deadline=None)
@given(theta_strategy, st.floats(0.05, 4.0, **finite))
def test_property_spectral_matrix_valid(theta, omega):
    F = sdf_matrix(np.array([omega, -omega]), theta)
    np.testing.assert_allclose(F[0], np.conj(F[0]).T, atol=1e-15 * max(1.0, abs(F[0, 0, 0])))
    np.testing.assert_allclose(F[0, 1, 1].real + F[0, 2, 2].real, F[0, 0, 0].real, rtol=1e-12, atol=1e-300)
    eig = np.linalg.eigvalsh(F[0])
    assert eig.min() >= -1e-10 * max(eig.max(), 1e-300)
    np.testing.assert_allclose(F[1], np.conj(F[0]), rtol=1e-12, atol=1e-300)
    assert 0 <= theta.phi_m < TWO_PI


@settings(max_examples=40, deadline=None)
@given(st.floats(-1e6, 1e6, **finite), st.floats(-1e6, 1e6, **finite))
def test_property_fmt_round_trips(a, b):
    x = a / (b if b else 1.0)
    assert float(fmt(x)) == x
