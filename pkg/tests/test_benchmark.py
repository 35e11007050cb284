import itertools
import math
import os

import pytest

from countcluster.services.benchmark import (
    RUN_COLUMNS,
    SUMMARY_COLUMNS,
    BenchmarkSpec,
    ablation_deltas,
    execute_run,
    guidance_config_for,
    run_benchmark,
    write_benchmark_csvs,
)
from countcluster.services.blobsim import SimParams
from countcluster.services.errors import ConfigError
from countcluster.services.evaluation import MetricsRow

SHORT_GUIDANCE = {
    "guided_timesteps": (50, 49),
    "refinement": ((50, 0.2),),
    "max_refinement_iters": 2,
}


@pytest.fixture
def small_spec():
    return BenchmarkSpec(
        counts=(2, 3),
        seeds=(0, 1),
        variants=("guided", "baseline"),
        sim=SimParams(size=16, blob_slots=6),
        guidance=dict(SHORT_GUIDANCE),
    )


def test_spec_validation():
    with pytest.raises(ConfigError):
        BenchmarkSpec(variants=())
    with pytest.raises(ConfigError, match="unknown variant"):
        BenchmarkSpec(variants=("guided", "telepathy"))
    with pytest.raises(ConfigError):
        BenchmarkSpec(counts=(0, 2))
    with pytest.raises(ConfigError):
        BenchmarkSpec(counts=(11,))
    assert BenchmarkSpec().run_count == 9 * 10 * 4


def test_variant_configs():
    cfg, guided = guidance_config_for(4, "baseline")
    assert not guided and cfg.k == 4
    cfg, guided = guidance_config_for(4, "no-min-distance", SHORT_GUIDANCE)
    assert guided and cfg.disable_min_distance
    assert cfg.guided_timesteps == (50, 49)
    cfg, _ = guidance_config_for(4, "k-scaling")
    assert cfg.loss_scaling == "linear"
    assert guidance_config_for(4, "literal-kl")[0].kl_normalization == "literal"
    assert guidance_config_for(4, "cell-radius")[0].radius_mode == "cell"
    assert guidance_config_for(4, "guided")[0].radius_mode == "region"
    with pytest.raises(ConfigError):
        guidance_config_for(4, "nope")


def test_single_run_cardinality():
    spec = BenchmarkSpec(counts=(2,), seeds=(0,), variants=("baseline",), sim=SimParams(size=16, blob_slots=6))
    report = run_benchmark(spec, progress=False)
    assert len(report.runs) == 1
    assert list(report.runs.columns) == RUN_COLUMNS
    assert [(row.variant, row.k) for row in report.summary] == [("baseline", 2), ("baseline", "ALL")]


def test_rows_are_ordered(small_spec):
    report = run_benchmark(small_spec, progress=False, keep_results=True)
    keys = list(zip(report.runs["variant"], report.runs["k"], report.runs["seed"]))
    assert keys == [(v, k, s) for v in ("guided", "baseline") for k in (2, 3) for s in (0, 1)]
    assert len(report.results) == small_spec.run_count
    assert not report.runs["failed"].any()
    baseline = report.runs[report.runs["variant"] == "baseline"]
    assert baseline["refine_iters_t50"].isna().all()


def test_worker_count_does_not_change_output(small_spec, tmp_path):
    serial = run_benchmark(small_spec, workers=1, progress=False)
    parallel = run_benchmark(small_spec, workers=2, progress=False)
    serial_paths = write_benchmark_csvs(serial, str(tmp_path / "serial"))
    parallel_paths = write_benchmark_csvs(parallel, str(tmp_path / "parallel"))
    for a, b in zip(serial_paths, parallel_paths):
        with open(a, "rb") as fa, open(b, "rb") as fb:
            assert fa.read() == fb.read()


def test_heatmaps_are_written(tmp_path):
    spec = BenchmarkSpec(counts=(2,), seeds=(0, 1), variants=("guided",),
                         sim=SimParams(size=16, blob_slots=6), guidance=dict(SHORT_GUIDANCE))
    run_benchmark(spec, heatmap_dir=str(tmp_path), progress=False)
    assert sorted(os.listdir(tmp_path)) == ["guided_2_0.pgm", "guided_2_1.pgm"]


def test_failed_run_becomes_a_row():
    row, result = execute_run("nope", 2, 0, {}, SimParams(size=16, blob_slots=6))
    assert result is None
    assert row["failed"] is True
    assert row["counted"] is None


def test_summary_csv_columns(small_spec, tmp_path):
    report = run_benchmark(small_spec, progress=False)
    _, summary_path = write_benchmark_csvs(report, str(tmp_path))
    with open(summary_path) as fh:
        header = fh.readline().strip().split(",")
    assert header == SUMMARY_COLUMNS


def test_ablation_deltas():
    rows = [
        MetricsRow("guided", 2, 10, 0.8, 0.2, 0.4, 1.0, 0.0),
        MetricsRow("guided", "ALL", 10, 0.8, 0.2, 0.4, 1.0, 0.0),
        MetricsRow("k-scaling", 2, 10, 0.5, 0.6, 0.9, 1.0, 0.0),
        MetricsRow("k-scaling", "ALL", 10, 0.5, 0.6, 0.9, 1.0, 0.0),
    ]
    frame = ablation_deltas(rows)
    reference = frame[frame["variant"] == "guided"]
    assert (reference["delta_accuracy"] == 0.0).all()
    scaled = frame[frame["variant"] == "k-scaling"].iloc[0]
    assert scaled["delta_accuracy"] == pytest.approx(-0.3)
    assert scaled["delta_mae"] == pytest.approx(0.4)
    assert scaled["delta_rmse"] == pytest.approx(0.5)


@pytest.fixture(scope="module")
def default_report():
    """The default toy benchmark: counts 2..10 x seeds 0..9 on a 64x64 map."""
    spec = BenchmarkSpec(variants=("guided", "baseline", "no-min-distance", "k-scaling"))
    return run_benchmark(spec, workers=os.cpu_count() or 1, progress=False, keep_results=True)


def _accuracy(runs, variant, counts=None):
    rows = runs[runs["variant"] == variant]
    if counts is not None:
        rows = rows[rows["k"].isin(counts)]
    return float((rows["counted"] == rows["k"]).mean())


@pytest.mark.slow
def test_guided_clears_the_accuracy_floor(default_report):
    runs = default_report.runs
    assert not runs["failed"].any()
    guided = _accuracy(runs, "guided")
    assert guided >= 0.85
    assert guided - _accuracy(runs, "baseline") >= 0.20


@pytest.mark.slow
def test_ablations_are_worse(default_report):
    runs = default_report.runs
    guided = _accuracy(runs, "guided")
    assert _accuracy(runs, "no-min-distance") < guided
    assert _accuracy(runs, "k-scaling") < guided

    low, high = range(2, 6), range(6, 11)
    low_gap = _accuracy(runs, "guided", low) - _accuracy(runs, "k-scaling", low)
    high_gap = _accuracy(runs, "guided", high) - _accuracy(runs, "k-scaling", high)
    assert high_gap > low_gap


@pytest.mark.slow
def test_unrelaxed_centers_keep_their_distance(default_report):
    guided = [r for r in default_report.results if r.variant == "guided"]
    records = [c for r in guided for c in r.cluster_records if c.relaxation_events == 0]
    assert records
    for result in guided:
        nominal = 64 / result.target_count
        for record in result.cluster_records:
            if record.relaxation_events:
                continue
            assert record.min_distance == nominal
            for a, b in itertools.combinations(record.centers, 2):
                assert math.hypot(a[0] - b[0], a[1] - b[1]) >= nominal


@pytest.mark.slow
def test_default_benchmark_is_worker_independent(tmp_path):
    spec = BenchmarkSpec(counts=(3, 7), seeds=(0, 1, 2))
    serial = run_benchmark(spec, workers=1, progress=False)
    parallel = run_benchmark(spec, workers=4, progress=False)
    serial_paths = write_benchmark_csvs(serial, str(tmp_path / "serial"))
    parallel_paths = write_benchmark_csvs(parallel, str(tmp_path / "parallel"))
    for a, b in zip(serial_paths, parallel_paths):
        with open(a, "rb") as fa, open(b, "rb") as fb:
            assert fa.read() == fb.read()
