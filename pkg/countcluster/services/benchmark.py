"""
Benchmark harness: every variant x count x seed, counted by the oracle and
aggregated into Acc / MAE / RMSE.

Runs may finish in any order on a process pool; rows are always sorted
back into (variant, k, seed) order before anything is written, so the
CSVs do not depend on the worker count.
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from typing import Optional

import pandas as pd
from tqdm import tqdm

from countcluster.data.defaults import (
    DEFAULT_COUNTS,
    DEFAULT_SEEDS,
    DEFAULT_VARIANTS,
    MAX_OBJECT_COUNT,
    get_variant,
)
from countcluster.services.artifacts import write_pgm
from countcluster.services.blobsim import RunResult, SimParams
from countcluster.services.errors import ConfigError, CountClusterError
from countcluster.services.evaluation import MetricsRow, summarize
from countcluster.services.guidance import GuidanceConfig, run_baseline, run_guided

logger = logging.getLogger(__name__)

RUN_COLUMNS = [
    "variant", "k", "seed", "counted", "loss_final", "relaxations_total",
    "refine_iters_t50", "refine_iters_t40", "failed",
]
SUMMARY_COLUMNS = ["variant", "k", "n", "accuracy", "mae", "rmse", "mean_relaxations", "failure_rate"]


@dataclass(frozen=True)
class BenchmarkSpec:
    """What to run: counts x seeds x variants on one simulator setup."""
    counts: tuple[int, ...] = DEFAULT_COUNTS
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    variants: tuple[str, ...] = DEFAULT_VARIANTS
    sim: SimParams = field(default_factory=SimParams)
    # GuidanceConfig fields shared by every run (everything except k)
    guidance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.counts:
            raise ConfigError("counts must not be empty")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if not self.variants:
            raise ConfigError("variants must not be empty")
        if any(k < 1 or k > MAX_OBJECT_COUNT for k in self.counts):
            raise ConfigError(f"counts must lie in [1, {MAX_OBJECT_COUNT}], got {list(self.counts)}")
        unknown = [v for v in self.variants if get_variant(v) is None]
        if unknown:
            raise ConfigError(f"unknown variant(s): {', '.join(unknown)}")

    @property
    def run_count(self) -> int:
        return len(self.counts) * len(self.seeds) * len(self.variants)


@dataclass
class BenchmarkReport:
    """Per-run rows, aggregated metrics, and (optionally) the raw results."""
    runs: pd.DataFrame
    summary: list[MetricsRow]
    results: list[RunResult] = field(default_factory=list)

    def summary_frame(self) -> pd.DataFrame:
        return summary_to_frame(self.summary)


def guidance_config_for(k: int, variant: str, guidance: Optional[dict] = None) -> tuple[GuidanceConfig, bool]:
    """
    Build the GuidanceConfig for one variant.

    Returns:
        (config, guided) where guided is False for the baseline variant
    """
    overrides = get_variant(variant)
    if overrides is None:
        raise ConfigError(f"unknown variant: {variant}")
    guided = overrides.pop("guided", True)
    fields = {**(guidance or {}), **overrides}
    return GuidanceConfig(k=k, **fields), guided


def execute_run(variant: str, k: int, seed: int, guidance: dict, sim: SimParams,
                heatmap_dir: Optional[str] = None) -> tuple[dict, Optional[RunResult]]:
    """Run one (variant, k, seed) and turn it into a CSV row."""
    row = {"variant": variant, "k": k, "seed": seed}
    try:
        cfg, guided = guidance_config_for(k, variant, guidance)
        runner = run_guided if guided else run_baseline
        result = runner(seed, cfg, sim, variant=variant)
    except CountClusterError as exc:
        logger.warning("Run failed: variant=%s k=%d seed=%d: %s", variant, k, seed, exc)
        row.update({
            "counted": None, "loss_final": None, "relaxations_total": None,
            "refine_iters_t50": None, "refine_iters_t40": None, "failed": True,
        })
        return row, None

    if heatmap_dir:
        write_pgm(os.path.join(heatmap_dir, f"{variant}_{k}_{seed}.pgm"), result.final_map)

    row.update({
        "counted": result.counted,
        "loss_final": result.loss_final,
        "relaxations_total": result.relaxations_total,
        "refine_iters_t50": result.refinement_iterations.get(50),
        "refine_iters_t40": result.refinement_iterations.get(40),
        "failed": False,
    })
    return row, result


def _tasks(spec: BenchmarkSpec) -> list[tuple[str, int, int]]:
    return [(variant, k, seed) for variant in spec.variants for k in spec.counts for seed in spec.seeds]


def _runs_frame(rows: list[dict], variants: tuple[str, ...]) -> pd.DataFrame:
    frame = pd.DataFrame(rows, columns=RUN_COLUMNS)
    frame["_order"] = frame["variant"].map({v: i for i, v in enumerate(variants)})
    frame = frame.sort_values(["_order", "k", "seed"], kind="stable").drop(columns="_order").reset_index(drop=True)
    for column in ("k", "seed"):
        frame[column] = frame[column].astype(int)
    for column in ("counted", "relaxations_total", "refine_iters_t50", "refine_iters_t40"):
        frame[column] = frame[column].astype("Int64")
    frame["loss_final"] = frame["loss_final"].astype(float)
    frame["failed"] = frame["failed"].astype(bool)
    return frame


def run_benchmark(spec: BenchmarkSpec, workers: int = 1, heatmap_dir: Optional[str] = None,
                  progress: bool = True, keep_results: bool = False) -> BenchmarkReport:
    """
    Execute every (variant, k, seed) run and aggregate.

    Args:
        spec: Counts, seeds, variants and shared settings
        workers: Process count; 1 runs inline
        heatmap_dir: If set, one PGM per run named {variant}_{k}_{seed}.pgm
        progress: Show a tqdm progress bar
        keep_results: Keep every RunResult on the report (memory heavy)

    Returns:
        BenchmarkReport with rows in (variant, k, seed) order
    """
    tasks = _tasks(spec)
    logger.info("Benchmark: %d runs on %d worker(s)", len(tasks), workers)
    collected: dict[tuple[str, int, int], tuple[dict, Optional[RunResult]]] = {}

    bar = tqdm(total=len(tasks), desc="benchmark", unit="run", disable=not progress)
    if workers <= 1:
        for variant, k, seed in tasks:
            collected[(variant, k, seed)] = execute_run(variant, k, seed, spec.guidance, spec.sim, heatmap_dir)
            bar.update(1)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(execute_run, variant, k, seed, spec.guidance, spec.sim, heatmap_dir): (variant, k, seed)
                for variant, k, seed in tasks
            }
            for future in as_completed(futures):
                collected[futures[future]] = future.result()
                bar.update(1)
    bar.close()

    rows = [collected[task][0] for task in tasks]
    runs = _runs_frame(rows, spec.variants)
    results = [collected[task][1] for task in tasks if collected[task][1] is not None] if keep_results else []
    return BenchmarkReport(runs=runs, summary=summarize(runs, spec.variants), results=results)


def summary_to_frame(rows: list[MetricsRow]) -> pd.DataFrame:
    return pd.DataFrame([asdict(row) for row in rows], columns=SUMMARY_COLUMNS)


def ablation_deltas(rows: list[MetricsRow], reference: str = "guided") -> pd.DataFrame:
    """
    Summary rows with accuracy / MAE / RMSE differences against the
    reference variant's row for the same k.
    """
    frame = summary_to_frame(rows)
    ref = frame[frame["variant"] == reference]
    ref = ref.set_index(ref["k"].astype(str))
    keys = frame["k"].astype(str)
    for metric in ("accuracy", "mae", "rmse"):
        baseline = keys.map(ref[metric]).astype(float)
        frame[f"delta_{metric}"] = frame[metric].astype(float) - baseline
    return frame


def write_benchmark_csvs(report: BenchmarkReport, out_dir: str, runs_name: str = "runs.csv",
                         summary_name: str = "summary.csv",
                         summary: Optional[pd.DataFrame] = None) -> tuple[str, str]:
    """Write runs.csv and summary.csv (or the given summary frame); returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    runs_path = os.path.join(out_dir, runs_name)
    summary_path = os.path.join(out_dir, summary_name)
    report.runs.to_csv(runs_path, index=False, lineterminator="\n")
    if summary is None:
        summary = report.summary_frame()
    summary.to_csv(summary_path, index=False, float_format="%.6f", lineterminator="\n")
    return runs_path, summary_path
