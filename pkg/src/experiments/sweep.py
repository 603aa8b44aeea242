"""
Sensitivity sweep: one hyperparameter over a value list, repeated over seeds

Every (value, seed) point runs train, unlearn and repair from scratch in
its own process; points are collected in (value, seed) order so the report
does not depend on scheduling.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Optional, Sequence

import numpy as np

from ..config import SWEEP_ALIASES, ExperimentConfig
from ..models import MetricsReport
from .core import prepare_context, repair_phase, train_phase, unlearn_phase

logger = logging.getLogger(__name__)


def sweep_point(snapshot: dict, param: str, value: float, seed: int) -> dict:
    """Run one point; module-level so worker processes can unpickle it"""
    cfg = ExperimentConfig.model_validate(snapshot).with_override(param, value).with_seed(seed)
    ctx = prepare_context(cfg)
    train_phase(ctx)
    unlearned = unlearn_phase(ctx)
    repaired = repair_phase(ctx)
    return {
        "value": value,
        "seed": seed,
        "accuracy": repaired.accuracy,
        "accuracy_post_unlearn": unlearned.accuracy,
        "mia_rate_pre": unlearned.mia_rate_pre,
        "mia_rate_post": unlearned.mia_rate_post,
        "mia_rate_post_repair": repaired.mia_rate_post,
    }


def _typed(snapshot: dict, param: str, value):
    """Integral values for integer-typed keys stay ints (e.g. repair rounds)"""
    node = snapshot
    for key in param.split("."):
        if not isinstance(node, dict) or key not in node:
            return value
        node = node[key]
    if isinstance(node, int) and not isinstance(node, bool) and float(value).is_integer():
        return int(value)
    return value


def _summarize(param: str, value: float, points: list[dict]) -> MetricsReport:
    acc = np.array([p["accuracy"] for p in points])
    mia = np.array([p["mia_rate_post"] for p in points])
    return MetricsReport(
        name=f"{param}={value:g}",
        accuracy=float(acc.mean()),
        mia_rate_pre=float(np.mean([p["mia_rate_pre"] for p in points])),
        mia_rate_post=float(mia.mean()),
        curves={"seeds": [{"step": i, **p} for i, p in enumerate(points)]},
        config={"param": param, "value": value},
        extra={"accuracy_std": float(acc.std()), "mia_rate_post_std": float(mia.std()), "seeds": len(points)},
    )


def run_sweep(
    cfg: ExperimentConfig,
    param: Optional[str] = None,
    values: Optional[Sequence[float]] = None,
    seeds: Optional[int] = None,
    workers: Optional[int] = None,
) -> dict[str, MetricsReport]:
    """
    Sweep `param` over `values` with `seeds` repetitions per value.

    Args:
        cfg: base experiment config
        param: dotted key or alias such as "tau" (default cfg.sweep.param)
        values: values to try (default cfg.sweep.values)
        seeds: repetitions; seed s uses cfg.seed + s (default cfg.sweep.seeds)
        workers: process count (default cfg.workers)

    Returns:
        {"sweep:<param>=<value>": MetricsReport with mean and std over seeds}
    """
    param = SWEEP_ALIASES.get(param or cfg.sweep.param, param or cfg.sweep.param)
    snapshot = cfg.snapshot()
    values = [_typed(snapshot, param, v) for v in (cfg.sweep.values if values is None else values)]
    seeds = cfg.sweep.seeds if seeds is None else seeds
    workers = cfg.workers if workers is None else workers

    # validate every override before spending compute
    for value in values:
        cfg.with_override(param, value)

    jobs = [(snapshot, param, value, cfg.seed + s) for value in values for s in range(seeds)]
    logger.info(f"Sweep over {param}: {len(values)} values x {seeds} seeds, {workers} workers")

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(sweep_point, *zip(*jobs)))
    else:
        results = [sweep_point(*job) for job in jobs]

    reports = {}
    for value in values:
        points = [r for r in results if r["value"] == value]
        report = _summarize(param, value, points)
        reports[f"sweep:{report.name}"] = report
        logger.info(f"  {report.name}: accuracy {report.accuracy:.4f} ± {report.extra['accuracy_std']:.4f}, "
                    f"MIA {report.mia_rate_post:.4f} ± {report.extra['mia_rate_post_std']:.4f}")
    return reports
