"""
Pipeline orchestration with per-phase checkpoints

Phases run in the fixed order train, unlearn, repair, retrain, ablation,
sweep. After each phase its MetricsReport, any parameter vectors it
produced and the series it logged are written under <out>/checkpoints/ and
<out>/logs/. With resume=True a phase whose checkpoint matches the current
config is loaded instead of recomputed.
"""
import json
import logging
import time
from pathlib import Path
from typing import Iterable, Optional

from ..collectors import save_assignment, save_dataset
from ..config import ExperimentConfig
from ..exceptions import ConfigError, FedGcvError, PhaseDependencyError, PipelineError
from ..models import PHASE_ORDER, MetricsReport, MiaThreshold, Phase, ResultsReport, Variant
from ..nn import load_params, save_params
from ..reporters import emit_results, to_json, write_atomic, write_jsonl
from .core import (
    RunContext,
    prepare_context,
    repair_phase,
    restore_federation,
    retrain_phase,
    run_ablation,
    train_phase,
    unlearn_phase,
)
from .sweep import run_sweep

logger = logging.getLogger(__name__)

PHASE_REQUIRES = {
    Phase.UNLEARN: Phase.TRAIN,
    Phase.REPAIR: Phase.UNLEARN,
    Phase.RETRAIN: Phase.TRAIN,
}


def check_phases(phases: Iterable) -> list[Phase]:
    """Deduplicate, order and dependency-check the requested phases"""
    try:
        requested = {Phase(p) for p in phases}
    except ValueError as e:
        raise ConfigError("phases", str(e)) from e
    if not requested:
        raise PhaseDependencyError("no phases requested")
    for phase in requested:
        needed = PHASE_REQUIRES.get(phase)
        if needed is not None and needed not in requested:
            raise PhaseDependencyError(f"phase '{phase.value}' requires '{needed.value}'")
    return [p for p in PHASE_ORDER if p in requested]


class CheckpointStore:
    """Phase checkpoints: <phase>.json metadata plus <phase>_<name>.bin parameter vectors"""

    def __init__(self, directory: Path):
        self.directory = Path(directory)

    def _meta(self, phase: str) -> Path:
        return self.directory / f"{phase}.json"

    def matches(self, cfg: ExperimentConfig) -> bool:
        path = self.directory / "config.json"
        if not path.exists():
            return False
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f) == cfg.snapshot()

    def start(self, cfg: ExperimentConfig, resume: bool) -> bool:
        """Returns whether existing checkpoints may be reused"""
        reusable = resume and self.matches(cfg)
        if resume and not reusable:
            logger.warning(f"No checkpoints for this config in {self.directory}; running every phase")
        if not reusable:
            self.directory.mkdir(parents=True, exist_ok=True)
            for stale in self.directory.glob("*"):
                if stale.is_file():
                    stale.unlink()
            write_atomic(self.directory / "config.json", to_json(cfg.snapshot(), indent=2))
        return reusable

    def save(self, phase: str, reports: dict, params: Optional[dict] = None, payload: Optional[dict] = None,
             layout=None) -> None:
        for name, vec in (params or {}).items():
            save_params(vec, layout, self.directory / f"{phase}_{name}.bin")
        meta = {
            "reports": {key: r.to_dict() for key, r in reports.items()},
            "params": sorted(params or {}),
            "payload": payload or {},
        }
        write_atomic(self._meta(phase), to_json(meta, indent=2))

    def load(self, phase: str) -> Optional[dict]:
        path = self._meta(phase)
        if not path.exists():
            return None
        with open(path, "r", encoding="utf-8") as f:
            meta = json.load(f)
        meta["reports"] = {key: MetricsReport.from_dict(r) for key, r in meta["reports"].items()}
        meta["params"] = {name: load_params(self.directory / f"{phase}_{name}.bin")[0] for name in meta["params"]}
        return meta


def _write_logs(out_dir: Path, reports: dict) -> None:
    for key, report in reports.items():
        for series, records in report.curves.items():
            write_jsonl(records, out_dir / "logs" / f"{key.replace(':', '_')}_{series}.jsonl")


def _run_phase(phase: Phase, ctx: Optional[RunContext], cfg: ExperimentConfig) -> dict:
    """Execute one phase; returns {report key: MetricsReport}"""
    if phase is Phase.TRAIN:
        return {"train": train_phase(ctx)}
    if phase is Phase.UNLEARN:
        return {"unlearn": unlearn_phase(ctx)}
    if phase is Phase.REPAIR:
        return {"repair": repair_phase(ctx)}
    if phase is Phase.RETRAIN:
        return {"retrain": retrain_phase(ctx)}
    if phase is Phase.ABLATION:
        trained = ctx if ctx is not None and ctx.fed_state is not None else None
        if trained is None:
            trained = prepare_context(cfg)
            train_phase(trained)
        return {f"ablation:{v.value}": run_ablation(cfg, v, trained=trained) for v in Variant}
    return run_sweep(cfg)


def _save_phase(store: CheckpointStore, phase: Phase, ctx: RunContext, reports: dict) -> None:
    if phase is Phase.TRAIN:
        save_assignment(ctx.assignment, store.directory / "assignment.json")
        store.save("train", reports, params={"theta0": ctx.theta0}, layout=ctx.layout,
                   payload={"history": ctx.fed_state.history,
                            "threshold": ctx.thresholds[ctx.primary].to_dict()})
    elif phase is Phase.UNLEARN:
        store.save("unlearn", reports, params={"theta_u": ctx.theta_u}, layout=ctx.layout,
                   payload={"departed": ctx.departed})
    elif phase is Phase.REPAIR:
        for virtual in ctx.virtuals:
            save_dataset(virtual.local, store.directory / f"virtual_{virtual.client_id}.json",
                         provenance=virtual.provenance)
        store.save("repair", reports)
    else:
        store.save(phase.value, reports)


def _restore_phase(phase: Phase, ctx: Optional[RunContext], meta: dict) -> None:
    if phase is Phase.TRAIN:
        restore_federation(ctx, meta["params"]["theta0"], meta["payload"]["history"])
        ctx.thresholds[ctx.primary] = MiaThreshold.from_dict(meta["payload"]["threshold"])
    elif phase is Phase.UNLEARN:
        ctx.theta_u = meta["params"]["theta_u"]
        ctx.departed = list(meta["payload"]["departed"])


def run_pipeline(
    cfg: ExperimentConfig,
    phases: Optional[Iterable] = None,
    out_dir: Optional[Path] = None,
    resume: bool = False,
    emit: bool = True,
) -> ResultsReport:
    """
    Run the requested phases in order and emit the results.

    Args:
        cfg: validated experiment config
        phases: subset of train/unlearn/repair/retrain/ablation/sweep
            (default cfg.phases)
        out_dir: output directory (default cfg.output_dir)
        resume: reuse matching phase checkpoints
        emit: write report.json / metrics.csv / curves.csv

    Returns:
        ResultsReport with one entry per produced MetricsReport

    Raises:
        PhaseDependencyError: a phase is requested without its prerequisite
        PipelineError: a module error, tagged with the phase it came from
    """
    ordered = check_phases(cfg.phases if phases is None else phases)
    out_dir = Path(cfg.output_dir if out_dir is None else out_dir)
    store = CheckpointStore(out_dir / "checkpoints")
    reusable = store.start(cfg, resume)

    needs_context = any(p in (Phase.TRAIN, Phase.UNLEARN, Phase.REPAIR, Phase.RETRAIN) for p in ordered)
    ctx = None
    report = ResultsReport(config=cfg.snapshot())

    for step, phase in enumerate(ordered, start=1):
        logger.info("=" * 50)
        logger.info(f"STEP {step}: {phase.value.upper()}")
        logger.info("=" * 50)
        started = time.perf_counter()
        try:
            if ctx is None and needs_context:
                ctx = prepare_context(cfg)
            meta = store.load(phase.value) if reusable else None
            if meta is not None:
                logger.info(f"Loaded {phase.value} from checkpoint")
                _restore_phase(phase, ctx, meta)
                reports = meta["reports"]
            else:
                reusable = False  # later phases depend on this one's fresh state
                reports = _run_phase(phase, ctx, cfg)
                _save_phase(store, phase, ctx, reports)
                _write_logs(out_dir, reports)
        except (ConfigError, PhaseDependencyError):
            raise
        except FedGcvError as e:
            raise PipelineError(phase.value, e) from e

        elapsed = time.perf_counter() - started
        for key, metrics in reports.items():
            report.reports[key] = metrics
            report.timings[key] = elapsed
        logger.info(f"{phase.value} finished in {elapsed:.1f}s")

    if emit:
        emit_results(report, out_dir)
    return report
