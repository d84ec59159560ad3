from __future__ import annotations

import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import click

from wifi_distance.cli.errors import GuardedGroup
from wifi_distance.core.config import LEARNER_KINDS, RunConfig, apply_overrides, load_run_config
from wifi_distance.core.settings import Settings, resolve_path
from wifi_distance.errors import DataError
from wifi_distance.evaluation import evaluate, export_histogram
from wifi_distance.fingerprints import Fingerprint, filter_by_label, generate_pairs_by_dataset
from wifi_distance.pipeline import fit_or_tune, refitter, run_pipeline, sweep_frame, sweep_thresholds
from wifi_distance.selection.genetic import export_fitness_history, ga_select
from wifi_distance.selection.masks import FeatureMask
from wifi_distance.selection.voting import export_votes, importance_votes
from wifi_distance.services.artifact_store import ArtifactStore, export_pairs, import_pairs, load_model, read_mask
from wifi_distance.services.dataset_service import (
    DatasetManifest,
    IsolationViolation,
    build_manifest,
    isolated_ids,
    partition_pairs,
    read_fingerprints,
    read_manifest,
    read_split,
    split_fingerprints,
    split_pool,
    write_fingerprints,
    write_manifest,
    write_split,
)
from wifi_distance.services.report_service import load_reports, write_report
from wifi_distance.synth import generate_venues

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
LEARNER_CHOICES = list(LEARNER_KINDS) + ["all"]


def configure_logging(level: str) -> None:
    logging.basicConfig(level=level.upper(), format=LOG_FORMAT, stream=sys.stderr, force=True)


@dataclass
class AppContext:
    settings: Settings
    config: RunConfig
    store: ArtifactStore
    workers: int

    def out(self, name: str) -> Path:
        return self.store.path(name)

    def overridden(self, **flags) -> RunConfig:
        return apply_overrides(self.config, **flags)


def _emit(*paths: Path) -> None:
    for p in paths:
        click.echo(str(p))


def _mask_option(value: Optional[str]) -> FeatureMask:
    """--mask accepts a mask file, a 14-character bit string, or comma-separated feature names."""
    if not value:
        return FeatureMask.full()
    if Path(value).exists():
        return read_mask(value)
    try:
        return FeatureMask.from_string(value).require_non_empty()
    except ValueError as e:
        raise click.BadParameter(str(e), param_hint="--mask") from e


def _learners(choice: str) -> Tuple[str, ...]:
    return LEARNER_KINDS if choice == "all" else (choice,)


def _read_pairs(app: AppContext, path: Optional[str], default: str):
    return import_pairs(Path(path) if path else app.out(default))


@click.group(cls=GuardedGroup)
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="Run config YAML.")
@click.option("--seed", type=int, default=None, help="Overrides every seed in the run config.")
@click.option("--output-dir", type=click.Path(file_okay=False), default=None)
@click.option("--workers", type=click.IntRange(min=1), default=None)
@click.option("--log-level", default=None, type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False))
@click.pass_context
def cli(ctx: click.Context, config_path, seed, output_dir, workers, log_level) -> None:
    """WiFi fingerprint pair distance estimation pipeline."""
    settings = Settings()
    configure_logging(log_level or settings.log_level)
    if config_path is None:
        default = resolve_path(settings.config_file)
        config_path = str(default) if default.exists() else None
    cfg = apply_overrides(load_run_config(config_path), seed=seed, output_dir=output_dir)
    out_dir = Path(output_dir or cfg.output_dir or settings.output_dir)
    ctx.obj = AppContext(
        settings=settings,
        config=cfg,
        store=ArtifactStore(out_dir, lock_timeout_s=settings.lock_timeout_s),
        workers=workers or settings.workers,
    )


@cli.command()
@click.option("--venues", type=click.IntRange(min=1), default=1, help="Number of venues, one dataset id each.")
@click.option("--isolated", type=click.IntRange(min=0), default=0, help="Mark the last N venues as isolated.")
@click.option("--fingerprints", "fingerprint_count", type=click.IntRange(min=1), default=None)
@click.pass_obj
def synth(app: AppContext, venues: int, isolated: int, fingerprint_count: Optional[int]) -> None:
    """Generate synthetic venues as a long-format fingerprint CSV plus manifest."""
    if isolated >= venues and isolated > 0:
        raise click.BadParameter("at least one venue must stay in the pool", param_hint="--isolated")
    base = app.config.venue
    specs = []
    for i in range(venues):
        update: Dict[str, object] = {"seed": base.seed + i, "mac_prefix": base.mac_prefix + i}
        if venues > 1:
            update["dataset_id"] = f"{base.dataset_id}{i}"
        if fingerprint_count is not None:
            update["fingerprint_count"] = fingerprint_count
        specs.append(base.model_copy(update=update))
    fps = generate_venues(specs)
    roles = {s.dataset_id: ("isolated" if i >= venues - isolated else "pool") for i, s in enumerate(specs)}
    fp_path = write_fingerprints(fps, app.out("fingerprints.csv"), lock_timeout_s=app.store.lock_timeout_s)
    manifest = write_manifest(build_manifest(fps, fp_path, roles), app.out("manifest.json"), lock_timeout_s=app.store.lock_timeout_s)
    _emit(fp_path, manifest)


@cli.command()
@click.argument("paths", nargs=-1, type=click.Path(exists=True, dir_okay=False))
@click.option("--isolated", "isolated_ds", multiple=True, help="Dataset id to keep out of the pool (repeatable).")
@click.pass_obj
def ingest(app: AppContext, paths: Sequence[str], isolated_ds: Sequence[str]) -> None:
    """Validate and clip fingerprint CSVs; write the merged fingerprint file and dataset manifest."""
    roles: Dict[str, str] = {ds: "isolated" for ds in isolated_ds}
    sources: List[Tuple[str, Optional[str]]] = [(p, None) for p in paths]
    if not sources:
        for entry in app.config.datasets:
            sources.append((str(resolve_path(entry.path)), entry.dataset_id))
            roles.setdefault(entry.dataset_id, entry.role)
    if not sources:
        raise click.UsageError("no fingerprint files given and no datasets in the run config")
    fps: List[Fingerprint] = []
    entries: List[DatasetManifest] = []
    seen: set = set()
    for path, ds_override in sources:
        loaded, _ = read_fingerprints(path, app.config.pipeline, dataset_id=ds_override)
        new_ids = {fp.dataset_id for fp in loaded}
        if new_ids & seen:
            raise DataError(f"dataset ids {sorted(new_ids & seen)} appear in more than one source file")
        seen |= new_ids
        fps.extend(loaded)
        entries.extend(build_manifest(loaded, path, roles))
    fp_path = write_fingerprints(fps, app.out("fingerprints.csv"), lock_timeout_s=app.store.lock_timeout_s)
    manifest = write_manifest(entries, app.out("manifest.json"), lock_timeout_s=app.store.lock_timeout_s)
    _emit(fp_path, manifest)


def _manifest_isolated(app: AppContext, manifest: Optional[str]) -> frozenset:
    path = Path(manifest) if manifest else app.out("manifest.json")
    if not path.exists():
        if manifest:
            raise DataError(f"Manifest not found: {path}")
        return frozenset()
    return isolated_ids(read_manifest(path))


@cli.command()
@click.option("--fingerprints", "fp_path", type=click.Path(dir_okay=False), default=None)
@click.option("--manifest", type=click.Path(dir_okay=False), default=None)
@click.pass_obj
def pairs(app: AppContext, fp_path: Optional[str], manifest: Optional[str]) -> None:
    """Extract the 14 features for every eligible pair; isolated datasets get their own pair files."""
    fps, _ = read_fingerprints(Path(fp_path) if fp_path else app.out("fingerprints.csv"), app.config.pipeline)
    all_pairs = generate_pairs_by_dataset(fps, app.config.pipeline, workers=app.workers)
    pool, held = partition_pairs(all_pairs, _manifest_isolated(app, manifest))
    written = [app.store.export_pairs("pairs.csv", pool)]
    for ds, ds_pairs in sorted(held.items()):
        written.append(app.store.export_pairs(f"pairs_{ds}.csv", ds_pairs))
    _emit(*written)


@cli.command(name="filter")
@click.option("--pairs", "pairs_path", type=click.Path(dir_okay=False), default=None)
@click.option("--max-m", type=float, default=None, help="Keep pairs with label <= max-m (default: train_filter_m).")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_obj
def filter_cmd(app: AppContext, pairs_path: Optional[str], max_m: Optional[float], out: Optional[str]) -> None:
    """Keep pairs whose spatial distance is at most --max-m meters."""
    cfg = app.overridden(max_m=max_m)
    limit = cfg.pipeline.train_filter_m
    src = Path(pairs_path) if pairs_path else app.out("pairs.csv")
    kept = filter_by_label(import_pairs(src), limit)
    target = Path(out) if out else src.with_name(f"{src.stem}_le{limit:g}m.csv")
    _emit(export_pairs(kept, target, lock_timeout_s=app.store.lock_timeout_s))


@cli.command()
@click.option("--pairs", "pairs_path", type=click.Path(dir_okay=False), default=None)
@click.option("--manifest", type=click.Path(dir_okay=False), default=None)
@click.option("--by", type=click.Choice(["pairs", "fingerprints"]), default="pairs", show_default=True)
@click.pass_obj
def split(app: AppContext, pairs_path: Optional[str], manifest: Optional[str], by: str) -> None:
    """Partition pool pairs into train / validation / test."""
    pool = _read_pairs(app, pairs_path, "pairs.csv")
    iso = _manifest_isolated(app, manifest)
    fractions = app.config.pipeline.split_fractions
    if by == "pairs":
        assignment = split_pool(pool, fractions, app.config.pipeline.seed, isolated=iso)
    else:
        assignment, _ = split_fingerprints(pool, fractions, app.config.pipeline.seed, isolated=iso)
    written = [write_split(assignment, app.out("split.csv"), lock_timeout_s=app.store.lock_timeout_s)]
    for name in ("train", "validation", "test"):
        written.append(app.store.export_pairs(f"{name}.csv", assignment.subset(pool, name)))
    _emit(*written)


@cli.command()
@click.option("--train", "train_path", type=click.Path(dir_okay=False), default=None)
@click.option("--max-m", type=float, default=None)
@click.pass_obj
def vote(app: AppContext, train_path: Optional[str], max_m: Optional[float]) -> None:
    """Four-voter feature importance table on the filtered training split."""
    cfg = app.overridden(max_m=max_m)
    train = filter_by_label(_read_pairs(app, train_path, "train.csv"), cfg.pipeline.train_filter_m)
    table = importance_votes(train, cfg.eval)
    _emit(export_votes(table, app.out("votes.csv"), lock_timeout_s=app.store.lock_timeout_s))


@cli.command(name="select-ga")
@click.option("--train", "train_path", type=click.Path(dir_okay=False), default=None)
@click.option("--validation", "val_path", type=click.Path(dir_okay=False), default=None)
@click.option("--max-m", type=float, default=None)
@click.pass_obj
def select_ga(app: AppContext, train_path: Optional[str], val_path: Optional[str], max_m: Optional[float]) -> None:
    """Genetic feature-mask selection scored by OLS F_beta on validation."""
    cfg = app.overridden(max_m=max_m)
    train = _read_pairs(app, train_path, "train.csv")
    validation = _read_pairs(app, val_path, "validation.csv")
    result = ga_select(train, validation, cfg.ga, cfg.eval, workers=app.workers)
    _emit(
        app.store.write_mask("mask.txt", result.mask),
        export_fitness_history(result.history, app.out("ga_history.csv"), lock_timeout_s=app.store.lock_timeout_s),
    )


@cli.command()
@click.option("--train", "train_path", type=click.Path(dir_okay=False), default=None)
@click.option("--validation", "val_path", type=click.Path(dir_okay=False), default=None)
@click.option("--mask", default=None)
@click.option("--thresholds", default=None, help="Comma-separated meters; 'inf' for no filter.")
@click.pass_obj
def sweep(app: AppContext, train_path, val_path, mask, thresholds) -> None:
    """OLS F_beta on validation for a range of training-label filters."""
    kwargs = {}
    if thresholds:
        try:
            kwargs["thresholds"] = [float(t) for t in thresholds.split(",")]
        except ValueError as e:
            raise click.BadParameter(str(e), param_hint="--thresholds") from e
    rows = sweep_thresholds(
        _read_pairs(app, train_path, "train.csv"),
        _read_pairs(app, val_path, "validation.csv"),
        app.config.eval,
        mask=_mask_option(mask),
        **kwargs,
    )
    _emit(app.store.write_frame("threshold_sweep.csv", sweep_frame(rows)))


def _train_split(app: AppContext, train_path: Optional[str], cfg: RunConfig):
    train = _read_pairs(app, train_path, "train.csv")
    kept = filter_by_label(train, cfg.pipeline.train_filter_m)
    if not kept:
        raise DataError(f"no training pairs with label <= {cfg.pipeline.train_filter_m} m")
    return kept


@cli.command()
@click.option("--train", "train_path", type=click.Path(dir_okay=False), default=None)
@click.option("--learner", type=click.Choice(LEARNER_CHOICES), default="ols", show_default=True)
@click.option("--mask", default=None, help="Mask file, bit string or feature names (default: all 14).")
@click.option("--max-m", type=float, default=None)
@click.pass_obj
def train(app: AppContext, train_path, learner, mask, max_m) -> None:
    """Fit learners with the hyperparameters from the run config."""
    cfg = app.overridden(max_m=max_m)
    fm = _mask_option(mask)
    rows = _train_split(app, train_path, cfg)
    for kind in _learners(learner):
        model = fit_or_tune(kind, cfg, rows, [], fm, tune=False)
        _emit(app.store.save_model(f"model_{kind}.json", model))


@cli.command()
@click.option("--train", "train_path", type=click.Path(dir_okay=False), default=None)
@click.option("--validation", "val_path", type=click.Path(dir_okay=False), default=None)
@click.option("--learner", type=click.Choice(LEARNER_CHOICES), default="ridge", show_default=True)
@click.option("--mask", default=None)
@click.option("--max-m", type=float, default=None)
@click.option("--draws", type=click.IntRange(min=1), default=None, help="Overrides search.n_draws.")
@click.pass_obj
def tune(app: AppContext, train_path, val_path, learner, mask, max_m, draws) -> None:
    """Random-search hyperparameters on validation F_beta."""
    cfg = app.overridden(max_m=max_m)
    if draws is not None:
        cfg = cfg.model_copy(update={"search": cfg.search.model_copy(update={"n_draws": draws})})
    fm = _mask_option(mask)
    rows = _train_split(app, train_path, cfg)
    validation = _read_pairs(app, val_path, "validation.csv")
    for kind in _learners(learner):
        model = fit_or_tune(kind, cfg, rows, validation, fm, tune=True, workers=app.workers)
        _emit(app.store.save_model(f"model_{kind}.json", model))


@cli.command(name="evaluate")
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--pairs", "pairs_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--dataset", "dataset_id", default=None, help="Name used in output files (default: from the pairs).")
@click.option("--split", "split_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--split-name", type=click.Choice(["train", "validation", "test"]), default="test", show_default=True)
@click.option("--manifest", type=click.Path(dir_okay=False), default=None)
@click.option("--train", "train_path", type=click.Path(dir_okay=False), default=None, help="Training pairs for refitting stochastic models.")
@click.option("--restrict", type=float, default=None, help="Also report on pairs with label <= restrict meters.")
@click.option("--beta", type=float, default=None)
@click.option("--threshold-m", type=float, default=None)
@click.pass_obj
def evaluate_cmd(app: AppContext, model_path, pairs_path, dataset_id, split_path, split_name, manifest, train_path, restrict, beta, threshold_m) -> None:
    """Score a saved model on a pair file; isolated datasets are evaluated on their full pair file only."""
    cfg = app.overridden(restrict=restrict, beta=beta, threshold_m=threshold_m)
    model = load_model(model_path)
    pairs_list = import_pairs(pairs_path)
    if not pairs_list:
        raise DataError(f"{pairs_path}: no pairs to evaluate")
    iso = _manifest_isolated(app, manifest)
    touched = sorted({p.dataset_id for p in pairs_list} & iso)
    if split_path is not None:
        if touched:
            raise IsolationViolation(f"isolated datasets {touched} must not be evaluated through a pool split manifest")
        pairs_list = read_split(split_path).subset(pairs_list, split_name)
        if not pairs_list:
            raise DataError(f"no pairs of {pairs_path} are in split '{split_name}'")
    ds = dataset_id or (pairs_list[0].dataset_id if len({p.dataset_id for p in pairs_list}) == 1 else Path(pairs_path).stem)
    refit = None
    if model.stochastic and train_path:
        refit = refitter(model, filter_by_label(import_pairs(train_path), model.train_filter_m))
    report = evaluate(model, pairs_list, cfg.eval, refit=refit, dataset_id=ds)
    _emit(
        app.store.write_json(f"eval_{model.kind}_{ds}.json", report.to_dict()),
        export_histogram(report, app.out(f"hist_{model.kind}_{ds}.csv"), lock_timeout_s=app.store.lock_timeout_s),
    )


@cli.command()
@click.argument("eval_files", nargs=-1, type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
def report(app: AppContext, eval_files: Sequence[str]) -> None:
    """Aggregate evaluation JSON files into report.csv and report_restricted.csv."""
    paths = list(eval_files) or sorted(str(p) for p in app.store.root.glob("eval_*.json"))
    if not paths:
        raise DataError(f"no eval_*.json files in {app.store.root}")
    full, restricted = write_report(load_reports(paths), app.store.root, lock_timeout_s=app.store.lock_timeout_s)
    _emit(full, restricted)


@cli.command()
@click.option("--fingerprints", "fp_path", type=click.Path(exists=True, dir_okay=False), default=None, help="Default: synthesize a venue.")
@click.option("--manifest", type=click.Path(dir_okay=False), default=None)
@click.option("--learner", type=click.Choice(LEARNER_CHOICES), default="all", show_default=True)
@click.option("--no-tune", is_flag=True, default=False, help="Use the configured hyperparameters instead of random search.")
@click.option("--max-m", type=float, default=None)
@click.option("--restrict", type=float, default=None)
@click.option("--beta", type=float, default=None)
@click.option("--threshold-m", type=float, default=None)
@click.pass_obj
def run(app: AppContext, fp_path, manifest, learner, no_tune, max_m, restrict, beta, threshold_m) -> None:
    """Full pipeline in one call: pairs, split, votes, GA, train or tune, evaluate, report."""
    cfg = app.overridden(max_m=max_m, restrict=restrict, beta=beta, threshold_m=threshold_m)
    if fp_path:
        fps, _ = read_fingerprints(fp_path, cfg.pipeline)
        iso = _manifest_isolated(app, manifest) if manifest else frozenset()
    else:
        fps = generate_venues([cfg.venue])
        iso = frozenset()
    run_pipeline(cfg, fps, app.store, isolated=iso, learners=_learners(learner), tune=not no_tune, workers=app.workers)
    _emit(app.out("report.csv"), app.out("report_restricted.csv"))


def main(argv: Optional[Sequence[str]] = None) -> None:
    cli.main(args=list(argv) if argv is not None else None, prog_name="wifi-distance")
