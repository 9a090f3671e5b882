"""Command-line workflow: everything the labeling console does, scriptable.

Exit codes: 0 on success, 2 on validation/usage errors (bad flags, malformed
or missing files), 1 on unexpected runtime failures.
"""
from __future__ import annotations

import csv
import functools
import json
import sys
from pathlib import Path

import click

from . import active, store
from .classifier import TrainConfig
from .embedding import read_store, write_store
from .errors import WildloopError
from .ingest import EMPTY_CLASS, LabelSpace, load_labels
from .merge import PipelineConfig, predict_dataset, predictions_to_csv
from .metrics import collapse_empty, confusion, format_cm, format_report, report
from .synth import SynthSpec, synthesize
from .tuning import HyperGrid, evaluate, make_split, make_station_partition, tune, tuning_records_to_csv


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def handle_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except WildloopError as exc:
            _fail(str(exc), 2)
        except FileNotFoundError as exc:
            _fail(str(exc), 2)
        except Exception as exc:  # genuine runtime failure
            _fail(f"{type(exc).__name__}: {exc}", 1)

    return wrapper


@click.group()
@click.option("--seed", type=int, default=None, help="Override the project seed.")
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="JSON file with train/grid/pipeline overrides (used at project creation).")
@click.option("--quiet", is_flag=True, default=False, help="Suppress progress output.")
@click.pass_context
def main(ctx, seed, config_path, quiet):
    """wildloop: label-efficient camera-trap image classification."""
    ctx.ensure_object(dict)
    ctx.obj["seed"] = seed
    ctx.obj["quiet"] = quiet
    ctx.obj["config"] = {}
    if config_path:
        ctx.obj["config"] = json.loads(Path(config_path).read_text(encoding="utf-8"))


def _echo(ctx, message):
    if not ctx.obj.get("quiet"):
        click.echo(message)


def _apply_config(project: store.ProjectState, overrides: dict, seed) -> None:
    tc = dict(overrides.get("train_config", {}))
    if seed is not None:
        tc.setdefault("seed", seed)
    if tc:
        base = project.train_config
        project.train_config = TrainConfig(
            learning_rate=tc.get("learning_rate", base.learning_rate),
            epochs=tc.get("epochs", base.epochs),
            batch_size=tc.get("batch_size", base.batch_size),
            l2=tc.get("l2", base.l2),
            seed=tc.get("seed", base.seed),
            class_weighting=tc.get("class_weighting", base.class_weighting),
            hidden_units=tc.get("hidden_units", base.hidden_units),
        )
    grid = overrides.get("grid", {})
    if grid:
        project.grid = HyperGrid(
            alphas=tuple(grid.get("alphas", project.grid.alphas)),
            embedders=tuple(grid.get("embedders", project.grid.embedders)),
            metric=grid.get("metric", project.grid.metric),
        )
    pipe = overrides.get("pipeline", {})
    if pipe:
        project.pipeline = PipelineConfig(
            alpha=pipe.get("alpha", project.pipeline.alpha),
            beta=pipe.get("beta", project.pipeline.beta),
            embedder=pipe.get("embedder", project.pipeline.embedder),
        )


@main.command()
@click.argument("project_dir", type=click.Path())
@click.option("--classes", required=True, help=f"Comma-separated class names (must include '{EMPTY_CLASS}').")
@click.option("--manifest", default="manifest.csv", show_default=True)
@click.option("--detections", default="detections.json", show_default=True)
@click.option("--embedder", default="toy", show_default=True)
@click.pass_context
@handle_errors
def init(ctx, project_dir, classes, manifest, detections, embedder):
    """Create a project manifest in PROJECT_DIR."""
    root = Path(project_dir)
    space = LabelSpace(tuple(c.strip() for c in classes.split(",")))
    project = store.ProjectState(
        root=root,
        label_space=space,
        manifest_path=manifest,
        detections_path=detections,
        pipeline=PipelineConfig(embedder=embedder),
        grid=HyperGrid(embedders=(embedder,)),
    )
    _apply_config(project, ctx.obj["config"], ctx.obj["seed"])
    for rel in (manifest, detections):
        if not (root / rel).is_file():
            _fail(f"missing input file: {root / rel}", 2)
    store.save(project)
    _echo(ctx, f"initialized project at {root}")


@main.command()
@click.argument("project_dir", type=click.Path(exists=True))
@click.option("--labels", "labels_file", default=None, help="CSV of known labels (image_id,label).")
@click.option("--test-fraction", type=float, default=0.15, show_default=True)
@click.option("--batch-size", type=int, default=128, show_default=True)
@click.option("--acquisition", type=click.Choice(active.ACQUISITIONS), default="entropy", show_default=True)
@click.pass_context
@handle_errors
def ingest(ctx, project_dir, labels_file, test_fraction, batch_size, acquisition):
    """Load and validate the dataset; initialize the labeling loop state."""
    project = store.load(project_dir)
    dataset = project.load_dataset()
    initial = {}
    if labels_file:
        initial = load_labels(labels_file)
    elif project.al is not None:
        initial = dict(project.al.labels)
    seed = ctx.obj["seed"] if ctx.obj["seed"] is not None else project.train_config.seed
    dataset = dataset.with_labels(initial)
    project.al = active.init_state(
        dataset,
        initial_labels=initial,
        test_fraction=test_fraction,
        batch_size=batch_size,
        acquisition=acquisition,
        seed=seed,
    )
    store.save(project)
    _echo(
        ctx,
        f"{len(dataset)} images, {len(initial)} labeled, "
        f"{len(project.al.frozen_test)} frozen test, "
        f"{len(project.al.unlabeled_pool)} unlabeled",
    )


@main.command()
@click.argument("project_dir", type=click.Path())
@click.option("--images", "n_images", type=int, default=1000, show_default=True)
@click.option("--stations", type=int, default=4, show_default=True)
@click.option("--spread", type=float, default=1.0, show_default=True, help="Embedding cluster spread.")
@click.option("--spurious-prob", type=float, default=0.3, show_default=True)
@click.option("--test-fraction", type=float, default=0.15, show_default=True)
@click.option("--initial-labeled", type=int, default=0, show_default=True,
              help="Pre-label this many random pool images from the ground truth.")
@click.option("--batch-size", type=int, default=128, show_default=True)
@click.option("--acquisition", type=click.Choice(active.ACQUISITIONS), default="entropy", show_default=True)
@click.pass_context
@handle_errors
def synth(ctx, project_dir, n_images, stations, spread, spurious_prob, test_fraction,
          initial_labeled, batch_size, acquisition):
    """Generate a synthetic project with ground-truth oracle labels."""
    import numpy as np

    seed = ctx.obj["seed"] if ctx.obj["seed"] is not None else 0
    root = Path(project_dir)
    spec = SynthSpec(
        n_images=n_images,
        n_stations=stations,
        cluster_spread=spread,
        spurious_box_prob=spurious_prob,
    )
    generated = synthesize(spec, seed)
    generated.write(root)
    truth = {i: r.label for i, r in generated.dataset.images.items()}

    project = store.ProjectState(
        root=root,
        label_space=generated.dataset.label_space,
        embedding_paths=[
            f"{store.EMBEDDING_DIR}/{generated.box_store.provider.name}.emb",
            f"{store.EMBEDDING_DIR}/{generated.whole_store.provider.name}.emb",
        ],
        pipeline=PipelineConfig(alpha=0.5, embedder=spec.provider_name),
        grid=HyperGrid(embedders=(spec.provider_name,)),
        train_config=TrainConfig(seed=seed),
    )
    _apply_config(project, ctx.obj["config"], ctx.obj["seed"])

    # Oracle file for scripted labeling; project labels start with the
    # frozen test plus an optional random starter set.
    with open(root / "oracle_labels.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "label"])
        for image_id in sorted(truth):
            writer.writerow([image_id, truth[image_id]])

    test_ids = active.select_test_ids(generated.dataset, truth, test_fraction, seed)
    initial = {i: truth[i] for i in test_ids}
    if initial_labeled > 0:
        rng = np.random.default_rng([seed, 999])
        pool = sorted(set(truth) - set(test_ids))
        starters = rng.choice(pool, size=min(initial_labeled, len(pool)), replace=False)
        initial.update({i: truth[i] for i in starters})
    project.al = active.init_state(
        generated.dataset,
        initial_labels=initial,
        test_ids=test_ids,
        batch_size=batch_size,
        acquisition=acquisition,
        skip_tuning=False,
        seed=seed,
    )
    store.save(project)
    _echo(ctx, f"synthetic project at {root}: {n_images} images, seed {seed}")


@main.command()
@click.argument("project_dir", type=click.Path(exists=True))
@click.option("--import", "import_path", type=click.Path(exists=True), default=None,
              help="Copy an existing embedding store into the project.")
@click.option("--alpha", type=float, default=None, help="Embed crops at this threshold with the toy embedder.")
@click.pass_context
@handle_errors
def embed(ctx, project_dir, import_path, alpha):
    """Import an embedding store, or precompute toy embeddings."""
    project = store.load(project_dir)
    emb_dir = project.root / store.EMBEDDING_DIR
    emb_dir.mkdir(exist_ok=True)
    if import_path:
        imported = read_store(import_path)
        dest = emb_dir / f"{imported.provider.name}.emb"
        write_store(imported, dest)
        rel = f"{store.EMBEDDING_DIR}/{dest.name}"
        if rel not in project.embedding_paths:
            project.embedding_paths.append(rel)
        store.save(project)
        _echo(ctx, f"imported store '{imported.provider.name}' ({len(imported)} rows)")
        return
    if alpha is None:
        _fail("pass --import PATH or --alpha A", 2)
    dataset = project.load_dataset()
    runtime = project.build_runtime()
    provider = runtime.registry.get("toy")
    from .embedding import EmbeddingStore
    from .merge import image_box_crops

    ids, rows = [], []
    for image_id in sorted(dataset.images):
        for crop in image_box_crops(dataset, image_id, alpha, runtime, provider):
            ids.append(crop.crop_id)
            rows.append(provider.embed_batch([crop])[0])
    import numpy as np

    data = np.asarray(rows, dtype=np.float32).reshape(len(ids), provider.ident.dim)
    materialized = EmbeddingStore(provider.ident, ids, data)
    dest = emb_dir / "toy.emb"
    write_store(materialized, dest)
    rel = f"{store.EMBEDDING_DIR}/toy.emb"
    if rel not in project.embedding_paths:
        project.embedding_paths.append(rel)
    store.save(project)
    _echo(ctx, f"embedded {len(ids)} crops at alpha={alpha}")


@main.command()
@click.argument("project_dir", type=click.Path(exists=True))
@click.option("--fractions", default="0.70,0.15,0.15", show_default=True)
@click.option("--stratify/--no-stratify", default=True, show_default=True)
@click.option("--station-partition", type=float, default=None,
              help="Instead of a split, print a station-disjoint partition at this in-sample fraction.")
@click.pass_context
@handle_errors
def split(ctx, project_dir, fractions, stratify, station_partition):
    """Write train/val/test assignment of the labeled images to splits.csv."""
    project = store.load(project_dir)
    dataset = project.load_dataset()
    seed = ctx.obj["seed"] if ctx.obj["seed"] is not None else project.train_config.seed
    if station_partition is not None:
        inside, outside = make_station_partition(dataset, station_partition, seed)
        click.echo("in-sample stations: " + ",".join(inside))
        click.echo("out-of-sample stations: " + ",".join(outside))
        return
    fr = tuple(float(x) for x in fractions.split(","))
    assignment = make_split(dataset, fr, stratify, seed)
    path = project.root / "splits.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "split"])
        for image_id in sorted(assignment.mapping):
            writer.writerow([image_id, assignment.mapping[image_id]])
    sizes = {p: len(assignment.part(p)) for p in ("train", "val", "test")}
    _echo(ctx, f"split written to {path}: {sizes}")


def _tune_impl(ctx, project, out):
    dataset = project.load_dataset()
    runtime = project.build_runtime()
    seed = ctx.obj["seed"] if ctx.obj["seed"] is not None else project.train_config.seed
    assignment = make_split(dataset, seed=seed)
    best, records = tune(
        dataset, assignment, project.grid, runtime, project.train_config, project.pipeline.beta
    )
    out_path = project.root / out
    tuning_records_to_csv(records, out_path)
    project.pipeline = PipelineConfig(
        alpha=best.alpha, beta=project.pipeline.beta, embedder=best.embedder
    )
    if project.al is not None and best.head is not None:
        project.al.last_lambda = (best.embedder, best.alpha)
        project.al.last_head = best.head
    store.save(project)
    _echo(ctx, f"{'confidence':>10} {'architecture':>14} {'metric':>8}")
    for rec in sorted(records, key=lambda r: r.val_metric, reverse=True):
        _echo(ctx, f"{rec.alpha:>10.2f} {rec.embedder:>14} {rec.val_metric:>8.4f}")
    _echo(ctx, f"best: embedder={best.embedder} alpha={best.alpha} -> {out_path}")


@main.command(name="tune")
@click.argument("project_dir", type=click.Path(exists=True))
@click.option("--out", default="tuning.csv", show_default=True)
@click.pass_context
@handle_errors
def tune_cmd(ctx, project_dir, out):
    """Grid-search (embedder, threshold) on the labeled images."""
    project = store.load(project_dir)
    _tune_impl(ctx, project, out)


@main.command(name="train")
@click.argument("project_dir", type=click.Path(exists=True))
@click.option("--alpha", type=float, default=None)
@click.option("--embedder", default=None)
@click.pass_context
@handle_errors
def train_cmd(ctx, project_dir, alpha, embedder):
    """Train a single model at the chosen (embedder, threshold)."""
    from .tuning import training_crops
    from .classifier import cold_start, train as train_head

    project = store.load(project_dir)
    if project.al is None:
        _fail("no labeling state; run ingest or synth first", 2)
    dataset = project.load_dataset()
    runtime = project.build_runtime()
    lam = (
        embedder or project.pipeline.embedder,
        alpha if alpha is not None else project.pipeline.alpha,
    )
    provider = runtime.registry.get(lam[0])
    labeled = sorted(project.al.labeled_pool)
    crops = training_crops(dataset, labeled, lam[1], runtime, provider)
    if not crops:
        _fail(f"no high-confidence crops among labeled images at alpha={lam[1]}", 2)
    X = provider.embed_batch(crops)
    head = cold_start(dataset.label_space, provider.ident.dim, project.train_config)
    head, curve = train_head(head, X, [c.label for c in crops])
    project.al.last_head = head
    project.al.last_lambda = lam
    store.save(project)
    _echo(ctx, f"trained on {len(crops)} crops; final loss {curve[-1]:.4f}")


@main.command(name="eval")
@click.argument("project_dir", type=click.Path(exists=True))
@click.option("--collapse-empty", "collapse", is_flag=True, default=False)
@click.pass_context
@handle_errors
def eval_cmd(ctx, project_dir, collapse):
    """Evaluate the current model on the frozen test set."""
    project = store.load(project_dir)
    if project.al is None or project.al.last_head is None:
        _fail("no trained model; run tune, train, or al-iterate first", 2)
    dataset = project.load_dataset()
    runtime = project.build_runtime()
    lam = project.al.last_lambda
    test_ids = sorted(project.al.frozen_test)
    bb_report, image_report = evaluate(
        dataset, test_ids, lam, project.al.last_head, runtime, project.pipeline.beta
    )
    if bb_report is not None:
        click.echo("box level:")
        click.echo(format_report(bb_report))
    click.echo("image level:")
    click.echo(format_report(image_report))
    if collapse:
        preds = predict_dataset(
            dataset,
            project.al.last_head,
            PipelineConfig(alpha=lam[1], beta=project.pipeline.beta, embedder=lam[0]),
            runtime,
            test_ids,
        )
        cm = confusion(
            [dataset.images[p.image_id].label for p in preds],
            [p.label for p in preds],
            dataset.label_space,
        )
        click.echo("empty vs non-empty:")
        click.echo(format_cm(collapse_empty(cm)))


@main.command(name="al-select")
@click.argument("project_dir", type=click.Path(exists=True))
@click.option("--batch-size", type=int, default=None)
@click.option("--stratified", is_flag=True, default=False)
@click.option("--out", default=None, help="Write the queued ids to this CSV.")
@click.pass_context
@handle_errors
def al_select(ctx, project_dir, batch_size, stratified, out):
    """Select the next batch of images to label."""
    project = store.load(project_dir)
    if project.al is None:
        _fail("no labeling state; run ingest or synth first", 2)
    dataset = project.load_dataset()
    runtime = project.build_runtime()
    al = project.al
    if stratified:
        al.stratify_by_station = True
    preds = []
    if al.iteration > 0 and al.acquisition == "entropy":
        embedder, alpha = al.last_lambda
        cfg = PipelineConfig(alpha=alpha, beta=project.pipeline.beta, embedder=embedder)
        preds = predict_dataset(dataset, al.last_head, cfg, runtime, sorted(al.unlabeled_pool))
    batch = active.select_batch(al, preds, batch_size, dataset)
    al.queued = batch
    store.save(project)
    if out:
        with open(out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["image_id"])
            for image_id in batch:
                writer.writerow([image_id])
    _echo(ctx, f"queued {len(batch)} images")
    if not ctx.obj.get("quiet") and not out:
        for image_id in batch:
            click.echo(image_id)


@main.command(name="al-label")
@click.argument("project_dir", type=click.Path(exists=True))
@click.argument("labels_csv", type=click.Path(exists=True))
@click.option("--queued-only", is_flag=True, default=False,
              help="Only apply labels for currently queued images.")
@click.pass_context
@handle_errors
def al_label(ctx, project_dir, labels_csv, queued_only):
    """Submit labels from a CSV (image_id,label)."""
    project = store.load(project_dir)
    if project.al is None:
        _fail("no labeling state; run ingest or synth first", 2)
    labels = load_labels(labels_csv)
    al = project.al
    wanted = list(al.queued) if queued_only else sorted(set(labels) & set(al.unlabeled_pool))
    pairs = [(i, labels[i]) for i in wanted if i in labels]
    active.submit_labels(al, pairs)
    store.save(project)
    _echo(ctx, f"labeled {len(pairs)} images ({len(al.labeled_pool)} total)")


@main.command(name="al-iterate")
@click.argument("project_dir", type=click.Path(exists=True))
@click.option("--skip-tuning/--with-tuning", default=None)
@click.option("--start-mode", type=click.Choice(active.START_MODES), default=None)
@click.option("--full-grid", is_flag=True, default=False,
              help="Tune over every embedder, not just the best-known one.")
@click.pass_context
@handle_errors
def al_iterate(ctx, project_dir, skip_tuning, start_mode, full_grid):
    """Tune (optionally), train, and evaluate one loop iteration.

    In-loop tuning defaults to the reduced grid (best-known embedder x all
    thresholds) to bound iteration latency.
    """
    project = store.load(project_dir)
    if project.al is None:
        _fail("no labeling state; run ingest or synth first", 2)
    al = project.al
    if skip_tuning is not None:
        al.skip_tuning = skip_tuning
    if start_mode is not None:
        al.start_mode = start_mode
    dataset = project.load_dataset()
    runtime = project.build_runtime()
    grid = None
    if not al.skip_tuning:
        if full_grid:
            grid = project.grid
        else:
            known = al.last_lambda[0] if al.last_lambda else project.pipeline.embedder
            grid = HyperGrid(
                alphas=project.grid.alphas, embedders=(known,), metric=project.grid.metric
            )
    deps = active.ALDeps(
        dataset=dataset,
        runtime=runtime,
        default_lambda=(project.pipeline.embedder, project.pipeline.alpha),
        grid=grid,
        train_config=project.train_config,
        beta=project.pipeline.beta,
        checkpoint_dir=project.root / store.CHECKPOINT_DIR,
    )
    _, rec = active.iterate(al, deps)
    store.save(project)
    _echo(
        ctx,
        f"iteration {rec.iteration}: labeled={rec.labeled_count} "
        f"accuracy={rec.test_accuracy:.4f} weighted_f1={rec.test_weighted_f1:.4f}",
    )


@main.command(name="al-finalize")
@click.argument("project_dir", type=click.Path(exists=True))
@click.option("--out", default="predictions.csv", show_default=True)
@click.pass_context
@handle_errors
def al_finalize(ctx, project_dir, out):
    """Predict all remaining unlabeled images with the last model."""
    project = store.load(project_dir)
    if project.al is None:
        _fail("no labeling state; run ingest or synth first", 2)
    dataset = project.load_dataset()
    runtime = project.build_runtime()
    deps = active.ALDeps(
        dataset=dataset,
        runtime=runtime,
        default_lambda=(project.pipeline.embedder, project.pipeline.alpha),
        train_config=project.train_config,
        beta=project.pipeline.beta,
    )
    preds = active.finalize(project.al, deps)
    out_path = project.root / out
    predictions_to_csv(preds, dataset.label_space, out_path)
    _echo(ctx, f"{len(preds)} predictions -> {out_path}")


@main.command(name="predict")
@click.argument("project_dir", type=click.Path(exists=True))
@click.option("--out", default="predictions.csv", show_default=True)
@click.option("--unlabeled-only", is_flag=True, default=False)
@click.pass_context
@handle_errors
def predict_cmd(ctx, project_dir, out, unlabeled_only):
    """Export merged predictions for the whole project."""
    project = store.load(project_dir)
    if project.al is None or project.al.last_head is None:
        _fail("no trained model; run tune, train, or al-iterate first", 2)
    dataset = project.load_dataset()
    runtime = project.build_runtime()
    embedder, alpha = project.al.last_lambda
    cfg = PipelineConfig(alpha=alpha, beta=project.pipeline.beta, embedder=embedder)
    ids = sorted(project.al.unlabeled_pool) if unlabeled_only else None
    preds = predict_dataset(dataset, project.al.last_head, cfg, runtime, ids)
    out_path = project.root / out
    predictions_to_csv(preds, dataset.label_space, out_path)
    _echo(ctx, f"{len(preds)} predictions -> {out_path}")


@main.command(name="serve")
@click.argument("project_dir", type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8765, show_default=True)
@click.option("--ui", "ui_dir", type=click.Path(), default=None, help="Static console build to serve at /.")
@click.pass_context
@handle_errors
def serve_cmd(ctx, project_dir, host, port, ui_dir):
    """Run the labeling service for the web console."""
    from .service import serve

    _echo(ctx, f"serving {project_dir} on http://{host}:{port}")
    serve(project_dir, host=host, port=port, ui_dir=ui_dir)


if __name__ == "__main__":
    main()
