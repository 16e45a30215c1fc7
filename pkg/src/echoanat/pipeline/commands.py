"""Business logic behind the CLI subcommands.

Each function is importable and deterministic under a fixed seed, so the
commands are testable without spawning processes.
"""
from __future__ import annotations

import csv
import io
import json
import sys
from pathlib import Path

import torch
import torch.nn.functional as F
import yaml

from .. import datasets, metrics, synthdata
from ..cyclegan import (
    BatchFeed,
    ImageBatch,
    LossWeights,
    TrainState,
    load_checkpoint,
    preset,
    save_checkpoint,
    train_step,
    translate,
    write_history_csv,
)
from ..errors import ImageIOError, ParameterError
from ..grids import ImageGrid, load_image_png, load_mask_png, save_image_png, save_mask_png
from ..segmentation import CircleSeed, GACParams, morphgac_run, seed_from_mask
from .config import RunConfig
from .runs import guard_artifact, write_guarded

DOMAINS = ("us", "anatomy")


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def cmd_synth(out_root, n_per_class: int, size: int, seed: int = 0, paired: bool = False,
              force: bool = False) -> Path:
    """Generate the two-domain synthetic dataset under <out>/synthetic."""
    out_root = Path(out_root) / "synthetic"
    pairs = synthdata.generate_dataset(n_per_class, size, seed=seed, paired=paired)
    staged = {}
    for domain in DOMAINS:
        for pair in pairs:
            sample = pair.us if domain == "us" else pair.anatomy
            base = out_root / domain / sample.class_label
            staged[base / f"{sample.id}.png"] = ("image", sample.image)
            if sample.masks:
                staged[base / f"{sample.id}_mask.png"] = ("mask", sample.masks[0])
    for path, (kind, obj) in staged.items():
        buf = io.BytesIO()
        if kind == "image":
            save_image_png(obj, buf)
        else:
            save_mask_png(obj, buf)
        write_guarded(path, buf.getvalue(), force=force)
    _log(f"synth: wrote {len(staged)} files under {out_root}")
    return out_root


def cmd_prepare(root, out_dir, seed: int = 0, ratios=datasets.DEFAULT_RATIOS,
                patch_size: int = 450, stride: int = 225, force: bool = False) -> dict:
    """Split manifest and patch index for one BUSI-layout tree."""
    out_dir = Path(out_dir)
    cases = datasets.discover_cases(root)
    for case in cases:
        if case["class_label"] != "normal" and not case["mask_paths"]:
            _log(f"prepare: warning: {case['id']} has no mask; kept with empty mask list")
    split = datasets.stratified_split(
        [(c["id"], c["class_label"]) for c in cases], ratios=ratios, seed=seed
    )
    manifest_buf = io.StringIO()
    lines = []
    for name, members in split.subsets().items():
        lines.extend(f"{sample_id}\t{name}" for sample_id in members)
    manifest_buf.write("\n".join(sorted(lines)) + "\n")

    index_buf = io.StringIO()
    writer = csv.writer(index_buf)
    writer.writerow(["id", "class", "origin_row", "origin_col", "patch_size"])
    for case in cases:
        image = load_image_png(case["image_path"])
        patch_set = datasets.crop_patches(image, patch_size, stride, parent_id=case["id"])
        for patch in patch_set.patches:
            writer.writerow(
                [case["id"], case["class_label"], patch.origin[0], patch.origin[1], patch_size]
            )
    write_guarded(out_dir / "manifest.txt", manifest_buf.getvalue(), force=force)
    write_guarded(out_dir / "patch_index.csv", index_buf.getvalue(), force=force)
    _log(f"prepare: {len(cases)} cases -> {out_dir}")
    return {"cases": len(cases), "split": split, "out_dir": out_dir}


def _load_domain_patches(root, domain: str, subset_ids: set[str], config: RunConfig) -> torch.Tensor:
    """Stack the subset's patches as model-range tensors at net resolution."""
    arch = preset(config.model.preset)
    cases = datasets.discover_cases(Path(root) / domain)
    tensors = []
    for case in sorted(cases, key=lambda c: c["id"]):
        if case["id"] not in subset_ids:
            continue
        image = load_image_png(case["image_path"])
        patch_set = datasets.crop_patches(
            image, config.dataset.patch_size, config.dataset.stride, parent_id=case["id"]
        )
        for patch in patch_set.patches:
            grid = datasets.to_model_range(ImageGrid(patch.image.as_rgb(), patch.image.value_range))
            t = torch.from_numpy(grid.pixels).permute(2, 0, 1)[None].float()
            if patch.image.shape != (arch.net_input, arch.net_input):
                t = F.interpolate(
                    t, size=(arch.net_input, arch.net_input), mode="bilinear", align_corners=False
                )
            tensors.append(t[0])
    if not tensors:
        raise ParameterError(f"no {domain} training patches found under {root}")
    return torch.stack(tensors)


def cmd_train(config: RunConfig, data_root, run_dir, force: bool = False,
              resume: bool = False, log_every: int = 0) -> Path:
    """Train on the prepared train split of both domains; resumable.

    Writes config.yaml, per-domain prepare outputs, losses.csv and
    checkpoints (latest + final) under the run directory.
    """
    data_root = Path(data_root)
    run_dir = Path(run_dir)
    final_path = run_dir / "train" / "checkpoints" / "final.ckpt"
    latest_path = run_dir / "train" / "checkpoints" / "latest.ckpt"
    losses_path = run_dir / "train" / "losses.csv"
    if final_path.exists() and not force and not resume:
        guard_artifact(final_path, force=False)

    run_dir.mkdir(parents=True, exist_ok=True)
    write_guarded(
        run_dir / "config.yaml", yaml.safe_dump(config.as_dict(), sort_keys=True), force=True
    )

    splits = {}
    for domain in DOMAINS:
        prep = cmd_prepare(
            data_root / domain,
            run_dir / "prepare" / domain,
            seed=config.dataset.seed,
            ratios=config.dataset.ratios,
            patch_size=config.dataset.patch_size,
            stride=config.dataset.stride,
            force=True,
        )
        splits[domain] = prep["split"]

    us_stack = _load_domain_patches(data_root, "us", set(splits["us"].train), config)
    pa_stack = _load_domain_patches(data_root, "anatomy", set(splits["anatomy"].train), config)

    arch = preset(config.model.preset)
    weights = LossWeights(
        lambda_gan=config.model.lambda_gan,
        lambda_cycle=config.model.lambda_cycle,
        lambda_opposite=config.model.lambda_opposite,
    )
    if resume and latest_path.exists():
        state = load_checkpoint(latest_path)
        _log(f"train: resumed from {latest_path} at step {state.step} epoch {state.epoch}")
    else:
        state = TrainState.create(
            arch,
            weights=weights,
            lr=config.training.lr,
            betas=(config.training.beta1, config.training.beta2),
            pool_capacity=config.training.pool_capacity,
            gan_loss=config.model.gan_loss,
            seed=config.training.seed,
        )
        losses_path.parent.mkdir(parents=True, exist_ok=True)
        write_history_csv([], losses_path, append=False)

    feed = BatchFeed(us_stack, pa_stack, config.training.batch_size, seed=config.training.seed)
    for _ in range(state.epoch):  # replay shuffles so a resumed run stays on sequence
        for _ in feed.epoch():
            pass
    state.bundle.train()
    for epoch in range(state.epoch, config.training.epochs):
        epoch_records = []
        for x_batch, y_batch in feed.epoch():
            record = train_step(state, x_batch, y_batch)
            epoch_records.append(record)
            if log_every and record.step % log_every == 0:
                _log(
                    f"train: step {record.step} total {record.total:.4f} "
                    f"cycle {record.cycle:.4f} d_pa {record.adv_d_pa:.4f}"
                )
        state.epoch = epoch + 1
        write_history_csv(epoch_records, losses_path, append=True)
        if (epoch + 1) % config.training.checkpoint_every == 0:
            latest_path.parent.mkdir(parents=True, exist_ok=True)
            save_checkpoint(state, latest_path)
    latest_path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(state, latest_path)
    save_checkpoint(state, final_path)
    _log(f"train: finished at step {state.step}; final checkpoint {final_path}")
    return final_path


def _collect_inputs(inputs) -> list[Path]:
    paths = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(q for q in p.rglob("*.png") if "_mask" not in q.stem))
        else:
            paths.append(p)
    return paths


def cmd_translate(checkpoint_path, inputs, outdir, patch_size: int = 450, stride: int = 225,
                  force: bool = False) -> dict:
    """Translate input PNGs into the anatomy domain (`_pa` suffix outputs).

    Undecodable files are skipped and reported; the returned dict carries
    ok/failed lists so callers can signal partial failure.
    """
    state = load_checkpoint(checkpoint_path)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    ok, failed = [], []
    for path in _collect_inputs(inputs):
        try:
            image = load_image_png(path)
        except ImageIOError as exc:
            _log(f"translate: skipping {path}: {exc}")
            failed.append(path)
            continue
        out = translate(state.bundle, image, patch_size=patch_size, stride=stride)
        out_path = outdir / f"{path.stem}_pa.png"
        buf = io.BytesIO()
        save_image_png(out, buf)
        write_guarded(out_path, buf.getvalue(), force=force)
        ok.append(out_path)
    _log(f"translate: {len(ok)} written, {len(failed)} failed")
    return {"ok": ok, "failed": failed}


def _normalize_case_id(stem: str) -> str:
    return stem[: -len("_pa")] if stem.endswith("_pa") else stem


def discover_masks(mask_dir) -> dict[str, Path]:
    """Map case ids to mask files under a directory (recursively)."""
    out = {}
    for p in sorted(Path(mask_dir).rglob("*_mask.png")):
        out[_normalize_case_id(p.stem[: -len("_mask")])] = p
    return out


def cmd_segment(inputs, outdir, params: GACParams, seed_circle: CircleSeed | None = None,
                seed_mask_dir=None, trace_every: int = 0, force: bool = False) -> dict:
    """Segment images with the contour model; one `<id>_mask.png` each.

    Seeds come either from one explicit circle (applied to every input) or
    from reference masks matched by case id in ``seed_mask_dir``.
    """
    if (seed_circle is None) == (seed_mask_dir is None):
        raise ParameterError("provide exactly one of seed_circle or seed_mask_dir")
    references = discover_masks(seed_mask_dir) if seed_mask_dir else {}
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written, skipped = [], []
    for path in _collect_inputs(inputs):
        case_id = _normalize_case_id(path.stem)
        if seed_circle is not None:
            init = seed_circle
        elif case_id in references:
            init = seed_from_mask(load_mask_png(references[case_id]))
        else:
            _log(f"segment: no reference mask for {case_id}; skipped")
            skipped.append(path)
            continue
        image = load_image_png(path)
        result = morphgac_run(image, init, params, trace_every=trace_every)
        out_path = outdir / f"{case_id}_mask.png"
        buf = io.BytesIO()
        save_mask_png(result.mask, buf)
        write_guarded(out_path, buf.getvalue(), force=force)
        written.append(out_path)
    _log(f"segment: {len(written)} masks written, {len(skipped)} skipped")
    return {"written": written, "skipped": skipped}


def _class_from_id(case_id: str) -> str:
    for label in datasets.CLASS_LABELS:
        if case_id.startswith(label):
            return label
    return "benign"


def cmd_evaluate(generated_dir, references: dict[str, object], outdir,
                 std_mode: str = "population", plots: bool = False,
                 force: bool = False) -> dict:
    """Per-lesion metrics of generated masks against each reference set.

    ``references`` maps reference kind (manual / reseg) to a mask
    directory. Unmatched ids are reported, degenerate cases flagged.
    """
    if not references:
        raise ParameterError("at least one reference mask set is required")
    generated = discover_masks(generated_dir)
    if not generated:
        raise ParameterError(f"no generated masks found under {generated_dir}")
    records = []
    unmatched: dict[str, list[str]] = {}
    for kind, ref_dir in references.items():
        if kind not in metrics.REFERENCE_KINDS:
            raise ParameterError(f"unknown reference kind {kind!r}")
        refs = discover_masks(ref_dir)
        if not refs:
            raise ParameterError(f"no reference masks found under {ref_dir}")
        missing = sorted(set(generated) ^ set(refs))
        if missing:
            unmatched[kind] = missing
            _log(f"evaluate: {kind}: unmatched ids: {', '.join(missing)}")
        for case_id in sorted(set(generated) & set(refs)):
            gen = load_mask_png(generated[case_id])
            ref = load_mask_png(refs[case_id])
            lm = metrics.compute_lesion_metrics(gen, ref, gen.shape, kind)
            records.append(
                metrics.MetricRecord(
                    id=case_id,
                    class_label=_class_from_id(case_id),
                    reference_kind=kind,
                    dice=lm.dice,
                    center_error_pct=lm.center_error_pct,
                    area_index_pct=lm.area_index_pct,
                    degenerate=lm.degenerate,
                )
            )
    if not records:
        raise ParameterError("no generated/reference mask pairs matched by id")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    summary = metrics.summarize(records, std_mode=std_mode)
    write_guarded(outdir / "records.csv", metrics.records_to_csv(records), force=force)
    write_guarded(
        outdir / "summary.json",
        json.dumps(metrics.summary_to_dict(summary), indent=2) + "\n",
        force=force,
    )
    write_guarded(outdir / "summary.md", metrics.summary_to_markdown(summary), force=force)
    if plots:
        metrics.write_distribution_plots(records, outdir / "plots")
    _log(f"evaluate: {len(records)} records -> {outdir}")
    return {"records": records, "summary": summary, "unmatched": unmatched, "outdir": outdir}


def cmd_report(records_csv, outdir, std_mode: str = "population", plots: bool = True,
               force: bool = False) -> dict:
    """Render the grouped summary table (and plots) from a records CSV."""
    records = metrics.read_records_csv(records_csv)
    summary = metrics.summarize(records, std_mode=std_mode)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_guarded(outdir / "summary.md", metrics.summary_to_markdown(summary), force=force)
    write_guarded(
        outdir / "summary.json",
        json.dumps(metrics.summary_to_dict(summary), indent=2) + "\n",
        force=force,
    )
    plot_paths = metrics.write_distribution_plots(records, outdir / "plots") if plots else []
    return {"summary": summary, "plots": plot_paths, "outdir": outdir}
