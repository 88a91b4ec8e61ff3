"""Pipeline stages behind the CLI.

Each stage writes its artifacts plus a ``run_manifest.json`` capturing the
resolved parameters, input content hashes, and versions, so identical
configs and inputs reproduce identical output trees.
"""

import csv
import hashlib
import json
import zlib
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, evaluate, models, objects, stitch
from .data import (
    archive,
    geometry,
    rasters,
    sampling,
    synth,
)
from .errors import ValidationError
from .kernels import backend_name
from .train import TrainConfig, train


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_run_manifest(out_dir, command: str, params: dict, inputs: list) -> None:
    doc = {
        "command": command,
        "config": {k: params[k] for k in sorted(params)},
        "inputs": {str(p): _sha256(Path(p)) for p in sorted(str(x) for x in inputs)},
        "versions": {"pvmap": __version__, "kernel_backend": backend_name()},
    }
    Path(out_dir, "run_manifest.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _ensure_dir(out_dir) -> Path:
    p = Path(out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _scene_stem(i: int) -> str:
    return f"scene_{i:04d}"


def run_synth(
    out_dir,
    seed: int,
    scenes: int,
    panels: int,
    dims: tuple[int, int] = (256, 256),
    side_range: tuple[float, float] = (3.0, 20.0),
    min_gap: int = 5,
) -> list[str]:
    """Write ``scenes`` rasters + annotation JSONs; returns their stems."""
    out = _ensure_dir(out_dir)
    stems = []
    for i in range(scenes):
        raster, polys = synth.synth_scene((seed, i), dims, panels, side_range, min_gap)
        stem = _scene_stem(i)
        rasters.save_raster(out / f"{stem}.png", raster)
        rasters.save_annotations(out / f"{stem}.json", stem, polys)
        stems.append(stem)
    write_run_manifest(
        out,
        "synth",
        {
            "seed": seed,
            "scenes": scenes,
            "panels": panels,
            "dims": list(dims),
            "side_range": list(side_range),
            "min_gap": min_gap,
        },
        [],
    )
    return stems


def scene_paths(raster_dir, ids: list[str] | None = None) -> list[tuple[str, Path, Path]]:
    """(stem, raster.png, annotations.json) triples, sorted by stem."""
    d = Path(raster_dir)
    if not d.is_dir():
        raise ValidationError(f"{raster_dir}: not a directory")
    pngs = {p.stem: p for p in d.glob("*.png")}
    stems = sorted(pngs) if ids is None else list(ids)
    out = []
    for stem in stems:
        png = pngs.get(stem)
        ann = d / f"{stem}.json"
        if png is None or not ann.exists():
            raise ValidationError(f"{raster_dir}: missing raster or annotations for {stem!r}")
        out.append((stem, png, ann))
    if not out:
        raise ValidationError(f"{raster_dir}: no rasters found")
    return out


def _load_scene(png: Path, ann: Path) -> tuple[np.ndarray, np.ndarray]:
    raster = rasters.load_raster(png)
    _, polys = rasters.load_annotations(ann, dims=raster.shape[:2])
    mask = geometry.rasterize(polys, raster.shape[:2])
    return raster, mask


def run_extract(
    out_dir,
    raster_dir,
    seed: int,
    ids: list[str] | None = None,
    keep_fraction: float = 0.3,
    copies: int = 4,
    neg_per_pos: float = 3.0,
    val_fraction: float = 0.0,
    threads: int = 1,
) -> dict[str, Path]:
    """Extract patches from every scene into a packed archive.

    With ``val_fraction`` > 0, whole rasters are held out first and their
    patches land in a separate validation archive.
    """
    out = _ensure_dir(out_dir)
    scenes = scene_paths(raster_dir, ids)
    stems = [s for s, _, _ in scenes]
    if val_fraction > 0:
        train_ids, val_ids = sampling.split_validation(stems, val_fraction, seed)
    else:
        train_ids, val_ids = stems, []

    def extract_one(item):
        stem, png, ann = item
        raster, mask = _load_scene(png, ann)
        return sampling.extract_patches(
            raster,
            mask,
            (seed, zlib.crc32(stem.encode())),
            keep_fraction=keep_fraction,
            copies=copies,
            neg_per_pos=neg_per_pos,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_scene = list(pool.map(extract_one, scenes))
    else:
        per_scene = [extract_one(s) for s in scenes]
    by_stem = dict(zip(stems, per_scene))

    paths = {}
    train_set = sampling.concat_patch_sets([by_stem[s] for s in train_ids])
    paths["train"] = out / "patches.pvp"
    archive.write_patches(paths["train"], train_set)
    if val_ids:
        val_set = sampling.concat_patch_sets([by_stem[s] for s in val_ids])
        paths["val"] = out / "patches_val.pvp"
        archive.write_patches(paths["val"], val_set)
    write_run_manifest(
        out,
        "extract",
        {
            "seed": seed,
            "keep_fraction": keep_fraction,
            "copies": copies,
            "neg_per_pos": neg_per_pos,
            "val_fraction": val_fraction,
            "train_ids": train_ids,
            "val_ids": val_ids,
        },
        [p for _, png, ann in scenes for p in (png, ann)],
    )
    return paths


def run_train(
    out_dir,
    patches_path,
    arch: str,
    config: TrainConfig,
    widths: tuple[int, ...] = (64, 128, 128),
    fc_widths: tuple[int, ...] = (128, 32),
    val_patches_path=None,
) -> dict[str, Path]:
    """Train one network and write weights, network manifest, and report."""
    out = _ensure_dir(out_dir)
    if arch == "classifier":
        spec = models.build_classifier(widths, fc_widths)
    elif arch == "segmenter":
        spec = models.build_segmenter(widths)
    else:
        raise ValidationError(f"arch must be classifier|segmenter, got {arch!r}")
    patches = archive.read_patches(patches_path)
    if len(patches) == 0:
        raise ValidationError(f"{patches_path}: empty patch archive")
    labels = patches.classes if arch == "classifier" else patches.masks
    val_px = val_labels = None
    if val_patches_path is not None:
        val = archive.read_patches(val_patches_path)
        val_px = val.pixels
        val_labels = val.classes if arch == "classifier" else val.masks

    seeds = np.random.default_rng(config.seed)
    init_seed = int(seeds.integers(2**63))
    net = models.build_network(spec, seed=init_seed)
    report = train(net, patches.pixels, labels, config, val_px, val_labels)

    paths = {
        "weights": Path(out, "weights.segmap"),
        "network": Path(out, "network.txt"),
        "report": Path(out, "report.csv"),
    }
    models.save_model(net, paths["weights"], paths["network"])
    report.write_csv(paths["report"])
    inputs = [patches_path] + ([val_patches_path] if val_patches_path else [])
    write_run_manifest(
        out,
        "train",
        {
            "arch": arch,
            "widths": list(widths),
            "fc_widths": list(fc_widths),
            "init_seed": init_seed,
            **{k: getattr(config, k) for k in (
                "batch_size", "learning_rate", "momentum", "weight_decay",
                "epochs", "schedule", "seed",
            )},
        },
        inputs,
    )
    return paths


def run_predict(
    out_dir,
    weights_path,
    network_path,
    raster_dir,
    ids: list[str] | None = None,
    sigma: float = stitch.GAUSSIAN_SIGMA,
    stride: int = stitch.STRIDE,
    batch_size: int = 256,
    threads: int = 1,
) -> list[Path]:
    """Stitched probability maps (exact binary + 16-bit PNG) per raster."""
    out = _ensure_dir(out_dir)
    net = models.load_model(weights_path, network_path)
    scenes = scene_paths(raster_dir, ids)
    written = []
    for stem, png, _ in scenes:
        raster = rasters.load_raster(png)
        pm = stitch.predict_map(
            net, raster, sigma=sigma, stride=stride, batch_size=batch_size, threads=threads
        )
        p = out / f"{stem}.pmap"
        stitch.save_pmap(p, pm)
        stitch.save_pmap_png(out / f"{stem}_prob.png", pm)
        written.append(p)
    write_run_manifest(
        out,
        "predict",
        {"sigma": sigma, "stride": stride, "batch_size": batch_size, "ids": [s for s, _, _ in scenes]},
        [weights_path, network_path] + [png for _, png, _ in scenes],
    )
    return written


def _pmap_paths(maps) -> list[Path]:
    p = Path(maps)
    if p.is_dir():
        found = sorted(p.glob("*.pmap"))
        if not found:
            raise ValidationError(f"{maps}: no .pmap files")
        return found
    if not p.exists():
        raise ValidationError(f"{maps}: no such file")
    return [p]


def run_detect(out_dir, maps, threshold: float = objects.DEFAULT_THRESHOLD) -> list[Path]:
    """Threshold + connected components per map; detections as JSON lines."""
    out = _ensure_dir(out_dir)
    written = []
    inputs = _pmap_paths(maps)
    for p in inputs:
        pm = stitch.load_pmap(p)
        objs = objects.extract_objects(pm, threshold)
        dst = out / f"{p.stem}.jsonl"
        objects.write_detections(dst, objs, pm.shape)
        written.append(dst)
    write_run_manifest(out, "detect", {"threshold": threshold}, inputs)
    return written


def _truth_for(stem: str, annotations_dir, dims: tuple[int, int]) -> np.ndarray:
    ann = Path(annotations_dir) / f"{stem}.json"
    if not ann.exists():
        raise ValidationError(f"missing annotations for {stem!r} in {annotations_dir}")
    _, polys = rasters.load_annotations(ann, dims=dims)
    return geometry.rasterize(polys, dims)


def run_score_pixel(out_dir, maps, annotations_dir) -> float:
    """Pooled pixel PR curve and its max F1 over one or many maps."""
    out = _ensure_dir(out_dir)
    paths = _pmap_paths(maps)
    pms, truths = [], []
    for p in paths:
        pm = stitch.load_pmap(p)
        pms.append(pm)
        truths.append(_truth_for(p.stem, annotations_dir, pm.shape))
    curve = evaluate.pixel_pr(pms, truths)
    score = evaluate.max_f1(curve)
    evaluate.pr_to_csv(curve, Path(out, "pr_pixel.csv"))
    _write_summary(out / "summary.csv", [("pixel", "", score)])
    write_run_manifest(out, "score", {"mode": "pixel"}, paths)
    return score


def _detection_paths(detections) -> list[Path]:
    p = Path(detections)
    if p.is_dir():
        found = sorted(p.glob("*.jsonl"))
        if not found:
            raise ValidationError(f"{detections}: no .jsonl files")
        return found
    if not p.exists():
        raise ValidationError(f"{detections}: no such file")
    return [p]


def _load_scored_scenes(detections, annotations_dir):
    objs_per, truths_per, paths = [], [], _detection_paths(detections)
    for p in paths:
        objs, dims = objects.read_detections(p)
        if dims is None:  # no detections in this scene: dims come from truth
            ann_mask = None
            for ext in (".png",):
                cand = Path(annotations_dir) / f"{p.stem}{ext}"
                if cand.exists():
                    dims = rasters.raster_dims(cand)
            if dims is None:
                raise ValidationError(f"{p}: empty detections and no raster to size truth")
        truth_mask = _truth_for(p.stem, annotations_dir, dims)
        objs_per.append(objs)
        truths_per.append(objects.connected_components(truth_mask))
    return objs_per, truths_per, paths


def run_score_object(out_dir, detections, annotations_dir, iou_threshold: float) -> float:
    """Greedy-matched object PR curve and max F1 at one IoU threshold."""
    out = _ensure_dir(out_dir)
    objs_per, truths_per, paths = _load_scored_scenes(detections, annotations_dir)
    records, n_truth = evaluate.detection_records(objs_per, truths_per, iou_threshold)
    curve = evaluate.object_pr(records, n_truth)
    score = evaluate.max_f1(curve)
    tag = f"{iou_threshold:g}".replace(".", "p")
    evaluate.pr_to_csv(curve, Path(out, f"pr_object_iou{tag}.csv"))
    _write_summary(Path(out, "summary.csv"), [("object", iou_threshold, score)])
    write_run_manifest(out, "score", {"mode": "object", "iou": iou_threshold}, paths)
    return score


def run_sweep(out_dir, detections, annotations_dir, grid=evaluate.DEFAULT_SWEEP) -> list:
    out = _ensure_dir(out_dir)
    objs_per, truths_per, paths = _load_scored_scenes(detections, annotations_dir)
    rows = evaluate.iou_sweep(objs_per, truths_per, grid)
    evaluate.sweep_to_csv(rows, Path(out, "sweep.csv"))
    write_run_manifest(out, "sweep", {"grid": list(grid)}, paths)
    return rows


def _write_summary(path, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["mode", "iou_threshold", "max_f1"])
        for mode, iou_t, score in rows:
            w.writerow([mode, iou_t, repr(float(score))])


def run_manifest_cmd(out_dir, raster_dir, split_file, resolution_m: float = 0.3) -> list:
    """Dataset summary per split: image count, area, annotation count."""
    out = _ensure_dir(out_dir)
    splits = rasters.load_split_file(split_file)
    d = Path(raster_dir)
    rows = []
    inputs = [split_file]
    for name in splits:
        dims, counts = [], []
        for stem in splits[name]:
            png = d / f"{stem}.png"
            ann = d / f"{stem}.json"
            if not png.exists() or not ann.exists():
                raise ValidationError(f"{raster_dir}: missing raster or annotations for {stem!r}")
            dims.append(rasters.raster_dims(png))
            _, polys = rasters.load_annotations(ann)
            counts.append(len(polys))
            inputs += [png, ann]
        rows.append(rasters.compute_manifest(name, dims, counts, resolution_m))
    with open(Path(out, "manifest.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["split", "images", "area_km2", "annotations"])
        for m in rows:
            w.writerow([m.split, m.images, repr(m.area_km2), m.annotations])
    write_run_manifest(out, "manifest", {"resolution_m": resolution_m}, inputs)
    return rows


def run_report(out_dir, pr_csvs: list, sweep_csvs: list) -> list[Path]:
    """Render PR curves and F1-vs-IoU plots as SVG."""
    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    out = _ensure_dir(out_dir)
    written = []
    if pr_csvs:
        fig, ax = plt.subplots(figsize=(5, 4))
        for p in pr_csvs:
            curve = evaluate.pr_from_csv(p)
            ax.plot(curve.recall, curve.precision, label=Path(p).stem)
        ax.set_xlabel("recall")
        ax.set_ylabel("precision")
        ax.set_xlim(0, 1.02)
        ax.set_ylim(0, 1.02)
        ax.legend(fontsize=8)
        dst = Path(out, "pr_curves.svg")
        fig.savefig(dst)
        plt.close(fig)
        written.append(dst)
    if sweep_csvs:
        fig, ax = plt.subplots(figsize=(5, 4))
        for p in sweep_csvs:
            rows = evaluate.sweep_from_csv(p)
            ax.plot([r[0] for r in rows], [r[1] for r in rows], marker="o", label=Path(p).stem)
        ax.set_xlabel("IoU threshold")
        ax.set_ylabel("max F1")
        ax.set_ylim(0, 1.02)
        ax.legend(fontsize=8)
        dst = Path(out, "f1_vs_iou.svg")
        fig.savefig(dst)
        plt.close(fig)
        written.append(dst)
    write_run_manifest(out, "report", {}, list(pr_csvs) + list(sweep_csvs))
    return written
