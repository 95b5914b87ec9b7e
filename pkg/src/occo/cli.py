"""Command-line interface: ``occo <subcommand> [flags]``.

Every subcommand takes ``--config FILE`` (JSON object keyed by flag name
with dashes replaced by underscores); explicit flags override it.
Exit codes: 0 ok, 2 input error, 3 numeric failure, 4 artifact mismatch.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .cloud import (PointCloud, TriMesh, apply_transforms, load_geometry, normalize_unit_sphere,
                    parse_part_labels, sample_mesh, write_off, write_ply)
from .dataset import GenConfig, derive_rng, generate_dataset, load_shapes_dir, read_dataset, write_dataset
from .errors import ArtifactMismatch, DimsMismatch, InputError, NonFiniteLoss, NumericError, OccoError
from .losses import chamfer
from .model import (KIND_ENCODER, KIND_MODEL, ModelDims, dump_checkpoint, forward, init_params,
                    read_checkpoint)
from .occlusion import CameraIntrinsics
from .synthetic import CLASSES, make_shapes, sample_with_parts
from .probes import (ROBUSTNESS_ROWS, count_detected_concepts, dissect, embed,
                     landscape_slice, linear_probe, miou_csv, robustness_probe)
from .train import TrainConfig, pretrain, resume

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_ARTIFACT = 0, 2, 3, 4

DEFAULTS = {
    "gen": dict(views=10, points=256, coarse=64, fine=1024, f=1000.0, gamma=0.0, w=1600.0,
                h=1200.0, standoff=3.0, eps_depth=1e-4, frame="world", seed=0),
    "pretrain": dict(epochs=50, batch=32, lr=1e-4, lr_decay=0.7, lr_every=10, max_steps=None,
                     dims=None, seed=0, resume=None, timing=False),
    "complete": dict(truth=None),
    "probe": dict(k=None, seed=0, n_seeds=10, out=None),
    "dissect": dict(fraction=0.2, threshold=0.5, out=None),
    "landscape": dict(grid=11, seed=0, step=None, out=None),
    "synth": dict(per_class=10, spread=0.15, points=2048, seed=0),
}
REQUIRED = {
    "gen": ("input", "out"),
    "pretrain": ("data", "out"),
    "complete": ("ckpt", "in_path", "out"),
    "probe": ("ckpt", "data", "labels"),
    "dissect": ("ckpt", "data", "parts"),
    "landscape": ("ckpt", "data"),
    "synth": ("out",),
}


def _threads_default() -> int:
    try:
        return max(1, int(os.environ.get("OCCO_THREADS", "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="occo", description="Occlusion-completion pre-training toolkit.",
                                allow_abbrev=False)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file of defaults for this subcommand (flags win)")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $OCCO_THREADS or 1)")

    g = sub.add_parser("gen", allow_abbrev=False, help="build an occluded completion dataset from OFF/PLY files")
    g.add_argument("--input", help="directory of .off/.ply shapes")
    g.add_argument("--out", help="output dataset path; the manifest goes to OUT.json")
    g.add_argument("--views", type=int, help="camera views per object (default 10)")
    g.add_argument("--points", type=int, help="points sampled before occlusion (default 256)")
    g.add_argument("--coarse", type=int, help="coarse ground-truth points (default 64)")
    g.add_argument("--fine", type=int, help="fine ground-truth points (default 1024)")
    g.add_argument("--f", type=float, help="focal length in pixels (default 1000)")
    g.add_argument("--gamma", type=float, help="skew (default 0)")
    g.add_argument("--w", type=float, help="image width (default 1600)")
    g.add_argument("--h", type=float, help="image height (default 1200)")
    g.add_argument("--standoff", type=float, help="object distance along the optical axis (default 3)")
    g.add_argument("--eps-depth", type=float, help="depth tolerance for occlusion (default 1e-4)")
    g.add_argument("--frame", choices=("world", "camera"),
                   help="coordinate frame of the stored samples (default world)")
    g.add_argument("--seed", type=int, help="master seed (default 0)")
    common(g)

    t = sub.add_parser("pretrain", allow_abbrev=False, help="pre-train the completion model")
    t.add_argument("--data", help="OCCO dataset file")
    t.add_argument("--out", help="output directory for checkpoints and the log")
    t.add_argument("--epochs", type=int, help="epochs (default 50)")
    t.add_argument("--batch", type=int, help="batch size (default 32)")
    t.add_argument("--lr", type=float, help="initial learning rate (default 1e-4)")
    t.add_argument("--lr-decay", type=float, help="learning-rate decay factor (default 0.7)")
    t.add_argument("--lr-every", type=int, help="epochs between decays (default 10)")
    t.add_argument("--max-steps", type=int, help="stop after this many global steps")
    t.add_argument("--dims", help="model dims as a JSON file or inline JSON object")
    t.add_argument("--seed", type=int, help="training seed (default 0)")
    t.add_argument("--resume", help="training-state checkpoint to continue from")
    t.add_argument("--timing", action="store_true", default=None,
                   help="fill the ms column of the log (breaks byte-identical reruns)")
    common(t)

    c = sub.add_parser("complete", allow_abbrev=False, help="complete a partial cloud with a trained model")
    c.add_argument("--ckpt", help="model or training checkpoint")
    c.add_argument("--in", dest="in_path", help="input .ply/.off cloud")
    c.add_argument("--out", help="output prefix; writes PREFIX_coarse.ply and PREFIX_fine.ply")
    c.add_argument("--truth", help="ground-truth cloud; prints the fine Chamfer distance")
    common(c)

    pr = sub.add_parser("probe", allow_abbrev=False, help="AMI robustness table and linear probe, pretrained vs random init")
    pr.add_argument("--ckpt", help="checkpoint holding the encoder")
    pr.add_argument("--data", help="directory of .off/.ply shapes")
    pr.add_argument("--labels", help="class labels: one integer per shape, or 'name label' lines")
    pr.add_argument("--k", type=int, help="k-means clusters (default: number of classes)")
    pr.add_argument("--n-seeds", type=int, help="seeds per table row (default 10)")
    pr.add_argument("--seed", type=int, help="seed (default 0)")
    pr.add_argument("--out", help="CSV output path (default stdout)")
    common(pr)

    d = sub.add_parser("dissect", allow_abbrev=False, help="per-channel concept detection (mIoU matrix)")
    d.add_argument("--ckpt", help="checkpoint holding the encoder")
    d.add_argument("--data", help="directory of .ply point clouds")
    d.add_argument("--parts", help="directory of per-point part label files named like the clouds")
    d.add_argument("--fraction", type=float, help="top-activation fraction (default 0.2)")
    d.add_argument("--threshold", type=float, help="detection threshold on mIoU (default 0.5)")
    d.add_argument("--out", help="CSV output path (default stdout)")
    common(d)

    ls = sub.add_parser("landscape", allow_abbrev=False, help="filter-normalized 2D loss slice around a checkpoint")
    ls.add_argument("--ckpt", help="model or training checkpoint")
    ls.add_argument("--data", help="OCCO dataset file")
    ls.add_argument("--grid", type=int, help="odd grid side (default 11)")
    ls.add_argument("--seed", type=int, help="direction seed (default 0)")
    ls.add_argument("--step", type=int, help="global step selecting alpha (default: checkpoint's step)")
    ls.add_argument("--out", help="CSV output path (default stdout)")
    common(ls)

    sy = sub.add_parser("synth", allow_abbrev=False, help="write the synthetic sphere/box/cylinder benchmark")
    sy.add_argument("--out", help="output directory")
    sy.add_argument("--per-class", type=int, help="shapes per class (default 10)")
    sy.add_argument("--spread", type=float, help="extent variation (default 0.15)")
    sy.add_argument("--points", type=int, help="points per PLY cloud (default 2048)")
    sy.add_argument("--seed", type=int, help="seed (default 0)")
    common(sy)
    return p


def resolve(args: argparse.Namespace) -> dict:
    """Defaults, then the JSON config, then explicit flags."""
    cmd = args.command
    opts = dict(DEFAULTS[cmd])
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    known = set(opts) | set(flags)
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise InputError("config must be a JSON object")
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise InputError(f"unknown config keys for '{cmd}': {', '.join(unknown)}")
        opts.update(cfg)
    opts.update({k: v for k, v in flags.items() if v is not None})
    if opts.get("threads") is None:
        opts["threads"] = _threads_default()
    missing = [k for k in REQUIRED[cmd] if opts.get(k) is None]
    if missing:
        raise InputError(f"missing required option(s): {', '.join('--' + m.replace('_', '-') for m in missing)}")
    return opts


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_dims(spec) -> ModelDims:
    if spec is None:
        return ModelDims()
    if isinstance(spec, dict):
        return ModelDims.from_dict(spec)
    text = spec.strip()
    if not text.startswith("{"):
        try:
            text = Path(text).read_text()
        except OSError as exc:
            raise InputError(f"cannot read dims file {spec}: {exc}") from exc
    try:
        return ModelDims.from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise InputError(f"dims is not valid JSON: {exc}") from exc


def _cloud_points(path) -> np.ndarray:
    geom = load_geometry(path)
    return geom.vertices if isinstance(geom, TriMesh) else geom.points


def _full_model(path):
    ck = read_checkpoint(path)
    if ck.kind == KIND_ENCODER:
        raise DimsMismatch("this checkpoint holds only an encoder; a full model is needed")
    return ck


def _probe_clouds(shapes, n: int, seed: int) -> list[np.ndarray]:
    out = []
    for i, s in enumerate(shapes):
        rng = derive_rng(seed, 5, i)
        if isinstance(s, TriMesh):
            pts = sample_mesh(s, n, rng).points
        else:
            pts = s.points[rng.choice(len(s.points), size=n, replace=n > len(s.points))]
        out.append(normalize_unit_sphere(pts).points)
    return out


def _read_labels(path, names: list[str]) -> np.ndarray:
    try:
        lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    except OSError as exc:
        raise InputError(f"cannot read labels {path}: {exc}") from exc
    try:
        if all(len(ln) == 2 for ln in lines):
            table = {ln[0]: int(ln[1]) for ln in lines}
            missing = [n for n in names if n not in table]
            if missing:
                raise InputError(f"no label for {missing[0]}")
            return np.array([table[n] for n in names])
        flat = [int(tok) for ln in lines for tok in ln]
    except ValueError as exc:
        raise InputError(f"labels must be integers: {exc}") from exc
    if len(flat) != len(names):
        raise InputError(f"{len(flat)} labels for {len(names)} shapes")
    return np.array(flat)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_gen(o: dict) -> int:
    shapes, names = load_shapes_dir(o["input"])
    if not shapes:
        raise InputError(f"no readable .off/.ply files in {o['input']}")
    cfg = GenConfig(views=o["views"], n_input=o["points"], n_coarse=o["coarse"], n_fine=o["fine"],
                    seed=o["seed"], standoff=o["standoff"], eps_depth=o["eps_depth"],
                    intrinsics=CameraIntrinsics(o["f"], o["gamma"], o["w"], o["h"]), frame=o["frame"])
    samples, manifest = generate_dataset(shapes, cfg, threads=o["threads"], names=names)
    write_dataset(samples, manifest, o["out"])
    print(f"gen: {manifest['n_objects']} objects x {cfg.views} views = {len(samples)} samples, "
          f"{len(manifest['skipped'])} skipped, mean visible fraction "
          f"{manifest['mean_visible_fraction']:.4f} -> {o['out']}")
    return EXIT_OK


def cmd_pretrain(o: dict) -> int:
    data = read_dataset(o["data"])
    out = Path(o["out"])
    out.mkdir(parents=True, exist_ok=True)
    cfg = TrainConfig(epochs=o["epochs"], batch_size=o["batch"], lr0=o["lr"], lr_decay=o["lr_decay"],
                      lr_every=o["lr_every"], seed=o["seed"], max_steps=o["max_steps"])
    if o["resume"]:
        params, tlog, state = resume(o["resume"], data, cfg)
    else:
        params, tlog, state = pretrain(data, _load_dims(o["dims"]), cfg)
    (out / "encoder.ocwt").write_bytes(dump_checkpoint(params, KIND_ENCODER))
    (out / "model.ocwt").write_bytes(dump_checkpoint(params, KIND_MODEL))
    state.save(out / "state.ocwt")
    tlog.write(out / "log.csv", timing=bool(o["timing"]))
    if len(tlog):
        last = tlog.records[-1]
        print(f"pretrain: {len(tlog)} steps, final step {last.step}: "
              f"cd_coarse {last.cd_coarse:.6f} cd_fine {last.cd_fine:.6f} -> {out}")
    else:
        print(f"pretrain: nothing to do (already at step {state.step}) -> {out}")
    return EXIT_OK


def cmd_complete(o: dict) -> int:
    ck = _full_model(o["ckpt"])
    pts = _cloud_points(o["in_path"])
    coarse, fine, _ = forward(pts, ck.params)
    prefix = o["out"]
    Path(f"{prefix}_coarse.ply").write_bytes(write_ply(coarse))
    Path(f"{prefix}_fine.ply").write_bytes(write_ply(fine))
    msg = f"complete: {len(pts)} points -> {len(coarse)} coarse, {len(fine)} fine"
    if o["truth"]:
        cd = chamfer(fine, _cloud_points(o["truth"]), with_grad=False).value
        msg += f"; chamfer(fine, truth) = {cd!r}"
    print(msg)
    return EXIT_OK


def cmd_probe(o: dict) -> int:
    ck = read_checkpoint(o["ckpt"])
    shapes, names = load_shapes_dir(o["data"])
    if not shapes:
        raise InputError(f"no readable .off/.ply files in {o['data']}")
    y = _read_labels(o["labels"], names)
    clouds = _probe_clouds(shapes, 256, o["seed"])
    dims = ck.params.dims
    pre = ck.params.encoder()
    rand = init_params(dims, derive_rng(o["seed"], 0)).encoder()
    # stratified two-thirds / one-third split for the linear probe
    rng = derive_rng(o["seed"], 13)
    test = np.zeros(len(y), dtype=bool)
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        test[idx[: len(idx) // 3]] = True
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["init", "transform_row", "ami_mean", "ami_stderr", "probe_acc"])
    for init_name, params in (("occo", pre), ("random", rand)):
        rows = robustness_probe(params, clouds, y, o["seed"], o["n_seeds"], threads=o["threads"],
                                k=o["k"])
        for (row_name, specs), row in zip(ROBUSTNESS_ROWS, rows):
            trng = np.random.default_rng(np.random.SeedSequence([int(o["seed"]), 7, 0]))
            Z = embed([apply_transforms(c, specs, trng) for c in clouds], params, o["threads"])
            acc = linear_probe(Z[~test], y[~test], Z[test], y[test]) if test.any() and (~test).any() else float("nan")
            w.writerow([init_name, row_name, repr(row.mean), repr(row.stderr), repr(acc)])
    _emit(buf.getvalue(), o["out"])
    return EXIT_OK


def cmd_dissect(o: dict) -> int:
    ck = read_checkpoint(o["ckpt"])
    data, parts_dir = Path(o["data"]), Path(o["parts"])
    if not data.is_dir() or not parts_dir.is_dir():
        raise InputError("--data and --parts must be directories")
    clouds, parts = [], []
    for ply in sorted(data.glob("*.ply")):
        cloud = _cloud_points(ply)
        cand = [parts_dir / (ply.stem + ext) for ext in (".txt", ".seg", ".labels")]
        lab = next((c for c in cand if c.exists()), None)
        if lab is None:
            raise InputError(f"no part label file for {ply.name}")
        parts.append(parse_part_labels(lab.read_bytes(), len(cloud)))
        clouds.append(normalize_unit_sphere(cloud).points)
    if not clouds:
        raise InputError(f"no .ply clouds in {data}")
    mats = dissect(clouds, parts, ck.params.encoder(), o["fraction"])
    _emit(miou_csv(mats), o["out"])
    counts = [count_detected_concepts(m, o["threshold"]) for m in mats]
    summary = ", ".join(f"feat{i + 1}: {c.total} pairs / {c.unique} concepts" for i, c in enumerate(counts))
    print(f"dissect: {len(clouds)} objects; detected (mIoU > {o['threshold']}) {summary}", file=sys.stderr)
    return EXIT_OK


def cmd_landscape(o: dict) -> int:
    ck = _full_model(o["ckpt"])
    data = read_dataset(o["data"])
    step = o["step"] if o["step"] is not None else ck.adam_step
    sl = landscape_slice(ck.params, data, o["grid"], o["seed"], step=step, threads=o["threads"])
    _emit(sl.to_csv(), o["out"])
    print(f"landscape: {o['grid']}x{o['grid']} grid, f(0,0) = {sl.center()!r}", file=sys.stderr)
    return EXIT_OK


def cmd_synth(o: dict) -> int:
    out = Path(o["out"])
    (out / "meshes").mkdir(parents=True, exist_ok=True)
    (out / "clouds").mkdir(exist_ok=True)
    (out / "parts").mkdir(exist_ok=True)
    rng = derive_rng(o["seed"], 3)
    shapes = make_shapes(o["per_class"], rng, o["spread"])
    labels = []
    for i, s in enumerate(shapes):
        name = f"{i:04d}_{CLASSES[s.label]}"
        (out / "meshes" / f"{name}.off").write_bytes(write_off(s.mesh))
        pts, part = sample_with_parts(s, o["points"], derive_rng(o["seed"], 4, i))
        (out / "clouds" / f"{name}.ply").write_bytes(write_ply(PointCloud(pts)))
        (out / "parts" / f"{name}.txt").write_text("\n".join(str(int(p)) for p in part) + "\n")
        labels.append(f"{name}.off {s.label}")
    (out / "labels.txt").write_text("\n".join(labels) + "\n")
    print(f"synth: {len(shapes)} shapes ({', '.join(CLASSES)}) -> {out}")
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "pretrain": cmd_pretrain, "complete": cmd_complete, "probe": cmd_probe,
            "dissect": cmd_dissect, "landscape": cmd_landscape, "synth": cmd_synth}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](resolve(args))
    except NonFiniteLoss as exc:
        print(f"error: {exc} (step {exc.step})", file=sys.stderr)
        return EXIT_NUMERIC
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ArtifactMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except OccoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
