"""``divc`` command line."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

log = logging.getLogger("divc")


def _dims(text: str) -> tuple[int, int, int]:
    parts = [int(p) for p in text.split(",")]
    if len(parts) == 1:
        parts *= 3
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected W,H,D, got {text!r}")
    return tuple(parts)


def load_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment, keys use dashes or underscores."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value.strip('"').strip("'")
    return out


def _apply_config(parser: argparse.ArgumentParser, cfg: dict) -> None:
    known = {a.dest: a for a in parser._actions}
    defaults = {}
    for key, raw in cfg.items():
        action = known.get(key)
        if action is None or key in ("help", "config"):
            raise SystemExit(f"divc: unknown config key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        elif action.nargs in ("+", "*"):
            conv = action.type or str
            defaults[key] = [conv(v) for v in raw.split()]
        else:
            defaults[key] = (action.type or str)(raw)
        # config values satisfy required options
        action.required = False
    parser.set_defaults(**defaults)


def _seed(args) -> int:
    env = os.environ.get("DIVC_SEED")
    return int(env) if env not in (None, "") else args.seed


def _arch(args):
    from .nnet.network import Architecture

    return Architecture(block_size=args.block_size, n_layers=args.layers)


# ---------------------------------------------------------------------------
# subcommands


def cmd_make_volume(args) -> int:
    from .volume import named_scene, random_scene, synth_volume, write_volume

    if args.scene == "random":
        scene = random_scene(np.random.default_rng(_seed(args)), args.dims, args.voxel)
    else:
        scene = named_scene(args.scene, args.dims, args.voxel)
    write_volume(args.output, synth_volume(scene, args.dims, args.voxel, args.tau))
    return 0


def cmd_train(args) -> int:
    from .experiments import synthetic_corpus
    from .nnet.modelfile import save_model
    from .nnet.training import TrainConfig, blocks_from_volumes, train
    from .volume import read_volume

    seed = _seed(args)
    volumes = [read_volume(p) for p in args.volumes]
    if args.synthetic:
        volumes += synthetic_corpus(args.synthetic, seed, args.synthetic_dims)
    if not volumes:
        raise SystemExit("divc train: no training volumes (give files or --synthetic N)")
    cfg = TrainConfig(lam=args.lam, steps=args.steps, seed=seed, batch_size=args.batch_size, lr=args.lr)
    res = train(blocks_from_volumes(volumes, args.block_size), cfg, _arch(args))
    h = save_model(args.output, res.model)
    total, d, rz, rs = res.history[-1]
    log.info("final loss %.4f (D %.4f, latent %.2f bits, signs %.2f bits); model %016x", total, d, rz, rs, h)
    return 0


def cmd_compress(args) -> int:
    from .container import compress_volume, write_container
    from .nnet.modelfile import load_model
    from .volume import read_volume

    c = compress_volume(read_volume(args.input), load_model(args.model))
    write_container(args.output, c)
    if args.stats:
        Path(args.stats).write_text(json.dumps(c.rate_report(), indent=2, sort_keys=True) + "\n")
    return 0


def cmd_decompress(args) -> int:
    from .container import decompress_volume, read_container
    from .nnet.modelfile import load_model
    from .volume import write_volume

    c = read_container(args.input)
    v, _ = decompress_volume(c, load_model(args.model))
    write_volume(args.output, v)
    if args.stats:
        Path(args.stats).write_text(json.dumps(c.rate_report(), indent=2, sort_keys=True) + "\n")
    return 0


def _load_surface_input(path, model_path):
    """A volume file, or a container decoded with ``model_path``; returns (volume, signs)."""
    from .volume import read_volume

    data = Path(path).read_bytes()
    if data[:4] == b"DIVC":
        if model_path is None:
            raise SystemExit(f"divc: {path} is a container; pass -m MODEL")
        from .container import decompress_volume
        from .nnet.modelfile import load_model

        return decompress_volume(data, load_model(model_path))
    v = read_volume(path)
    return v, v.positive()


def cmd_mesh(args) -> int:
    from .surface.marching import mesh_from_volume, write_obj

    v, signs = _load_surface_input(args.input, args.model)
    mesh = mesh_from_volume(v, signs)
    write_obj(args.output, mesh)
    log.info("%d vertices, %d triangles", mesh.n_vertices, mesh.n_triangles)
    return 0


def cmd_atlas(args) -> int:
    from .surface.marching import write_obj
    from .texture.atlas import atlas_for_volume
    from .texture.raster import color_field, rasterize_atlas, write_image

    for i, path in enumerate(args.inputs):
        v, signs = _load_surface_input(path, args.model)
        mesh, atlas = atlas_for_volume(v, args.block_size, args.res, signs)
        lo = np.asarray(v.origin)
        field = color_field(args.color, (lo, lo + np.asarray(v.dims) * v.voxel_size))
        image, _ = rasterize_atlas(mesh, atlas, field)
        write_image(_frame_name(args.output, i), image)
        if args.obj:
            idx = np.arange(3 * mesh.n_triangles).reshape(-1, 3)
            write_obj(_frame_name(args.obj, i), mesh, atlas.normalized_uvs(), idx)
    return 0


def _frame_name(pattern: str, i: int) -> str:
    return pattern % i if "%" in pattern else pattern


def cmd_eval(args) -> int:
    from .experiments import write_metrics_csv
    from .surface.marching import mesh_from_volume, topology_equal
    from .surface.metrics import surface_metrics

    a, sa = _load_surface_input(args.orig, args.model)
    b, sb = _load_surface_input(args.decoded, args.model)
    ma, mb = mesh_from_volume(a, sa), mesh_from_volume(b, sb)
    row = {"topology_equal": topology_equal(ma, mb), **surface_metrics(ma, mb, args.samples, _seed(args))}
    if args.output:
        write_metrics_csv(args.output, row)
    else:
        print(json.dumps(row, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    from .experiments import SweepConfig, lambda_schedule, pareto_violations, rd_svg, run_sweep, write_rd_csv

    cfg = SweepConfig(steps=args.steps, seed=_seed(args), train_volumes=args.train_volumes,
                      test_volumes=args.test_volumes, dims=args.dims, samples=args.samples,
                      batch_size=args.batch_size, lr=args.lr, block_size=args.block_size,
                      layers=args.layers, jobs=args.jobs)
    models = None
    if args.models:
        models = {i: p for i in range(len(lambda_schedule()))
                  if (p := Path(args.models) / f"model_{i:02d}.divm").exists()}
    points = run_sweep(cfg, models=models)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    write_rd_csv(out / "rd_curve.csv", points)
    (out / "rd_curve.svg").write_text(rd_svg(points))
    for i, j in pareto_violations(points):
        log.warning("lambda %.3g is dominated by lambda %.3g", points[i].lam, points[j].lam)
    return 0


def cmd_pipeline(args) -> int:
    from .experiments import PipelineConfig, run_pipeline

    names = {f.name for f in fields(PipelineConfig)}
    cfg = PipelineConfig(**{k: v for k, v in vars(args).items() if k in names and v is not None})
    cfg.seed = _seed(args)
    summary = run_pipeline(cfg, args.output)
    print(json.dumps(summary, sort_keys=True))
    if not summary["ok"]:
        log.error("topology or error-bound check failed")
        return 1
    return 0


# ---------------------------------------------------------------------------
# parser


def _net_options(p):
    p.add_argument("--block-size", type=int, default=8, help="block edge k (power of two)")
    p.add_argument("--layers", type=int, default=3, help="stride-2 layers per side")


def _train_options(p, steps):
    p.add_argument("--steps", type=int, default=steps)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-2)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="divc", description="Learned TSDF compression with lossless topology.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, func, help):
        p = sub.add_parser(name, help=help, description=help)
        p.add_argument("--config", help="flat key = value file of option defaults")
        p.add_argument("--seed", type=int, default=0, help="random seed (DIVC_SEED overrides)")
        p.set_defaults(func=func)
        return p

    p = add("make-volume", cmd_make_volume, "synthesize a TSDF volume")
    p.add_argument("--scene", default="sphere", choices=["sphere", "box", "torus", "blend", "random"])
    p.add_argument("--dims", type=_dims, default=(64, 64, 64))
    p.add_argument("--voxel", type=float, default=5.0, help="voxel size in mm")
    p.add_argument("--tau", type=float, default=10.0, help="truncation distance in mm")
    p.add_argument("-o", "--output", required=True)

    p = add("train", cmd_train, "train a model on volumes")
    p.add_argument("volumes", nargs="*", default=[])
    p.add_argument("--synthetic", type=int, default=0, help="add N random synthetic volumes")
    p.add_argument("--synthetic-dims", type=_dims, default=(32, 32, 32))
    p.add_argument("--lam", type=float, default=1e-2, help="rate weight lambda")
    _train_options(p, 2000)
    _net_options(p)
    p.add_argument("-o", "--output", required=True)

    p = add("compress", cmd_compress, "compress a volume into a container")
    p.add_argument("input")
    p.add_argument("-m", "--model", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--stats", help="write the rate report as JSON")

    p = add("decompress", cmd_decompress, "decode a container into a volume")
    p.add_argument("input")
    p.add_argument("-m", "--model", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--stats", help="write the rate report as JSON")

    p = add("mesh", cmd_mesh, "extract an OBJ mesh from a volume or container")
    p.add_argument("input")
    p.add_argument("-m", "--model", help="model, when the input is a container")
    p.add_argument("-o", "--output", required=True)

    p = add("atlas", cmd_atlas, "build and rasterize texture atlases, one frame per input")
    p.add_argument("inputs", nargs="+")
    p.add_argument("-m", "--model", help="model, when inputs are containers")
    p.add_argument("--res", type=int, default=512)
    p.add_argument("--color", default="checker", choices=["checker", "gradient", "constant"])
    p.add_argument("--block-size", type=int, default=8)
    p.add_argument("--obj", help="also write UV-mapped OBJ files (printf pattern)")
    p.add_argument("-o", "--output", required=True, help="image path or printf pattern, .png or .ppm")

    p = add("eval", cmd_eval, "Hausdorff and Chamfer distances between two surfaces")
    p.add_argument("--orig", required=True)
    p.add_argument("--decoded", required=True)
    p.add_argument("-m", "--model", help="model, when an input is a container")
    p.add_argument("--samples", type=int, default=4, help="random samples per triangle")
    p.add_argument("-o", "--output", help="CSV file (default: JSON on stdout)")

    p = add("sweep", cmd_sweep, "rate-distortion sweep over the lambda schedule")
    _train_options(p, 2000)
    _net_options(p)
    p.add_argument("--train-volumes", type=int, default=24)
    p.add_argument("--test-volumes", type=int, default=4)
    p.add_argument("--dims", type=int, default=32, help="edge of the synthetic cubes")
    p.add_argument("--samples", type=int, default=4)
    p.add_argument("--models", help="directory of model_NN.divm files instead of training")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("-o", "--output", default="sweep")

    p = add("pipeline", cmd_pipeline, "synthesize, train, compress, decode, mesh, texture and evaluate")
    p.set_defaults(seed=42)
    p.add_argument("--steps", type=int)
    p.add_argument("--lam", type=float)
    p.add_argument("--scene-dims", type=int)
    p.add_argument("--train-volumes", type=int)
    p.add_argument("--atlas-res", type=int)
    p.add_argument("--color", choices=["checker", "gradient", "constant"])
    p.add_argument("--block-size", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("-o", "--output", default="pipeline_out")
    return parser


def _config_path(argv):
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if a.startswith("--config="):
            return a.split("=", 1)[1]
    return None


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    # config values become option defaults, so they must be in place before
    # parsing (they may satisfy required options)
    config = _config_path(argv)
    if config is not None:
        choices = parser._subparsers._group_actions[0].choices
        command = next((a for a in argv if a in choices), None)
        if command is not None:
            _apply_config(choices[command], load_config(config))
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
