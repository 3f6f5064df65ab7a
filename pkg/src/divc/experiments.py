"""End-to-end runs: synthetic corpora, rate-distortion sweeps and the one-shot pipeline."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .container import compress_volume, decompress_volume
from .nnet.modelfile import save_model
from .nnet.network import Architecture, Model
from .nnet.training import TrainConfig, blocks_from_volumes, train
from .surface.marching import error_bound_check, mesh_from_volume, topology_equal, write_obj
from .surface.metrics import surface_metrics
from .texture.atlas import atlas_for_volume
from .texture.raster import color_field, rasterize_atlas, write_image
from .volume import TsdfVolume, random_scene, synth_volume, write_volume

log = logging.getLogger(__name__)

SWEEP_POINTS = 12
SWEEP_SPAN = 200000.0
RD_COLUMNS = ("lambda", "rate_kb", "chamfer_mm", "hausdorff_mm", "sign_bits", "latent_bits")


def lambda_schedule(n: int = SWEEP_POINTS) -> list[float]:
    """``lambda_i = 10**-(i * log10(200000) / 11)`` for ``i = 0..11``."""
    return [10.0 ** (-i * math.log10(SWEEP_SPAN) / (n - 1)) for i in range(n)]


def synthetic_corpus(n: int, seed: int, dims=(32, 32, 32), voxel_size=5.0, tau=10.0) -> list[TsdfVolume]:
    rng = np.random.default_rng(seed)
    return [synth_volume(random_scene(rng, dims, voxel_size), dims, voxel_size, tau) for _ in range(n)]


def evaluate_model(model: Model, volumes, samples: int = 4, seed: int = 0) -> dict:
    """Mean per-volume rate and surface error of ``model`` over ``volumes``."""
    rows = []
    for v in volumes:
        c = compress_volume(v, model)
        rep = c.rate_report()
        dec, signs = decompress_volume(c.to_bytes(), model)
        m0, m1 = mesh_from_volume(v), mesh_from_volume(dec, signs)
        metrics = surface_metrics(m0, m1, samples, seed)
        rows.append((rep["KB_per_volume"], metrics["chamfer_mm"], metrics["hausdorff_mm"],
                     rep["sign_bits"], rep["latent_bits"]))
    r = np.mean(np.asarray(rows, dtype=np.float64), axis=0)
    return dict(zip(RD_COLUMNS[1:], (float(x) for x in r)))


# ---------------------------------------------------------------------------
# sweep


@dataclass
class SweepConfig:
    steps: int = 2000
    seed: int = 0
    train_volumes: int = 24
    test_volumes: int = 4
    dims: int = 32
    samples: int = 4
    batch_size: int = 16
    lr: float = 1e-2
    block_size: int = 8
    layers: int = 3
    jobs: int = 1


@dataclass
class RdPoint:
    lam: float
    rate_kb: float
    chamfer_mm: float
    hausdorff_mm: float
    sign_bits: float
    latent_bits: float


def _sweep_point(args) -> RdPoint:
    lam, cfg, model_path = args
    dims = (cfg.dims,) * 3
    test = synthetic_corpus(cfg.test_volumes, cfg.seed + 1, dims)
    arch = Architecture(block_size=cfg.block_size, n_layers=cfg.layers)
    if model_path is not None:
        from .nnet.modelfile import load_model

        model = load_model(model_path)
    else:
        blocks = blocks_from_volumes(synthetic_corpus(cfg.train_volumes, cfg.seed, dims), cfg.block_size)
        tc = TrainConfig(lam=lam, steps=cfg.steps, seed=cfg.seed, batch_size=cfg.batch_size, lr=cfg.lr)
        model = train(blocks, tc, arch).model
    res = evaluate_model(model, test, cfg.samples, cfg.seed)
    log.info("lambda %.3g: %.3f KB, chamfer %.3f mm", lam, res["rate_kb"], res["chamfer_mm"])
    return RdPoint(lam, **res)


def run_sweep(cfg: SweepConfig, lambdas=None, models: dict | None = None) -> list[RdPoint]:
    """One point per lambda; ``models`` maps lambda index to a model file.

    With ``models`` given, lambdas without a model are skipped (logged).
    """
    lambdas = lambda_schedule() if lambdas is None else list(lambdas)
    tasks = []
    for i, lam in enumerate(lambdas):
        path = None
        if models is not None:
            path = models.get(i)
            if path is None:
                log.warning("no model for lambda %.3g (index %d); point omitted", lam, i)
                continue
        tasks.append((lam, cfg, path))
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            points = list(pool.map(_sweep_point, tasks))
    else:
        points = [_sweep_point(t) for t in tasks]
    return sorted(points, key=lambda p: -p.lam)


def pareto_violations(points: list[RdPoint], tol: float = 0.05) -> list[tuple[int, int]]:
    """Pairs ``(i, j)``: point ``j`` beats point ``i`` by more than ``tol`` in both rate and chamfer."""
    out = []
    for i, p in enumerate(points):
        for j, q in enumerate(points):
            if i != j and q.rate_kb < (1 - tol) * p.rate_kb and q.chamfer_mm < (1 - tol) * p.chamfer_mm:
                out.append((i, j))
    return out


def write_rd_csv(path, points: list[RdPoint]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(RD_COLUMNS)
        for p in points:
            w.writerow([repr(float(x)) for x in asdict(p).values()])


def read_rd_csv(path) -> list[RdPoint]:
    with open(path) as f:
        return [RdPoint(*(float(r[c]) for c in RD_COLUMNS)) for r in csv.DictReader(f)]


def rd_svg(points: list[RdPoint], width: int = 640, height: int = 300) -> str:
    """Two panels: chamfer and Hausdorff distance against rate (KB/volume)."""
    pad, gap = 48, 24
    pw = (width - 2 * pad - gap) / 2
    ph = height - 2 * pad
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>']
    pts = sorted(points, key=lambda p: p.rate_kb)
    rates = [p.rate_kb for p in pts]
    for k, (key, label) in enumerate((("chamfer_mm", "Chamfer (mm)"), ("hausdorff_mm", "Hausdorff (mm)"))):
        x0 = pad + k * (pw + gap)
        vals = [getattr(p, key) for p in pts]
        rlo, rhi = (min(rates), max(rates)) if rates else (0.0, 1.0)
        vlo, vhi = (0.0, max(vals)) if vals else (0.0, 1.0)
        rhi = rhi if rhi > rlo else rlo + 1.0
        vhi = vhi if vhi > vlo else vlo + 1.0

        def sx(r):
            return x0 + (r - rlo) / (rhi - rlo) * pw

        def sy(v):
            return pad + ph - (v - vlo) / (vhi - vlo) * ph

        out.append(f'<rect x="{x0:.1f}" y="{pad}" width="{pw:.1f}" height="{ph}" fill="none" stroke="#444"/>')
        out.append(f'<text x="{x0 + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">rate (KB/volume)</text>')
        out.append(f'<text x="{x0:.1f}" y="{pad - 8}">{label}</text>')
        out.append(f'<text x="{x0:.1f}" y="{pad + ph + 14}">{rlo:.3g}</text>')
        out.append(f'<text x="{x0 + pw:.1f}" y="{pad + ph + 14}" text-anchor="end">{rhi:.3g}</text>')
        out.append(f'<text x="{x0 - 4:.1f}" y="{pad + 4}" text-anchor="end">{vhi:.3g}</text>')
        if pts:
            line = " ".join(f"{sx(r):.2f},{sy(v):.2f}" for r, v in zip(rates, vals))
            out.append(f'<polyline points="{line}" fill="none" stroke="#1f5fbf" stroke-width="1.5"/>')
            out += [f'<circle cx="{sx(r):.2f}" cy="{sy(v):.2f}" r="2.5" fill="#1f5fbf"/>'
                    for r, v in zip(rates, vals)]
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class PipelineConfig:
    seed: int = 42
    scene_dims: int = 48
    train_volumes: int = 8
    train_dims: int = 32
    steps: int = 400
    lam: float = 10.0 ** (-6 * math.log10(SWEEP_SPAN) / 11)
    batch_size: int = 16
    lr: float = 1e-2
    block_size: int = 8
    layers: int = 3
    atlas_res: int = 512
    color: str = "checker"
    samples: int = 4


def run_pipeline(cfg: PipelineConfig, out_dir) -> dict:
    """make-volume -> train -> compress -> decompress -> mesh -> atlas -> eval.

    Writes every intermediate into ``out_dir`` and returns a summary; the
    ``ok`` entry is true only when topology and the one-voxel bound hold.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    dims = (cfg.scene_dims,) * 3
    volume = synth_volume(random_scene(rng, dims, 5.0), dims)
    write_volume(out / "volume.tsdf", volume)

    corpus = synthetic_corpus(cfg.train_volumes, cfg.seed + 1, (cfg.train_dims,) * 3)
    arch = Architecture(block_size=cfg.block_size, n_layers=cfg.layers)
    tc = TrainConfig(lam=cfg.lam, steps=cfg.steps, seed=cfg.seed, batch_size=cfg.batch_size, lr=cfg.lr)
    model = train(blocks_from_volumes(corpus, cfg.block_size), tc, arch).model
    save_model(out / "model.divm", model)

    container = compress_volume(volume, model)
    data = container.to_bytes()
    (out / "volume.divc").write_bytes(data)
    decoded, signs = decompress_volume(data, model)
    write_volume(out / "decoded.tsdf", decoded)

    m_orig = mesh_from_volume(volume)
    m_dec, atlas = atlas_for_volume(decoded, cfg.block_size, cfg.atlas_res, signs)
    write_obj(out / "original.obj", m_orig)
    write_obj(out / "decoded.obj", m_dec, atlas.normalized_uvs(), np.arange(3 * m_dec.n_triangles).reshape(-1, 3))
    lo = np.asarray(volume.origin)
    field = color_field(cfg.color, (lo, lo + np.asarray(dims) * volume.voxel_size))
    image, _ = rasterize_atlas(m_dec, atlas, field)
    write_image(out / "atlas.png", image)

    topo = topology_equal(m_orig, m_dec)
    disp = error_bound_check(m_orig, m_dec) if topo else float("inf")
    metrics = surface_metrics(m_orig, m_dec, cfg.samples, cfg.seed)
    report = container.rate_report()
    summary = {
        "topology_equal": topo,
        "max_displacement_mm": disp,
        "voxel_size_mm": float(volume.voxel_size),
        "bound_ok": bool(topo and disp <= volume.voxel_size),
        **metrics,
        **{k: report[k] for k in ("index_bits", "latent_bits", "sign_bits", "header_bits", "total")},
        "rate_kb": report["KB_per_volume"],
        "blocks": report["blocks"],
    }
    summary["ok"] = bool(summary["topology_equal"] and summary["bound_ok"])
    write_metrics_csv(out / "metrics.csv", summary)
    (out / "stats.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return summary


def write_metrics_csv(path, row: dict) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(list(row))
        w.writerow([repr(v) if isinstance(v, float) else v for v in row.values()])
