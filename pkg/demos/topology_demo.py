"""Compress a synthetic TSDF and check that the decoded surface keeps its topology.

Trains a small model for a few hundred steps, compresses a random scene,
decodes it on a fresh copy of the model (as a receiver would) and compares
the marching-cubes output of both volumes.

    python3 demos/topology_demo.py [--steps 200] [--seed 0]
"""

import argparse
import io

import numpy as np

from divc.container import compress_volume, decompress_volume
from divc.experiments import lambda_schedule, synthetic_corpus
from divc.nnet.modelfile import model_from_bytes, model_to_bytes
from divc.nnet.training import TrainConfig, blocks_from_volumes, train
from divc.surface.marching import error_bound_check, mesh_from_volume, topology_equal
from divc.surface.metrics import surface_metrics
from divc.volume import random_scene, synth_volume


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"training on synthetic blocks for {args.steps} steps ...")
    blocks = blocks_from_volumes(synthetic_corpus(8, seed=args.seed + 1), 8)
    model = train(blocks, TrainConfig(lam=lambda_schedule()[6], steps=args.steps, seed=args.seed)).model

    rng = np.random.default_rng(args.seed)
    dims = (48, 48, 48)
    volume = synth_volume(random_scene(rng, dims, 5.0), dims)
    c = compress_volume(volume, model)
    data = c.to_bytes()
    rep = c.rate_report()
    raw = volume.values.nbytes
    print(f"{rep['blocks']} occupied blocks, {len(data)} bytes ({raw / len(data):.0f}x smaller than float32)")
    for key in ("header_bits", "index_bits", "latent_bits", "sign_bits"):
        print(f"  {key:12s} {rep[key]:7d}")

    # the receiver only has the bytes and its own copy of the model
    receiver_model = model_from_bytes(model_to_bytes(model))
    decoded, signs = decompress_volume(io.BytesIO(data).read(), receiver_model)

    m0, m1 = mesh_from_volume(volume), mesh_from_volume(decoded, signs)
    print(f"signs identical:         {np.array_equal(signs, volume.values >= 0)}")
    print(f"cell configs identical:  {topology_equal(m0, m1)}")
    print(f"max vertex displacement: {error_bound_check(m0, m1):.2f} mm (voxel {volume.voxel_size} mm)")
    m = surface_metrics(m0, m1)
    print(f"chamfer {m['chamfer_mm']:.3f} mm, hausdorff {m['hausdorff_mm']:.3f} mm")


if __name__ == "__main__":
    main()
