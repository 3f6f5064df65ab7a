"""Learned block codec for truncated signed distance fields.

The pipeline: occupied blocks of a TSDF are encoded to integer latents, the
latents are range coded under a learned factorized prior, the voxel signs are
range coded losslessly under probabilities predicted by the decoder, and the
receiver rebuilds magnitudes from the latents. Because signs are exact, the
marching-cubes topology of the decoded volume matches the original.
"""

__version__ = "0.1.0"
