"""sixview: a desk-scale multi-view diffusion laboratory.

Everything runs on CPU from a from-scratch float32 tensor core: noise
schedule analysis, v/epsilon parameterization, a fixed six-pose camera
rig, 3x2 view tiling, a procedural ray-cast dataset, reference- and
global-embedding conditioning, phased denoiser training, and DDIM-style
sampling in joint (tiled) or independent (per-view) mode.
"""

__version__ = "0.1.0"
