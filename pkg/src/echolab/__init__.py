"""echolab: matrix-free filter echoes, their visualisation, and compression.

Filters (diffusion, bilateral, NL-means, inpainting, osmosis, optic flow)
are exposed as state-transition operators u = S f with forward and adjoint
application. Source/drain echoes are columns/rows of S; a randomized
truncated SVD compresses the full echo set with quantified error.
"""

from .grid import Image, Mask, FlowField, read_pgm, write_pgm, rescale_for_display
from .linsolve import LinearOperator, cg_solve, bicgstab_solve, materialize
from .diffusion import Diffusivity, DiffusionConfig, FrozenEvolution, evolve
from .kernels import BilateralConfig, NLMeansConfig, bilateral_S, nlmeans_S
from .inpainting import InpaintConfig, inpaint, inpaint_S, random_mask
from .osmosis import DriftField, OsmosisConfig, drift_from_guidance, osmosis_evolve, osmosis_S
from .opticflow import FlowConfig, frame_derivatives, normal_flow, assemble_flow_system, solve_flow, flow_S
from .echo import EchoRequest, EchoImage, source_echo, drain_echo
from .compression import (
    CompressionConfig,
    CompressedEchoes,
    compress_echoes,
    reconstruct_source,
    reconstruct_drain,
    frobenius_error_estimate,
    serialize,
    deserialize,
)

__version__ = "0.1.0"
