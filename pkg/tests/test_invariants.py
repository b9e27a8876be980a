"""Cross-module invariants on 16x16 operators."""

import numpy as np
import pytest

from echolab.diffusion import DiffusionConfig, Diffusivity, evolve
from echolab.grid import Image
from echolab.inpainting import InpaintConfig, inpaint, random_mask
from echolab.kernels import BilateralConfig, NLMeansConfig, bilateral_S, nlmeans_S, nlmeans_apply
from echolab.opticflow import FlowConfig, assemble_flow_system, flow_S, frame_derivatives
from echolab.osmosis import OsmosisConfig, drift_from_guidance, osmosis_S


def random_image(nx, ny, seed):
    rng = np.random.default_rng(seed)
    return Image(nx, ny, rng.uniform(0, 255, nx * ny))


def operators_16x16():
    img = random_image(16, 16, 201)
    ops = {}
    for name, model, diffusivity in [
        ("hd", "homogeneous", None),
        ("nld", "isotropic_nonlinear", Diffusivity("rational_perona_malik", 8.0)),
        ("eed", "eed", Diffusivity("charbonnier", 5.0)),
    ]:
        cfg = DiffusionConfig(model=model, diffusivity=diffusivity, sigma=0.5, tau=4.0, steps=2)
        _, frozen = evolve(img, cfg, tol=1e-12)
        ops[name] = frozen.as_operator()

    ops["bilateral"] = bilateral_S(img, BilateralConfig(sigma_t=35.0, sigma_s=4.0))
    ops["nlmeans"] = nlmeans_S(img, NLMeansConfig(sigma=30.0, patch_radius=2))

    mask = random_mask(16, 16, 8, seed=5)
    _, frozen = inpaint(img, mask, InpaintConfig(operator="homogeneous"), tol=1e-12)
    ops["inpainting"] = frozen.as_operator()

    guidance = Image(16, 16, 20.0 + img.data)
    ops["osmosis"] = osmosis_S(drift_from_guidance(guidance),
                               OsmosisConfig(tau=20.0, steps=3, steady=False), tol=1e-12)

    f2 = random_image(16, 16, 202)
    fx, fy, _ = frame_derivatives(img, f2)
    system = assemble_flow_system(fx, fy, img, FlowConfig(alpha=25.0, epsilon=0.5))
    ops["flow"] = flow_S(system, tol=1e-12)
    return ops


@pytest.mark.parametrize("name", ["hd", "nld", "eed", "bilateral", "nlmeans",
                                  "inpainting", "osmosis", "flow"])
def test_adjoint_consistency_fifty_probes(name):
    op = operators_16x16()[name]
    rng = np.random.default_rng(hash(name) % 2**32)
    xs = rng.standard_normal((op.dim, 50))
    ys = rng.standard_normal((op.dim, 50))
    sx = op.apply(xs)
    sty = op.apply_adjoint(ys)
    lhs = np.einsum("ij,ij->j", sx, ys)
    rhs = np.einsum("ij,ij->j", xs, sty)
    norms = np.linalg.norm(xs, axis=0) * np.linalg.norm(ys, axis=0)
    assert np.max(np.abs(lhs - rhs) / norms) <= 1e-8


def test_operator_linearity_probe():
    ops = operators_16x16()
    rng = np.random.default_rng(7)
    for name, op in ops.items():
        x = rng.standard_normal(op.dim)
        y = rng.standard_normal(op.dim)
        lhs = op.apply(1.7 * x - 0.3 * y)
        rhs = 1.7 * op.apply(x) - 0.3 * op.apply(y)
        scale = np.linalg.norm(rhs) + 1.0
        assert np.linalg.norm(lhs - rhs) <= 1e-10 * scale, name


def test_nlmeans_output_bounds():
    img = random_image(12, 12, 203)
    out = nlmeans_apply(img, NLMeansConfig(sigma=25.0, patch_radius=2))
    assert out.data.min() >= img.data.min() - 1e-12
    assert out.data.max() <= img.data.max() + 1e-12


def test_compression_factor_range():
    # storing 2Nk floats instead of N^2: factor N/(2k) spans [20, 100]
    # for rank fractions between 0.5% and 2.5%
    n = 256 * 256
    for frac, factor in [(0.005, 100.0), (0.025, 20.0)]:
        k = round(frac * n)
        assert n / (2 * k) == pytest.approx(factor, rel=0.01)
