import math

import numpy as np
import pytest

from echolab.grid import Image
from echolab.linsolve import materialize, materialize_adjoint
from echolab.osmosis import (
    DriftField,
    OsmosisConfig,
    assemble_osmosis,
    drift_from_guidance,
    osmosis_S,
    osmosis_evolve,
    steady_state_echo_check,
)


def smooth_guidance(nx, ny, lo=40.0, hi=220.0):
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny))
    blob = np.exp(-(((ii - nx / 2.7) ** 2 + (jj - ny / 2.2) ** 2) / (nx * ny / 16)))
    g = lo + (hi - lo) * blob
    return Image(nx, ny, g.ravel())


def test_constant_guidance_zero_drift():
    d = drift_from_guidance(Image.constant(5, 4, 17.0))
    assert np.all(d.d1 == 0.0) and np.all(d.d2 == 0.0)


def test_exponential_guidance_unit_drift():
    grid = np.exp(np.tile(np.arange(6, dtype=float), (4, 1)))
    d = drift_from_guidance(Image.from_grid(grid))
    assert np.allclose(d.d1, 1.0)
    assert np.allclose(d.d2, 0.0)


def test_two_pixel_log_difference():
    d = drift_from_guidance(Image(2, 1, [1.0, math.e**2]))
    assert d.d1[0] == pytest.approx(2.0)


def test_nonpositive_guidance_rejected():
    with pytest.raises(ValueError):
        drift_from_guidance(Image(2, 1, [0.0, 1.0]))


def test_zero_drift_is_homogeneous_diffusion():
    from echolab.diffusion import assemble_isotropic

    a = assemble_osmosis(DriftField.zero(6, 5)).toarray()
    hom = assemble_isotropic(Image.constant(6, 5)).toarray()
    assert np.max(np.abs(a - hom)) == 0.0


def test_column_sums_zero_and_sign_conditions():
    guidance = smooth_guidance(8, 8)
    a = assemble_osmosis(drift_from_guidance(guidance)).toarray()
    assert np.max(np.abs(a.sum(axis=0))) < 1e-12
    off = a - np.diag(np.diag(a))
    assert np.min(off) >= 0.0


def test_guidance_is_exact_steady_state():
    guidance = smooth_guidance(8, 6)
    a = assemble_osmosis(drift_from_guidance(guidance))
    assert np.max(np.abs(a @ guidance.data)) < 1e-10


def test_zero_drift_long_time_reaches_mean():
    rng = np.random.default_rng(0)
    f = Image(8, 8, rng.uniform(10.0, 200.0, 64))
    out = osmosis_evolve(f, DriftField.zero(8, 8), OsmosisConfig(steady=True))
    assert np.max(np.abs(out.data - f.data.mean())) < 1e-6


def test_sum_preservation_and_positivity():
    rng = np.random.default_rng(1)
    f = Image(10, 10, rng.uniform(5.0, 250.0, 100))
    d = drift_from_guidance(smooth_guidance(10, 10))
    out = osmosis_evolve(f, d, OsmosisConfig(tau=50.0, steps=7, steady=False))
    assert out.data.sum() == pytest.approx(f.data.sum(), rel=1e-8)
    assert np.all(out.data > 0.0)


def test_compatible_case_converges_to_guidance():
    guidance = smooth_guidance(16, 16)
    f = Image.constant(16, 16, guidance.data.mean())
    out = osmosis_evolve(f, drift_from_guidance(guidance), OsmosisConfig(steady=True))
    rel = np.linalg.norm(out.data - guidance.data) / np.linalg.norm(guidance.data)
    assert rel <= 1e-3
    # the discrete process preserves the total grey value, so the steady
    # state carries the factor mean(f)/mean(v) relative to the guidance
    scale = out.data.mean() / guidance.data.mean()
    assert scale == pytest.approx(f.data.mean() / guidance.data.mean(), rel=1e-6)


def test_adjoint_of_ones_is_ones():
    d = drift_from_guidance(smooth_guidance(8, 8))
    op = osmosis_S(d, OsmosisConfig(tau=100.0, steps=5, steady=False))
    ones = np.ones(64)
    assert np.max(np.abs(op.apply_adjoint(ones) - 1.0)) < 1e-8


def test_operator_matches_transpose():
    d = drift_from_guidance(smooth_guidance(6, 6))
    op = osmosis_S(d, OsmosisConfig(tau=10.0, steps=3, steady=False))
    assert np.max(np.abs(materialize(op).T - materialize_adjoint(op))) < 1e-8


def test_steady_state_rank_one():
    d = drift_from_guidance(smooth_guidance(16, 16))
    op = osmosis_S(d, OsmosisConfig(steady=True))
    s = materialize(op)
    sv = np.linalg.svd(s, compute_uv=False)
    assert sv[1] / sv[0] <= 1e-5


def test_steady_echo_report():
    guidance = smooth_guidance(12, 12)
    d = drift_from_guidance(guidance)
    report = steady_state_echo_check(d, OsmosisConfig(steady=True))
    assert report.max_source_deviation <= 1e-6
    assert report.max_drain_variation <= 1e-6
    # common source echo is the unit-sum rescaled guidance
    assert report.source_echo.sum() == pytest.approx(1.0, abs=1e-8)
    v = guidance.data / guidance.data.sum()
    assert np.max(np.abs(report.source_echo - v)) < 1e-6
    # drain constant of pixel j is entry j of the common echo
    assert np.max(np.abs(report.drain_constants - report.source_echo)) < 1e-8


def test_zero_drift_source_echoes_are_uniform():
    report = steady_state_echo_check(DriftField.zero(8, 8), OsmosisConfig(steady=True))
    assert np.max(np.abs(report.source_echo - 1.0 / 64)) < 1e-8


def test_evolve_requires_positive_image():
    with pytest.raises(ValueError):
        osmosis_evolve(Image(2, 1, [1.0, -1.0]), DriftField.zero(2, 1))


def test_config_validation():
    with pytest.raises(ValueError):
        OsmosisConfig(tau=0.0)
    with pytest.raises(ValueError):
        OsmosisConfig(steady=False, steps=0)
