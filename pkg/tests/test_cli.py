import numpy as np
import pytest

from echolab.assets import load_scene64
from echolab.cli import main
from echolab.grid import Image, Mask, read_pgm, write_mask, write_pgm


@pytest.fixture()
def scene(tmp_path):
    path = tmp_path / "scene.pgm"
    write_pgm(load_scene64(), path)
    return path


@pytest.fixture()
def small_image(tmp_path):
    rng = np.random.default_rng(0)
    img = Image(16, 16, rng.integers(0, 256, 256).astype(float))
    path = tmp_path / "small.pgm"
    write_pgm(img, path)
    return path


def test_filter_writes_output(small_image, tmp_path):
    out = tmp_path / "filtered.pgm"
    code = main([
        "filter", "--method", "nld", "--diffusivity", "weickert", "--lambda", "5",
        "--sigma", "0.5", "--time", "40", "--tau", "5",
        "--in", str(small_image), "--out", str(out),
    ])
    assert code == 0
    img = read_pgm(out)
    assert (img.nx, img.ny) == (16, 16)


def test_echo_zero_steps_is_impulse(small_image, tmp_path):
    out = tmp_path / "echo.pgm"
    code = main([
        "echo", "--method", "hd", "--time", "0", "--direction", "source",
        "--x", "3", "--y", "4", "--in", str(small_image), "--out", str(out),
    ])
    assert code == 0
    echo = read_pgm(out)
    expected = np.zeros(256)
    expected[4 * 16 + 3] = 255.0
    assert np.array_equal(echo.data, expected)


def test_echo_marked_ppm(small_image, tmp_path):
    out = tmp_path / "echo.ppm"
    code = main([
        "echo", "--method", "hd", "--tau", "2", "--steps", "2", "--direction", "drain",
        "--x", "8", "--y", "8", "--in", str(small_image), "--out", str(out), "--mark",
    ])
    assert code == 0
    raw = out.read_bytes()
    assert raw.startswith(b"P6")


def test_cumulative_echo_command(small_image, tmp_path):
    out = tmp_path / "cumulative.pgm"
    code = main([
        "cumulative", "--method", "hd", "--tau", "2", "--steps", "1",
        "--pixels", "1,1;14,14", "--in", str(small_image), "--out", str(out),
    ])
    assert code == 0
    assert read_pgm(out).data.max() == 255.0


def test_inpaint_command_with_cumulative(tmp_path, small_image):
    mask = Mask.from_indices(16, 16, [16 * 4 + 4, 16 * 12 + 11, 16 * 7 + 9])
    mask_path = tmp_path / "mask.pgm"
    write_mask(mask, mask_path)
    out = tmp_path / "inpainted.pgm"
    cum = tmp_path / "cumulative.pgm"
    code = main([
        "inpaint", "--operator", "homogeneous", "--in", str(small_image),
        "--mask", str(mask_path), "--out", str(out),
        "--cumulative", "4,4;11,12", "--cumulative-out", str(cum),
    ])
    assert code == 0
    assert out.exists() and cum.exists()


def test_osmosis_command(tmp_path):
    ii, jj = np.meshgrid(np.arange(12, dtype=float), np.arange(12, dtype=float))
    guidance = Image.from_grid(60.0 + 40.0 * np.exp(-((ii - 6) ** 2 + (jj - 6) ** 2) / 18.0))
    f = Image.constant(12, 12, float(guidance.data.mean()))
    gpath, fpath, out = tmp_path / "v.pgm", tmp_path / "f.pgm", tmp_path / "u.pgm"
    write_pgm(guidance, gpath)
    write_pgm(f, fpath)
    code = main([
        "osmosis", "--in", str(fpath), "--guidance", str(gpath), "--out", str(out),
    ])
    assert code == 0
    result = read_pgm(out)
    # steady state reproduces the guidance up to PGM quantisation
    assert np.max(np.abs(result.data - read_pgm(gpath).data)) <= 1.0


def test_flow_command(tmp_path):
    rng = np.random.default_rng(1)
    base = rng.uniform(0, 255, (10, 10))
    f1 = Image.from_grid(base)
    f2 = Image.from_grid(np.roll(base, 1, axis=1))
    p1, p2 = tmp_path / "f1.pgm", tmp_path / "f2.pgm"
    write_pgm(f1, p1)
    write_pgm(f2, p2)
    out = tmp_path / "flow.csv"
    color = tmp_path / "flow.ppm"
    code = main([
        "flow", "--frame1", str(p1), "--frame2", str(p2), "--regularizer", "hs",
        "--alpha", "50", "--out", str(out), "--color", str(color),
    ])
    assert code == 0
    rows = out.read_text().strip().splitlines()
    assert len(rows) == 100
    assert color.read_bytes().startswith(b"P6")


def test_compress_deterministic_bytes(small_image, tmp_path):
    args = [
        "compress", "--method", "nld", "--diffusivity", "pm", "--lambda", "8",
        "--sigma", "0.5", "--tau", "4", "--steps", "2", "--in", str(small_image),
        "--rank-frac", "0.05", "--q", "3", "--oversample", "10",
        "--epsilon", "0.05", "--seed", "7",
    ]
    out1, out2 = tmp_path / "a.echosvd", tmp_path / "b.echosvd"
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_compress_reconstruct_spectrum_report(small_image, tmp_path):
    echoes = tmp_path / "echoes.echosvd"
    code = main([
        "compress", "--method", "hd", "--tau", "4", "--steps", "2",
        "--in", str(small_image), "--rank", "20", "--seed", "3",
        "--out", str(echoes), "--estimate-error",
    ])
    assert code == 0

    recon = tmp_path / "recon.pgm"
    assert main([
        "reconstruct", "--in", str(echoes), "--x", "8", "--y", "8",
        "--direction", "source", "--out", str(recon),
    ]) == 0
    assert read_pgm(recon).n == 256

    spectrum = tmp_path / "spectrum.csv"
    assert main(["spectrum", "--in", str(echoes), "--out", str(spectrum)]) == 0
    rows = spectrum.read_text().strip().splitlines()
    assert len(rows) == 20  # exactly k rows
    assert rows[0].startswith("1,")

    outdir = tmp_path / "report"
    assert main([
        "report", "--in", str(echoes), "--outdir", str(outdir), "--vectors", "4",
    ]) == 0
    assert (outdir / "spectra.png").exists()
    assert (outdir / "echoes_spectrum.csv").exists()
    assert (outdir / "singular_vectors.png").exists()


def test_usage_errors_exit_1(small_image, tmp_path):
    assert main(["filter", "--method", "nope", "--in", str(small_image),
                 "--out", str(tmp_path / "x.pgm")]) == 1
    assert main(["no-such-verb"]) == 1
    assert main(["filter", "--in", str(tmp_path / "missing.pgm"),
                 "--out", str(tmp_path / "x.pgm")]) == 1
    # compress needs exactly one of --rank / --rank-frac
    assert main(["compress", "--in", str(small_image),
                 "--out", str(tmp_path / "x.echosvd")]) == 1


def test_malformed_input_exits_2(tmp_path):
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P5\n8 8\n255\nxx")
    assert main(["filter", "--method", "hd", "--steps", "1",
                 "--in", str(bad), "--out", str(tmp_path / "x.pgm")]) == 2
