"""Bundled test images."""

from importlib import resources

from ..grid import read_pgm


def load_scene64():
    """64x64 grey test scene: shaded background, bright disk, dark box,
    gentle texture; grey range [0, 255]."""
    with resources.as_file(resources.files(__package__) / "scene64.pgm") as path:
        return read_pgm(path)
