"""Plain-text (P2) PGM import and export for image vectors"""
import numpy as np

from rcsopt.errors import DatasetError, DatasetParseError


def _tokens(path):
    with open(path, encoding="ascii") as f:
        for line_number, line in enumerate(f, start=1):
            for token in line.split("#", 1)[0].split():
                yield line_number, token


def read_pgm(path):
    """Returns (pixels scaled to [0, 1] in row-major order, width, height)"""
    tokens = _tokens(path)
    try:
        line_number, magic = next(tokens)
    except StopIteration:
        raise DatasetError(f"{path} is empty")
    if magic != "P2":
        raise DatasetParseError(line_number, f"expected P2 magic, got {magic!r}")

    header = []
    values = []
    for line_number, token in tokens:
        try:
            number = int(token)
        except ValueError:
            raise DatasetParseError(line_number, f"{token!r} is not an integer")
        if len(header) < 3:
            header.append(number)
        else:
            values.append(number)
    if len(header) < 3:
        raise DatasetError(f"{path} has an incomplete header")
    width, height, maxval = header
    if width < 1 or height < 1 or maxval < 1:
        raise DatasetError(f"{path} has an invalid header {header}")
    if len(values) != width * height:
        raise DatasetError(f"{path} holds {len(values)} pixels, expected {width * height}")
    pixels = np.array(values, dtype=np.float64)
    if np.any(pixels < 0) or np.any(pixels > maxval):
        raise DatasetError(f"{path} has pixels outside [0, {maxval}]")
    return pixels / maxval, width, height


def write_pgm(path, values, width, height, maxval=255):
    """Writes a vector as a P2 image, rescaling its range linearly onto [0, maxval]"""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (width * height,):
        raise DatasetError(
            f"cannot write {values.shape} values as a {width}x{height} image"
        )
    low, high = float(values.min()), float(values.max())
    if high > low:
        scaled = (values - low) / (high - low)
    else:
        scaled = np.zeros_like(values)
    pixels = np.rint(scaled * maxval).astype(int).reshape(height, width)
    with open(path, "w", encoding="ascii") as f:
        f.write(f"P2\n{width} {height}\n{maxval}\n")
        for row in pixels:
            f.write(" ".join(str(p) for p in row) + "\n")
