"""Binary dataset container.

Layout, all little-endian: the magic bytes ``RCSD``, a u32 format version, n and d as u64,
then float64 payloads for A (row-major, n·d values), b (n values) and x* (d values). A JSON
sidecar at ``<path>.json`` records the family, the generating config and the format version.
"""
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from rcsopt.errors import DatasetError

log = logging.getLogger("rcsopt.datasets")
log.setLevel(logging.getLevelName(os.getenv("RCSOPT_LOG_LEVEL", "INFO")))

MAGIC = b"RCSD"
FORMAT_VERSION = 1
HEADER = np.dtype([("magic", "S4"), ("version", "<u4"), ("n", "<u8"), ("d", "<u8")])
PAYLOAD = np.dtype("<f8")


@dataclass
class Dataset:
    family: str
    A: np.ndarray
    b: np.ndarray
    x_star: Optional[np.ndarray] = None
    config: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]


def sidecar_path(path) -> str:
    return f"{path}.json"


def is_container(path) -> bool:
    try:
        with open(path, "rb") as f:
            return f.read(len(MAGIC)) == MAGIC
    except OSError:
        return False


def write_dataset(path, dataset: Dataset, force=False):
    """Writes the container and its sidecar; refuses to overwrite unless force is set"""
    if not force:
        for target in (path, sidecar_path(path)):
            if os.path.exists(target):
                raise DatasetError(f"{target} already exists, use --force to overwrite")
    n, d = dataset.A.shape
    if dataset.b.shape != (n,):
        raise DatasetError(f"b has shape {dataset.b.shape}, expected ({n},)")
    has_x_star = dataset.x_star is not None
    x_star = dataset.x_star if has_x_star else np.zeros(d)
    if np.shape(x_star) != (d,):
        raise DatasetError(f"x_star has shape {np.shape(x_star)}, expected ({d},)")

    header = np.array([(MAGIC, FORMAT_VERSION, n, d)], dtype=HEADER)
    with open(path, "wb") as f:
        f.write(header.tobytes())
        for payload in (dataset.A, dataset.b, x_star):
            f.write(np.ascontiguousarray(payload, dtype=PAYLOAD).tobytes())
    with open(sidecar_path(path), "w") as f:
        f.write(
            json.dumps(
                {
                    "family": dataset.family,
                    "config": dataset.config,
                    "format_version": FORMAT_VERSION,
                    "has_x_star": has_x_star,
                },
                indent=4,
                sort_keys=True,
            )
        )
    log.info(f"wrote {dataset.family} dataset to {path} (n={n}, d={d})")


def read_dataset(path) -> Dataset:
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except FileNotFoundError:
        raise DatasetError(f"dataset {path} not found")
    if len(raw) < HEADER.itemsize:
        raise DatasetError(f"{path} is too short to be a dataset container")
    header = np.frombuffer(raw, dtype=HEADER, count=1)[0]
    if header["magic"] != MAGIC:
        raise DatasetError(f"{path} is not a dataset container")
    if header["version"] != FORMAT_VERSION:
        raise DatasetError(f"unsupported container version {header['version']}")
    n, d = int(header["n"]), int(header["d"])
    expected = HEADER.itemsize + PAYLOAD.itemsize * (n * d + n + d)
    if len(raw) != expected:
        raise DatasetError(f"{path} holds {len(raw)} bytes, expected {expected}")

    values = np.frombuffer(raw, dtype=PAYLOAD, offset=HEADER.itemsize).astype(np.float64)
    A = values[: n * d].reshape(n, d)
    b = values[n * d : n * d + n]
    x_star = values[n * d + n :]

    try:
        with open(sidecar_path(path)) as f:
            sidecar = json.load(f)
    except FileNotFoundError:
        raise DatasetError(f"sidecar {sidecar_path(path)} not found")
    return Dataset(
        family=sidecar["family"],
        A=A,
        b=b,
        x_star=x_star if sidecar.get("has_x_star", True) else None,
        config=sidecar.get("config", {}),
    )
