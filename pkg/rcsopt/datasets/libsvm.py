import logging
import os
from io import BytesIO

import numpy as np
from sklearn.datasets import load_svmlight_file

from rcsopt.errors import DatasetError, DatasetParseError

log = logging.getLogger("rcsopt.datasets")
log.setLevel(logging.getLevelName(os.getenv("RCSOPT_LOG_LEVEL", "INFO")))


def parse_libsvm_line(line: str, line_number: int):
    """Returns (label, {column: value}) for one "label idx:val ..." line"""
    try:
        X, y = load_svmlight_file(BytesIO(line.encode("utf-8")), zero_based=False)
    except ValueError as e:
        raise DatasetParseError(line_number, str(e))
    if X.shape[0] != 1:
        raise DatasetParseError(line_number, f"expected one sample, got {X.shape[0]}")
    if not np.isfinite(y[0]):
        raise DatasetParseError(line_number, f"label {y[0]} is not finite")
    if not np.all(np.isfinite(X.data)):
        raise DatasetParseError(line_number, "feature values must be finite")
    return float(y[0]), {int(j): float(v) for j, v in zip(X.indices, X.data)}


def _locate_error(path):
    """Re-reads ``path`` line by line so the first bad line raises with its number"""
    with open(path, encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if line:
                parse_libsvm_line(line, line_number)


def read_libsvm(path):
    """Reads a sparse libsvm text file into a dense (A, b).

    d is the largest feature index seen. Labels above 0 map to +1, the rest to -1.
    """
    try:
        X, y = load_svmlight_file(str(path), zero_based=False)
    except ValueError as e:
        _locate_error(path)
        raise DatasetError(f"{path}: {e}")
    if X.shape[0] == 0:
        raise DatasetError(f"{path} holds no samples")
    if X.nnz == 0:
        raise DatasetError(f"{path} holds no features")
    if not (np.all(np.isfinite(X.data)) and np.all(np.isfinite(y))):
        _locate_error(path)

    A = X.toarray()
    log.info(f"read {path}: n={A.shape[0]}, d={A.shape[1]}")
    return A, np.where(y > 0, 1.0, -1.0)
