"""Seeded synthetic problem instances.

Every generator draws from a single RngState in a fixed order, so a (config, seed) pair always
reproduces the same arrays.
"""
import logging
import math
import os
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, NonNegativeInt, PositiveInt, model_validator
from scipy.linalg import hadamard

from rcsopt.core import RngState, check_vector
from rcsopt.errors import DatasetError

log = logging.getLogger("rcsopt.datasets")
log.setLevel(logging.getLevelName(os.getenv("RCSOPT_LOG_LEVEL", "INFO")))

OUTLIER_VARIANCE = 1000.0


def outlier_count(p_fail: float, n: int) -> int:
    """round(p_fail·n) with halves rounded up"""
    return int(math.floor(p_fail * n + 0.5))


class MEstimatorGenConfig(BaseModel):
    n: PositiveInt
    d: PositiveInt
    s: NonNegativeInt
    p_fail: float = Field(0.0, ge=0.0, lt=1.0)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def check_sparsity(self):
        if self.s > self.d:
            raise ValueError(f"sparsity s={self.s} exceeds d={self.d}")
        return self


class SvmGenConfig(BaseModel):
    n: PositiveInt
    d: PositiveInt
    seed: int = Field(0, ge=0)


def generate_mestimator_data(cfg: MEstimatorGenConfig):
    """Gaussian design, s-sparse Gaussian truth, and N(0, 1000) outliers on round(p_fail·n) rows.

    Returns (A, b, x_star) with b = A x_star + δ.
    """
    rng = RngState(cfg.seed)
    A = rng.standard_normal(cfg.n * cfg.d).reshape(cfg.n, cfg.d)
    x_star = np.zeros(cfg.d)
    support = rng.choose_distinct(cfg.d, cfg.s)
    x_star[support] = rng.standard_normal(cfg.s)

    n_out = outlier_count(cfg.p_fail, cfg.n)
    delta = np.zeros(cfg.n)
    locations = rng.choose_distinct(cfg.n, n_out)
    delta[locations] = math.sqrt(OUTLIER_VARIANCE) * rng.standard_normal(n_out)
    log.debug(f"mestimator data: n={cfg.n}, d={cfg.d}, s={cfg.s}, outliers={n_out}")
    return A, A @ x_star + delta, x_star


def generate_svm_data(cfg: SvmGenConfig):
    """Linearly separable labels sign(A w*) for a Gaussian design, sign(0) taken as +1"""
    rng = RngState(cfg.seed)
    A = rng.standard_normal(cfg.n * cfg.d).reshape(cfg.n, cfg.d)
    w_star = rng.standard_normal(cfg.d)
    b = np.where(A @ w_star >= 0.0, 1.0, -1.0)
    return A, b, w_star


def is_power_of_two(d: int) -> bool:
    return d >= 1 and d & (d - 1) == 0


class HadamardDesign:
    """Stack of m sign-flipped normalized Hadamard blocks, A = [H S_1, ..., H S_m]ᵀ"""

    def __init__(self, d: int, m: int, signs, seed: Optional[int] = None):
        if not is_power_of_two(d):
            raise DatasetError(f"Hadamard dimension must be a power of two, got d={d}")
        if m < 1:
            raise DatasetError(f"need at least one sign block, got m={m}")
        signs = np.asarray(signs, dtype=np.float64)
        if signs.shape != (m, d):
            raise DatasetError(f"signs must have shape ({m}, {d}), got {signs.shape}")
        if not np.all(np.abs(signs) == 1.0):
            raise DatasetError("sign diagonals may only hold -1 and +1")
        self.d = d
        self.m = m
        self.signs = signs
        self.seed = seed

    @classmethod
    def random(cls, d: int, m: int, seed: int = 0):
        if not is_power_of_two(d):
            raise DatasetError(f"Hadamard dimension must be a power of two, got d={d}")
        signs = RngState(seed).signs(m * d).reshape(m, d)
        return cls(d, m, signs, seed=seed)

    @property
    def n(self) -> int:
        return self.m * self.d

    def hadamard_matrix(self) -> np.ndarray:
        """Sylvester Hadamard matrix scaled by 1/√d, symmetric and involutory"""
        return hadamard(self.d).astype(np.float64) / math.sqrt(self.d)

    def matrix(self) -> np.ndarray:
        H = self.hadamard_matrix()
        # (H S_j)ᵀ = S_j H since H is symmetric
        return np.vstack([H * s[:, None] for s in self.signs])


def generate_pr_data(
    design: HadamardDesign, x_star, p_fail: float, seed: int = 0, clip_outliers=False
) -> Tuple[np.ndarray, np.ndarray]:
    """Phase retrieval measurements b_i² = (a_iᵀx*)², with round(p_fail·n) entries replaced by
    N(0, 1000) draws. Outlier values stay negative unless clip_outliers floors them at 0.
    """
    if not 0.0 <= p_fail < 1.0:
        raise DatasetError(f"p_fail must lie in [0, 1), got {p_fail}")
    x_star = check_vector(x_star, design.d, name="x_star")
    A = design.matrix()
    b_sq = (A @ x_star) ** 2

    rng = RngState(seed)
    n_out = outlier_count(p_fail, design.n)
    locations = rng.choose_distinct(design.n, n_out)
    values = math.sqrt(OUTLIER_VARIANCE) * rng.standard_normal(n_out)
    if clip_outliers:
        values = np.maximum(values, 0.0)
    b_sq[locations] = values
    log.debug(f"phase retrieval data: n={design.n}, d={design.d}, outliers={n_out}")
    return A, b_sq


class PrGenConfig(BaseModel):
    d: PositiveInt
    m: PositiveInt
    p_fail: float = Field(0.0, ge=0.0, lt=1.0)
    seed: int = Field(0, ge=0)
    clip_outliers: bool = False


def generate_pr_instance(cfg: PrGenConfig, x_star=None):
    """Random design and outliers for a phase retrieval instance.

    The sign diagonals use seed, a Gaussian x* (when none is given) seed + 1 and the outliers
    seed + 2. Returns (A, b_sq, x_star).
    """
    design = HadamardDesign.random(cfg.d, cfg.m, seed=cfg.seed)
    if x_star is None:
        x_star = RngState(cfg.seed + 1).standard_normal(cfg.d)
    A, b_sq = generate_pr_data(
        design, x_star, cfg.p_fail, seed=cfg.seed + 2, clip_outliers=cfg.clip_outliers
    )
    return A, b_sq, np.asarray(x_star, dtype=np.float64)
