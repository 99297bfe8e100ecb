"""Shared numeric building blocks: block partitions, the deterministic generator, and the
oracle contract every problem family implements.

The generator is SplitMix64 used in counter mode: the j-th output (j = 1, 2, ...) of a
generator seeded with ``seed`` is ``mix64(seed + j * 0x9E3779B97F4A7C15 mod 2**64)`` with the
standard SplitMix64 finalizer. Scalar draws and vectorized numpy draws read the same counter
sequence, so traces and datasets are reproducible bit for bit across platforms.
"""
import logging
import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from rcsopt.errors import DimensionError, InvalidPartitionError

log = logging.getLogger("rcsopt.core")
log.setLevel(logging.getLevelName(os.getenv("RCSOPT_LOG_LEVEL", "INFO")))

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_TWO_POW_64 = 1 << 64
_INV_2_53 = 2.0**-53


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    # uint64 array arithmetic wraps modulo 2**64
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


class RngState:
    """Counter-based SplitMix64 generator. Single owner, mutable."""

    def __init__(self, seed: int = 0):
        self.seed = int(seed) & MASK64
        self.counter = 0

    def next_u64(self) -> int:
        self.counter += 1
        return _mix64((self.seed + self.counter * GOLDEN_GAMMA) & MASK64)

    def next_u64_array(self, count: int) -> np.ndarray:
        """Next ``count`` outputs, identical to ``count`` calls of next_u64"""
        if count <= 0:
            return np.zeros(0, dtype=np.uint64)
        # keep counter * gamma within uint64 by reducing the counter product in Python first
        start = (self.seed + (self.counter + 1) * GOLDEN_GAMMA) & MASK64
        steps = np.arange(count, dtype=np.uint64)
        z = np.uint64(start) + steps * np.uint64(GOLDEN_GAMMA)
        self.counter += count
        return _mix64_array(z)

    def uniform(self) -> float:
        """Double in [0, 1) with 53 random bits"""
        return (self.next_u64() >> 11) * _INV_2_53

    def uniform_array(self, count: int) -> np.ndarray:
        return (self.next_u64_array(count) >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def standard_normal(self, count: int) -> np.ndarray:
        """Box-Muller transform over consecutive output pairs"""
        pairs = (count + 1) // 2
        raw = self.next_u64_array(2 * pairs) >> np.uint64(11)
        # u1 in (0, 1] keeps the logarithm finite
        u1 = (raw[0::2].astype(np.float64) + 1.0) * _INV_2_53
        u2 = raw[1::2].astype(np.float64) * _INV_2_53
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * math.pi * u2
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = radius * np.cos(angle)
        out[1::2] = radius * np.sin(angle)
        return out[:count]

    def below(self, bound: int) -> int:
        """Uniform integer in [0, bound) by rejection, no modulo bias"""
        limit = _TWO_POW_64 - (_TWO_POW_64 % bound)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % bound

    def choose_distinct(self, population: int, k: int) -> np.ndarray:
        """k distinct indices of range(population), partial Fisher-Yates"""
        if k > population:
            raise ValueError(f"cannot choose {k} distinct items from {population}")
        pool = np.arange(population)
        for j in range(k):
            r = j + self.below(population - j)
            pool[j], pool[r] = pool[r], pool[j]
        return pool[:k].copy()

    def signs(self, count: int) -> np.ndarray:
        """Independent uniform +/-1 entries from the top output bit"""
        bits = self.next_u64_array(count) >> np.uint64(63)
        return np.where(bits == 1, -1.0, 1.0)


@dataclass(frozen=True)
class BlockPartition:
    """Contiguous decomposition of d coordinates into N blocks"""

    d: int
    offsets: Tuple[int, ...]

    def __post_init__(self):
        if len(self.offsets) < 2 or self.offsets[0] != 0 or self.offsets[-1] != self.d:
            raise InvalidPartitionError(
                f"offsets must start at 0 and end at d={self.d}, got {self.offsets}"
            )
        if any(b <= a for a, b in zip(self.offsets, self.offsets[1:])):
            raise InvalidPartitionError("every block needs at least one coordinate")

    @property
    def n_blocks(self) -> int:
        return len(self.offsets) - 1

    @property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(b - a for a, b in zip(self.offsets, self.offsets[1:]))

    @property
    def max_block_size(self) -> int:
        return max(self.sizes)

    def block(self, i: int) -> slice:
        return slice(self.offsets[i], self.offsets[i + 1])


def make_partition(d: int, n_blocks: int) -> BlockPartition:
    """
    Splits d coordinates into n_blocks contiguous blocks, the first d mod N blocks one
    coordinate larger than the rest
    """
    if d < 1 or n_blocks < 1 or n_blocks > d:
        raise InvalidPartitionError(f"need 1 <= N <= d, got d={d}, N={n_blocks}")
    base, extra = divmod(d, n_blocks)
    offsets = [0]
    for i in range(n_blocks):
        offsets.append(offsets[-1] + base + (1 if i < extra else 0))
    return BlockPartition(d=d, offsets=tuple(offsets))


def uniform_block_index(rng: RngState, n_blocks: int) -> int:
    return rng.below(n_blocks)


def aggregate_blocks(blocks: Sequence[np.ndarray], partition: BlockPartition) -> np.ndarray:
    """Concatenates block vectors in partition order into a full length-d vector"""
    if len(blocks) != partition.n_blocks:
        raise DimensionError(
            f"expected {partition.n_blocks} blocks, got {len(blocks)}"
        )
    for i, (block, size) in enumerate(zip(blocks, partition.sizes)):
        if np.shape(block) != (size,):
            raise DimensionError(
                f"block {i} has shape {np.shape(block)}, expected ({size},)"
            )
    return np.concatenate([np.asarray(b, dtype=np.float64) for b in blocks])


def spectral_norm(matrix: np.ndarray, max_iter=500, tol=1e-6) -> float:
    """
    Largest singular value by power iteration on MᵀM from a fixed Gaussian start vector
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if not matrix.size or not np.any(matrix):
        return 0.0
    v = RngState(0).standard_normal(matrix.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iter):
        w = matrix.T @ (matrix @ v)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return 0.0
        v = w / norm_w
        new_sigma = math.sqrt(norm_w)
        if abs(new_sigma - sigma) <= tol * new_sigma:
            sigma = new_sigma
            break
        sigma = new_sigma
    return float(np.linalg.norm(matrix @ v))


def check_vector(x, d: int, name="x") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (d,):
        raise DimensionError(f"{name} has shape {x.shape}, expected ({d},)")
    return x


@dataclass
class ResidualState:
    """Current iterate plus the cached residual s; meaning of s is problem specific"""

    x: np.ndarray
    s: np.ndarray


@dataclass(frozen=True)
class WeakConvexityInfo:
    rho: float
    provenance: str
    tolerance: float = 0.0

    @property
    def convex(self) -> bool:
        return self.rho == 0.0


@dataclass(frozen=True)
class LinearBoundConstants:
    l1: float
    l2: float


class CompositeOracle:
    """Base class for problems of the form f(x) = h(Φ(x))

    Subclasses fix a selection ζ ∈ ∂h(Φ(x)) with sign(0) = 0 and expose it through
    outer_subgradient. block_jacobian_transpose_apply maps ζ to the block of ∇Φ(x)ᵀζ on the
    requested coordinates, so applying it over every block of a partition reproduces the
    full subgradient.
    """

    family = ""
    convex = False

    def __init__(self, A, b):
        self.A = np.asfortranarray(np.asarray(A, dtype=np.float64))
        if self.A.ndim != 2 or self.A.shape[0] < 1 or self.A.shape[1] < 1:
            raise DimensionError(f"A must be a nonempty matrix, got shape {self.A.shape}")
        self.b = np.asarray(b, dtype=np.float64)
        if self.b.shape != (self.n,):
            raise DimensionError(
                f"b has shape {self.b.shape}, expected ({self.n},)"
            )
        self._sigma_max: Optional[float] = None

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    @property
    def sigma_max(self) -> float:
        if self._sigma_max is None:
            self._sigma_max = spectral_norm(self.A)
        return self._sigma_max

    def objective(self, x) -> float:
        raise NotImplementedError("objective")

    def objective_from_state(self, state: ResidualState) -> float:
        raise NotImplementedError("objective_from_state")

    def init_state(self, x0) -> ResidualState:
        raise NotImplementedError("init_state")

    def outer_subgradient(self, state: ResidualState) -> np.ndarray:
        raise NotImplementedError("outer_subgradient")

    def block_jacobian_transpose_apply(
        self, state: ResidualState, block: slice, zeta: np.ndarray
    ) -> np.ndarray:
        raise NotImplementedError("block_jacobian_transpose_apply")

    def apply_block_delta(self, state: ResidualState, block: slice, delta: np.ndarray):
        raise NotImplementedError("apply_block_delta")

    def subgradient(self, x) -> np.ndarray:
        """Full subgradient at x computed from scratch, without residual caching"""
        raise NotImplementedError("subgradient")

    def weak_convexity_modulus(self) -> WeakConvexityInfo:
        raise NotImplementedError("weak_convexity_modulus")

    def linear_bound_constants(self) -> LinearBoundConstants:
        raise NotImplementedError("linear_bound_constants")

    def block_subgradient(
        self, state: ResidualState, i: int, partition: BlockPartition
    ) -> np.ndarray:
        zeta = self.outer_subgradient(state)
        return self.block_jacobian_transpose_apply(state, partition.block(i), zeta)

    def state_update(
        self, state: ResidualState, i: int, x_i_new, partition: BlockPartition
    ):
        """Writes x_i_new into block i of state.x and corrects the residual"""
        block = partition.block(i)
        x_i_new = np.asarray(x_i_new, dtype=np.float64)
        delta = x_i_new - state.x[block]
        self.apply_block_delta(state, block, delta)
        state.x[block] = x_i_new

    def refresh_state(self, state: ResidualState) -> ResidualState:
        return self.init_state(state.x)

    def workspace_bytes(self, block_size: int) -> int:
        """Per-iteration temporaries: the ζ buffer and the block product"""
        return 8 * self.n + 8 * block_size
