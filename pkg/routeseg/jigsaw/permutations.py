import itertools
import math
from pathlib import Path
from typing import Optional

import numpy as np

import routeseg
from routeseg.seeding import Seeder

logger = routeseg.logger

NUM_PATCHES = 9
MAX_PERMUTATIONS = math.factorial(NUM_PATCHES)
DEFAULT_POOL_SIZE = 10_000


class PermutationSet:
    """
    Fixed, ordered set of orderings of the 9 cells of a 3x3 grid.

    The index of a permutation in the set is its pretext class.

    Parameters
    ----------
    perms : array-like of int, shape (k, 9)
        Each row is an ordering of 0..8; rows must be distinct.
    seed : int, default: 0
        Seed the set was generated with (kept for export).
    """

    def __init__(self, perms, seed: int = 0):
        perms = np.array(perms, dtype=np.int64)
        if perms.ndim != 2 or perms.shape[1] != NUM_PATCHES or perms.shape[0] < 1:
            raise ValueError(f"permutations must have shape (k, 9) with k >= 1, got {perms.shape}")
        expected = np.arange(NUM_PATCHES)
        for row in perms:
            if not np.array_equal(np.sort(row), expected):
                raise ValueError(f"{row.tolist()} is not a permutation of 0..8")
        if len(np.unique(perms, axis=0)) != len(perms):
            raise ValueError("permutations must be distinct")
        perms.setflags(write=False)
        self.perms = perms
        self.seed = int(seed)

    @property
    def k(self) -> int:
        return len(self.perms)

    def __len__(self):
        return self.k

    def __getitem__(self, index) -> np.ndarray:
        return self.perms[index]

    def inverse(self, index) -> np.ndarray:
        """Permutation undoing ``self[index]``."""
        return np.argsort(self.perms[index])

    def min_hamming_distance(self) -> float:
        """Smallest number of differing positions between two members (inf if k == 1)."""
        if self.k == 1:
            return math.inf
        dist = (self.perms[:, None, :] != self.perms[None, :, :]).sum(axis=-1)
        np.fill_diagonal(dist, NUM_PATCHES + 1)
        return int(dist.min())

    def __eq__(self, other):
        return isinstance(other, PermutationSet) and np.array_equal(self.perms, other.perms)

    def save(self, path) -> Path:
        """Plain text: "k seed" on the first line, then one permutation per line."""
        path = Path(path)
        lines = [f"{self.k} {self.seed}"]
        lines += [" ".join(str(int(v)) for v in row) for row in self.perms]
        path.write_text("\n".join(lines) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "PermutationSet":
        lines = [line.split() for line in Path(path).read_text().splitlines() if line.strip()]
        if not lines or len(lines[0]) != 2:
            raise ValueError(f"{path}: first line must be 'k seed'")
        k, seed = int(lines[0][0]), int(lines[0][1])
        if len(lines) - 1 != k:
            raise ValueError(f"{path}: header announces {k} permutations, found {len(lines) - 1}")
        return cls([[int(v) for v in row] for row in lines[1:]], seed=seed)

    def __repr__(self):
        return f"PermutationSet(k={self.k}, seed={self.seed})"


def _min_distances(candidates: np.ndarray, chosen: np.ndarray) -> np.ndarray:
    return (candidates[:, None, :] != chosen[None, :, :]).sum(axis=-1).min(axis=1)


def generate_permutation_set(k: int, seed: int, pool_size: int = DEFAULT_POOL_SIZE) -> PermutationSet:
    """
    Greedy max-min Hamming selection.

    Starts from a seeded random permutation, then repeatedly adds the
    candidate with the largest minimum Hamming distance to the permutations
    already chosen, drawing a fresh seeded pool of ``pool_size`` random
    candidates at each step (first maximum wins ties). When no candidate of
    a pool is new, the selection continues over the full enumeration of
    the 9! permutations.

    Parameters
    ----------
    k : int
        Number of permutations, 1 <= k <= 9!.
    seed : int
    pool_size : int, default: 10000

    Returns
    -------
    PermutationSet
    """
    if not 1 <= k <= MAX_PERMUTATIONS:
        raise ValueError(f"k must be in [1, {MAX_PERMUTATIONS}], got {k}")
    rng = Seeder(seed).rng
    chosen = [rng.permutation(NUM_PATCHES)]
    everything: Optional[np.ndarray] = None
    everything_dist: Optional[np.ndarray] = None

    while len(chosen) < k:
        if everything is None:
            pool = rng.random((pool_size, NUM_PATCHES)).argsort(axis=1)
            dist = _min_distances(pool, np.array(chosen))
            best = int(np.argmax(dist))
            if dist[best] > 0:
                chosen.append(pool[best])
                continue
            logger.debug(f"Candidate pool exhausted after {len(chosen)} permutations, enumerating all.")
            everything = np.array(list(itertools.permutations(range(NUM_PATCHES))), dtype=np.int8)
            everything_dist = np.full(len(everything), NUM_PATCHES)
            for perm in chosen:
                everything_dist = np.minimum(everything_dist, (everything != perm).sum(axis=1))
        best = int(np.argmax(everything_dist))
        new = everything[best]
        chosen.append(new.astype(np.int64))
        everything_dist = np.minimum(everything_dist, (everything != new).sum(axis=1))

    return PermutationSet(np.array(chosen), seed=seed)
