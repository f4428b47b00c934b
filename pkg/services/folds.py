import logging
from typing import Optional

import numpy as np

from models.data import FoldPartition, SeedSpec
from services.exceptions import InvalidArgumentError

logger = logging.getLogger(__name__)


def make_partition(n: int, K: int, shuffle_seed: Optional[SeedSpec] = None) -> FoldPartition:
    """Contiguous blocks; the first n mod K blocks get one extra row.

    With `shuffle_seed` the rows are permuted before blocking, for user data whose
    order may not be exchangeable.
    """
    if K < 2:
        raise InvalidArgumentError(f"K must be at least 2, got {K}")
    if K > n:
        raise InvalidArgumentError(f"K={K} exceeds n={n}")
    base, extra = divmod(n, K)
    sizes = tuple(base + 1 if j < extra else base for j in range(K))
    order = np.arange(n)
    if shuffle_seed is not None:
        order = shuffle_seed.generator().permutation(n)
    return FoldPartition(n=n, K=K, order=order, sizes=sizes)


def block_of(i: int, partition: FoldPartition) -> int:
    if not 0 <= i < partition.n:
        raise InvalidArgumentError(f"index {i} outside 0..{partition.n - 1}")
    return int(partition.assignment[i])
