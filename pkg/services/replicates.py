import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(func: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """Order-preserving map; results do not depend on the thread count."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def mean_and_se(values) -> tuple:
    """Sample mean and its standard error (sample SD / sqrt(count))."""
    arr = np.asarray(values, dtype=float)
    if arr.size < 2:
        return float(arr.mean()), float("nan")
    return float(arr.mean()), float(arr.std(ddof=1) / np.sqrt(arr.size))


def n_var_and_se(values, n: int) -> tuple:
    """n * sample variance and its delta-method standard error."""
    arr = np.asarray(values, dtype=float)
    r = arr.size
    centered = arr - arr.mean()
    var = float(centered @ centered / (r - 1))
    m4 = float(np.mean(centered ** 4))
    se = np.sqrt(max(m4 - var ** 2 * (r - 3) / (r - 1), 0.0) / r)
    return n * var, float(n * se)


def ratio_se(a: np.ndarray, b: np.ndarray) -> tuple:
    """Var(a)/Var(b) for paired replicate arrays, with a delta-method standard error."""
    a = np.asarray(a, dtype=float) - np.mean(a)
    b = np.asarray(b, dtype=float) - np.mean(b)
    r = a.size
    va, vb = np.mean(a ** 2), np.mean(b ** 2)
    ratio = va / vb
    # influence of each replicate on the ratio of second moments
    infl = (a ** 2 - va) / vb - ratio * (b ** 2 - vb) / vb
    return float(ratio), float(np.sqrt(np.mean(infl ** 2) / r))
