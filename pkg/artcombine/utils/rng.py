"""Counter-based random streams and the worker pool used by batch samplers.

Every stream is a pure function of its key: ``stream(seed, tag, index)``
always yields the same numbers no matter which thread draws them or in
which order. Batch work is split into fixed-size blocks so that results do
not depend on the number of workers.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar
import logging

import numpy as np

from artcombine.config import settings

logger = logging.getLogger(__name__)

T = TypeVar("T")

# Stream tags keep independent consumers of one seed apart
TAG_HEAD = 1
TAG_RTP_NULL = 2
TAG_SHUFFLE = 3
TAG_ARTP_NULL = 4
TAG_STUDY = 5
TAG_STUDY_NULL = 6
TAG_CORRELATION = 7
TAG_EFFECTS = 8
TAG_MVN = 9
TAG_RTP_QMC = 10


def stream(seed: int, *key: int) -> np.random.Generator:
    """Philox generator keyed by (seed, *key)"""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) for k in key]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def blocks(total: int, block_size: Optional[int] = None) -> List[tuple]:
    """Split ``total`` draws into (block_index, start, size) triples"""
    size = block_size or settings.block_size
    return [(b, start, min(size, total - start)) for b, start in enumerate(range(0, total, size))]


def parallel_map(func: Callable[[T], np.ndarray], items: Sequence[T], workers: Optional[int] = None) -> List:
    """Map ``func`` over ``items`` keeping input order"""
    n_workers = workers or settings.resolved_threads()
    if n_workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(func, items))


def blockwise(
    draw: Callable[[np.random.Generator, int], np.ndarray],
    total: int,
    seed: int,
    tag: int,
    workers: Optional[int] = None,
) -> np.ndarray:
    """Draw ``total`` rows block by block and stack them in block order

    Args:
        draw: callable taking (generator, block size) and returning an array
            whose first axis has length block size
        total: number of rows
        seed: user seed
        tag: stream tag separating this consumer from others
        workers: worker count override

    Returns:
        Array with ``total`` rows, identical for any worker count
    """
    def run(block):
        index, _, size = block
        return draw(stream(seed, tag, index), size)

    parts = parallel_map(run, blocks(total), workers)
    logger.debug(f"Drew {total} rows in {len(parts)} blocks (tag {tag})")
    return np.concatenate(parts, axis=0)
