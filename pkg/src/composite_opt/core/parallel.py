from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from src.composite_opt.config import settings

T = TypeVar("T")
R = TypeVar("R")


def map_samples(fn: Callable[[T], R], items: Iterable[T], threads: Optional[int] = None) -> List[R]:
    """
    Apply ``fn`` to every item and return the results in input order.

    Work is spread over at most ``settings.threads`` threads. Results are
    collected in the original order so any reduction done by the caller is
    independent of the thread count.
    """
    items = list(items)
    workers = min(threads or settings.threads, len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))
