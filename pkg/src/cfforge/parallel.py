"""Order-preserving parallel map with bounded submission.

Results always come back in task order, so output never depends on the
number of workers.
"""

from __future__ import annotations

import os
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Iterator


def default_workers() -> int:
    env = os.environ.get("FORGE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def ordered_map(
    fn: Callable,
    tasks: Iterable,
    workers: int = 1,
    window: int = 256,
    initializer: Callable | None = None,
    initargs: tuple = (),
) -> Iterator:
    """Yield ``fn(task)`` for each task, in order.

    With ``workers > 1`` tasks run in a process pool; at most ``window``
    tasks are in flight so that huge lazy task streams stay cheap.
    ``initializer`` runs once per worker (or once in-process when serial).
    """
    if workers <= 1:
        if initializer is not None:
            initializer(*initargs)
        for t in tasks:
            yield fn(t)
        return
    with ProcessPoolExecutor(max_workers=workers, initializer=initializer, initargs=initargs) as pool:
        pending: deque = deque()
        it = iter(tasks)
        for t in it:
            pending.append(pool.submit(fn, t))
            if len(pending) >= window:
                break
        while pending:
            fut = pending.popleft()
            try:
                result = fut.result()
            except BaseException:
                for f in pending:
                    f.cancel()
                raise
            nxt = next(it, _DONE)
            if nxt is not _DONE:
                pending.append(pool.submit(fn, nxt))
            yield result


_DONE = object()
