from __future__ import annotations

import queue
import threading
from typing import Callable, Iterator, TypeVar

import numpy as np

T = TypeVar("T")


class DomainSampler:
    """Epoch-shuffled batch indices for one domain, a pure function of (seed, stream, iteration).

    Each domain gets its own stream, so the two domains are drawn independently; a resumed
    run sees the same batches as an uninterrupted one.
    """

    def __init__(self, n: int, batch_size: int, seed: int, stream: int):
        if n < 1:
            raise ValueError("domain is empty")
        self.n = n
        self.batch_size = batch_size
        self.seed = seed
        self.stream = stream
        self._cached: tuple[int, np.ndarray] | None = None

    def _perm(self, epoch: int) -> np.ndarray:
        if self._cached is None or self._cached[0] != epoch:
            self._cached = (epoch, np.random.default_rng([self.seed, self.stream, epoch]).permutation(self.n))
        return self._cached[1]

    def indices(self, iteration: int) -> np.ndarray:
        start = iteration * self.batch_size
        out = np.empty(self.batch_size, dtype=np.int64)
        for j in range(self.batch_size):
            epoch, pos = divmod(start + j, self.n)
            out[j] = self._perm(epoch)[pos]
        return out


def prefetch(produce: Callable[[int], T], start: int, stop: int, depth: int = 4) -> Iterator[T]:
    """Yield produce(i) for i in [start, stop) in order, computed ahead on one worker thread."""
    if depth < 1:
        for i in range(start, stop):
            yield produce(i)
        return
    q: queue.Queue = queue.Queue(maxsize=depth)
    done = threading.Event()
    _end = object()

    def work() -> None:
        try:
            for i in range(start, stop):
                item = produce(i)
                while not done.is_set():
                    try:
                        q.put(("ok", item), timeout=0.1)
                        break
                    except queue.Full:
                        continue
                if done.is_set():
                    return
        except BaseException as e:  # surfaced to the consumer
            q.put(("err", e))
            return
        q.put(("ok", _end))

    th = threading.Thread(target=work, name="batch-prefetch", daemon=True)
    th.start()
    try:
        while True:
            kind, item = q.get()
            if kind == "err":
                raise item
            if item is _end:
                return
            yield item
    finally:
        done.set()
        th.join(timeout=1.0)
