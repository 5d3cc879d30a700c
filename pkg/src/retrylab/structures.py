"""Lock-free structures driven by CAS retry loops, with per-thread counters.

CPython exposes no compare-and-swap instruction, so :class:`AtomicRef`
emulates one with a private lock held only for the compare-and-set itself.
The retry loops around it are ordinary lock-free code: a thread that loses
the race re-reads and tries again, and the counters record every attempt.

Nodes live in a pre-allocated pool and are never reclaimed.  The pool lays
nodes out ``stride_lines`` cache lines apart, so a walk over k nodes touches
k distinct lines when the stride is large.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

CACHE_LINE = 64
_WORDS_PER_LINE = CACHE_LINE // 8
NIL = -1


class Empty:
    """Returned by pops and dequeues that find too few elements."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "EMPTY"

    def __bool__(self) -> bool:
        return False


EMPTY = Empty()


class PoolExhausted(RuntimeError):
    pass


class AtomicRef:
    """A single mutable cell with atomic ``load`` and ``compare_and_set``."""

    __slots__ = ("_value", "_lock")

    def __init__(self, value=None):
        self._value = value
        self._lock = threading.Lock()

    def load(self):
        return self._value

    def compare_and_set(self, expected, new) -> bool:
        with self._lock:
            if self._value is expected or self._value == expected:
                self._value = new
                return True
            return False


@dataclass
class OpCounters:
    attempts: int = 0
    successes: int = 0
    # consecutive failures before each success, "0".."5" and "6+"
    fail_runs: list[int] = field(default_factory=lambda: [0] * 7)
    helps: int = 0

    @property
    def fails(self) -> int:
        return self.attempts - self.successes

    def record(self, failed: int) -> None:
        self.attempts += failed + 1
        self.successes += 1
        self.fail_runs[min(failed, 6)] += 1

    def merge(self, other: "OpCounters") -> "OpCounters":
        return OpCounters(
            self.attempts + other.attempts,
            self.successes + other.successes,
            [a + b for a, b in zip(self.fail_runs, other.fail_runs)],
            self.helps + other.helps,
        )


class _PerThread:
    """Counters keyed by thread id; each worker only touches its own entry."""

    def __init__(self):
        self._by_thread: dict[int, OpCounters] = {}
        self._lock = threading.Lock()

    def mine(self) -> OpCounters:
        tid = threading.get_ident()
        c = self._by_thread.get(tid)
        if c is None:
            with self._lock:
                c = self._by_thread.setdefault(tid, OpCounters())
        return c

    def per_thread(self) -> list[OpCounters]:
        return list(self._by_thread.values())

    def total(self) -> OpCounters:
        out = OpCounters()
        for c in self._by_thread.values():
            out = out.merge(c)
        return out


class NodePool:
    """Fixed-capacity node storage: a value and a next link per node.

    Node ``i`` occupies the first word of line ``i * stride_lines``; the rest
    of its lines stay unused.  Allocation hands out indices monotonically.
    """

    def __init__(self, capacity: int, stride_lines: int = 1):
        if capacity < 1:
            raise ValueError("pool capacity must be >= 1")
        if stride_lines < 1:
            raise ValueError("stride must be >= 1 cache line")
        self.capacity = capacity
        self.stride_lines = stride_lines
        width = capacity * stride_lines * _WORDS_PER_LINE
        self._next = np.full(width, NIL, dtype=np.int64)
        self._values = [None] * capacity
        self._slot = stride_lines * _WORDS_PER_LINE
        self._alloc = 0
        self._alloc_lock = threading.Lock()

    def allocate(self, value) -> int:
        with self._alloc_lock:
            i = self._alloc
            if i >= self.capacity:
                raise PoolExhausted(f"node pool of {self.capacity} exhausted")
            self._alloc = i + 1
        self._values[i] = value
        self._next[i * self._slot] = NIL
        return i

    def value(self, i: int):
        return self._values[i]

    def next(self, i: int) -> int:
        return int(self._next[i * self._slot])

    def set_next(self, i: int, j: int) -> None:
        self._next[i * self._slot] = j

    @property
    def allocated(self) -> int:
        return self._alloc


class _RetryLoop:
    """Shared retry-loop plumbing: counters and an optional back-off hook.

    ``on_fail(n)`` runs after the n-th consecutive failed attempt of an
    operation, outside any CAS.
    """

    def __init__(self):
        self.counters = _PerThread()
        self.on_fail = None

    def _backoff(self, failed: int) -> None:
        if self.on_fail is not None:
            self.on_fail(failed)


class InstrumentedStack(_RetryLoop):
    """Treiber stack with a version-tagged top and multi-element pop.

    The top cell holds ``(node, version)``; the version bumps on every
    successful CAS so a recycled index can never satisfy a stale compare.
    """

    def __init__(self, capacity: int = 1 << 16, stride_lines: int = 1):
        self.pool = NodePool(capacity, stride_lines)
        super().__init__()
        self.top = AtomicRef((NIL, 0))

    def push(self, value) -> None:
        node = self.pool.allocate(value)
        mine = self.counters.mine()
        failed = 0
        while True:
            top = self.top.load()
            self.pool.set_next(node, top[0])
            if self.top.compare_and_set(top, (node, top[1] + 1)):
                mine.record(failed)
                return
            failed += 1
            self._backoff(failed)

    def pop_multi(self, k: int = 1):
        """Remove the top ``k`` elements with one CAS; ``EMPTY`` if fewer exist."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        mine = self.counters.mine()
        failed = 0
        while True:
            top = self.top.load()
            taken = []
            node = top[0]
            # walking the k links is the critical work of this retry
            while node != NIL and len(taken) < k:
                taken.append(node)
                node = self.pool.next(node)
            if len(taken) < k:
                mine.record(failed)
                return EMPTY
            if self.top.compare_and_set(top, (node, top[1] + 1)):
                mine.record(failed)
                return [self.pool.value(i) for i in taken]
            failed += 1
            self._backoff(failed)

    def pop(self):
        out = self.pop_multi(1)
        return out[0] if out is not EMPTY else EMPTY

    def snapshot(self) -> list:
        """Elements from top to bottom; only meaningful at quiescence."""
        out, node = [], self.top.load()[0]
        while node != NIL:
            out.append(self.pool.value(node))
            node = self.pool.next(node)
        return out

    def __len__(self) -> int:
        return len(self.snapshot())


class InstrumentedCounter(_RetryLoop):
    """Fetch-and-increment built from a Read/CAS retry loop."""

    def __init__(self, initial: int = 0):
        super().__init__()
        self.cell = AtomicRef(initial)

    def increment(self) -> int:
        mine = self.counters.mine()
        failed = 0
        while True:
            old = self.cell.load()
            if self.cell.compare_and_set(old, old + 1):
                mine.record(failed)
                return old
            failed += 1
            self._backoff(failed)

    @property
    def value(self) -> int:
        return self.cell.load()


class InstrumentedQueue(_RetryLoop):
    """Michael and Scott queue: enqueue links at the tail, then swings it.

    Between the two CASes the queue is in a transient state where the tail
    lags one node behind; any enqueue or dequeue that sees it helps by
    swinging the tail before retrying its own step.
    """

    def __init__(self, capacity: int = 1 << 16, stride_lines: int = 1):
        self.pool = NodePool(capacity + 1, stride_lines)
        dummy = self.pool.allocate(None)
        self.head = AtomicRef((dummy, 0))
        self.tail = AtomicRef((dummy, 0))
        # next links are CAS targets too: one cell per node
        self._links = [AtomicRef((NIL, 0)) for _ in range(capacity + 1)]
        super().__init__()

    def _link(self, node: int) -> AtomicRef:
        return self._links[node]

    def enqueue(self, value) -> None:
        node = self.pool.allocate(value)
        mine = self.counters.mine()
        failed = 0
        while True:
            tail = self.tail.load()
            nxt = self._link(tail[0]).load()
            if tail != self.tail.load():
                failed += 1
                self._backoff(failed)
                continue
            if nxt[0] == NIL:
                if self._link(tail[0]).compare_and_set(nxt, (node, nxt[1] + 1)):
                    # second step; failure means another thread already helped
                    self.tail.compare_and_set(tail, (node, tail[1] + 1))
                    mine.record(failed)
                    return
            else:
                mine.helps += 1
                self.tail.compare_and_set(tail, (nxt[0], tail[1] + 1))
            failed += 1
            self._backoff(failed)

    def dequeue(self):
        mine = self.counters.mine()
        failed = 0
        while True:
            head = self.head.load()
            tail = self.tail.load()
            nxt = self._link(head[0]).load()
            if head != self.head.load():
                failed += 1
                self._backoff(failed)
                continue
            if head[0] == tail[0]:
                if nxt[0] == NIL:
                    mine.record(failed)
                    return EMPTY
                mine.helps += 1
                self.tail.compare_and_set(tail, (nxt[0], tail[1] + 1))
            else:
                value = self.pool.value(nxt[0])
                if self.head.compare_and_set(head, (nxt[0], head[1] + 1)):
                    mine.record(failed)
                    return value
            failed += 1
            self._backoff(failed)

    def snapshot(self) -> list:
        out, node = [], self._link(self.head.load()[0]).load()[0]
        while node != NIL:
            out.append(self.pool.value(node))
            node = self._link(node).load()[0]
        return out

    def __len__(self) -> int:
        return len(self.snapshot())

    @property
    def helps(self) -> int:
        return self.counters.total().helps


STRUCTURES = ("counter", "stack", "queue")


def make_structure(kind: str, capacity: int = 1 << 16, stride_lines: int = 1):
    if kind == "counter":
        return InstrumentedCounter()
    if kind == "stack":
        return InstrumentedStack(capacity, stride_lines)
    if kind == "queue":
        return InstrumentedQueue(capacity, stride_lines)
    raise ValueError(f"unknown structure {kind!r}; expected one of {STRUCTURES}")
