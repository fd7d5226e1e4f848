"""
Bounded per-action episodic Q-memory.

Each ``ActionMemory`` holds at most ``capacity`` (key, q) pairs for a single
action. Values are read with inverse-distance weighted k-NN regression and
written with one of five storage strategies:

  lru  -- replace the least recently used entry
  rew  -- replace the entry with the lowest stored return
  sur  -- replace the entry with the lowest surprise |R - Q|
  km   -- merge into the nearest entry (online k-means)
  dkm  -- online k-means whose cluster counts decay by 1/N per insert;
          a cluster whose count drops to <= 0 is overwritten

Ties anywhere (neighbour order, victim choice, best action) go to the lowest
index so that runs are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

STRATEGIES = ("lru", "rew", "sur", "km", "dkm")
BACKENDS = ("naive", "tree", "auto")

# capacity above which backend="auto" picks the tree index
AUTO_TREE_CAPACITY = 4096


class EmptyMemoryError(LookupError):
    """Raised when a read is attempted on a memory with no entries."""


@dataclass(frozen=True)
class KernelParams:
    k: int = 11
    delta: float = 1e-3

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")


@dataclass(frozen=True)
class InsertEffect:
    """What an insert did: ``kind`` is one of appended/updated/replaced/merged."""

    kind: str
    index: int


def kernel_weight(query, neighbor, delta: float) -> float:
    """Inverse distance weight 1 / (||query - neighbor||^2 + delta)."""
    query = np.asarray(query, dtype=float)
    neighbor = np.asarray(neighbor, dtype=float)
    if query.shape != neighbor.shape:
        raise ValueError(f"dimension mismatch: {query.shape} vs {neighbor.shape}")
    if not delta > 0:
        raise ValueError("delta must be > 0")
    diff = query - neighbor
    return 1.0 / (float(np.dot(diff, diff)) + delta)


def squared_distances(rows: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance from each row to ``query``.

    Columns are accumulated left to right with elementwise ops, so the value
    for a given row never depends on which other rows are in the batch. Both
    index backends rely on this to agree exactly.
    """
    diff = rows - query
    sq = diff * diff
    out = sq[:, 0].copy()
    for j in range(1, sq.shape[1]):
        out += sq[:, j]
    return out


def _select_k(idx: np.ndarray, d2: np.ndarray, k: int):
    """k smallest of (d2, idx) pairs; ``idx`` must be ascending."""
    if k < len(d2):
        kth = np.partition(d2, k - 1)[k - 1]
        keep = d2 <= kth
        idx, d2 = idx[keep], d2[keep]
    order = np.argsort(d2, kind="stable")[:k]
    return idx[order], d2[order]


class NaiveIndex:
    """Linear scan over every stored key. The reference backend."""

    name = "naive"

    def knn(self, keys: np.ndarray, size: int, query: np.ndarray, k: int):
        d2 = squared_distances(keys[:size], query)
        return _select_k(np.arange(size), d2, k)

    def invalidate(self, i: int):
        pass

    def reset(self):
        pass


class TreeIndex:
    """k-d tree over a snapshot of the keys plus a scan of entries changed since.

    The tree is rebuilt lazily once too many entries have moved. Exact squared
    distances are always recomputed with :func:`squared_distances` so the
    result matches :class:`NaiveIndex`, ties included.
    """

    name = "tree"

    def __init__(self, rebuild_threshold: int = 256):
        self.rebuild_threshold = rebuild_threshold
        self.reset()

    def reset(self):
        self._tree = None
        self._built_size = 0
        self._stale: set = set()

    def invalidate(self, i: int):
        if i < self._built_size:
            self._stale.add(i)

    def _dirty(self, size: int) -> np.ndarray:
        extra = np.arange(self._built_size, size)
        if not self._stale:
            return extra
        stale = np.fromiter(self._stale, dtype=np.intp, count=len(self._stale))
        return np.concatenate([np.sort(stale), extra])

    def knn(self, keys: np.ndarray, size: int, query: np.ndarray, k: int):
        if self._tree is None or len(self._stale) + size - self._built_size > self.rebuild_threshold:
            self._tree = cKDTree(keys[:size].copy())
            self._built_size = size
            self._stale = set()

        dirty = self._dirty(size)
        n_tree = self._built_size
        cand = [dirty]
        if n_tree > 0:
            kk = min(k + len(self._stale), n_tree)
            _, hits = self._tree.query(query, k=kk)
            hits = np.atleast_1d(hits)
            hits = hits[hits < n_tree]
            if self._stale:
                hits = hits[~np.isin(hits, dirty)]
            cand.append(hits[:k])
        cand = np.unique(np.concatenate(cand))
        d2 = squared_distances(keys[cand], query)
        if len(cand) == 0:
            raise EmptyMemoryError("empty memory")

        # widen to every tree point within the current k-th distance so that
        # boundary ties resolve to the lowest index, as in the linear scan
        if n_tree > 0 and len(cand) < size:
            kth = np.partition(d2, min(k, len(d2)) - 1)[min(k, len(d2)) - 1]
            radius = math.sqrt(kth) * (1 + 1e-9) + 1e-12
            ball = np.asarray(self._tree.query_ball_point(query, radius), dtype=np.intp)
            if self._stale and len(ball):
                ball = ball[~np.isin(ball, dirty)]
            extra = np.setdiff1d(ball, cand, assume_unique=False)
            if len(extra):
                cand = np.concatenate([cand, extra])
                d2 = np.concatenate([d2, squared_distances(keys[extra], query)])
                order = np.argsort(cand, kind="stable")
                cand, d2 = cand[order], d2[order]
        return _select_k(cand, d2, k)


def make_index(backend: str, capacity: int):
    if backend == "auto":
        backend = "tree" if capacity >= AUTO_TREE_CAPACITY else "naive"
    if backend == "naive":
        return NaiveIndex()
    if backend == "tree":
        return TreeIndex()
    raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")


class ActionMemory:
    """Bounded memory of (key, q) entries for one action.

    Parameters
    ----------
    capacity : int
        Maximum number of entries N.
    dim : int
        Key dimension.
    strategy : str
        One of ``lru``, ``rew``, ``sur``, ``km``, ``dkm``.
    backend : str
        ``naive``, ``tree`` or ``auto``.
    dkm_decay : float, optional
        Per-insert count decrement for ``dkm``. Defaults to ``1 / capacity``;
        ``0.0`` turns dkm into km.
    """

    def __init__(
        self,
        capacity: int,
        dim: int,
        strategy: str = "lru",
        backend: str = "naive",
        dkm_decay: Optional[float] = None,
    ):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
        self.capacity = capacity
        self.dim = dim
        self.strategy = strategy
        self.dkm_decay = 1.0 / capacity if dkm_decay is None else float(dkm_decay)

        self.keys = np.zeros((capacity, dim))
        self.q = np.zeros(capacity)
        self.last_used = np.zeros(capacity, dtype=np.int64)
        self.surprise = np.zeros(capacity)
        self.count = np.zeros(capacity)
        self.size = 0

        self.index = make_index(backend, capacity)
        # bitwise key -> slot; only valid while keys cannot move
        self._exact: dict = {}

    def __len__(self):
        return self.size

    @property
    def full(self) -> bool:
        return self.size >= self.capacity

    @property
    def clustering(self) -> bool:
        return self.strategy in ("km", "dkm")

    def _check_key(self, key) -> np.ndarray:
        key = np.asarray(key, dtype=float)
        if key.shape != (self.dim,):
            raise ValueError(f"key shape {key.shape} does not match memory dim {self.dim}")
        if not np.all(np.isfinite(key)):
            raise ValueError("key has non-finite components")
        return key

    # ------------------------------------------------------------------
    # reads
    # ------------------------------------------------------------------

    def knn(self, query, k: int):
        """Indices and squared distances of the ``min(k, size)`` nearest entries."""
        if self.size == 0:
            raise EmptyMemoryError("empty memory")
        if k < 1:
            raise ValueError("k must be >= 1")
        query = self._check_key(query)
        return self.index.knn(self.keys, self.size, query, k)

    def q_estimate(self, query, params: KernelParams, now: Optional[int] = None) -> float:
        """Kernel-weighted mean of neighbour q-values.

        Neighbours are stamped with ``now`` for LRU bookkeeping; pass
        ``now=None`` for a read that leaves the memory untouched.
        """
        idx, d2 = self.knn(query, params.k)
        w = 1.0 / (d2 + params.delta)
        qs = self.q[idx]
        value = float(np.dot(w, qs) / w.sum())
        if now is not None:
            self.last_used[idx] = now
        # rounding can push the quotient one ulp outside the hull
        return min(max(value, float(qs.min())), float(qs.max()))

    def exact_index(self, key) -> Optional[int]:
        key = np.asarray(key, dtype=float)
        return self._exact.get(key.tobytes())

    def select_victim(self) -> int:
        """Slot to overwrite in a full lru/rew/sur memory."""
        if self.clustering:
            raise ValueError(f"select_victim is undefined for strategy {self.strategy!r}")
        if not self.full:
            raise ValueError("select_victim called on a memory that is not full")
        if self.strategy == "lru":
            return int(np.argmin(self.last_used[: self.size]))
        if self.strategy == "rew":
            return int(np.argmin(self.q[: self.size]))
        return int(np.argmin(self.surprise[: self.size]))

    # ------------------------------------------------------------------
    # writes
    # ------------------------------------------------------------------

    def _surprise_of(self, key: np.ndarray, value: float, params: Optional[KernelParams]) -> float:
        if self.strategy != "sur":
            return 0.0
        if self.size == 0:
            return math.inf
        return abs(value - self.q_estimate(key, params or KernelParams(), now=None))

    def _write(self, i: int, key: np.ndarray, value: float, now: int, surprise: float):
        if i < self.size:
            old = self.keys[i].tobytes()
            if self._exact.get(old) == i:
                del self._exact[old]
            self.index.invalidate(i)
        self.keys[i] = key
        self.q[i] = value
        self.count[i] = 1.0
        self.last_used[i] = now
        self.surprise[i] = surprise
        if not (self.clustering and self.full):
            self._exact[key.tobytes()] = i

    def insert(self, key, value: float, now: int = 0, params: Optional[KernelParams] = None) -> InsertEffect:
        """Write return ``value`` for state ``key``.

        ``params`` is only consulted by ``sur``, whose surprise for a fresh
        entry is measured against the memory as it was before the write.
        """
        key = self._check_key(key)
        value = float(value)
        if not math.isfinite(value):
            raise ValueError("value must be finite")

        if not (self.clustering and self.full):
            hit = self._exact.get(key.tobytes())
            if hit is not None:
                old = self.q[hit]
                self.q[hit] = max(old, value)
                self.surprise[hit] = abs(value - old)
                self.last_used[hit] = now
                return InsertEffect("updated", hit)

        if not self.full:
            surprise = self._surprise_of(key, value, params)
            i = self.size
            self._write(i, key, value, now, surprise)
            self.size += 1
            if self.clustering and self.full:
                self._exact.clear()
            return InsertEffect("appended", i)

        if self.strategy == "km":
            return self.km_merge(key, value, now)
        if self.strategy == "dkm":
            return self.dkm_insert(key, value, now)

        surprise = self._surprise_of(key, value, params)
        victim = self.select_victim()
        self._write(victim, key, value, now, surprise)
        return InsertEffect("replaced", victim)

    def _merge_nearest(self, key: np.ndarray, value: float, now: int) -> int:
        idx, _ = self.index.knn(self.keys, self.size, key, 1)
        i = int(idx[0])
        n = self.count[i]
        self.keys[i] = (n * self.keys[i] + key) / (n + 1)
        self.q[i] = (n * self.q[i] + value) / (n + 1)
        self.count[i] = n + 1
        self.last_used[i] = now
        self.index.invalidate(i)
        return i

    def km_merge(self, key, value: float, now: int = 0) -> InsertEffect:
        """Fold (key, value) into the nearest cluster by running mean."""
        if not self.full:
            raise ValueError("km_merge requires a full memory")
        key = self._check_key(key)
        return InsertEffect("merged", self._merge_nearest(key, float(value), now))

    def dkm_insert(self, key, value: float, now: int = 0) -> InsertEffect:
        """Dynamic online k-means step on a full memory.

        A cluster whose count has fallen to <= 0 (lowest count first) is
        overwritten by the new state without decaying the others. Otherwise
        the state is merged into its nearest cluster and every count drops by
        ``dkm_decay``.
        """
        if not self.full:
            raise ValueError("dkm_insert requires a full memory")
        key = self._check_key(key)
        counts = self.count[: self.size]
        dead = int(np.argmin(counts))
        if counts[dead] <= 0:
            self._write(dead, key, float(value), now, 0.0)
            return InsertEffect("replaced", dead)
        i = self._merge_nearest(key, float(value), now)
        if self.dkm_decay:
            counts -= self.dkm_decay
        return InsertEffect("merged", i)

    # ------------------------------------------------------------------

    def entries(self):
        """Copy of the live contents as a dict of arrays."""
        n = self.size
        return {
            "keys": self.keys[:n].copy(),
            "q": self.q[:n].copy(),
            "last_used": self.last_used[:n].copy(),
            "surprise": self.surprise[:n].copy(),
            "count": self.count[:n].copy(),
        }


def lookup_best_action(
    memories: Sequence[ActionMemory],
    key,
    params: KernelParams,
    now: Optional[int] = None,
):
    """Greedy action over per-action estimates.

    Empty memories count as +inf so unseen actions get tried first. Raises
    :class:`EmptyMemoryError` when every memory is empty.
    """
    if all(m.size == 0 for m in memories):
        raise EmptyMemoryError("all action memories are empty")
    best_a, best_v = -1, -math.inf
    for a, mem in enumerate(memories):
        v = math.inf if mem.size == 0 else mem.q_estimate(key, params, now=now)
        if v > best_v:
            best_a, best_v = a, v
    return best_a, best_v
