"""Associative memory of (history feature, canonical future) pairs."""
from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

BANK_FORMAT = "terratrack-membank"
BANK_VERSION = 1


class ZeroVector(ValueError):
    pass


class EmptyBank(LookupError):
    pass


class MemoryBankFormatError(ValueError):
    pass


def cosine_distance(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ZeroVector("cosine distance undefined for a zero vector")
    return float(1.0 - np.dot(u, v) / (nu * nv))


@dataclass(frozen=True, eq=False)
class MemoryHit:
    slot: int
    insertion: int
    distance: float
    future: np.ndarray  # (F, 3) canonical


class MemoryBank:
    """Fixed-capacity store. Writes happen only on surprise (error above ``write_threshold``).

    When full, the least-recently-retrieved entry is evicted; entries never
    retrieved count as least recent, oldest insertion first.
    """

    def __init__(self, feature_dim: int, history_len: int, future_len: int,
                 capacity: int = 5000, write_threshold: float = 0.5):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.feature_dim = int(feature_dim)
        self.history_len = int(history_len)
        self.future_len = int(future_len)
        self.capacity = int(capacity)
        self.write_threshold = float(write_threshold)
        self._n = 0
        self._alloc(0)
        self._next_insert = 0
        self._tick = 0

    def _alloc(self, size: int) -> None:
        n = getattr(self, "_n", 0)
        old = {k: getattr(self, "_" + k, None) for k in ("features", "unit", "futures", "usage", "inserted", "last_used")}
        self._features = np.zeros((size, self.feature_dim))
        self._unit = np.zeros((size, self.feature_dim))
        self._futures = np.zeros((size, self.future_len, 3))
        self._usage = np.zeros(size, dtype=np.int64)
        self._inserted = np.zeros(size, dtype=np.int64)
        self._last_used = np.zeros(size, dtype=np.int64)
        for k, arr in old.items():
            if arr is not None and n:
                getattr(self, "_" + k)[:n] = arr[:n]

    features = property(lambda self: self._features[: self._n])
    unit = property(lambda self: self._unit[: self._n])
    futures = property(lambda self: self._futures[: self._n])
    usage = property(lambda self: self._usage[: self._n])
    inserted = property(lambda self: self._inserted[: self._n])
    last_used = property(lambda self: self._last_used[: self._n])

    def __len__(self) -> int:
        return self._n

    def _check(self, h: np.ndarray, future: np.ndarray) -> None:
        if h.shape != (self.feature_dim,):
            raise ValueError(f"feature shape {h.shape} != ({self.feature_dim},)")
        if future.shape != (self.future_len, 3):
            raise ValueError(f"future shape {future.shape} != ({self.future_len}, 3)")

    def add(self, h, future) -> int:
        """Unconditionally store an entry; returns the slot used."""
        h = np.asarray(h, dtype=float)
        future = np.asarray(future, dtype=float)
        self._check(h, future)
        norm = np.linalg.norm(h)
        if norm == 0 or not np.isfinite(norm):
            raise ZeroVector("cannot store a zero or non-finite feature")
        if self._n < self.capacity:
            if self._n == len(self._features):
                self._alloc(min(self.capacity, max(64, 2 * self._n)))
            slot = self._n
            self._n += 1
        else:
            slot = int(np.lexsort((self.inserted, self.last_used))[0])
        self._features[slot] = h
        self._unit[slot] = h / norm
        self._futures[slot] = future
        self._usage[slot] = 0
        self._inserted[slot] = self._next_insert
        self._last_used[slot] = -1
        self._next_insert += 1
        return slot

    def extend(self, features: np.ndarray, futures: np.ndarray) -> None:
        for h, f in zip(features, futures):
            self.add(h, f)

    def distances(self, h) -> np.ndarray:
        h = np.asarray(h, dtype=float)
        n = np.linalg.norm(h)
        if n == 0:
            raise ZeroVector("query feature is zero")
        return 1.0 - self.unit @ (h / n)

    def touch(self, slots) -> None:
        self._tick += 1
        for s in slots:
            self._usage[s] += 1
            self._last_used[s] = self._tick

    def save(self, path) -> None:
        buf = io.BytesIO()
        np.savez(
            buf,
            header=np.array([BANK_FORMAT]),
            version=np.array(BANK_VERSION),
            dims=np.array([self.feature_dim, self.history_len, self.future_len, self.capacity]),
            write_threshold=np.array(self.write_threshold),
            counters=np.array([self._next_insert, self._tick]),
            features=self.features,
            futures=self.futures,
            usage=self.usage,
            inserted=self.inserted,
            last_used=self.last_used,
        )
        Path(path).write_bytes(buf.getvalue())

    @classmethod
    def load(cls, path, feature_dim: int | None = None, history_len: int | None = None,
             future_len: int | None = None) -> "MemoryBank":
        try:
            with np.load(path, allow_pickle=False) as z:
                if str(z["header"][0]) != BANK_FORMAT:
                    raise MemoryBankFormatError(f"{path}: not a memory bank")
                if int(z["version"]) != BANK_VERSION:
                    raise MemoryBankFormatError(f"{path}: bank version {int(z['version'])} != {BANK_VERSION}")
                dim, H, F, cap = (int(v) for v in z["dims"])
                expected = {"feature dim": (feature_dim, dim), "H": (history_len, H), "F": (future_len, F)}
                for name, (want, got) in expected.items():
                    if want is not None and want != got:
                        raise MemoryBankFormatError(f"{path}: {name} mismatch (file {got}, expected {want})")
                bank = cls(dim, H, F, cap, float(z["write_threshold"]))
                feats = z["features"].astype(float)
                n = len(feats)
                if feats.shape[1:] != (dim,) or z["futures"].shape[1:] != (F, 3) or n > cap:
                    raise MemoryBankFormatError(f"{path}: stored arrays inconsistent with header")
                bank._alloc(n)
                bank._n = n
                bank._features[:] = feats
                norms = np.linalg.norm(feats, axis=1, keepdims=True)
                bank._unit[:] = feats / np.where(norms > 0, norms, 1.0)
                bank._futures[:] = z["futures"]
                bank._usage[:] = z["usage"]
                bank._inserted[:] = z["inserted"]
                bank._last_used[:] = z["last_used"]
                bank._next_insert, bank._tick = (int(v) for v in z["counters"])
        except (OSError, KeyError, ValueError) as exc:
            if isinstance(exc, MemoryBankFormatError):
                raise
            raise MemoryBankFormatError(f"{path}: unreadable memory bank ({exc})") from exc
        return bank


def retrieve_topk(bank: MemoryBank, h, k: int = 5, touch: bool = True) -> list[MemoryHit]:
    """The ``k`` entries closest to ``h`` by cosine distance; ties go to the earlier insertion."""
    if len(bank) == 0:
        raise EmptyBank("memory bank is empty")
    d = bank.distances(h)
    k = min(k, len(d))
    if k < len(d):
        kth = np.partition(d, k - 1)[k - 1]
        cand = np.flatnonzero(d <= kth)
    else:
        cand = np.arange(len(d))
    order = cand[np.lexsort((bank.inserted[cand], d[cand]))][:k]
    if touch:
        bank.touch(order)
    return [MemoryHit(int(s), int(bank.inserted[s]), float(d[s]), bank.futures[s].copy()) for s in order]


def memory_write(bank: MemoryBank, h, future, realized_error: float) -> bool:
    """Store ``(h, future)`` iff ``realized_error`` exceeds the bank's write threshold."""
    if not realized_error > bank.write_threshold:
        return False
    h = np.asarray(h, dtype=float)
    if np.linalg.norm(h) == 0:
        return False
    bank.add(h, future)
    return True
