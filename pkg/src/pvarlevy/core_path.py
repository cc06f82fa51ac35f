"""Finite-dimensional càdlàg paths stored as node lists.

A path is a time-ordered list of nodes.  Each node is a continuity node
(``c``), or half of a jump pair: a ``pre`` node holding the left limit,
immediately followed by a ``post`` node at the same time holding the
right-continuous value.  Between consecutive nodes with distinct times the
path is linear.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CONT, PRE, POST = 0, 1, 2
KIND_NAMES = {CONT: "c", PRE: "pre", POST: "post"}
KIND_CODES = {v: k for k, v in KIND_NAMES.items()}


class PathError(ValueError):
    """Raised when a path violates its invariants or an argument is out of domain."""


def as_point(x, dim: int | None = None) -> np.ndarray:
    a = np.atleast_1d(np.asarray(x, dtype=float)).copy()
    if a.ndim != 1:
        raise PathError(f"point must be a vector, got shape {a.shape}")
    if dim is not None and a.shape[0] != dim:
        raise PathError(f"point has dimension {a.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(a)):
        raise PathError("point entries must be finite")
    return a


@dataclass(frozen=True)
class Subspace:
    """Span of an orthonormal family in R^d (the empty family spans {0})."""

    basis: np.ndarray  # shape (k, d)
    dim: int

    def __init__(self, basis, dim: int | None = None):
        b = np.asarray(basis, dtype=float)
        if b.size == 0:
            if dim is None:
                raise PathError("empty basis needs an explicit ambient dimension")
            b = np.zeros((0, dim))
        b = np.atleast_2d(b)
        d = b.shape[1] if dim is None else dim
        if b.shape[1] != d:
            raise PathError("basis vectors do not match the ambient dimension")
        if b.shape[0] > d:
            raise PathError("more basis vectors than the ambient dimension")
        gram = b @ b.T
        if not np.allclose(gram, np.eye(b.shape[0]), atol=1e-12, rtol=0):
            raise PathError("basis is not orthonormal within 1e-12")
        object.__setattr__(self, "basis", b)
        object.__setattr__(self, "dim", d)

    @classmethod
    def full(cls, d: int) -> "Subspace":
        return cls(np.eye(d))

    @classmethod
    def zero(cls, d: int) -> "Subspace":
        return cls(np.zeros((0, d)), dim=d)

    @classmethod
    def span(cls, vectors, dim: int | None = None, tol: float = 1e-10) -> "Subspace":
        """Orthonormalise arbitrary spanning vectors."""
        v = np.atleast_2d(np.asarray(vectors, dtype=float))
        if v.size == 0:
            return cls.zero(dim)
        u, s, vt = np.linalg.svd(v, full_matrices=False)
        rank = int(np.sum(s > tol * max(1.0, s.max())))
        return cls(vt[:rank], dim=v.shape[1])

    @property
    def rank(self) -> int:
        return self.basis.shape[0]

    @property
    def projector(self) -> np.ndarray:
        return self.basis.T @ self.basis

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x @ self.basis.T) @ self.basis

    def complement(self) -> "Subspace":
        if self.rank == self.dim:
            return Subspace.zero(self.dim)
        if self.rank == 0:
            return Subspace.full(self.dim)
        _, _, vt = np.linalg.svd(self.basis, full_matrices=True)
        return Subspace(vt[self.rank:], dim=self.dim)


@dataclass(frozen=True)
class CadlagPath:
    times: np.ndarray   # (n,)
    values: np.ndarray  # (n, d)
    kinds: np.ndarray   # (n,) int8 codes
    _checked: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        t = np.ascontiguousarray(self.times, dtype=float).reshape(-1)
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v.reshape(-1, 1)
        v = np.ascontiguousarray(v)
        k = np.ascontiguousarray(self.kinds, dtype=np.int8).reshape(-1)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "kinds", k)
        for a in (t, v, k):
            a.setflags(write=False)
        if not self._checked:
            _validate(t, v, k)

    # -- construction -------------------------------------------------------

    @classmethod
    def polygon(cls, times, values) -> "CadlagPath":
        t = np.asarray(times, dtype=float)
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v.reshape(-1, 1)
        return cls(t, v, np.zeros(len(t), dtype=np.int8))

    @classmethod
    def from_drift_and_jumps(cls, slope, jump_times, jump_sizes, T: float,
                             x0=None) -> "CadlagPath":
        """Linear drift ``slope`` on [0, T] with jumps added at ``jump_times``.

        Jump times must lie in (0, T] and be distinct; they are sorted here.
        """
        slope = as_point(slope)
        d = slope.shape[0]
        x0 = np.zeros(d) if x0 is None else as_point(x0, d)
        jt = np.asarray(jump_times, dtype=float).reshape(-1)
        js = np.asarray(jump_sizes, dtype=float).reshape(len(jt), d)
        order = np.argsort(jt, kind="stable")
        jt, js = jt[order], js[order]
        if len(jt) and (jt[0] <= 0 or jt[-1] > T):
            raise PathError("jump times must lie in (0, T]")
        if len(jt) > 1 and np.any(np.diff(jt) == 0):
            raise PathError("jump times must be distinct")
        m = len(jt)
        ends_with_jump = m > 0 and jt[-1] == T
        n = 1 + 2 * m + (0 if ends_with_jump else 1)
        times = np.empty(n)
        kinds = np.empty(n, dtype=np.int8)
        values = np.empty((n, d))
        times[0], kinds[0] = 0.0, CONT
        times[1:1 + 2 * m:2] = jt
        times[2:2 + 2 * m:2] = jt
        kinds[1:1 + 2 * m:2] = PRE
        kinds[2:2 + 2 * m:2] = POST
        if not ends_with_jump:
            times[-1], kinds[-1] = T, CONT
        cum = np.zeros((m + 1, d))
        np.cumsum(js, axis=0, out=cum[1:])
        # number of jumps already applied at each node
        applied = np.zeros(n, dtype=np.int64)
        applied[1:1 + 2 * m:2] = np.arange(m)
        applied[2:2 + 2 * m:2] = np.arange(1, m + 1)
        if not ends_with_jump:
            applied[-1] = m
        values[:] = x0 + times[:, None] * slope[None, :] + cum[applied]
        return cls(times, values, kinds, _checked=True)

    # -- basic accessors ----------------------------------------------------

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    def __len__(self) -> int:
        return len(self.times)

    @property
    def has_jumps(self) -> bool:
        return bool(np.any(self.kinds == PRE))

    def _check_domain(self, t: np.ndarray):
        if np.any(t < self.times[0]) or np.any(t > self.times[-1]) or np.any(~np.isfinite(t)):
            raise PathError(f"time outside path domain [{self.start}, {self.end}]")

    def evaluate(self, t):
        """Right-continuous value at ``t`` (scalar or array of times)."""
        ts = np.asarray(t, dtype=float)
        flat = ts.reshape(-1)
        self._check_domain(flat)
        i = np.searchsorted(self.times, flat, side="right") - 1
        out = self._interp(i, flat)
        return out[0] if ts.ndim == 0 else out

    def left_limit(self, t):
        """Left limit at ``t``; equals the value at the first node time."""
        ts = np.asarray(t, dtype=float)
        flat = ts.reshape(-1)
        self._check_domain(flat)
        j = np.searchsorted(self.times, flat, side="left")
        exact = self.times[np.minimum(j, len(self) - 1)] == flat
        out = np.empty((len(flat), self.dim))
        out[exact] = self.values[j[exact]]
        ne = ~exact
        if np.any(ne):
            out[ne] = self._interp(j[ne] - 1, flat[ne])
        return out[0] if ts.ndim == 0 else out

    def _interp(self, i, t):
        n = len(self)
        i = np.clip(i, 0, n - 1)
        out = self.values[i].copy()
        inner = (i < n - 1) & (self.times[i] != t)
        if np.any(inner):
            a, b = i[inner], i[inner] + 1
            w = (t[inner] - self.times[a]) / (self.times[b] - self.times[a])
            out[inner] = self.values[a] + w[:, None] * (self.values[b] - self.values[a])
        return out

    # -- restrictions -------------------------------------------------------

    def restrict(self, a: float, b: float) -> "CadlagPath":
        """Path on [a, b]; a jump at ``b`` is kept, a jump at ``a`` contributes its post value."""
        if not (self.start <= a <= b <= self.end):
            raise PathError(f"window [{a}, {b}] not inside [{self.start}, {self.end}]")
        inside = (self.times > a) & (self.times < b)
        t0 = [a]
        v0 = [self.evaluate(a)]
        k0 = [CONT]
        tt = list(self.times[inside])
        vv = list(self.values[inside])
        kk = list(self.kinds[inside])
        if b > a:
            left, right = self.left_limit(b), self.evaluate(b)
            if np.array_equal(left, right):
                tt.append(b); vv.append(right); kk.append(CONT)
            else:
                tt += [b, b]; vv += [left, right]; kk += [PRE, POST]
        return CadlagPath(np.array(t0 + tt), np.array(v0 + vv).reshape(-1, self.dim),
                          np.array(k0 + kk, dtype=np.int8))

    # -- serialisation ------------------------------------------------------

    def to_csv(self, file) -> None:
        header = ["time", "kind"] + [f"x{i + 1}" for i in range(self.dim)]
        close = False
        if isinstance(file, (str, Path)):
            file = open(file, "w", newline="")
            close = True
        try:
            w = csv.writer(file, lineterminator="\n")
            w.writerow(header)
            for t, k, v in zip(self.times, self.kinds, self.values):
                w.writerow([repr(float(t)), KIND_NAMES[int(k)]] + [repr(float(x)) for x in v])
        finally:
            if close:
                file.close()

    @classmethod
    def from_csv(cls, file) -> "CadlagPath":
        close = False
        if isinstance(file, (str, Path)):
            file = open(file, newline="")
            close = True
        try:
            rows = list(csv.reader(file))
        finally:
            if close:
                file.close()
        if not rows or rows[0][:2] != ["time", "kind"]:
            raise PathError("path CSV must start with header time,kind,x1..xd")
        d = len(rows[0]) - 2
        if d < 1:
            raise PathError("path CSV has no coordinate columns")
        times, kinds, values = [], [], []
        for r in rows[1:]:
            if not r:
                continue
            if len(r) != d + 2:
                raise PathError(f"bad row length in path CSV: {r}")
            times.append(float(r[0]))
            try:
                kinds.append(KIND_CODES[r[1]])
            except KeyError:
                raise PathError(f"unknown node kind {r[1]!r}") from None
            values.append([float(x) for x in r[2:]])
        return cls(np.array(times), np.array(values).reshape(-1, d),
                   np.array(kinds, dtype=np.int8))


def _validate(t, v, k):
    n = len(t)
    if n == 0:
        raise PathError("a path needs at least one node")
    if v.shape[0] != n or len(k) != n:
        raise PathError("times, values and kinds differ in length")
    if v.shape[1] < 1:
        raise PathError("dimension must be at least 1")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
        raise PathError("non-finite entries in path")
    if t[0] < 0:
        raise PathError("first node time must be >= 0")
    if not np.all(np.isin(k, (CONT, PRE, POST))):
        raise PathError("unknown node kind code")
    dt = np.diff(t)
    if np.any(dt < 0):
        raise PathError("node times must be nondecreasing")
    pre = np.flatnonzero(k == PRE)
    post = np.flatnonzero(k == POST)
    if len(pre) != len(post) or np.any(post != pre + 1):
        raise PathError("each pre node must be immediately followed by its post node")
    if np.any(t[pre] != t[post]):
        raise PathError("a jump pair must share one time")
    same = np.flatnonzero(dt == 0)
    if np.any(k[same] != PRE):
        raise PathError("repeated node times are only allowed for a pre/post pair")


# -- operations ---------------------------------------------------------------

def evaluate(path: CadlagPath, t):
    return path.evaluate(t)


def left_limit(path: CadlagPath, t):
    return path.left_limit(t)


def project(path: CadlagPath, sub: Subspace) -> CadlagPath:
    """Orthogonal projection of every node onto ``sub``, jump structure kept."""
    if sub.dim != path.dim:
        raise PathError(f"subspace lives in R^{sub.dim}, path in R^{path.dim}")
    return CadlagPath(path.times, sub.project(path.values), path.kinds, _checked=True)


def merged_grid(paths: Sequence[CadlagPath]) -> np.ndarray:
    lo = max(p.start for p in paths)
    hi = min(p.end for p in paths)
    if lo > hi:
        raise PathError("path domains do not overlap")
    grid = np.unique(np.concatenate([p.times for p in paths] + [[lo, hi]]))
    return grid[(grid >= lo) & (grid <= hi)]


def combine(a: CadlagPath, b: CadlagPath, weights=(1.0, 1.0)) -> CadlagPath:
    """Pointwise ``wa*a + wb*b`` on the union of node times (common domain)."""
    if a.dim != b.dim:
        raise PathError(f"dimension mismatch {a.dim} != {b.dim}")
    wa, wb = (float(w) for w in weights)
    return linear_combination([a, b], [wa, wb])


def linear_combination(paths: Sequence[CadlagPath], weights: Sequence[float]) -> CadlagPath:
    d = paths[0].dim
    if any(p.dim != d for p in paths):
        raise PathError("dimension mismatch")
    grid = merged_grid(paths)
    right = sum(w * p.evaluate(grid) for p, w in zip(paths, weights))
    left = sum(w * p.left_limit(grid) for p, w in zip(paths, weights))
    return from_grid_values(grid, left, right)


def from_grid_values(grid, left, right) -> CadlagPath:
    """Build a path from left limits and right values on a strictly increasing grid.

    A pre/post pair is emitted wherever the two differ (never at ``grid[0]``).
    """
    grid = np.asarray(grid, dtype=float)
    left = np.asarray(left, dtype=float).reshape(len(grid), -1)
    right = np.asarray(right, dtype=float).reshape(len(grid), -1)
    d = right.shape[1]
    jump = np.any(right != left, axis=1)
    jump[0] = False
    n = len(grid) + int(jump.sum())
    times = np.empty(n)
    values = np.empty((n, d))
    kinds = np.full(n, CONT, dtype=np.int8)
    pos = np.arange(len(grid)) + np.concatenate([[0], np.cumsum(jump)[:-1]])
    # a jump at grid[i] occupies pos[i] (pre) and pos[i] + 1 (post)
    times[pos] = grid
    values[pos] = np.where(jump[:, None], left, right)
    kinds[pos[jump]] = PRE
    jp = pos[jump] + 1
    times[jp] = grid[jump]
    values[jp] = right[jump]
    kinds[jp] = POST
    return CadlagPath(times, values, kinds)


def jump_list(path: CadlagPath) -> list[tuple[float, np.ndarray]]:
    pre = np.flatnonzero(path.kinds == PRE)
    return [(float(path.times[i]), path.values[i + 1] - path.values[i]) for i in pre]


def jump_arrays(path: CadlagPath) -> tuple[np.ndarray, np.ndarray]:
    pre = np.flatnonzero(path.kinds == PRE)
    return path.times[pre], path.values[pre + 1] - path.values[pre]


def constant_path(x, T: float, t0: float = 0.0) -> CadlagPath:
    x = as_point(x)
    return CadlagPath.polygon([t0, T], np.vstack([x, x]))


def path_of_values(times: Iterable[float], values) -> CadlagPath:
    return CadlagPath.polygon(np.asarray(list(times), dtype=float), values)
