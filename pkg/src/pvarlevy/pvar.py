"""Strong p-variation of node paths and the quantities built from it.

For a path that is linear between nodes, the supremum over arbitrary real
partitions is attained on node times: a point strictly inside a linear
segment never helps, because for collinear increments
``|a + b|^p >= |a|^p + |b|^p`` when ``p >= 1``.  Jumps are stored as a
pre/post node pair, so left limits are nodes as well.  Every routine below
therefore maximises over subsequences of the node list.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from ._kernels import pvar_dp, pvar_dp_windowed
from .core_path import (CONT, CadlagPath, PathError, as_point, from_grid_values,
                        jump_arrays, linear_combination)

BRUTE_MAX_NODES = 20


@dataclass(frozen=True)
class PVarOutcome:
    """p-variation ``value`` of a path with a maximising node partition.

    ``complete`` is False when the computation stopped early because the
    running value already reached a requested threshold; ``value`` is then
    a lower bound at or above that threshold.
    """
    value: float
    p: float
    partition: tuple[int, ...]
    complete: bool = True

    @property
    def value_p(self) -> float:
        return self.value ** self.p


def _check_p(p: float) -> float:
    p = float(p)
    if not p >= 1.0:
        raise ValueError(f"p must be >= 1, got {p}")
    return p


def _nodes(path) -> np.ndarray:
    x = path.values if isinstance(path, CadlagPath) else np.asarray(path, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    return np.ascontiguousarray(x, dtype=float)


def _rescale(x: np.ndarray) -> tuple[np.ndarray, float]:
    """Shift and scale by a power of two when squared increments would under- or overflow."""
    m = float(np.max(np.abs(x - x[0]))) if len(x) else 0.0
    if m == 0.0 or 1e-100 < m < 1e100:
        return x, 1.0
    e = math.frexp(m)[1]
    return np.ascontiguousarray((x - x[0]) * math.ldexp(1.0, -e)), math.ldexp(1.0, e)


def _backtrack(back: np.ndarray, j: int) -> tuple[int, ...]:
    out = []
    while j >= 0:
        out.append(int(j))
        j = back[j]
    return tuple(reversed(out))


def pvar_exact(path, p: float, stop_at: float | None = None) -> PVarOutcome:
    """Exact p-variation over the node list by dynamic programming.

    ``stop_at`` (in value units) ends the scan as soon as the running
    maximum reaches it, which is all an indicator ``pvar < eps`` needs.
    """
    p = _check_p(p)
    x = _nodes(path)
    if len(x) == 0:
        raise PathError("empty path")
    # repeated consecutive values never change a partition sum
    keep = np.ones(len(x), dtype=bool)
    keep[1:] = np.any(x[1:] != x[:-1], axis=1)
    idx = np.flatnonzero(keep)
    xs, scale = _rescale(np.ascontiguousarray(x[keep]))
    limit = np.inf if stop_at is None else (float(stop_at) / scale) ** p
    best, back, last = pvar_dp(xs, p, limit)
    part = tuple(int(idx[i]) for i in _backtrack(back, last))
    complete = last == len(xs) - 1
    if complete and len(part) > 1:
        # the last kept node stands for the whole final run of equal values
        part = part[:-1] + (len(x) - 1,)
    return PVarOutcome(best[last] ** (1.0 / p) * scale, p, part, complete)


def pvar_value(path, p: float) -> float:
    return pvar_exact(path, p).value


def pvar_below(path, p: float, eps: float) -> bool:
    """Indicator ``pvar(path) < eps`` with early exit."""
    out = pvar_exact(path, p, stop_at=eps)
    return out.complete and out.value < eps


def _pow_table(x: np.ndarray, p: float) -> list[list[float]]:
    n, d = x.shape
    table = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            s = 0.0
            for k in range(d):
                u = float(x[j, k] - x[i, k])
                s += u * u
            table[i][j] = math.sqrt(s) ** p
    return table


def pvar_bruteforce(path, p: float) -> PVarOutcome:
    """Exhaustive maximum over all increasing node subsequences (at most 20 nodes).

    Sums are accumulated left to right, as in the dynamic program, so the
    two agree bit for bit.
    """
    p = _check_p(p)
    x = _nodes(path)
    n = len(x)
    if n == 0:
        raise PathError("empty path")
    if n > BRUTE_MAX_NODES:
        raise PathError(f"brute force limited to {BRUTE_MAX_NODES} nodes, got {n}")
    x, scale = _rescale(x)
    D = np.array(_pow_table(x, p))
    size = 1 << n
    val = np.zeros(size)
    top = np.full(size, -1, dtype=np.int64)
    for h in range(n):
        lo, hi = 1 << h, 1 << (h + 1)
        rest = np.arange(lo)
        prev = top[rest]
        add = np.where(prev >= 0, D[np.maximum(prev, 0), h], 0.0)
        val[lo:hi] = val[rest] + add
        top[lo:hi] = h
    k = int(np.argmax(val))
    part = tuple(i for i in range(n) if k >> i & 1) or (0,)
    return PVarOutcome(float(val[k]) ** (1.0 / p) * scale, p, part)


def partition_sum(path, partition, p: float) -> float:
    """Sum of |increments|^p over the given node indices."""
    x, scale = _rescale(_nodes(path)[list(partition)])
    inc = np.diff(x, axis=0)
    return float(np.sum(np.sqrt(np.sum(inc * inc, axis=1)) ** p)) * scale ** p


def pvar_window(path: CadlagPath, p: float, a: float, b: float) -> PVarOutcome:
    return pvar_exact(path.restrict(a, b), p)


# -- closed forms -------------------------------------------------------------

@dataclass(frozen=True)
class SawParams:
    n: int
    T: float
    v: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        object.__setattr__(self, "v", as_point(self.v))
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("saw needs n >= 1 teeth")
        if not self.T > 0:
            raise ValueError("saw needs T > 0")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "T", float(self.T))


def make_saw(params: SawParams) -> CadlagPath:
    """Sawtooth t -> (nt/T - k) v on [kT/n, (k+1)T/n), dropping by v at each kT/n."""
    n, T, v = params.n, params.T, params.v
    ends = T * np.arange(1, n + 1) / n
    times = np.concatenate([[0.0], np.repeat(ends, 2)])
    kinds = np.concatenate([[CONT], np.tile([1, 2], n)]).astype(np.int8)
    coef = np.concatenate([[0.0], np.tile([1.0, 0.0], n)])
    return CadlagPath(times, coef[:, None] * v[None, :], kinds)


def saw_pvar_p(params: SawParams, p: float) -> float:
    """Closed-form p-th power of the saw's p-variation: 2 n |v|^p."""
    return 2 * params.n * float(np.linalg.norm(params.v)) ** p


def linear_path(a, T: float) -> CadlagPath:
    a = as_point(a)
    return CadlagPath.polygon([0.0, T], np.vstack([np.zeros_like(a), T * a]))


def make_step(values, T: float) -> CadlagPath:
    """f = v_i on [iT/n, (i+1)T/n) for i < n, and f(T) = v_n, with n = len(values) - 1."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v.reshape(-1, 1)
    n = len(v) - 1
    if n < 1:
        raise ValueError("a step path needs at least two values")
    grid = T * np.arange(n + 1) / n
    left = np.vstack([v[:1], v[:-1]])
    return from_grid_values(grid, left, v)


def step_bound(values, n: int, T: float, p: float) -> float:
    """Upper bound n * max |v_i - v_j|^p for the p-th power of the step path's p-variation."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v.reshape(-1, 1)
    if len(v) != n + 1:
        raise ValueError(f"expected {n + 1} values, got {len(v)}")
    v, scale = _rescale(v)
    diff = v[:, None, :] - v[None, :, :]
    return n * (float(np.max(np.linalg.norm(diff, axis=2))) * scale) ** p


def one_variation_decomposed(drift, jumps, T: float) -> float:
    """T|a| + sum |jump| : the 1-variation of t*a plus a pure-jump part."""
    a = as_point(drift)
    total = T * float(np.linalg.norm(a))
    for t, z in jumps:
        if not 0 <= t <= T:
            raise ValueError(f"jump time {t} outside [0, {T}]")
        total += float(np.linalg.norm(as_point(z)))
    return total


def polygonal_approx(path: CadlagPath, n: int, T: float) -> CadlagPath:
    """Piecewise-linear interpolation of a continuous path at kT/n."""
    if path.has_jumps:
        raise PathError("polygonal approximation needs a continuous path")
    grid = T * np.arange(n + 1) / n
    return CadlagPath.polygon(grid, path.evaluate(grid))


def pvar_norm(path: CadlagPath, p: float, n_max: int) -> float:
    """sum_{n <= n_max} 2^-n (1 ^ pvar over [0, n]); the omitted tail is at most 2^-n_max."""
    if path.start > 0 or path.end < n_max:
        raise PathError(f"path must cover [0, {n_max}]")
    total = 0.0
    for n in range(1, n_max + 1):
        total += 2.0 ** -n * min(1.0, pvar_exact(path.restrict(0.0, float(n)), p).value)
    return total


def refine(path: CadlagPath, h: float) -> CadlagPath:
    """Insert equally spaced nodes so that consecutive distinct times are at most h apart."""
    t, x, k = path.times, path.values, path.kinds
    T, X, K = [t[:1]], [x[:1]], [k[:1]]
    for i in range(1, len(t)):
        dt = t[i] - t[i - 1]
        if dt > h:
            m = int(math.ceil(dt / h))
            s = np.arange(1, m) / m
            T.append(t[i - 1] + s * dt)
            X.append(x[i - 1] + s[:, None] * (x[i] - x[i - 1]))
            K.append(np.full(m - 1, CONT, dtype=np.int8))
        T.append(t[i:i + 1]); X.append(x[i:i + 1]); K.append(k[i:i + 1])
    return CadlagPath(np.concatenate(T), np.vstack(X), np.concatenate(K))


def regularity_modulus(path: CadlagPath, p: float, mesh: float, refine_by: int = 8) -> float:
    """sup of sum |increments|^p over partitions of the path's domain with steps <= mesh.

    Linear pieces are first refined to a spacing of mesh/refine_by so that
    partitions can fill each window.
    """
    p = _check_p(p)
    if path.has_jumps:
        raise PathError("regularity modulus is defined for continuous paths")
    if not mesh > 0:
        raise ValueError("mesh must be positive")
    fine = refine(path, mesh / refine_by)
    best, _ = pvar_dp_windowed(fine.times, np.ascontiguousarray(fine.values), p,
                               mesh * (1 + 1e-12))
    return float(best[-1])


# -- changes of time and the p-Skorohod bound ---------------------------------

@dataclass(frozen=True)
class ChangeOfTime:
    """Piecewise-linear increasing map with lam(s[i]) = t[i]; slope 1 after the last breakpoint."""
    s: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        t = np.asarray(self.t, dtype=float)
        if s.shape != t.shape or s.ndim != 1 or len(s) < 1:
            raise ValueError("breakpoints must be two equal-length 1-d arrays")
        if s[0] != 0 or t[0] != 0:
            raise ValueError("a change of time starts at (0, 0)")
        if np.any(np.diff(s) <= 0) or np.any(np.diff(t) <= 0):
            raise ValueError("a change of time must be strictly increasing")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "ChangeOfTime":
        return cls(np.zeros(1), np.zeros(1))

    @classmethod
    def from_pairs(cls, pairs) -> "ChangeOfTime":
        pairs = sorted({(float(a), float(b)) for a, b in pairs} | {(0.0, 0.0)})
        return cls(np.array([a for a, _ in pairs]), np.array([b for _, b in pairs]))

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        out = np.interp(u, self.s, self.t)
        tail = u > self.s[-1]
        return np.where(tail, self.t[-1] + (u - self.s[-1]), out)

    def inverse(self, v):
        v = np.asarray(v, dtype=float)
        out = np.interp(v, self.t, self.s)
        tail = v > self.t[-1]
        return np.where(tail, self.s[-1] + (v - self.t[-1]), out)

    def slopes(self) -> np.ndarray:
        return np.diff(self.t) / np.diff(self.s)

    def log_slope_term(self) -> float:
        """sup_{s<t} |log((lam_t - lam_s)/(t - s))|, attained on single segments."""
        sl = self.slopes()
        return float(np.max(np.abs(np.log(sl)))) if len(sl) else 0.0


def _kn(t, n):
    return np.clip(n + 1.0 - np.asarray(t, dtype=float), 0.0, 1.0)


def time_changed_difference(f: CadlagPath, g: CadlagPath, n: int, lam: ChangeOfTime,
                            dense: int = 64) -> CadlagPath:
    """Node path of t -> k_n(t) f(lam_t) - k_n(t) g(t) on [0, n+1].

    The product with k_n is not linear on [n, n+1]; that window is refined
    with ``dense`` points per piece.
    """
    H = float(n + 1)
    if f.dim != g.dim:
        raise PathError("dimension mismatch")
    if g.start > 0 or g.end < H or f.start > 0 or float(lam(H)) > f.end:
        raise PathError(f"paths must cover [0, {H}] after the change of time")
    pts = np.concatenate([g.times, lam.inverse(f.times), lam.s, [0.0, float(n), H]])
    grid = np.unique(pts[(pts >= 0) & (pts <= H)])
    tail = grid[grid >= n]
    if len(tail) > 1:
        extra = [a + (b - a) * np.arange(1, dense) / dense for a, b in zip(tail[:-1], tail[1:])]
        grid = np.unique(np.concatenate([grid] + extra))
    lt = lam(grid)
    k = _kn(grid, n)[:, None]
    right = k * (f.evaluate(lt) - g.evaluate(grid))
    left = k * (f.left_limit(lt) - g.left_limit(grid))
    return from_grid_values(grid, left, right)


def skorohod_upper(f: CadlagPath, g: CadlagPath, p: float, n: int,
                   lam: ChangeOfTime | None = None) -> float:
    """log-slope term plus |||k_n f(lam) - k_n g|||_{n+1,p}: an upper bound for d_p^n."""
    lam = ChangeOfTime.identity() if lam is None else lam
    h = time_changed_difference(f, g, n, lam)
    return lam.log_slope_term() + pvar_exact(h, p).value


def _anchors(f: CadlagPath, g: CadlagPath, horizon: float):
    tf, _ = jump_arrays(f)
    tg, _ = jump_arrays(g)
    m = min(len(tf), len(tg))
    pairs = [(float(a), float(b)) for a, b in zip(tg[:m], tf[:m]) if 0 < a <= horizon and b > 0]
    # keep a strictly increasing chain
    out, last = [], (0.0, 0.0)
    for a, b in pairs:
        if a > last[0] and b > last[1]:
            out.append((a, b))
            last = (a, b)
    return out


def jump_aligned_time_change(f: CadlagPath, g: CadlagPath, horizon: float) -> ChangeOfTime:
    """Linear interpolation through lam(T_q) = t_q, where T_q and t_q are the
    jump times of g and f matched in order."""
    return ChangeOfTime.from_pairs(_anchors(f, g, horizon))


def dyadic_slope_time_change(anchors, placement: str = "start") -> ChangeOfTime | None:
    """Change of time with slopes in {1/2, 1, 2} hitting every anchor, or None.

    On each anchor interval an adjusting piece of slope 2 or 1/2 sits at the
    start or end of the interval, and the rest has slope 1.
    """
    pts = [(0.0, 0.0)]
    prev = (0.0, 0.0)
    for a, b in anchors:
        da, db = a - prev[0], b - prev[1]
        if db > da:
            s, rate = db - da, 2.0
        elif db < da:
            s, rate = 2 * (da - db), 0.5
        else:
            s, rate = 0.0, 1.0
        if s > da:
            return None
        if 0 < s < da:
            if placement == "start":
                pts.append((prev[0] + s, prev[1] + rate * s))
            else:
                pts.append((a - s, b - rate * s))
        pts.append((a, b))
        prev = (a, b)
    return ChangeOfTime.from_pairs(pts)


def skorohod_search(f: CadlagPath, g: CadlagPath, p: float, n: int) -> tuple[float, ChangeOfTime]:
    """Smallest bound over identity, the jump-aligned interpolant and the {1/2,1,2}-slope maps."""
    H = float(n + 1)
    anchors = _anchors(f, g, H)
    cands = [ChangeOfTime.identity()]
    if anchors:
        cands.append(ChangeOfTime.from_pairs(anchors))
        for where in ("start", "end"):
            lam = dyadic_slope_time_change(anchors, where)
            if lam is not None:
                cands.append(lam)
    best = (np.inf, cands[0])
    for lam in cands:
        try:
            val = skorohod_upper(f, g, p, n, lam)
        except PathError:
            continue
        if val < best[0]:
            best = (val, lam)
    if not np.isfinite(best[0]):
        raise PathError("no admissible change of time covers the horizon")
    return best
