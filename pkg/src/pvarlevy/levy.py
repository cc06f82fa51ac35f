"""Lévy characteristics, their subspace/cone geometry and exact truncated simulation.

The jump measure is a finite list of atoms plus stable spherical components
``nu(dz) = sum_i w_i delta_{xi_i}(d theta) r^{-1-beta} dr``.  Components with
continuous densities are reduced to such lists by the discretisers in
``fixtures``.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linprog, nnls

from .core_path import CadlagPath, Subspace, as_point

ORTHO_TOL = 1e-10


class ModelError(ValueError):
    pass


def _rng(seed, task: int = 0) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng([int(seed), int(task)])


def radial_integral(beta: float, k: float, lo: float, hi: float) -> float:
    """int_lo^hi r^(k - 1 - beta) dr, infinite when it diverges at 0."""
    e = k - beta
    if hi <= lo:
        return 0.0
    if lo <= 0:
        return math.inf if e <= 0 else hi ** e / e
    if e == 0:
        return math.log(hi / lo)
    return (hi ** e - lo ** e) / e


@dataclass(frozen=True)
class StableComponent:
    """w_i delta_{xi_i}(d theta) r^{-1-beta} dr on (0, 1], or on (0, inf) with ``big_jumps``."""
    beta: float
    directions: np.ndarray
    weights: np.ndarray
    big_jumps: bool = False

    def __post_init__(self):
        b = float(self.beta)
        if not 0 < b < 2:
            raise ModelError(f"stability index must lie in (0, 2), got {b}")
        dirs = np.atleast_2d(np.asarray(self.directions, dtype=float))
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(dirs) != len(w) or len(w) == 0:
            raise ModelError("stable component needs matching directions and weights")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ModelError("sphere weights must be positive")
        if np.any(np.abs(np.linalg.norm(dirs, axis=1) - 1) > 1e-9):
            raise ModelError("sphere directions must be unit vectors")
        object.__setattr__(self, "beta", b)
        object.__setattr__(self, "directions", dirs)
        object.__setattr__(self, "weights", w)

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def rate(self, lo: float, hi: float = 1.0) -> float:
        """Rate of jumps with lo <= |z| <= hi."""
        return self.total_weight * radial_integral(self.beta, 0.0, lo, hi)

    def first_moment(self, sub: Subspace | None, lo: float, hi: float = 1.0) -> np.ndarray:
        """int_{lo <= |z| <= hi} P z nu(dz), inf entries if divergent."""
        m = self.weights @ (self.directions if sub is None else sub.project(self.directions))
        m = np.where(np.abs(m) <= 1e-14, 0.0, m)
        rad = radial_integral(self.beta, 1.0, lo, hi)
        if math.isinf(rad):
            return np.where(m == 0, 0.0, np.copysign(math.inf, m))
        return m * rad


@dataclass(frozen=True)
class LevyModel:
    """Characteristics (alpha, nu) with a declared K/L split."""
    alpha: np.ndarray
    atom_points: np.ndarray
    atom_rates: np.ndarray
    stable: tuple = ()
    K: Subspace | None = None
    L: Subspace | None = None
    discretized: bool = False
    cone_generators: np.ndarray | None = None
    p_moment_budget: float | None = None
    name: str = ""

    def __post_init__(self):
        a = as_point(self.alpha)
        d = len(a)
        pts = np.asarray(self.atom_points, dtype=float).reshape(-1, d)
        rates = np.asarray(self.atom_rates, dtype=float).reshape(-1)
        if len(pts) != len(rates):
            raise ModelError("atoms need one rate per point")
        if np.any(rates <= 0) or not np.all(np.isfinite(pts)):
            raise ModelError("atom rates must be positive and points finite")
        if np.any(np.all(pts == 0, axis=1)):
            raise ModelError("an atom at the origin is not a jump")
        stable = tuple(self.stable)
        for c in stable:
            if c.directions.shape[1] != d:
                raise ModelError("stable directions have the wrong dimension")
        K = self.K if self.K is not None else Subspace.full(d)
        L = self.L if self.L is not None else K.complement()
        gens = None
        if self.cone_generators is not None:
            gens = np.asarray(self.cone_generators, dtype=float).reshape(-1, d)
        for k, v in (("alpha", a), ("atom_points", pts), ("atom_rates", rates),
                     ("stable", stable), ("K", K), ("L", L), ("cone_generators", gens)):
            object.__setattr__(self, k, v)
        self._validate_subspaces()

    @property
    def dim(self) -> int:
        return len(self.alpha)

    def _validate_subspaces(self):
        K, L, d = self.K, self.L, self.dim
        if K.dim != d or L.dim != d:
            raise ModelError("K and L must live in the model's space")
        if K.rank + L.rank != d:
            raise ModelError("dim K + dim L must equal the dimension")
        if K.rank and L.rank and np.max(np.abs(K.basis @ L.basis.T)) > ORTHO_TOL:
            raise ModelError("K and L must be orthogonal")
        heavy = self.heavy_directions()
        if len(heavy) and K.rank and np.max(np.abs(K.basis @ heavy.T)) > ORTHO_TOL:
            raise ModelError("a K direction has infinite first moment near 0")
        if not self.discretized:
            span = Subspace.span(heavy, d) if len(heavy) else Subspace.zero(d)
            if span.rank != L.rank:
                raise ModelError(
                    f"L must be the span of directions with infinite first moment "
                    f"(rank {span.rank}), declared rank {L.rank}")

    def heavy_directions(self) -> np.ndarray:
        """Directions along which int_{|z|<=1} |x*z| nu(dz) diverges."""
        rows = [c.directions for c in self.stable if c.beta >= 1]
        return np.vstack(rows) if rows else np.zeros((0, self.dim))

    def with_drift(self, alpha) -> "LevyModel":
        return replace(self, alpha=as_point(alpha, self.dim))

    # -- measure integrals --------------------------------------------------

    def atom_norms(self) -> np.ndarray:
        return np.linalg.norm(self.atom_points, axis=1)

    def rate(self, lo: float, hi: float = 1.0) -> float:
        """Rate of jumps with lo <= |z| <= hi (hi = inf allowed)."""
        n = self.atom_norms()
        total = float(self.atom_rates[(n >= lo) & (n <= hi)].sum())
        for c in self.stable:
            top = hi if c.big_jumps else min(hi, 1.0)
            total += c.rate(lo, top)
        return total

    def first_moment(self, sub: Subspace | None, lo: float, hi: float = 1.0) -> np.ndarray:
        """int_{lo <= |z| <= hi} P_sub z nu(dz) (hi <= 1 in all uses)."""
        n = self.atom_norms()
        sel = (n >= lo) & (n <= hi)
        pts = self.atom_points[sel]
        if sub is not None:
            pts = sub.project(pts)
        out = self.atom_rates[sel] @ pts if len(pts) else np.zeros(self.dim)
        for c in self.stable:
            out = out + c.first_moment(sub, lo, hi)
        return out

    def tail_rate(self, eta: float) -> float:
        return self.rate(eta, math.inf)

    # -- serialisation ------------------------------------------------------

    def to_dict(self) -> dict:
        out = {
            "schema": 1,
            "dimension": self.dim,
            "alpha": self.alpha.tolist(),
            "atoms": [{"point": p.tolist(), "rate": float(r)}
                      for p, r in zip(self.atom_points, self.atom_rates)],
            "stable": [{"beta": c.beta, "big_jumps": c.big_jumps,
                        "sphere": [{"direction": x.tolist(), "weight": float(w)}
                                   for x, w in zip(c.directions, c.weights)]}
                       for c in self.stable],
            "K_basis": self.K.basis.tolist(),
            "L_basis": self.L.basis.tolist(),
            "discretized": self.discretized,
        }
        if self.cone_generators is not None:
            out["cone_generators"] = self.cone_generators.tolist()
        if self.name:
            out["name"] = self.name
        return out

    def to_json(self, file) -> None:
        with open(file, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


MODEL_FIELDS = {"schema", "dimension", "alpha", "atoms", "stable", "K_basis", "L_basis",
                "discretized", "cone_generators", "name"}


def model_from_dict(data: dict) -> LevyModel:
    unknown = set(data) - MODEL_FIELDS
    if unknown:
        raise ModelError(f"unknown model fields: {sorted(unknown)}")
    if data.get("schema", 1) != 1:
        raise ModelError(f"unsupported schema {data['schema']}")
    try:
        d = int(data["dimension"])
        alpha = as_point(data.get("alpha", [0.0] * d), d)
    except KeyError as e:
        raise ModelError(f"missing model field {e}") from None
    atoms = data.get("atoms", [])
    pts = np.array([a["point"] for a in atoms], dtype=float).reshape(-1, d)
    rates = np.array([a["rate"] for a in atoms], dtype=float)
    st = data.get("stable") or []
    if isinstance(st, dict):
        st = [st]
    stable = []
    for s in st:
        extra = set(s) - {"beta", "sphere", "big_jumps"}
        if extra:
            raise ModelError(f"unknown stable fields: {sorted(extra)}")
        stable.append(StableComponent(
            s["beta"], [e["direction"] for e in s["sphere"]],
            [e["weight"] for e in s["sphere"]], bool(s.get("big_jumps", False))))
    K = Subspace(data["K_basis"], d) if "K_basis" in data else None
    L = Subspace(data["L_basis"], d) if "L_basis" in data else None
    if K is None and L is not None:
        K = L.complement()
    return LevyModel(alpha, pts, rates, tuple(stable), K, L,
                     bool(data.get("discretized", False)),
                     data.get("cone_generators"), name=data.get("name", ""))


def load_model(file) -> LevyModel:
    with open(file) as fh:
        return model_from_dict(json.load(fh))


# -- analytic quantities ------------------------------------------------------

def check_pvariation(model: LevyModel, p: float) -> float:
    """int_{|z|<=1} |z|^p nu(dz); raises when it diverges."""
    n = model.atom_norms()
    small = n <= 1
    total = float(model.atom_rates[small] @ n[small] ** p)
    for c in model.stable:
        if p <= c.beta:
            raise ModelError(f"p = {p} <= beta = {c.beta}: infinite p-variation")
        total += c.total_weight / (p - c.beta)
    return total


def with_budget(model: LevyModel, p: float) -> LevyModel:
    return replace(model, p_moment_budget=check_pvariation(model, p))


def k_integral(model: LevyModel) -> np.ndarray:
    """int_{|z|<=1} z_K nu(dz)."""
    m = model.first_moment(model.K, 0.0, 1.0)
    if not np.all(np.isfinite(m)):
        raise ModelError("K-projected first moment diverges: K declaration inconsistent")
    return m


def generalized_drift(model: LevyModel) -> np.ndarray:
    return model.alpha - k_integral(model)


def decompensate(model: LevyModel) -> LevyModel:
    """Same jump measure with drift alpha - alpha_nu = int z_K nu(dz)."""
    return model.with_drift(k_integral(model))


def truncated_slope(model: LevyModel, eta: float) -> np.ndarray:
    """Drift of Z^eta between jumps: alpha - int_{eta <= |z| <= 1} z nu(dz)."""
    return model.alpha - model.first_moment(None, eta, 1.0)


# -- sampling -----------------------------------------------------------------

def _stable_radii(rng, beta, n, lo, hi):
    u = rng.random(n)
    if math.isinf(hi):
        return (lo ** -beta * (1.0 - u)) ** (-1.0 / beta)
    a, b = lo ** -beta, hi ** -beta
    return (a - u * (a - b)) ** (-1.0 / beta)


def sample_jumps(model: LevyModel, T: float, lo: float, hi: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Jump times in (0, T] and sizes of all jumps with lo <= |z| < hi (hi may be inf)."""
    d = model.dim
    times, sizes = [], []
    n = model.atom_norms()
    sel = np.flatnonzero((n >= lo) & (n < hi))
    if len(sel):
        counts = rng.poisson(model.atom_rates[sel] * T)
        idx = np.repeat(sel, counts)
        sizes.append(model.atom_points[idx])
    for c in model.stable:
        bands = [(lo, min(hi, 1.0))]
        if c.big_jumps and hi > 1.0:
            bands.append((max(lo, 1.0), hi))
        for a, b in bands:
            if b <= a:
                continue
            rate = c.total_weight * radial_integral(c.beta, 0.0, a, b)
            m = rng.poisson(rate * T)
            dirs = rng.choice(len(c.weights), size=m, p=c.weights / c.total_weight)
            r = _stable_radii(rng, c.beta, m, a, b)
            sizes.append(r[:, None] * c.directions[dirs])
    sizes = np.vstack(sizes) if sizes else np.zeros((0, d))
    m = len(sizes)
    while True:
        t = T * (1.0 - rng.random(m))
        if m < 2 or len(np.unique(t)) == m:
            break
    order = np.argsort(t)
    return t[order], sizes[order]


def sample_path(model: LevyModel, T: float, eta: float, seed, task: int = 0) -> CadlagPath:
    """Exact simulation of Z^eta on [0, T]: every jump with |z| >= eta, compensated drift."""
    if not eta > 0:
        raise ModelError("truncation level must be positive")
    rng = _rng(seed, task)
    t, z = sample_jumps(model, T, eta, math.inf, rng)
    return CadlagPath.from_drift_and_jumps(truncated_slope(model, eta), t, z, T)


def sample_stable_subordinator(delta: float, a: float, seed=None, size=None, task: int = 0):
    """Positive stable draws with E exp(-u S) = exp(-a u^delta).

    Kanter's representation: with U uniform on (0, pi) and E standard
    exponential,
        S = (A(U) / E)^((1 - delta) / delta),
        A(u) = sin(delta u)^(delta/(1-delta)) sin((1-delta) u) / sin(u)^(1/(1-delta)),
    has Laplace transform exp(-u^delta); scaling by a^(1/delta) gives scale a.
    """
    if not 0 < delta < 1 or not a > 0:
        raise ValueError("need 0 < delta < 1 and a > 0")
    rng = _rng(0 if seed is None else seed, task)
    u = math.pi * rng.random(size)
    e = rng.standard_exponential(size)
    A = (np.sin(delta * u) ** (delta / (1 - delta)) * np.sin((1 - delta) * u)
         / np.sin(u) ** (1 / (1 - delta)))
    return a ** (1 / delta) * (A / e) ** ((1 - delta) / delta)


# -- cones and the small-deviation classifier ---------------------------------

@dataclass(frozen=True)
class ConeGeometry:
    """Closed convex cone generated by ``generators``; facets as rows n with n*z >= 0."""
    eta: float
    generators: np.ndarray
    hull_facets: np.ndarray | None

    def contains(self, z, tol: float = 1e-9) -> bool:
        if self.hull_facets is None:
            raise ValueError("facets unavailable for this cone")
        return bool(np.all(self.hull_facets @ as_point(z) >= -tol))


def _facets(G: np.ndarray, d: int, tol: float = 1e-10, max_subsets: int = 20000):
    if len(G) == 0:
        return np.vstack([np.eye(d), -np.eye(d)])
    span = Subspace.span(G, d)
    rows = []
    if span.rank < d:
        comp = span.complement().basis
        rows += [comp, -comp]
    if span.rank == 0:
        return np.vstack(rows)
    # facets inside the span: normals orthogonal to rank-1 generator subsets
    B = span.basis
    H = G @ B.T
    r = span.rank
    if r == 1:
        for s in (1.0, -1.0):
            if np.all(s * H[:, 0] >= -tol):
                rows.append(s * B[:1])
        return np.vstack(rows) if rows else np.zeros((0, d))
    n_sub = math.comb(len(H), r - 1)
    if n_sub > max_subsets:
        return None
    for sub in itertools.combinations(range(len(H)), r - 1):
        M = H[list(sub)]
        _, s, vt = np.linalg.svd(M)
        if np.sum(s > tol) < r - 1:
            continue
        nrm = vt[-1]
        for sg in (1.0, -1.0):
            vals = sg * (H @ nrm)
            if np.all(vals >= -tol):
                rows.append((sg * nrm) @ B)
    if not rows:
        return np.zeros((0, d))
    out = np.unique(np.round(np.vstack(rows), 12), axis=0)
    return out


def cone_geometry(model: LevyModel, eta: float) -> ConeGeometry:
    """C^eta from atoms with |z| <= eta and every stable ray (or declared generators)."""
    if model.cone_generators is not None:
        G = model.cone_generators
    else:
        n = model.atom_norms()
        rows = [model.atom_points[n <= eta]]
        rows += [c.directions for c in model.stable]
        G = np.vstack(rows)
    return ConeGeometry(eta, G, _facets(G, model.dim))


def limit_cone_generators(model: LevyModel) -> np.ndarray:
    """Generators of C = intersection of all C^eta: the scale-free rays."""
    if model.cone_generators is not None:
        return model.cone_generators
    rows = [c.directions for c in model.stable]
    return np.vstack(rows) if rows else np.zeros((0, model.dim))


def pointedness(G: np.ndarray) -> float:
    """max t with w*g >= t |g| for all generators, |w|_inf <= 1; > 0 iff the cone is pointed."""
    if len(G) == 0:
        return math.inf
    d = G.shape[1]
    Gn = G / np.linalg.norm(G, axis=1, keepdims=True)
    c = np.zeros(d + 1)
    c[-1] = -1.0
    A = np.hstack([-Gn, np.ones((len(Gn), 1))])
    res = linprog(c, A_ub=A, b_ub=np.zeros(len(Gn)),
                  bounds=[(-1, 1)] * d + [(None, 1.0)], method="highs")
    return float(-res.fun) if res.success else -math.inf


def cone_membership_residual(G: np.ndarray, target: np.ndarray) -> float:
    """Distance from ``target`` to the cone generated by the rows of ``G``."""
    if len(G) == 0:
        return float(np.linalg.norm(target))
    _, r = nnls(G.T, target)
    return float(r)


@dataclass(frozen=True)
class SmallDevVerdict:
    case: str
    details: str
    generalized_drift: tuple = ()


CASES = ("K_full_drift_zero", "K_full_drift_nonzero", "L_full", "strict_cone_yes",
         "outside_BK", "inconclusive")


def corollary_a_classify(model: LevyModel, p: float, yes_tol: float = 1e-8,
                         no_tol: float = 1e-6) -> SmallDevVerdict:
    """Decide small deviations in p-variation from the cone geometry of nu."""
    an = generalized_drift(model)
    info = tuple(float(x) for x in an)
    d = model.dim
    if model.L.rank == 0:
        nrm = float(np.linalg.norm(an))
        if nrm <= 1e-10:
            return SmallDevVerdict("K_full_drift_zero", "K = R^d and generalized drift vanishes", info)
        return SmallDevVerdict("K_full_drift_nonzero",
                               f"K = R^d and |generalized drift| = {nrm:.6g}", info)
    if model.L.rank == d:
        return SmallDevVerdict("L_full", "L = R^d: small deviations for every p > 1", info)
    G = limit_cone_generators(model)
    note = ""
    if len(G) == 0:
        note = "finitely many atoms: limit cone is {0}; "
    GK = model.K.project(G) if len(G) else G
    target = -model.K.project(an)
    scale = max(1.0, float(np.linalg.norm(target)))
    res = cone_membership_residual(GK, target)
    pt = pointedness(G)
    strict = pt > 1e-9
    note += f"membership residual {res:.3g}, pointedness {pt:.3g}"
    if model.discretized:
        note += "; discretized measure, declared generators taken as the limit cone"
    if res <= yes_tol * scale:
        if strict:
            return SmallDevVerdict("strict_cone_yes", note, info)
        return SmallDevVerdict("inconclusive", "drift admissible but cone not strictly convex; " + note, info)
    if res >= no_tol * scale:
        # every component here is scale free or vanishes below its smallest atom,
        # so the cones C^eta stabilise and the two drift sets coincide
        return SmallDevVerdict("outside_BK", "drift outside the admissible set; " + note, info)
    return SmallDevVerdict("inconclusive", "membership test not decisive; " + note, info)
