"""Ready-made jump measures, including discretisations of continuous densities."""
from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq

from .core_path import Subspace
from .levy import LevyModel, StableComponent


def circle_directions(k: int, d: int = 2) -> np.ndarray:
    """k equally spaced unit vectors in the plane (d = 2) or the +-e_i frame."""
    if d == 1:
        return np.array([[1.0], [-1.0]])[:k]
    if d == 2:
        a = 2 * np.pi * np.arange(k) / k
        return np.column_stack([np.cos(a), np.sin(a)])
    e = np.eye(d)
    return np.vstack([e, -e])


def symmetric_stable(d: int, beta: float, weight: float = 1.0, k: int | None = None,
                     big_jumps: bool = False) -> LevyModel:
    """Zero-drift symmetric stable measure with ``k`` equal-weight directions."""
    if d == 1:
        dirs = circle_directions(2, 1)
    else:
        dirs = circle_directions(k or 2 * d, d)
    comp = StableComponent(beta, dirs, np.full(len(dirs), weight), big_jumps)
    if beta >= 1:
        K, L = Subspace.zero(d), Subspace.full(d)
    else:
        K, L = Subspace.full(d), Subspace.zero(d)
    return LevyModel(np.zeros(d), np.zeros((0, d)), np.zeros(0), (comp,), K, L,
                     name=f"symmetric stable beta={beta}")


def one_sided_stable(beta: float, weight: float = 1.0, alpha: float = 0.0) -> LevyModel:
    """One-dimensional stable measure w r^{-1-beta} dr on (0, 1]."""
    comp = StableComponent(beta, [[1.0]], [weight])
    if beta >= 1:
        K, L = Subspace.zero(1), Subspace.full(1)
    else:
        K, L = Subspace.full(1), Subspace.zero(1)
    return LevyModel([alpha], np.zeros((0, 1)), np.zeros(0), (comp,), K, L,
                     name=f"one-sided stable beta={beta}")


def strictly_stable(d: int, beta: float, directions, weights) -> LevyModel:
    """beta < 1 stable measure with the drift that makes it strictly stable."""
    comp = StableComponent(beta, directions, weights)
    alpha = comp.weights @ comp.directions / (1 - beta)
    return LevyModel(alpha, np.zeros((0, d)), np.zeros(0), (comp,),
                     Subspace.full(d), Subspace.zero(d), name="strictly stable")


# -- discretisation -----------------------------------------------------------

def discretize_density(density, lo, hi, cells, order: int = 3, region=None):
    """Atoms approximating ``density`` on the box [lo, hi] by Gauss-Legendre cells.

    Each of the prod(cells) boxes becomes one atom at the quadrature
    centroid carrying the quadrature mass, so the zeroth and first moments
    of every cell are exact up to the quadrature error (of order h^(2 order)
    for smooth densities).  ``region`` is an optional indicator multiplying
    the density.  Returns (points, masses) with zero-mass cells dropped.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    cells = np.broadcast_to(np.asarray(cells, dtype=int), lo.shape)
    d = len(lo)
    x, w = np.polynomial.legendre.leggauss(order)
    axes = []
    for i in range(d):
        edges = np.linspace(lo[i], hi[i], cells[i] + 1)
        h = np.diff(edges)
        nodes = (edges[:-1, None] + (x[None, :] + 1) / 2 * h[:, None])
        weights = w[None, :] * h[:, None] / 2
        axes.append((nodes, weights))
    pts, masses = [], []
    for idx in np.ndindex(*cells):
        grids = np.meshgrid(*[axes[i][0][idx[i]] for i in range(d)], indexing="ij")
        wts = np.ones_like(grids[0])
        for i in range(d):
            shape = [1] * d
            shape[i] = order
            wts = wts * axes[i][1][idx[i]].reshape(shape)
        z = np.stack([g.reshape(-1) for g in grids], axis=1)
        f = density(z) * wts.reshape(-1)
        if region is not None:
            f = f * region(z)
        m = f.sum()
        if m > 0:
            pts.append(f @ z / m)
            masses.append(m)
    return np.array(pts).reshape(-1, d), np.array(masses)


def counterexample_cr(r: float) -> float:
    """Positive root of x^2 + x^(2/r) = 1."""
    return brentq(lambda x: x * x + x ** (2 / r) - 1, 1e-12, 1.0)


def counterexample_c(q: float, r: float) -> float:
    return 1.0 / (2 * r - q - 1)


def counterexample_model(q: float = 3.0, r: float = 2.2, smin: float = 1e-3, ratio: float = 1.05,
                   u_cells: int = 4) -> LevyModel:
    """Atoms for nu(dz) = 1{0 < z1 < |z2|^r < c_r} |z2|^(-2-q) dz.

    With z1 = u |z2|^r the density factorises as s^(r-2-q) ds du on
    s = |z2| in (0, c_r^(1/r)), u in (0, 1).  Geometric s-cells from ``smin``
    up to the top and uniform u-cells are integrated exactly; each cell
    becomes an atom at its centroid, for both signs of z2.  Mass below
    ``smin`` is dropped (only jumps far above it are ever simulated).
    """
    if not 1 < (1 + q) / 2 < r < q < r + 1:
        raise ValueError("need 1 < (1+q)/2 < r < q < r+1")
    top = counterexample_cr(r) ** (1 / r)
    n = int(math.ceil(math.log(top / smin) / math.log(ratio)))
    edges = top * ratio ** -np.arange(n, -1, -1.0)
    a, b = edges[:-1], edges[1:]

    def mom(k):  # int_a^b s^(r-2-q+k) ds
        e = r - 1 - q + k
        return (b ** e - a ** e) / e

    m0, s1, sr = mom(0), mom(1) / mom(0), mom(r) / mom(0)
    ue = np.linspace(0, 1, u_cells + 1)
    uc = (ue[:-1] + ue[1:]) / 2
    du = np.diff(ue)
    pts, rates = [], []
    for sign in (1.0, -1.0):
        for j in range(u_cells):
            # centroid of z1 = u s^r over the cell is E[u] E[s^r]
            pts.append(np.column_stack([uc[j] * sr, sign * s1]))
            rates.append(m0 * du[j])
    pts = np.vstack(pts)
    rates = np.concatenate(rates)
    K = Subspace([[1.0, 0.0]])
    L = Subspace([[0.0, 1.0]])
    gens = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    return LevyModel(np.zeros(2), pts, rates, (), K, L, discretized=True,
                     cone_generators=gens, name=f"counterexample q={q} r={r}")


def octant_model(alpha1: float, n_theta: int = 24, n_phi: int = 48, alpha_rest=(0.0, 0.0)) -> LevyModel:
    """Self-decomposable measure on the positive octant, discretised in angle only.

    nu(B) = int lambda(dtheta, dphi) int 1_B(r xi) k(r) dr / r with lambda the
    Lebesgue measure on [0, pi/2]^2 and k(r) = sin(phi) cos(theta) r^(-cos(phi)) 1{r <= 1},
    in the coordinates z1 = r sin(phi), z2 = r cos(phi) sin(theta),
    z3 = r cos(phi) cos(theta).  For fixed angles this is a stable radial
    law of index cos(phi); each angular cell becomes one stable component
    at the cell centre carrying the exact cell integral of
    sin(phi) cos(theta).  The K-part of the first moment,
    int_0^(pi/2) (1 + cos(phi)) dphi = 1 + pi/2, is reproduced up to the
    midpoint error of the cells.
    """
    te = np.linspace(0, np.pi / 2, n_theta + 1)
    pe = np.linspace(0, np.pi / 2, n_phi + 1)
    comps = []
    for i in range(n_phi):
        ph = 0.5 * (pe[i] + pe[i + 1])
        w_phi = math.cos(pe[i]) - math.cos(pe[i + 1])
        dirs, wts = [], []
        for j in range(n_theta):
            th = 0.5 * (te[j] + te[j + 1])
            dirs.append([math.sin(ph), math.cos(ph) * math.sin(th), math.cos(ph) * math.cos(th)])
            wts.append(w_phi * (math.sin(te[j + 1]) - math.sin(te[j])))
        comps.append(StableComponent(math.cos(ph), dirs, wts))
    K = Subspace([[1.0, 0.0, 0.0]])
    L = Subspace([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    alpha = np.array([alpha1, *alpha_rest], dtype=float)
    return LevyModel(alpha, np.zeros((0, 3)), np.zeros(0), tuple(comps), K, L,
                     discretized=True, cone_generators=np.eye(3), name="octant")


OCTANT_THRESHOLD = 1 + math.pi / 2
