"""Small-deviation probabilities in p-variation: Monte Carlo, witnesses, stable small balls."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfcx, gamma as gamma_fn

from .core_path import CadlagPath, as_point, combine, jump_arrays
from .levy import (LevyModel, ModelError, _rng, check_pvariation, decompensate, radial_integral,
                   sample_jumps, sample_path)
from .pvar import SawParams, make_saw, pvar_below, pvar_exact


# -- Monte Carlo ----------------------------------------------------------------

def wilson(hits: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval; the lower end is exactly 0 when there are no hits."""
    if n == 0:
        return 0.0, 1.0
    ph = hits / n
    den = 1 + z * z / n
    mid = (ph + z * z / (2 * n)) / den
    half = z * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / den
    lo = 0.0 if hits == 0 else max(0.0, mid - half)
    hi = 1.0 if hits == n else min(1.0, mid + half)
    return lo, hi


@dataclass(frozen=True)
class DeviationEstimate:
    epsilon: float
    T: float
    p: float
    hits: int
    trials: int
    eta: float
    seed: int
    prob: float = field(init=False)
    ci95: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "prob", self.hits / self.trials if self.trials else 0.0)
        object.__setattr__(self, "ci95", wilson(self.hits, self.trials))

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "T": self.T, "p": self.p, "hits": self.hits,
                "trials": self.trials, "prob": self.prob, "ci95": list(self.ci95),
                "eta": self.eta, "seed": self.seed}


def _count_hits(args):
    model, T, p, eps, eta, seed, tasks, center = args
    hits = 0
    for i in tasks:
        path = sample_path(model, T, eta, seed, int(i))
        if center is not None:
            path = combine(path, center, (1.0, -1.0))
        hits += pvar_below(path, p, eps)
    return hits


def _shards(trials: int, workers: int):
    return [range(k, trials, workers) for k in range(workers)]


def run_sharded(fn, common: tuple, trials: int, workers: int):
    """Apply ``fn(common + (tasks,))`` to task shards, serially or in a process pool."""
    shards = _shards(trials, max(1, workers))
    jobs = [common[:-1] + (s,) + common[-1:] for s in shards]
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


def estimate_small_deviation(model: LevyModel, T: float, p: float, epsilon: float, trials: int,
                             eta: float, seed: int, workers: int = 1,
                             center: CadlagPath | None = None) -> DeviationEstimate:
    """Fraction of simulated decompensated paths with p-variation below epsilon.

    Jumps smaller than ``eta`` are replaced by their compensator, so the
    estimate refers to the truncated process.  With ``center`` the distance
    to that curve is measured instead.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    check_pvariation(model, p)
    dm = decompensate(model)
    parts = run_sharded(_count_hits, (dm, T, p, epsilon, eta, seed, center), trials, workers)
    return DeviationEstimate(float(epsilon), float(T), float(p), int(sum(parts)), int(trials),
                             float(eta), int(seed))


def pvar_samples(model: LevyModel, T: float, p: float, trials: int, eta: float, seed: int,
                 decompensated: bool = True) -> np.ndarray:
    """p-variation of ``trials`` simulated paths (same seeds as the estimator)."""
    dm = decompensate(model) if decompensated else model
    return np.array([pvar_exact(sample_path(dm, T, eta, seed, i), p).value for i in range(trials)])


# -- stable small balls ---------------------------------------------------------

@dataclass(frozen=True)
class StableSmallBallParams:
    beta: float
    gamma: float
    c_lambda: float

    def __post_init__(self):
        if not 0 < self.beta < 2 or not self.gamma > self.beta or not self.c_lambda > 0:
            raise ValueError("need 0 < beta < 2, gamma > beta and c_lambda > 0")

    @property
    def delta(self) -> float:
        return self.beta / self.gamma


def stable_small_ball_constant(params: StableSmallBallParams) -> float:
    """(g - b) (c Gamma(1 - b/g))^(b/(g-b)) / g^(g/(g-b))."""
    b, g, c = params.beta, params.gamma, params.c_lambda
    return (g - b) * (c * gamma_fn(1 - b / g)) ** (b / (g - b)) / g ** (g / (g - b))


def subordinator_scale(params: StableSmallBallParams) -> float:
    """Laplace exponent scale of sum |jumps|^gamma over [0, 1]: c Gamma(1 - delta) / beta."""
    return params.c_lambda * gamma_fn(1 - params.delta) / params.beta


def debruijn_rate(delta: float, laplace_scale: float) -> float:
    """lim -eps^(delta/(1-delta)) log P[S < eps] when E exp(-uS) = exp(-B u^delta)."""
    d = delta
    return (1 - d) * d ** (d / (1 - d)) * laplace_scale ** (1 / (1 - d))


def stated_small_ball_limit(params: StableSmallBallParams) -> float:
    """(1 - delta) (c Gamma(1 - delta) / gamma)^(delta/(1-delta)), the closed-form rate as stated in the criterion."""
    d = params.delta
    return (1 - d) * (params.c_lambda * gamma_fn(1 - d) / params.gamma) ** (d / (1 - d))


def log_cdf_half_stable(eps, a):
    """log P[S < eps] for the 1/2-stable law with E exp(-uS) = exp(-a sqrt(u)).

    P[S < eps] = erfc(a / (2 sqrt(eps))); the log uses erfcx to stay finite.
    """
    x = a / (2 * np.sqrt(np.asarray(eps, dtype=float)))
    return np.log(erfcx(x)) - x * x


def scaled_log_prob(params: StableSmallBallParams, eps) -> np.ndarray:
    """-eps^(delta/(1-delta)) log P[S_1 < eps] from the exact CDF (delta = 1/2 only)."""
    if abs(params.delta - 0.5) > 1e-15:
        raise ValueError("closed-form CDF available for delta = 1/2 only")
    eps = np.asarray(eps, dtype=float)
    return -eps * log_cdf_half_stable(eps, subordinator_scale(params))


def gamma_jump_sum(path: CadlagPath, gamma: float) -> float:
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    _, z = jump_arrays(path)
    return float(np.sum(np.linalg.norm(z, axis=1) ** gamma))


# -- witness construction -------------------------------------------------------

@dataclass(frozen=True)
class WitnessEvent:
    """Jump windows whose occurrence keeps the truncated process close to a saw.

    The truncated process keeps jumps of size at least ``cutoff``.  On the
    event it has exactly ``gamma`` such jumps, the k-th within ``lam`` of time
    k T / gamma and within ``lam`` of the size ``x``; between jumps it
    drifts with slope ``-compensator_slope``.
    """
    gamma: int
    T: float
    x: np.ndarray
    lam: float
    eta: float
    cutoff: float
    compensator_slope: np.ndarray
    feasible: bool = True

    @property
    def saw(self) -> SawParams | None:
        return SawParams(self.gamma, self.T, -self.x) if self.gamma >= 1 else None

    @property
    def jump_windows(self) -> list[tuple[float, np.ndarray, float]]:
        return [(self.T * k / self.gamma, self.x, self.lam) for k in range(1, self.gamma + 1)]

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "T": self.T, "x": self.x.tolist(), "lambda": self.lam,
                "eta": self.eta, "cutoff": self.cutoff,
                "compensator_slope": self.compensator_slope.tolist(), "feasible": self.feasible,
                "windows": [[s, z.tolist(), lam] for s, z, lam in self.jump_windows]}


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def _angle(a, b) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return math.pi
    return math.acos(max(-1.0, min(1.0, float(a @ b) / (na * nb))))


def _support_candidates(model: LevyModel, eta: float):
    """Points of supp nu with norm < eta: atoms, and each stable ray at radius eta/2."""
    n = model.atom_norms()
    pts = [model.atom_points[n < eta]]
    for c in model.stable:
        pts.append(0.5 * eta * c.directions)
    return np.vstack(pts)


def witness_terms(w: WitnessEvent, p: float, lam: float | None = None) -> dict:
    """Triangle-inequality pieces of the p-variation bound on the witness event."""
    lam = w.lam if lam is None else lam
    g, T = w.gamma, w.T
    ax = float(np.linalg.norm(w.x))
    drift = -w.compensator_slope
    slope = drift + (g * w.x / T if g else 0.0)
    out = {"saw": (2 * g) ** (1 / p) * ax,
           "drift": T * float(np.linalg.norm(slope)),
           "blip": 0.0, "size": 0.0}
    if g and lam > 0:
        out["blip"] = (2 * ax ** p + (g - 1) * (2 * ax) ** p) ** (1 / p)
        out["size"] = g * lam
    return out


def witness_bound(w: WitnessEvent, p: float, lam: float | None = None) -> float:
    return sum(witness_terms(w, p, lam).values())


def construct_witness_dim1(model: LevyModel, T: float, p: float, epsilon: float, eta: float,
                           rho: float = 0.05) -> WitnessEvent:
    """Saw-based witness for the decompensated process when dim L <= 1.

    A support point x with |x| < eta is aligned with the compensator drift
    v of the L-part of the jumps above |x|/2; gamma is the nearest integer
    to T v*x/|x|^2 so that gamma jumps of size x per horizon T undo the
    drift.  The window tolerance is the largest value keeping the bound of
    ``witness_bound`` below epsilon.
    """
    check_pvariation(model, p)
    if model.L.rank > 1:
        raise ModelError("witness construction supports dim L <= 1 only")
    d = model.dim
    v = np.zeros(d)
    x = np.zeros(d)
    cutoff = eta
    if model.L.rank == 1:
        v = model.first_moment(model.L, eta / 4, 1.0)
        if np.linalg.norm(v) > 0:
            cands = _support_candidates(model, eta)
            if len(cands) == 0:
                raise ModelError("no support point below eta")
            ang = np.array([_angle(c, v) for c in cands])
            x = cands[int(np.argmin(ang))]
            cutoff = float(np.linalg.norm(x)) / 2
            v = model.first_moment(model.L, cutoff, 1.0)
            if _angle(x, v) > rho:
                raise ModelError(f"no support point within angle {rho} of the drift direction")
    ax2 = float(x @ x)
    g = round_half_away(T * float(v @ x) / ax2) if ax2 > 0 else 0
    if g <= 0:
        g, x, cutoff = 0, np.zeros(d), eta
        v = model.first_moment(model.L, cutoff, 1.0)
    k_small = model.first_moment(model.K, 0.0, cutoff)
    w = WitnessEvent(g, float(T), x, 0.0, float(eta), float(cutoff), v - k_small)
    base = witness_bound(w, p, 0.0)
    if g == 0:
        return WitnessEvent(0, w.T, x, 0.0, w.eta, w.cutoff, w.compensator_slope, base < epsilon)
    fixed = base + witness_terms(w, p, 1.0)["blip"]
    room = epsilon - fixed
    if room <= 0:
        return WitnessEvent(g, w.T, x, 0.0, w.eta, w.cutoff, w.compensator_slope, False)
    # sizes within lam of x stay above the cutoff since lam <= |x| - cutoff
    lam = min(T / (4 * g), 0.9 * room / g, float(np.linalg.norm(x)) - cutoff)
    return WitnessEvent(g, w.T, x, lam, w.eta, w.cutoff, w.compensator_slope, True)


def skeleton_path(w: WitnessEvent) -> CadlagPath:
    """Centre of the witness event: jumps exactly x at k T / gamma, drift -compensator_slope."""
    drift = -w.compensator_slope
    if w.gamma == 0:
        return CadlagPath.from_drift_and_jumps(drift, [], np.zeros((0, len(drift))), w.T)
    s = w.T * np.arange(1, w.gamma + 1) / w.gamma
    return CadlagPath.from_drift_and_jumps(drift, s, np.tile(w.x, (w.gamma, 1)), w.T)


def verify_witness_skeleton(w: WitnessEvent, p: float, epsilon: float) -> tuple[bool, float]:
    """(sum < epsilon, sum) with sum = |||saw||| + |||skeleton - saw|||.

    At the centre of the event skeleton - saw is the linear residual drift,
    so the sum bounds the skeleton's own p-variation.
    """
    sk = skeleton_path(w)
    if w.gamma == 0:
        total = pvar_exact(sk, p).value
        return total < epsilon, total
    saw = make_saw(w.saw)
    total = pvar_exact(saw, p).value + pvar_exact(combine(sk, saw, (1.0, -1.0)), p).value
    return total < epsilon, total


def _ball_masses(model: LevyModel, x: np.ndarray, lam: float, lo: float):
    """Pieces of nu restricted to {|z - x| < lam, |z| >= lo}: atoms and ray segments."""
    atoms = []
    n = model.atom_norms()
    sel = np.flatnonzero((np.linalg.norm(model.atom_points - x, axis=1) < lam) & (n >= lo))
    for i in sel:
        atoms.append((model.atom_rates[i], model.atom_points[i]))
    rays = []
    for c in model.stable:
        top = math.inf if c.big_jumps else 1.0
        for xi, wt in zip(c.directions, c.weights):
            b = float(xi @ x)
            disc = b * b - float(x @ x) + lam * lam
            if disc <= 0:
                continue
            r1, r2 = max(b - math.sqrt(disc), lo), min(b + math.sqrt(disc), top)
            if r2 > r1:
                rays.append((wt * radial_integral(c.beta, 0.0, r1, r2), xi, c.beta, r1, r2))
    return atoms, rays


def window_mass(model: LevyModel, w: WitnessEvent) -> float:
    atoms, rays = _ball_masses(model, w.x, w.lam, w.cutoff)
    return sum(a[0] for a in atoms) + sum(r[0] for r in rays)


def _time_windows(w: WitnessEvent) -> np.ndarray:
    s = w.T * np.arange(1, w.gamma + 1) / w.gamma
    lo = np.maximum(s - w.lam, 0.0)
    hi = np.minimum(s + w.lam, w.T)
    return np.column_stack([lo, hi])


def log_conditioned_witness_probability(model: LevyModel, w: WitnessEvent) -> float:
    """log of exp(-Lambda T) prod_k |W_k| nu(B(x, lam)) with Lambda the rate above the cutoff."""
    lam_rate = model.rate(w.cutoff, math.inf)
    out = -lam_rate * w.T
    if w.gamma == 0:
        return out
    m = window_mass(model, w)
    if not m > 0:
        raise ModelError("window carries no jump mass")
    win = _time_windows(w)
    return out + float(np.sum(np.log(win[:, 1] - win[:, 0]))) + w.gamma * math.log(m)


def conditioned_witness_probability(model: LevyModel, w: WitnessEvent) -> float:
    return math.exp(log_conditioned_witness_probability(model, w))


def conditioned_draw(model: LevyModel, w: WitnessEvent, seed, task: int = 0,
                     floor_ratio: float | None = 1e-2) -> CadlagPath:
    """One path of the decompensated process given the witness event.

    Jumps above the cutoff are drawn inside their windows.  With
    ``floor_ratio`` the independent small-jump part (sizes in
    [floor_ratio * cutoff, cutoff), L-part compensated, K-part with the drift
    of the omitted tiny jumps) is added; otherwise only the event's own jumps
    and drift are kept.
    """
    rng = _rng(seed, task)
    d = model.dim
    times, sizes = [np.zeros(0)], [np.zeros((0, d))]
    drift = -w.compensator_slope
    if w.gamma:
        win = _time_windows(w)
        times.append(win[:, 0] + (win[:, 1] - win[:, 0]) * (1.0 - rng.random(w.gamma)))
        atoms, rays = _ball_masses(model, w.x, w.lam, w.cutoff)
        pieces = [a[0] for a in atoms] + [r[0] for r in rays]
        prob = np.array(pieces) / sum(pieces)
        pick = rng.choice(len(pieces), size=w.gamma, p=prob)
        z = np.empty((w.gamma, d))
        for k, j in enumerate(pick):
            while True:
                if j < len(atoms):
                    cand = atoms[j][1]
                else:
                    _, xi, beta, r1, r2 = rays[j - len(atoms)]
                    a, b = r1 ** -beta, (r2 ** -beta if math.isfinite(r2) else 0.0)
                    cand = (a - rng.random() * (a - b)) ** (-1 / beta) * xi
                if np.linalg.norm(cand - w.x) < w.lam:
                    break
            z[k] = cand
        sizes.append(z)
    if floor_ratio is not None:
        floor = floor_ratio * w.cutoff
        t2, z2 = sample_jumps(model, w.T, floor, w.cutoff, rng)
        times.append(t2)
        sizes.append(z2)
        # K-part of jumps below the floor enters through its mean, L-part of
        # the simulated band is compensated
        drift = drift - model.first_moment(model.K, floor, w.cutoff) \
            - model.first_moment(model.L, floor, w.cutoff)
    t = np.concatenate(times)
    z = np.vstack(sizes)
    return CadlagPath.from_drift_and_jumps(drift, t, z, w.T)
