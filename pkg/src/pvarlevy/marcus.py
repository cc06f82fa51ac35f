"""Path-wise Marcus (canonical) equations driven by drift-plus-jump paths.

Between jumps the drive is linear, so the solution follows the flow of the
vector field ``y -> f(y) dz``; a jump dz acts through the time-1 flow of the
same field.  Every flow is integrated by fixed-step RK4; the step-doubling
check halves the step (at most ``max_doublings`` times) until two successive
results agree within ``tol``.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core_path import (CONT, POST, PRE, CadlagPath, PathError, as_point, combine, jump_arrays,
                        linear_combination)
from .pvar import (ChangeOfTime, jump_aligned_time_change, polygonal_approx, pvar_exact,
                   skorohod_upper)


class MarcusError(RuntimeError):
    pass


FAMILIES = ("linear", "affine", "smooth_bounded")
CATALOG = ("trig",)


@dataclass(frozen=True)
class VectorFieldSpec:
    """f : R^m -> R^(m x d) from a closed catalogue.

    linear:   f(x) dz = sum_j dz_j A_j x
    affine:   f(x) dz = sum_j dz_j (A_j x + b_j)
    smooth_bounded / trig:
              f(x)[i, j] = a_ij sin(w_ij x_((i+1) mod m) + phi_ij)
    """
    family: str
    m: int
    d: int
    matrices: np.ndarray | None = None
    offsets: np.ndarray | None = None
    catalog: str = ""
    amplitude: np.ndarray | None = None
    frequency: np.ndarray | None = None
    phase: np.ndarray | None = None
    bounds: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown vector field family {self.family!r}")
        m, d = int(self.m), int(self.d)
        if self.family in ("linear", "affine"):
            A = np.asarray(self.matrices, dtype=float).reshape(d, m, m)
            object.__setattr__(self, "matrices", A)
            b = np.zeros((d, m)) if self.offsets is None else np.asarray(self.offsets, dtype=float)
            object.__setattr__(self, "offsets", b.reshape(d, m))
            if self.family == "linear" and np.any(self.offsets != 0):
                raise ValueError("linear fields take no offsets")
            bounds = {"lipschitz": float(sum(np.linalg.norm(a, 2) for a in A))}
        else:
            if self.catalog not in CATALOG:
                raise ValueError(f"unknown catalogue entry {self.catalog!r}")
            a, w, ph = (np.broadcast_to(np.asarray(v, dtype=float), (m, d)).copy()
                        for v in (self.amplitude, self.frequency,
                                  np.zeros((m, d)) if self.phase is None else self.phase))
            for k, v in (("amplitude", a), ("frequency", w), ("phase", ph)):
                object.__setattr__(self, k, v)
            bounds = {"sup": float(np.max(np.abs(a))), "lipschitz": float(np.max(np.abs(a * w))),
                      "second_derivative": float(np.max(np.abs(a * w * w)))}
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "bounds", bounds)

    def __call__(self, x) -> np.ndarray:
        """The m x d matrix f(x)."""
        x = np.asarray(x, dtype=float)
        if self.family == "smooth_bounded":
            xs = np.roll(x, -1)
            return self.amplitude * np.sin(self.frequency * xs[:, None] + self.phase)
        return np.einsum("jik,k->ij", self.matrices, x) + self.offsets.T

    def apply(self, x, dz) -> np.ndarray:
        """f(x) dz without forming f(x) for the matrix families."""
        if self.family == "smooth_bounded":
            return self(x) @ dz
        M = np.tensordot(dz, self.matrices, axes=1)
        return M @ x + dz @ self.offsets

    def to_dict(self) -> dict:
        out = {"family": self.family, "m": self.m, "d": self.d}
        if self.family == "smooth_bounded":
            out.update(catalog=self.catalog, amplitude=self.amplitude.tolist(),
                       frequency=self.frequency.tolist(), phase=self.phase.tolist())
        else:
            out["matrices"] = self.matrices.tolist()
            if self.family == "affine":
                out["offsets"] = self.offsets.tolist()
        return out


def linear_field(matrices) -> VectorFieldSpec:
    A = np.asarray(matrices, dtype=float)
    if A.ndim == 2:
        A = A[None]
    return VectorFieldSpec("linear", A.shape[1], A.shape[0], matrices=A)


def scalar_linear_field(c: float = 1.0) -> VectorFieldSpec:
    return linear_field([[[c]]])


def zero_field(m: int, d: int) -> VectorFieldSpec:
    return VectorFieldSpec("linear", m, d, matrices=np.zeros((d, m, m)))


@dataclass(frozen=True)
class OdeConfig:
    steps: int = 64
    richardson_check: bool = True
    tol: float = 1e-8
    keep_every: int = 1
    max_doublings: int = 4

    def __post_init__(self):
        if self.steps < 16:
            raise ValueError("at least 16 RK4 steps per unit flow time")
        if self.keep_every < 1 or self.max_doublings < 0:
            raise ValueError("keep_every >= 1 and max_doublings >= 0 required")


@dataclass(frozen=True)
class MarcusSystem:
    f: VectorFieldSpec
    x0: np.ndarray
    ode: OdeConfig = OdeConfig()

    def __post_init__(self):
        object.__setattr__(self, "x0", as_point(self.x0, self.f.m))
        if self.f.family in ("linear", "affine"):
            warnings.warn("unbounded vector field: results are meaningful on bounded horizons only",
                          stacklevel=2)


SYSTEM_FIELDS = {"schema", "field", "x0", "ode"}


def system_from_dict(data: dict) -> MarcusSystem:
    unknown = set(data) - SYSTEM_FIELDS
    if unknown:
        raise ValueError(f"unknown system fields: {sorted(unknown)}")
    fd = dict(data["field"])
    f = VectorFieldSpec(**fd)
    ode = OdeConfig(**data.get("ode", {}))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return MarcusSystem(f, data["x0"], ode)


def load_system(file) -> MarcusSystem:
    with open(file) as fh:
        return system_from_dict(json.load(fh))


# -- flows ----------------------------------------------------------------------

def _rhs(f: VectorFieldSpec, dz):
    if f.family == "smooth_bounded":
        return lambda y: f(y) @ dz
    M = np.tensordot(dz, f.matrices, axes=1)
    b = dz @ f.offsets
    if f.m == 1:
        c, c0 = float(M[0, 0]), float(b[0])
        return lambda y: c * y + c0
    return lambda y: M @ y + b


def _rk4(f: VectorFieldSpec, x, dz, n, record=False):
    h = 1.0 / n
    y = np.array(x, dtype=float)
    out = [y.copy()] if record else None
    F = _rhs(f, dz)
    for _ in range(n):
        k1 = F(y)
        k2 = F(y + 0.5 * h * k1)
        k3 = F(y + 0.5 * h * k2)
        k4 = F(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if record:
            out.append(y.copy())
    return (y, np.array(out)) if record else y


def _n_steps(ode: OdeConfig, dz) -> int:
    # the flow of f dz over time 1 is the flow of f dz/|dz| over time |dz|
    return max(4, int(math.ceil(ode.steps * float(np.linalg.norm(dz)))))


def flow(f: VectorFieldSpec, x, dz, ode: OdeConfig = OdeConfig(), record: bool = False):
    """Time-1 flow of y' = f(y) dz from x; with ``record`` also the RK4 substeps."""
    x = as_point(x, f.m)
    dz = as_point(dz, f.d)
    if not np.any(dz):
        return (x.copy(), x[None, :].copy()) if record else x.copy()
    n = _n_steps(ode, dz)
    if not ode.richardson_check:
        return _rk4(f, x, dz, n, record)
    coarse = _rk4(f, x, dz, n)
    for _ in range(ode.max_doublings + 1):
        n *= 2
        fine = _rk4(f, x, dz, n, record)
        y = fine[0] if record else fine
        err = float(np.max(np.abs(y - coarse)))
        if err <= ode.tol:
            return fine
        coarse = y
    raise MarcusError(f"step doubling changed the flow by {err:.3g} > {ode.tol:g}")


def marcus_jump_map(f: VectorFieldSpec, x, dz, ode: OdeConfig = OdeConfig()) -> np.ndarray:
    return flow(f, x, dz, ode)


def marcus_correction(f: VectorFieldSpec, x, dz, ode: OdeConfig = OdeConfig()) -> np.ndarray:
    """g(x, dz) = jump map - x - f(x) dz."""
    x = as_point(x, f.m)
    dz = as_point(dz, f.d)
    return marcus_jump_map(f, x, dz, ode) - x - f.apply(x, dz)


def correction_constant(f: VectorFieldSpec, xs, zs, ode: OdeConfig = OdeConfig()) -> float:
    """max |g(x, z)| / |z|^2 over the grid products (z = 0 skipped)."""
    best = 0.0
    for x in xs:
        for z in zs:
            nz = float(np.linalg.norm(z))
            if nz > 0:
                best = max(best, float(np.linalg.norm(marcus_correction(f, x, z, ode))) / nz ** 2)
    return best


def solve_marcus(system: MarcusSystem, drive: CadlagPath) -> CadlagPath:
    """Solve dX = f(X) <> dZ along a node path Z.

    Linear drive segments follow the flow of f * (segment increment); a jump
    pair applies the jump map.  Output nodes: every drive node plus RK4
    substeps (every ``keep_every``-th).
    """
    f, ode = system.f, system.ode
    if drive.dim != f.d:
        raise PathError(f"drive has dimension {drive.dim}, field expects {f.d}")
    t, z, k = drive.times, drive.values, drive.kinds
    x = system.x0.copy()
    T, X, Kd = [t[0]], [x.copy()], [k[0]]
    for i in range(len(t) - 1):
        dz = z[i + 1] - z[i]
        if k[i] == PRE:
            x = marcus_jump_map(f, x, dz, ode)
        elif t[i + 1] > t[i] and np.any(dz):
            x, sub = flow(f, x, dz, ode, record=True)
            n = len(sub) - 1
            for j in range(ode.keep_every, n, ode.keep_every):
                T.append(t[i] + (t[i + 1] - t[i]) * j / n)
                X.append(sub[j])
                Kd.append(CONT)
        T.append(t[i + 1])
        X.append(x.copy())
        Kd.append(k[i + 1])
    return CadlagPath(np.array(T), np.array(X).reshape(-1, f.m), np.array(Kd, dtype=np.int8))


# -- support set ----------------------------------------------------------------

@dataclass(frozen=True)
class SupportCurveSpec:
    """phi_L (continuous, L-valued) plus t alpha_nu plus jumps z_p at t_p."""
    phi_L: CadlagPath
    alpha_nu: np.ndarray
    jump_times: np.ndarray
    jump_sizes: np.ndarray

    def __post_init__(self):
        if self.phi_L.has_jumps:
            raise PathError("phi_L must be continuous")
        d = self.phi_L.dim
        object.__setattr__(self, "alpha_nu", as_point(self.alpha_nu, d))
        jt = np.asarray(self.jump_times, dtype=float).reshape(-1)
        js = np.asarray(self.jump_sizes, dtype=float).reshape(len(jt), d)
        if np.any(np.diff(jt) <= 0):
            raise PathError("support jump times must be strictly increasing")
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "jump_sizes", js)

    def drive(self) -> CadlagPath:
        T = self.phi_L.end
        base = CadlagPath.from_drift_and_jumps(self.alpha_nu, self.jump_times, self.jump_sizes, T)
        return combine(self.phi_L, base, (1.0, 1.0))


def solve_support_ode(spec: SupportCurveSpec, f: VectorFieldSpec, x0,
                      ode: OdeConfig = OdeConfig()) -> CadlagPath:
    """psi = x0 + int f(psi) dphi^L + sum g_f(psi_(t_p-), z_p): the drive's Marcus solution."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        system = MarcusSystem(f, x0, ode)
    return solve_marcus(system, spec.drive())


def start_norm(path: CadlagPath, p: float) -> float:
    """|path(0)| + |||path|||_p."""
    return float(np.linalg.norm(path.values[0])) + pvar_exact(path, p).value


def continuity_probe(system: MarcusSystem, driveA: CadlagPath, driveB: CadlagPath, xA, xB,
                     T: float, p: float) -> tuple[float, bool]:
    """(ratio, degenerate) with ratio = ||X_A - X_B|| / (|xA - xB| + |||A - B|||_{T,p}).

    ||.|| is |start| + p-variation on [0, T].  A zero denominator returns
    (0, True).
    """
    xA = as_point(xA, system.f.m)
    xB = as_point(xB, system.f.m)
    a, b = driveA.restrict(0.0, T), driveB.restrict(0.0, T)
    den = float(np.linalg.norm(xA - xB)) + pvar_exact(combine(a, b, (1.0, -1.0)), p).value
    if den <= 1e-12:
        return 0.0, True
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        XA = solve_marcus(MarcusSystem(system.f, xA, system.ode), a)
        XB = solve_marcus(MarcusSystem(system.f, xB, system.ode), b)
    return start_norm(combine(XA, XB, (1.0, -1.0)), p) / den, False


def support_distance(sampleX: CadlagPath, candidate: CadlagPath, p: float, n: int) -> tuple[float, bool]:
    """(d_p^n upper bound, flagged) using the change of time that aligns jump times.

    ``flagged`` is True when the jump counts up to n+1 differ, in which case
    the identity change of time is used.
    """
    H = float(n + 1)
    ta, _ = jump_arrays(sampleX)
    tb, _ = jump_arrays(candidate)
    if np.sum(ta <= H) != np.sum(tb <= H):
        return skorohod_upper(sampleX, candidate, p, n, ChangeOfTime.identity()), True
    lam = jump_aligned_time_change(sampleX, candidate, H)
    if float(lam(H)) > sampleX.end:
        return skorohod_upper(sampleX, candidate, p, n, ChangeOfTime.identity()), True
    return skorohod_upper(sampleX, candidate, p, n, lam), False


def split_drive(drive: CadlagPath, threshold: float):
    """Big jumps (|dz| >= threshold) of a drive and the remaining path."""
    t, z = jump_arrays(drive)
    big = np.linalg.norm(z, axis=1) >= threshold
    jumps = CadlagPath.from_drift_and_jumps(np.zeros(drive.dim), t[big], z[big], drive.end)
    rest = combine(drive, jumps, (1.0, -1.0))
    return t[big], z[big], rest


def support_candidate(drive: CadlagPath, alpha_nu, threshold: float, n_poly: int) -> SupportCurveSpec:
    """Support curve from a drive's own big jumps and a polygonal fit of the rest."""
    T = drive.end
    tb, zb, rest = split_drive(drive, threshold)
    grid = T * np.arange(n_poly + 1) / n_poly
    poly = CadlagPath.polygon(grid, rest.evaluate(grid))
    alpha_nu = as_point(alpha_nu, drive.dim)
    phi_L = combine(poly, CadlagPath.polygon([0.0, T], np.vstack([0 * alpha_nu, T * alpha_nu])),
                    (1.0, -1.0))
    return SupportCurveSpec(phi_L, alpha_nu, tb, zb)
