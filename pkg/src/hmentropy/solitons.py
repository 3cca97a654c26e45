"""Equivariant solitons: shooting, Newton polish, residuals and weighted identities.

A (0,1)-soliton satisfies tau = (x/2) . Tf. Under the equivariant ansatz this
is the ODE

    psi'' + ((m-1)/r - r/2) psi' - (m-1) sin(2 psi) / (2 r^2) = 0,   psi(0) = 0.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solve_banded

from .errors import NoSolutionInBracket, OutOfDomain, PreconditionFailed, UnsupportedDimension
from .maps import CurveMap, CylindricalMap, EquivariantProfile, GridMap, radial_derivatives4
from .quadrature import (
    Basepoint,
    GaussianWeight,
    check_truncation,
    default_rule,
    field_sample,
    gaussian_quadrature,
    radial_weights,
)
from .sphere import HeightFunction, convex_derivatives, convex_domain

RESIDUAL_THRESHOLD = 1e-4
DEFAULT_DR = 0.005


def default_extent(m: int, t0: float = 1.0) -> float:
    """10 for m <= 3; otherwise large enough to hold G_{0,t0} within the tail budget."""
    if m <= 3:
        return 10.0
    R = GaussianWeight(Basepoint.origin(m, t0)).truncation_radius
    return max(10.0, float(np.ceil(2 * R + 0.5) / 2))


@dataclass
class SolitonFit:
    residual_sup: float
    residual_weighted: float
    identity_residuals: dict = field(default_factory=dict)
    sup_energy_density: float = 0.0
    slope: float | None = None
    newton_iterations: int = 0
    notes: list = field(default_factory=list)

    @property
    def sup_tf2(self) -> float:
        return 2.0 * self.sup_energy_density

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


@dataclass(frozen=True)
class ShootingProblem:
    m: int = 3
    slope: float | None = None
    r_max: float | None = None
    J: int | None = None
    rtol: float = 1e-12
    atol: float = 1e-12
    bracket: tuple[float, float] = (1e-4, 10.0)
    iterations: int = 80
    n_scan: int = 160
    r_shoot: float = 7.0
    r_start: float = 1e-3
    polish: bool = True

    def __post_init__(self):
        if self.m < 2:
            raise UnsupportedDimension("shooting needs m >= 2")
        if self.r_max is None:
            object.__setattr__(self, "r_max", default_extent(self.m))
        if self.J is None:
            object.__setattr__(self, "J", int(round(self.r_max / DEFAULT_DR)))
        if self.J < 8 or self.r_max <= 0:
            raise ValueError("grid must have J >= 8 and r_max > 0")
        lo, hi = self.bracket
        if not 0 < lo < hi:
            raise ValueError("slope bracket must satisfy 0 < lo < hi")


# ---------------------------------------------------------------------------
# shooting


def _series(m: int, a: float, r: float) -> tuple[float, float]:
    b = (a / 2 - (m - 1) * (2.0 / 3.0) * a**3) / (6 + 2 * (m - 1))
    return a * r + b * r**3, a + 3 * b * r**2


def _rhs(m):
    def f(r, y):
        psi, dpsi = y
        return [dpsi, -((m - 1) / r - r / 2) * dpsi + (m - 1) * np.sin(2 * psi) / (2 * r**2)]

    return f


def _escape(r, y):
    return abs(y[0] - np.pi / 2) - 2 * np.pi


_escape.terminal = True


def _shoot(m: int, a: float, r_end: float, prob: ShootingProblem, dense: bool = False):
    r0 = prob.r_start
    y0 = _series(m, a, r0)
    return solve_ivp(
        _rhs(m),
        (r0, r_end),
        y0,
        method="DOP853",
        rtol=prob.rtol,
        atol=prob.atol,
        events=_escape,
        dense_output=dense,
    )


def _side(m: int, a: float, prob: ShootingProblem) -> int:
    """Sign of psi' where the trajectory ends (at r_shoot or at escape)."""
    sol = _shoot(m, a, prob.r_shoot, prob)
    return 1 if sol.y[1, -1] > 0 else -1


def find_slope(prob: ShootingProblem) -> float:
    """Bisection on the initial slope between the first pair of scan points with opposite sides."""
    m = prob.m
    lo, hi = prob.bracket
    grid = np.geomspace(lo, hi, prob.n_scan)
    sides = [_side(m, a, prob) for a in grid]
    k = next((i for i in range(len(grid) - 1) if sides[i] != sides[i + 1]), None)
    if k is None:
        raise NoSolutionInBracket(f"no sign change of the end slope for m = {m} in [{lo}, {hi}]")
    a, b, sa = grid[k], grid[k + 1], sides[k]
    for _ in range(prob.iterations):
        mid = 0.5 * (a + b)
        if _side(m, mid, prob) == sa:
            a = mid
        else:
            b = mid
        if b - a <= 4 * np.finfo(float).eps * b:
            break
    return 0.5 * (a + b)


def _newton_polish(psi: np.ndarray, m: int, dr: float, tol: float = 1e-9, maxit: int = 80) -> tuple[np.ndarray, int]:
    """Solve the discrete soliton ODE (same stencils as the reduced tension).

    psi_0 = 0 is fixed; the last node carries the far-field condition
    psi'(R) = -(m-1) sin(2 psi) / R^3. The residual uses the fourth-order
    profile stencils; steps come from the banded three-point Jacobian
    (defect correction).
    """
    psi = psi.copy()
    J = psi.size - 1
    r = np.arange(J + 1) * dr
    ri = r[1:J]
    R = r[J]
    c1 = (m - 1) / ri - ri / 2
    it = 0
    for it in range(1, maxit + 1):
        d1, d2 = radial_derivatives4(psi, dr, parity=-1)
        F = np.empty(J)
        F[: J - 1] = d2[1:J] + c1 * d1[1:J] - (m - 1) * np.sin(2 * psi[1:J]) / (2 * ri**2)
        F[J - 1] = (3 * psi[J] - 4 * psi[J - 1] + psi[J - 2]) / (2 * dr) + (m - 1) * np.sin(2 * psi[J]) / R**3
        if np.max(np.abs(F)) < tol:
            break
        # banded Jacobian in unknowns psi_1..psi_J, (l, u) = (2, 1)
        ab = np.zeros((4, J))
        lower = 1 / dr**2 - c1 / (2 * dr)
        upper = 1 / dr**2 + c1 / (2 * dr)
        diag = -2 / dr**2 - (m - 1) * np.cos(2 * psi[1:J]) / ri**2
        ab[1, :J - 1] = diag
        ab[0, 1:J] = upper  # (i, i+1)
        ab[2, : J - 2] = lower[1:]  # (i+1, i)
        ab[1, J - 1] = 3 / (2 * dr) + 2 * (m - 1) * np.cos(2 * psi[J]) / R**3
        ab[2, J - 2] = -4 / (2 * dr)  # (J-1, J-2)
        ab[3, J - 3] = 1 / (2 * dr)  # (J-1, J-3)
        step = solve_banded((2, 1), ab, -F)
        psi[1:] += step
        if np.max(np.abs(step)) < 1e-15:
            break
    return psi, it


def shoot_equivariant_soliton(prob: ShootingProblem) -> tuple[EquivariantProfile, SolitonFit]:
    m = prob.m
    r = np.linspace(0.0, prob.r_max, prob.J + 1)
    if prob.slope == 0.0:
        prof = EquivariantProfile(np.zeros(prob.J + 1), m, prob.r_max)
        return prof, soliton_residual(prof)
    notes = []
    if prob.slope is None:
        a = find_slope(prob)
        r_end = min(prob.r_shoot, prob.r_max)
    else:
        a = float(prob.slope)
        r_end = prob.r_max
    sol = _shoot(m, a, r_end, prob, dense=True)
    if sol.status == 1 or sol.t[-1] < r_end * (1 - 1e-12):
        raise NoSolutionInBracket(f"trajectory with slope {a:.6g} escapes at r = {sol.t[-1]:.3g}")
    psi = np.empty_like(r)
    psi[0] = 0.0
    inner = (r > 0) & (r <= sol.t[-1])
    small = r < prob.r_start
    psi[small] = _series(m, a, r[small])[0]
    psi[inner & ~small] = sol.sol(r[inner & ~small])[0]
    psi[r > sol.t[-1]] = sol.y[0, -1]
    psi[0] = 0.0
    its = 0
    if prob.polish and prob.slope is None:
        psi, its = _newton_polish(psi, m, r[1])
        notes.append("newton-polished on the output grid")
    prof = EquivariantProfile(psi, m, prob.r_max)
    fit = soliton_residual(prof)
    fit.slope = a
    fit.newton_iterations = its
    fit.notes = notes
    return prof, fit


def shoot_or_constant(prob: ShootingProblem) -> tuple[EquivariantProfile, SolitonFit, bool]:
    """Nontrivial soliton if one is found, else the constant map; flag says which."""
    try:
        prof, fit = shoot_equivariant_soliton(prob)
        return prof, fit, True
    except NoSolutionInBracket as exc:
        prof = EquivariantProfile(np.zeros(prob.J + 1), prob.m, prob.r_max)
        fit = soliton_residual(prof)
        fit.notes.append(f"trivial only: {exc}")
        return prof, fit, False


# ---------------------------------------------------------------------------
# residuals


def _weight(fmap, basepoint) -> GaussianWeight:
    if basepoint is None:
        c = fmap.center if isinstance(fmap, EquivariantProfile) else np.zeros(fmap.m)
        basepoint = Basepoint(c, 1.0)
    return GaussianWeight(basepoint)


def soliton_operator(fmap, basepoint: Basepoint | None = None):
    """Pointwise S = tau - ((x - x0) / 2 t0) . Tf.

    Centered profiles return the radial coefficient of e_psi on the nodes;
    other maps return ambient vectors on their nodes (or sample points).
    """
    w = _weight(fmap, basepoint)
    bp = w.basepoint
    if isinstance(fmap, EquivariantProfile):
        if np.allclose(bp.x0, fmap.center):
            d1, _ = fmap.derivatives()
            return fmap.reduced_tension() - fmap.r * d1 / (2 * bp.t0)
        fs = field_sample(fmap, default_rule(fmap.m, axis=bp.x0 - fmap.center, offcenter=1.0))
        return fs.tau - np.einsum("pa,pai->pi", (fs.x - bp.x0) / (2 * bp.t0), fs.Tf), fs
    if isinstance(fmap, GridMap):
        y = (fmap.points() - bp.x0) / (2 * bp.t0)
        return fmap.tension_vectors() - np.einsum("...a,...ai->...i", y, fmap.differential())
    if isinstance(fmap, CurveMap):
        y = (fmap.s - bp.x0[0]) / (2 * bp.t0)
        return fmap.tension_vectors() - y[:, None] * fmap.differential()[:, 0, :]
    raise TypeError(f"unsupported map {type(fmap).__name__}")


def soliton_residual(fmap, basepoint: Basepoint | None = None) -> SolitonFit:
    if isinstance(fmap, CylindricalMap):
        k = fmap.base.m
        bp = basepoint or Basepoint(np.zeros(fmap.m), 1.0)
        fit = soliton_residual(fmap.base, Basepoint(bp.x0[:k], bp.t0))
        fit.notes.append("line directions annihilate Tf")
        return fit
    w = _weight(fmap, basepoint)
    check_truncation(fmap, w)
    S = soliton_operator(fmap, w.basepoint)
    sup_e = float(np.max(fmap.energy_density()))
    if isinstance(S, tuple):
        vec, fs = S
        sq = np.sum(vec**2, axis=-1)
        return SolitonFit(float(np.sqrt(np.max(sq))), fs.integrate(sq, w), sup_energy_density=sup_e)
    if S.ndim == 1:
        sq = S**2
    else:
        sq = np.sum(S**2, axis=-1)
    return SolitonFit(float(np.sqrt(np.max(sq))), gaussian_quadrature(fmap, w, sq), sup_energy_density=sup_e)


def transport(profile: EquivariantProfile, x0, t0: float) -> EquivariantProfile:
    """The (x0, t0)-soliton x -> f((x - x0) / sqrt(t0)); exact on the rescaled grid."""
    x0 = np.asarray(x0, dtype=float)
    return EquivariantProfile(profile.psi, profile.m, profile.R_max * np.sqrt(t0), x0, profile.codim)


def conformal_metric_check(fmap, basepoint: Basepoint | None = None) -> float:
    """sup |tau_g - S(f)| where tau_g = tau + (m-2) grad(u) . Tf and e^{2u} = exp(-|x|^2 / 2(m-2)).

    u is the exponent used in the soliton/harmonic correspondence; with it the
    corrected tension equals the soliton operator node by node.
    """
    m = fmap.m
    if m <= 2:
        raise UnsupportedDimension("the conformal correspondence needs m >= 3")
    w = _weight(fmap, basepoint)
    bp = w.basepoint
    if isinstance(fmap, EquivariantProfile):
        d1, _ = fmap.derivatives()
        # grad u = -(x - x0) / (4 (m - 2) t0) scaled so that (m-2) grad u = -(x - x0)/(2 t0) ... radial part
        grad_u = -fmap.r / (2 * (m - 2) * bp.t0)
        tau_g = fmap.reduced_tension() + (m - 2) * grad_u * d1
        S = soliton_operator(fmap, bp)
        return float(np.max(np.abs(tau_g - S)))
    if isinstance(fmap, GridMap):
        grad_u = -(fmap.points() - bp.x0) / (2 * (m - 2) * bp.t0)
        tau_g = fmap.tension_vectors() + (m - 2) * np.einsum("...a,...ai->...i", grad_u, fmap.differential())
        return float(np.max(np.abs(tau_g - soliton_operator(fmap, bp))))
    raise TypeError(f"unsupported map {type(fmap).__name__}")


# ---------------------------------------------------------------------------
# weighted identities


def _vector_fields(m: int, zeta: np.ndarray, gamma: int):
    """The four test fields phi(y) with Jacobians J[p, b, a] = d_b phi^a."""
    I = np.eye(m)

    def position(y):
        return y, np.broadcast_to(I, y.shape[:-1] + (m, m))

    def constant(y):
        v = np.zeros_like(y)
        v[:, gamma] = 1.0
        return v, np.zeros(y.shape + (m,))

    def cubic(y):
        s = np.sum(y * y, axis=-1)
        jac = 2 * y[:, :, None] * y[:, None, :] + s[:, None, None] * I
        return s[:, None] * y, jac

    def directional(y):
        z = y @ zeta
        jac = np.broadcast_to(zeta[None, :, None] * zeta[None, None, :], y.shape[:-1] + (m, m))
        return z[:, None] * zeta[None, :], jac

    return {"position": position, "constant": constant, "cubic": cubic, "directional": directional}


def _norm_res(lhs: float, rhs: float) -> float:
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1.0)


def lemma_identity(fs, weight: GaussianWeight, chi: np.ndarray, sigma: float, phi) -> tuple[float, float]:
    """Both sides of the varying-basepoint integral identity for one vector field."""
    bp = weight.basepoint
    x0, t0 = bp.x0, bp.t0
    G = fs.gaussian(weight)
    y = fs.x - x0
    vals, jac = phi(y)
    Mab = np.einsum("pai,pbi->pab", fs.Tf, fs.Tf)
    tf2 = np.einsum("paa->p", Mab)
    v = (t0 / sigma) * chi - x0 + fs.x * (1 - t0 / sigma)
    lhs = np.sum(np.sum(vals * y, axis=-1) * tf2 * G)
    t1 = -4 * t0 * np.sum(np.einsum("pba,pba->p", Mab, jac) * G)
    t2 = 2 * t0 * np.sum(np.einsum("paa->p", jac) * tf2 * G)
    t3 = 2 * np.sum(np.einsum("pb,pba,pa->p", v, Mab, vals) * G)
    return float(lhs), float(t1 + t2 + t3)


def weighted_identity_suite(
    fmap,
    basepoint: Basepoint | None = None,
    soliton_basepoint: Basepoint | None = None,
    offset_basepoint: Basepoint | None = None,
    zeta=None,
    strict: bool = True,
    threshold: float = RESIDUAL_THRESHOLD,
) -> dict:
    """Normalized residuals |LHS - RHS| / max(|LHS|, |RHS|, 1) of the soliton identities.

    Coincident-basepoint identities use ``basepoint`` (default: the soliton's
    own). The varying-basepoint lemma and its two corollaries are evaluated
    at ``offset_basepoint``.
    """
    m = fmap.m
    sb = soliton_basepoint or Basepoint(getattr(fmap, "center", np.zeros(m)), 1.0)
    bp = basepoint or sb
    if strict:
        fit = soliton_residual(fmap, sb)
        if fit.residual_weighted > threshold:
            raise PreconditionFailed(f"soliton residual {fit.residual_weighted:.3g} above {threshold:g}")
    axis = np.zeros(m)
    axis[0] = 1.0
    zeta = axis if zeta is None else np.asarray(zeta, dtype=float)
    ob = offset_basepoint or Basepoint(sb.x0 + 0.3 * axis, 0.8)
    gamma = 0
    center = getattr(fmap, "center", np.zeros(m))
    if m >= 4 and isinstance(fmap, EquivariantProfile):
        # meridian rules integrate axisymmetric integrands only
        for v in (zeta, ob.x0 - center, bp.x0 - center, sb.x0 - center):
            if np.linalg.norm(v - (v @ axis) * axis) > 1e-12:
                raise UnsupportedDimension("for m >= 4 all basepoints and zeta must lie on the first axis")

    out = {}

    def sample(offcenter):
        if isinstance(fmap, EquivariantProfile):
            return field_sample(fmap, default_rule(m, axis=axis, offcenter=offcenter))
        return field_sample(fmap)

    fs0 = sample(0.0)
    fs1 = sample(1.0)

    # varying-basepoint lemma with the four fields
    w1 = GaussianWeight(ob)
    check_truncation(fmap, w1)
    fields = _vector_fields(m, zeta, gamma)
    for name, phi in fields.items():
        lhs, rhs = lemma_identity(fs1, w1, sb.x0, sb.t0, phi)
        out[f"lemma_{name}"] = _norm_res(lhs, rhs)

    # distinct-basepoint corollaries
    G = fs1.gaussian(w1)
    y = fs1.x - ob.x0
    tf2 = np.sum(fs1.Tf**2, axis=(-2, -1))
    yT = np.einsum("pa,pai->pi", y, fs1.Tf)
    xT = np.einsum("pa,pai->pi", fs1.x - sb.x0, fs1.Tf)
    lhs = np.sum(np.sum(y * y, -1) * tf2 * G)
    rhs = 2 * np.sum((np.sum(yT * yT, -1) - (ob.t0 / sb.t0) * np.sum(xT * yT, -1)) * G) + 2 * ob.t0 * (m - 2) * np.sum(
        tf2 * G
    )
    out["offset_a"] = _norm_res(lhs, rhs)
    v = (ob.t0 / sb.t0) * sb.x0 - ob.x0 + fs1.x * (1 - ob.t0 / sb.t0)
    vT = np.einsum("pa,pai->pi", v, fs1.Tf)
    res_b = 0.0
    for g in range(m):
        if m >= 4 and g != 0 and isinstance(fmap, EquivariantProfile):
            continue
        lhs = np.sum(y[:, g] * tf2 * G)
        rhs = 2 * np.sum(np.sum(vT * fs1.Tf[:, g, :], -1) * G)
        res_b = max(res_b, _norm_res(lhs, rhs))
    out["offset_b"] = res_b

    # coincident basepoint corollary (a)-(e)
    w0 = GaussianWeight(bp)
    fs = fs0 if np.allclose(bp.x0, center) else fs1
    G = fs.gaussian(w0)
    t0 = bp.t0
    y = fs.x - bp.x0
    r2 = np.sum(y * y, -1)
    tf2 = np.sum(fs.Tf**2, axis=(-2, -1))
    E = np.sum(tf2 * G)
    out["a"] = _norm_res(np.sum(r2 / (8 * t0) * tf2 * G), (m - 2) / 4 * E)
    out["b"] = max(abs(float(np.sum(y[:, g] * tf2 * G))) / max(1.0, E) for g in range(m if m == 3 else 1))
    tau2 = np.sum(fs.tau**2, -1)
    out["c"] = _norm_res(np.sum(r2**2 * tf2 * G), np.sum((4 * m * (m - 2) * t0**2 * tf2 - 32 * t0**3 * tau2) * G))
    zT = np.einsum("a,pai->pi", zeta, fs.Tf)
    d1 = float(np.sum(r2 * (y @ zeta) * tf2 * G))
    d2 = float(np.sum(np.sum(zT * fs.tau, -1) * G))
    out["d"] = max(abs(d1), abs(d2)) / max(1.0, E)
    out["e"] = _norm_res(
        np.sum((y @ zeta) ** 2 * tf2 * G), 2 * t0 * np.sum((zeta @ zeta * tf2 - 2 * np.sum(zT * zT, -1)) * G)
    )
    return {k: float(v) for k, v in out.items()}


def bumped_profile(profile: EquivariantProfile, amp: float = 0.2, r0: float = 1.0, width: float = 0.4):
    """A non-soliton obtained by adding a localized bump to psi (negative control)."""
    r = profile.r
    return profile.replace(profile.psi + amp * r * np.exp(-((r - r0) ** 2) / width**2))


# ---------------------------------------------------------------------------
# rigidity checks


@dataclass
class GapReport:
    sup_tf2: float
    residual_weighted: float
    verdict: str


def gap_theorem_check(fmap, threshold: float = RESIDUAL_THRESHOLD, K: float = 1.0) -> GapReport:
    """sup K|Tf|^2 <= 1 forces a soliton to be constant; unit sphere so K = 1."""
    sup = 2.0 * float(np.max(fmap.energy_density()))
    if sup <= 1e-12:
        return GapReport(sup, 0.0, "TRIVIAL")
    fit = soliton_residual(fmap)
    if fit.residual_weighted > threshold:
        raise PreconditionFailed(f"soliton residual {fit.residual_weighted:.3g} above {threshold:g}")
    verdict = "NONTRIVIAL" if K * sup > 1.0 else "INCONSISTENT"
    return GapReport(sup, fit.residual_weighted, verdict)


@dataclass
class RigidityReport:
    verdict: str
    convexity: float
    residual_weighted: float
    energy: float
    table: list


def convex_supporting_rigidity_check(
    fmap, F=None, radii=(2.0, 3.0, 4.0, 6.0, 8.0), threshold: float = RESIDUAL_THRESHOLD
) -> RigidityReport:
    """Cutoff test of Delta(F o f) - <grad F, (x/2) . Tf> >= C |Tf|^2 integrated against G.

    Each row holds R, C int |Tf|^2 eta^2 G and int (Delta(F o f) - dF((x/2).Tf)) eta G
    for eta = 1 on B_{R/2} decaying linearly to 0 on the sphere of radius R.
    """
    if F is None:
        F = HeightFunction(np.eye(fmap.n + 1)[-1])
    fs = field_sample(fmap)
    inside = convex_domain(F, fs.f)
    if not np.all(inside):
        k = int(np.argmin(inside))
        raise OutOfDomain(f"image leaves the domain of {type(F).__name__} at sample {k}", node=k)
    w = GaussianWeight(Basepoint(getattr(fmap, "center", np.zeros(fmap.m)), 1.0))
    _, grad, H = convex_derivatives(F, fs.f)
    hess_tr = np.einsum("pai,pij,paj->p", fs.Tf, H, fs.Tf)
    tf2 = np.sum(fs.Tf**2, axis=(-2, -1))
    with np.errstate(invalid="ignore", divide="ignore"):
        C = float(np.min(np.where(tf2 > 0, hess_tr / tf2, np.inf)))
    if not np.isfinite(C):
        C = 0.0
    center = getattr(fmap, "center", np.zeros(fmap.m))
    drift = np.einsum("pa,pai->pi", (fs.x - center) / 2, fs.Tf)
    integrand = hess_tr + np.sum(grad * fs.tau, -1) - np.sum(grad * drift, -1)
    G = fs.gaussian(w)
    rho = np.linalg.norm(fs.x - center, axis=-1)
    table = []
    for R in radii:
        eta = np.clip(2.0 - 2.0 * rho / R, 0.0, 1.0)
        table.append((float(R), float(C * np.sum(tf2 * eta**2 * G)), float(np.sum(integrand * eta * G))))
    energy = float(np.sum(tf2 * G))
    if energy <= 1e-12:
        return RigidityReport("CONSTANT", C, 0.0, energy, table)
    fit = soliton_residual(fmap)
    if fit.residual_weighted > threshold:
        return RigidityReport("NOT_A_SOLITON", C, fit.residual_weighted, energy, table)
    return RigidityReport("INCONSISTENT", C, fit.residual_weighted, energy, table)


# ---------------------------------------------------------------------------
# continuation beyond the sampled radius


def far_field_coefficient(profile: EquivariantProfile) -> float:
    """c in psi ~ psi_R + c (1/R^2 - 1/r^2), matching psi'(R) = -(m-1) sin(2 psi_R) / R^3."""
    return -(profile.m - 1) * np.sin(2 * profile.psi[-1]) / 2


def profile_interpolant(profile: EquivariantProfile):
    """psi as a callable on r >= 0: odd cubic spline inside, far-field tail outside."""
    from scipy.interpolate import CubicSpline

    r = profile.r
    spline = CubicSpline(np.concatenate((-r[:0:-1], r)), np.concatenate((-profile.psi[:0:-1], profile.psi)))
    R = profile.R_max
    psiR = profile.psi[-1]
    c = far_field_coefficient(profile)

    def psi(rho):
        rho = np.asarray(rho, dtype=float)
        inside = spline(np.minimum(rho, R))
        with np.errstate(divide="ignore"):
            tail = psiR + c * (1 / R**2 - 1 / np.maximum(rho, R) ** 2)
        return np.where(rho <= R, inside, tail)

    return psi


def extend_profile(profile: EquivariantProfile, R_new: float, polish: bool = False) -> EquivariantProfile:
    """Same dr, larger radius; nodes past R_max follow the far-field tail.

    With ``polish`` the result is Newton-polished as a soliton on the new grid.
    """
    J = int(round(R_new / profile.dr))
    r = np.arange(J + 1) * profile.dr
    psi = profile_interpolant(profile)(r)
    psi[: profile.J + 1] = profile.psi[: J + 1]
    psi[0] = 0.0
    if polish:
        psi, _ = _newton_polish(psi, profile.m, profile.dr)
    return EquivariantProfile(psi, profile.m, J * profile.dr, profile.center, profile.codim)


def resample_profile(profile: EquivariantProfile, J: int, R_max: float | None = None) -> EquivariantProfile:
    R = profile.R_max if R_max is None else float(R_max)
    r = np.linspace(0.0, R, J + 1)
    psi = profile_interpolant(profile)(r)
    psi[0] = 0.0
    return EquivariantProfile(psi, profile.m, R, profile.center, profile.codim)
