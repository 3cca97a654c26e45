"""The basepointed F-functional, entropy as its supremum, and flow audits."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize, stats

from .errors import PreconditionFailed, TruncationError
from .maps import CurveMap, CylindricalMap, EquivariantProfile, GridMap
from .quadrature import TAIL_BUDGET, Basepoint, GaussianWeight, gaussian_quadrature, tail_mass

TOL_REL = 1e-4


def f_functional(fmap, basepoint: Basepoint) -> float:
    """(t0/2) int |Tf|^2 G_{x0,t0}."""
    w = GaussianWeight(basepoint)
    return 0.5 * basepoint.t0 * gaussian_quadrature(fmap, w, 2.0 * fmap.energy_density())


def _center(fmap) -> np.ndarray:
    if isinstance(fmap, EquivariantProfile):
        return np.array(fmap.center)
    if isinstance(fmap, CylindricalMap):
        return np.concatenate([_center(fmap.base), np.zeros(fmap.extra_dims)])
    if isinstance(fmap, CurveMap):
        return np.array([np.pi])
    return np.zeros(fmap.m)


def t_max(fmap, x0, budget: float = TAIL_BUDGET) -> float:
    """Largest t0 whose Gaussian at x0 keeps its tail mass within the budget (0 if none)."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if isinstance(fmap, EquivariantProfile):
        gap = fmap.R_max - float(np.linalg.norm(x0 - fmap.center))
        if gap <= 0:
            return 0.0
        return float(0.5 * (gap / stats.chi.isf(budget, fmap.m)) ** 2)

    def excess(logt):
        return np.log(max(tail_mass(fmap, GaussianWeight(Basepoint(x0, np.exp(logt)), budget)), 1e-300)) - np.log(budget)

    lo, hi = -20.0, 10.0
    if excess(lo) > 0:
        return 0.0
    if excess(hi) <= 0:
        return float(np.exp(hi))
    return float(np.exp(optimize.brentq(excess, lo, hi, xtol=1e-12)))


def t_min(fmap) -> float:
    """Below (2 h)^2 the Gaussian is not resolved; F tends to 0 there anyway."""
    h = fmap.base.spacing if isinstance(fmap, CylindricalMap) else fmap.spacing
    return float((2 * h) ** 2)


@dataclass(frozen=True)
class EntropyConfig:
    starts: int = 5
    budget: int = 500
    rho_points: int = 21
    logt_points: int = 21
    rho_max: float = 2.0
    log_t0_range: tuple = (-1.5, 1.5)
    direction: tuple | None = None
    xatol: float = 1e-7
    fatol: float = 1e-13
    seed: int = 0
    landscape: bool = True
    radial_reduction: bool = True

    def __post_init__(self):
        if self.starts < 1 or self.budget < 10:
            raise ValueError("need at least one start and a budget of 10 evaluations")
        if self.rho_points < 1 or self.logt_points < 2:
            raise ValueError("landscape grid too small")


@dataclass
class EntropyReport:
    lam: float
    argmax: Basepoint
    landscape: list
    optimizer_trace: list
    status: str
    evaluations: int = 0
    clipped: int = 0

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "argmax": {"x0": self.argmax.x0.tolist(), "t0": self.argmax.t0},
            "landscape": self.landscape,
            "optimizer_trace": self.optimizer_trace,
            "status": self.status,
            "evaluations": self.evaluations,
            "clipped": self.clipped,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


class _Objective:
    """Xi(x0, t0) with t0 clipped into [t_min, t_max(x0)], never extrapolated."""

    def __init__(self, fmap, radial: bool):
        self.fmap = fmap
        self.c = _center(fmap)
        self.m = self.c.size
        self.radial = radial
        self.tmin = t_min(fmap)
        self.count = 0
        self.clipped = 0

    def basepoint(self, z) -> Basepoint:
        z = np.asarray(z, dtype=float)
        if self.radial:
            x0 = self.c.copy()
            x0[0] += abs(z[0])
        else:
            x0 = self.c + z[:-1]
        t = float(np.exp(z[-1]))
        hi = t_max(self.fmap, x0) * (1 - 1e-9)
        if hi <= self.tmin:
            return None  # no resolvable Gaussian here; scored as 0
        if not self.tmin <= t <= hi:
            self.clipped += 1
            t = min(max(t, self.tmin), hi)
        return Basepoint(x0, t)

    def value(self, bp: Basepoint | None) -> float:
        if bp is None:
            return 0.0
        self.count += 1
        return f_functional(self.fmap, bp)

    def __call__(self, z) -> float:
        return -self.value(self.basepoint(z))


def _direction(fmap, cfg: EntropyConfig) -> np.ndarray:
    m = _center(fmap).size
    if cfg.direction is not None:
        d = np.asarray(cfg.direction, dtype=float)
        return d / np.linalg.norm(d)
    d = np.zeros(m)
    # product maps scan along the split line by default
    d[fmap.base.m if isinstance(fmap, CylindricalMap) else 0] = 1.0
    return d


def landscape_samples(fmap, cfg: EntropyConfig, obj: _Objective | None = None) -> list:
    """Xi on the (rho along a direction, log t0) grid; each entry holds the basepoint actually evaluated."""
    obj = obj or _Objective(fmap, False)
    d = _direction(fmap, cfg)
    out = []
    for rho in np.linspace(0.0, cfg.rho_max, cfg.rho_points):
        for lt in np.linspace(*cfg.log_t0_range, cfg.logt_points):
            x0 = obj.c + rho * d
            hi = t_max(fmap, x0) * (1 - 1e-9)
            if hi <= obj.tmin:
                continue
            t = float(np.clip(np.exp(lt), obj.tmin, hi))
            bp = Basepoint(x0, t)
            out.append({"x0": bp.x0.tolist(), "t0": bp.t0, "xi": obj.value(bp)})
    return out


def _is_constant(fmap) -> bool:
    return float(np.max(fmap.energy_density())) == 0.0


def entropy(fmap, config: EntropyConfig | None = None, warm_start: Basepoint | None = None) -> EntropyReport:
    """lambda = sup over basepoints of F, by landscape scan plus multi-start Nelder-Mead in (x0, log t0).

    For profiles F depends on x0 only through |x0 - c|; with ``radial_reduction``
    the search runs over (rho, log t0).
    """
    cfg = config or EntropyConfig()
    c = _center(fmap)
    if _is_constant(fmap):
        land = []
        if cfg.landscape:
            land = [dict(e, xi=0.0) for e in landscape_samples(fmap, cfg, _Objective(fmap, False))]
        return EntropyReport(0.0, Basepoint(c, 1.0), land, [], "CONVERGED")
    radial = cfg.radial_reduction and isinstance(fmap, EquivariantProfile)
    obj = _Objective(fmap, radial)
    land = landscape_samples(fmap, cfg, obj) if cfg.landscape else []

    def to_z(x0, t0):
        x0 = np.asarray(x0, dtype=float)
        if radial:
            return np.array([np.linalg.norm(x0 - c), np.log(t0)])
        return np.concatenate([x0 - c, [np.log(t0)]])

    seeds = [to_z(c, 1.0)] if warm_start is None else [to_z(warm_start.x0, warm_start.t0)]
    ranked = sorted(land, key=lambda e: -e["xi"])
    for e in ranked:
        if len(seeds) >= cfg.starts:
            break
        z = to_z(e["x0"], e["t0"])
        if all(np.linalg.norm(z - s) > 1e-3 for s in seeds):
            seeds.append(z)
    rng = np.random.default_rng(cfg.seed)
    while len(seeds) < cfg.starts:
        z = seeds[0] + rng.normal(scale=0.3, size=seeds[0].size)
        seeds.append(z)

    trace, best = [], None
    per = max(cfg.budget // len(seeds), 10)
    for k, z0 in enumerate(seeds):
        hist = []
        res = optimize.minimize(
            lambda z: obj(z),
            z0,
            method="Nelder-Mead",
            callback=lambda xk: hist.append(float(-obj(xk))),
            options={"maxfev": per, "xatol": cfg.xatol, "fatol": cfg.fatol},
        )
        trace.append({"start": k, "z0": np.asarray(z0).tolist(), "values": hist, "value": float(-res.fun), "success": bool(res.success)})
        if best is None or -res.fun > best[0]:
            best = (float(-res.fun), res)
    lam, res = best
    z = np.array(res.x)
    if radial and abs(z[0]) < 1e-5:
        # Xi is even in rho, so snapping to the center moves it by O(rho^2)
        z[0] = 0.0
        lam = max(lam, obj.value(obj.basepoint(z)))
    bp = obj.basepoint(z)
    if land:
        top = max(land, key=lambda e: e["xi"])
        if top["xi"] > lam:
            lam, bp = top["xi"], Basepoint(top["x0"], top["t0"])
    status = "CONVERGED" if res.success else "UNCONVERGED"
    return EntropyReport(lam, bp, land, trace, status, obj.count, obj.clipped)


# ---------------------------------------------------------------------------
# audits along flows


@dataclass
class MonotonicityAudit:
    times: list
    values: list
    dissipation: list
    nonincreasing: bool
    max_increase: float
    derivative_error: float
    error_constant: float
    tol: float

    def to_dict(self) -> dict:
        return asdict(self)


def dissipation_integrand(profile: EquivariantProfile, x0, t0: float) -> float:
    """(t0) int |tau - ((x - x0) / 2 t0) . Tf|^2 G_{x0,t0} for a centered profile with x0 = c."""
    if not np.allclose(np.asarray(x0, dtype=float), profile.center):
        raise PreconditionFailed("dissipation audit supports basepoints at the profile center")
    d1, _ = profile.derivatives()
    S = profile.reduced_tension() - profile.r * d1 / (2 * t0)
    return t0 * gaussian_quadrature(profile, GaussianWeight(Basepoint(x0, t0)), S**2)


def monotonicity_audit(times, maps, x0, T: float, tol: float = TOL_REL) -> MonotonicityAudit:
    """F(f_{t_k}) at scale T - t_k and its dissipation, for profiles flowing on R^m.

    d/dt F = -D, with D the dissipation integrand; the discrete derivative is
    compared against the trapezoid average of D.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times >= T):
        raise PreconditionFailed("all samples must precede the basepoint time")
    for f in maps:
        if not isinstance(f, EquivariantProfile):
            raise PreconditionFailed("the audit applies to maps on R^m (profiles)")
    x0 = np.asarray(x0, dtype=float)
    F = np.array([f_functional(f, Basepoint(x0, T - t)) for f, t in zip(maps, times)])
    D = np.array([dissipation_integrand(f, x0, T - t) for f, t in zip(maps, times)])
    scale = max(1.0, float(np.max(np.abs(F))))
    inc = float(np.max(np.diff(F))) if F.size > 1 else 0.0
    dt = np.diff(times)
    deriv = np.diff(F) / dt
    err = float(np.max(np.abs(deriv + 0.5 * (D[1:] + D[:-1])))) if F.size > 1 else 0.0
    h = maps[0].spacing
    const = err / (float(np.max(dt)) + h * h) if F.size > 1 else 0.0
    return MonotonicityAudit(times.tolist(), F.tolist(), D.tolist(), inc <= tol * scale, inc, err, const, tol * scale)


@dataclass
class EntropyMonotonicity:
    verdict: str
    lambdas: list
    max_increase: float
    tol: float
    statuses: list = field(default_factory=list)


def entropy_monotonicity_check(trace, config: EntropyConfig | None = None, tol_rel: float = TOL_REL) -> EntropyMonotonicity:
    """lambda(f_{t_{k+1}}) <= lambda(f_{t_k}) + tol_rel max(1, lambda).

    ``trace`` holds maps (entropy is computed, warm-started from the previous
    argmax) or precomputed entropy values.
    """
    lams, statuses = [], []
    cfg = config or EntropyConfig(starts=1, budget=200, landscape=False)
    warm = None
    for item in trace:
        if isinstance(item, (int, float, np.floating)):
            lams.append(float(item))
            continue
        rep = entropy(item, cfg, warm_start=warm)
        warm = rep.argmax
        lams.append(rep.lam)
        statuses.append(rep.status)
    lams_a = np.array(lams)
    tol = tol_rel * max(1.0, float(np.max(lams_a))) if lams else 0.0
    inc = float(np.max(np.diff(lams_a))) if len(lams) > 1 else 0.0
    verdict = "PASS" if inc <= tol else "FAIL"
    return EntropyMonotonicity(verdict, lams, inc, tol, statuses)


@dataclass
class StrictMaxScan:
    margin: float
    verdict: str
    lam: float
    excluded_points: int
    worst: dict | None


def landscape_strict_max_scan(
    fmap,
    eps: float = 0.5,
    config: EntropyConfig | None = None,
    center: Basepoint | None = None,
    report: EntropyReport | None = None,
) -> StrictMaxScan:
    """min of lambda - Xi over grid basepoints with |x0 - c| + |log t0| > eps.

    DEGENERATE when lambda vanishes, STRICT for a positive margin, NONSTRICT otherwise.
    """
    cfg = config or EntropyConfig()
    rep = report or entropy(fmap, cfg)
    lam = rep.lam
    c = center or Basepoint(_center(fmap), 1.0)
    pts = rep.landscape if rep.landscape else landscape_samples(fmap, cfg)
    outside = [
        e for e in pts if np.linalg.norm(np.asarray(e["x0"]) - c.x0) + abs(np.log(e["t0"] / c.t0)) > eps
    ]
    if lam == 0.0:
        return StrictMaxScan(0.0, "DEGENERATE", 0.0, len(outside), None)
    if not outside:
        raise TruncationError("no feasible landscape points outside the exclusion radius")
    worst = min(outside, key=lambda e: lam - e["xi"])
    margin = float(lam - worst["xi"])
    verdict = "STRICT" if margin > 1e-6 * max(1.0, lam) else "NONSTRICT"
    return StrictMaxScan(margin, verdict, lam, len(outside), worst)
