"""Gaussian weights, basepoints and quadrature over the sampled domains."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import TruncationError
from .maps import CurveMap, CylindricalMap, EquivariantProfile, GridMap

TAIL_BUDGET = 1e-10


def sphere_area(m: int) -> float:
    """Area of the unit sphere S^{m-1} in R^m."""
    return float(2 * np.pi ** (m / 2) / special.gamma(m / 2))


@dataclass(frozen=True)
class Basepoint:
    x0: np.ndarray
    t0: float

    def __post_init__(self):
        if not self.t0 > 0:
            raise ValueError("t0 must be positive")
        x = np.atleast_1d(np.array(self.x0, dtype=float))
        x.setflags(write=False)
        object.__setattr__(self, "x0", x)
        object.__setattr__(self, "t0", float(self.t0))

    @property
    def m(self) -> int:
        return self.x0.size

    @classmethod
    def origin(cls, m: int, t0: float = 1.0) -> "Basepoint":
        return cls(np.zeros(m), t0)


@dataclass(frozen=True)
class GaussianWeight:
    """G(x) = exp(-|x - x0|^2 / 4 t0) / (4 pi t0)^{m/2}.

    ``truncation_radius`` is the radius of the ball about x0 holding all but
    ``tail_budget`` of the mass.
    """

    basepoint: Basepoint
    tail_budget: float = TAIL_BUDGET

    @property
    def m(self) -> int:
        return self.basepoint.m

    @property
    def truncation_radius(self) -> float:
        return float(np.sqrt(2 * self.basepoint.t0) * stats.chi.isf(self.tail_budget, self.m))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        t0 = self.basepoint.t0
        d2 = np.sum((x - self.basepoint.x0) ** 2, axis=-1)
        return np.exp(-d2 / (4 * t0)) / (4 * np.pi * t0) ** (self.m / 2)


def _gauss_1d_mass(lo: np.ndarray, hi: np.ndarray, t0: float) -> np.ndarray:
    s = 2 * np.sqrt(t0)
    return 0.5 * (special.erf(hi / s) - special.erf(lo / s))


def tail_mass(fmap, weight: GaussianWeight) -> float:
    """Gaussian mass lying outside the sampled domain of ``fmap``."""
    bp = weight.basepoint
    if isinstance(fmap, EquivariantProfile):
        rho = float(np.linalg.norm(bp.x0 - fmap.center))
        gap = fmap.R_max - rho
        if gap <= 0:
            return 1.0
        return float(stats.chi.sf(gap / np.sqrt(2 * bp.t0), fmap.m))
    if isinstance(fmap, GridMap):
        R = fmap.R_max
        inside = np.prod(_gauss_1d_mass(-R - bp.x0, R - bp.x0, bp.t0))
        return float(max(0.0, 1.0 - inside))
    if isinstance(fmap, CurveMap):
        inside = _gauss_1d_mass(0.0 - bp.x0[0], 2 * np.pi - bp.x0[0], bp.t0)
        return float(max(0.0, 1.0 - inside))
    if isinstance(fmap, CylindricalMap):
        k = fmap.base.m
        base_w = GaussianWeight(Basepoint(bp.x0[:k], bp.t0), weight.tail_budget)
        L = fmap.line_half_width
        line = np.prod(_gauss_1d_mass(-L - bp.x0[k:], L - bp.x0[k:], bp.t0))
        return float(max(0.0, 1.0 - (1.0 - tail_mass(fmap.base, base_w)) * line))
    raise TypeError(f"unsupported map {type(fmap).__name__}")


def check_truncation(fmap, weight: GaussianWeight) -> float:
    if weight.m != fmap.m:
        raise ValueError(f"basepoint has dimension {weight.m}, map source has {fmap.m}")
    tm = tail_mass(fmap, weight)
    if tm > weight.tail_budget:
        raise TruncationError(f"Gaussian tail mass {tm:.3g} outside the grid exceeds {weight.tail_budget:.1g}")
    return tm


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    return w


def spherical_average_kernel(r: np.ndarray, rho: float, t0: float, m: int) -> np.ndarray:
    """Integral over S^{m-1} of G(c + r omega) for a Gaussian centered at distance rho from c."""
    pref = (4 * np.pi * t0) ** (-m / 2)
    if rho == 0.0:
        return pref * sphere_area(m) * np.exp(-(r**2) / (4 * t0))
    kappa = r * rho / (2 * t0)
    nu = m / 2 - 1
    out = np.empty_like(r, dtype=float)
    small = kappa < 1e-8
    k = kappa[~small]
    rr = r[~small]
    out[~small] = (2 * np.pi) ** (m / 2) * k ** (-nu) * special.ive(nu, k) * np.exp(-((rr - rho) ** 2) / (4 * t0))
    out[small] = sphere_area(m) * np.exp(-(r[small] ** 2 + rho**2) / (4 * t0))
    return pref * out


def radial_weights(profile: EquivariantProfile, weight: GaussianWeight) -> np.ndarray:
    """Quadrature weights w_j with sum_j w_j h(r_j) ~ int h(|x - c|) G dx."""
    bp = weight.basepoint
    rho = float(np.linalg.norm(bp.x0 - profile.center))
    r = profile.r
    K = spherical_average_kernel(r, rho, bp.t0, profile.m)
    w = trapezoid_weights(r.size, profile.dr) * r ** (profile.m - 1) * K
    if profile.m == 2:
        # r K h has a kink under odd reflection; the Euler-Maclaurin end term restores O(dr^4)
        w[0] += profile.dr**2 / 12 * K[0]
    return w


def gaussian_quadrature(fmap, weight: GaussianWeight, integrand: np.ndarray) -> float:
    """Integral of a per-node integrand against G over the sampled domain.

    For profiles the integrand is a function of r; for cylindrical maps it is
    a per-node value of the base (constant along the line).
    """
    check_truncation(fmap, weight)
    integrand = np.asarray(integrand, dtype=float)
    bp = weight.basepoint
    if isinstance(fmap, EquivariantProfile):
        return float(np.sum(radial_weights(fmap, weight) * integrand))
    if isinstance(fmap, GridMap):
        G = weight(fmap.points())
        w = np.ones_like(G)
        for a in range(fmap.m):
            shape = [1] * fmap.m
            shape[a] = fmap.N
            w = w * trapezoid_weights(fmap.N, fmap.dx).reshape(shape)
        return float(np.sum(w * G * integrand))
    if isinstance(fmap, CurveMap):
        s = fmap.s
        G = np.exp(-((s - bp.x0[0]) ** 2) / (4 * bp.t0)) / np.sqrt(4 * np.pi * bp.t0)
        return float(np.sum(G * integrand) * fmap.ds)
    if isinstance(fmap, CylindricalMap):
        k = fmap.base.m
        base_w = GaussianWeight(Basepoint(bp.x0[:k], bp.t0), 1.0)
        line = fmap.line
        h = line[1] - line[0]
        factor = 1.0
        for s0 in bp.x0[k:]:
            g = np.exp(-((line - s0) ** 2) / (4 * bp.t0)) / np.sqrt(4 * np.pi * bp.t0)
            factor *= float(np.sum(trapezoid_weights(line.size, h) * g))
        return gaussian_quadrature(fmap.base, base_w, integrand) * factor
    raise TypeError(f"unsupported map {type(fmap).__name__}")


# ---------------------------------------------------------------------------
# angular rules and pointwise samples


@dataclass(frozen=True)
class AngularRule:
    """Quadrature on S^{m-1}: ``points`` (K, m) and ``weights`` (K,) summing to |S^{m-1}|.

    ``axisymmetric`` rules integrate exactly only functions invariant under
    rotations fixing ``axis``.
    """

    points: np.ndarray
    weights: np.ndarray
    axis: np.ndarray
    axisymmetric: bool = False

    @property
    def m(self) -> int:
        return self.points.shape[1]

    @classmethod
    def product(cls, m: int, n_polar: int = 8, n_rest: int = 4, n_az: int = 8, axis=None) -> "AngularRule":
        pts, w = _sphere_rule(m, n_polar, n_rest, n_az)
        Q = _frame(m, axis)
        return cls(pts @ Q.T, w, Q[:, 0], False)

    @classmethod
    def meridian(cls, m: int, n_polar: int = 16, axis=None) -> "AngularRule":
        if m == 2:
            return cls.product(2, n_az=max(n_polar, 8), axis=axis)
        u, wu = special.roots_jacobi(n_polar, (m - 3) / 2, (m - 3) / 2)
        pts = np.zeros((n_polar, m))
        pts[:, 0] = u
        pts[:, 1] = np.sqrt(1 - u**2)
        Q = _frame(m, axis)
        return cls(pts @ Q.T, wu * sphere_area(m - 1), Q[:, 0], True)


def _frame(m: int, axis) -> np.ndarray:
    """Orthogonal matrix whose first column is the unit axis."""
    a = np.zeros(m)
    a[0] = 1.0
    if axis is not None and np.linalg.norm(axis) > 0:
        a = np.asarray(axis, dtype=float) / np.linalg.norm(axis)
    M = np.eye(m)
    M[:, 0] = a
    k = int(np.argmax(np.abs(a)))
    if k != 0:
        M[:, k] = np.eye(m)[:, 0]
    Q, R = np.linalg.qr(M)
    Q = Q * np.sign(np.diag(R))
    return Q


def _sphere_rule(m: int, n_polar: int, n_rest: int, n_az: int) -> tuple[np.ndarray, np.ndarray]:
    if m == 2:
        th = 2 * np.pi * np.arange(n_az) / n_az
        return np.stack([np.cos(th), np.sin(th)], axis=-1), np.full(n_az, 2 * np.pi / n_az)
    alpha = (m - 3) / 2
    u, wu = special.roots_jacobi(n_polar, alpha, alpha)
    sub, ws = _sphere_rule(m - 1, n_rest, n_rest, n_az)
    pts = np.concatenate(
        [np.repeat(u, len(ws))[:, None], (np.sqrt(1 - u**2)[:, None, None] * sub[None]).reshape(-1, m - 1)],
        axis=1,
    )
    return pts, np.outer(wu, ws).ravel()


@dataclass(frozen=True)
class FieldSample:
    """Pointwise data of a map on a quadrature point set.

    x: (P, m) source points; dV: (P,) volume weights; f: (P, n+1);
    Tf: (P, m, n+1); tau: (P, n+1); hess: (P, m, m, n+1) tangential second
    derivatives (may be None).
    """

    x: np.ndarray
    dV: np.ndarray
    f: np.ndarray
    Tf: np.ndarray
    tau: np.ndarray
    hess: np.ndarray | None = None
    rule: AngularRule | None = None
    radial_index: np.ndarray | None = None

    @property
    def m(self) -> int:
        return self.x.shape[1]

    @property
    def n(self) -> int:
        return self.f.shape[1] - 1

    def integrate(self, values: np.ndarray, weight: GaussianWeight) -> float:
        return float(np.sum(self.dV * weight(self.x) * values))

    def gaussian(self, weight: GaussianWeight) -> np.ndarray:
        return self.dV * weight(self.x)


def default_rule(m: int, axis=None, offcenter: float = 0.0) -> AngularRule:
    if m == 3:
        n_polar = 8 if offcenter == 0 else 24
        return AngularRule.product(3, n_polar=n_polar, n_az=8, axis=axis)
    return AngularRule.meridian(m, n_polar=8 if offcenter == 0 else 24, axis=axis)


def sample_profile(profile: EquivariantProfile, rule: AngularRule | None = None, hessian: bool = False) -> FieldSample:
    """Evaluate f, Tf, tau (and optionally the Hessian) on radial nodes x angular rule.

    The origin node is omitted; it carries no weight for m >= 2.
    """
    m = profile.m
    if rule is None:
        rule = default_rule(m)
    r = profile.r[1:]
    J = r.size
    K = rule.points.shape[0]
    psi = profile.psi[1:]
    d1, d2 = profile.derivatives()
    d1, d2 = d1[1:], d2[1:]
    tau_psi = profile.reduced_tension()[1:]
    so = np.sin(psi) / r
    sp, cp = np.sin(psi), np.cos(psi)

    om = rule.points
    # per-point arrays (J, K, ...)
    omega = np.broadcast_to(om, (J, K, m))
    e_psi = np.concatenate([cp[:, None, None] * omega, np.broadcast_to(-sp[:, None, None], (J, K, 1))], axis=-1)
    f = np.concatenate([sp[:, None, None] * omega, np.broadcast_to(cp[:, None, None], (J, K, 1))], axis=-1)
    P = np.eye(m)[None, None] - omega[..., :, None] * omega[..., None, :]  # (J,K,m,m) rows P_alpha
    Pamb = np.concatenate([P, np.zeros((J, K, m, 1))], axis=-1)
    Tf = d1[:, None, None, None] * omega[..., :, None] * e_psi[..., None, :] + so[:, None, None, None] * Pamb
    tau = tau_psi[:, None, None] * e_psi
    x = profile.center + r[:, None, None] * omega
    dV = (trapezoid_weights(profile.J + 1, profile.dr)[1:] * r ** (m - 1))[:, None] * rule.weights[None, :]

    hess = None
    if hessian:
        dso = d1 * cp / r - sp / r**2
        oo = omega[..., :, None] * omega[..., None, :]
        c = d2[:, None, None, None] * oo + (d1 / r - so * cp / r)[:, None, None, None] * P
        # u-part: omega_b P_a (psi' cos/r - sin/r^2) + omega_a P_b (sin/r)'
        u = dso[:, None, None, None, None] * (
            omega[..., None, :, None] * Pamb[..., :, None, :] + omega[..., :, None, None] * Pamb[..., None, :, :]
        )
        hess = c[..., None] * e_psi[..., None, None, :] + u
        hess = hess.reshape(J * K, m, m, m + 1)

    idx = np.repeat(np.arange(1, profile.J + 1), K)
    pad = profile.codim

    def widen(a):
        if pad == 0:
            return a
        return np.concatenate([a, np.zeros(a.shape[:-1] + (pad,))], axis=-1)

    return FieldSample(
        x=x.reshape(J * K, m),
        dV=dV.reshape(J * K),
        f=widen(f.reshape(J * K, m + 1)),
        Tf=widen(Tf.reshape(J * K, m, m + 1)),
        tau=widen(tau.reshape(J * K, m + 1)),
        hess=None if hess is None else widen(hess),
        rule=rule,
        radial_index=idx,
    )


def sample_grid(gmap: GridMap, hessian: bool = False) -> FieldSample:
    m = gmap.m
    w = np.ones((gmap.N,) * m)
    for a in range(m):
        shape = [1] * m
        shape[a] = gmap.N
        w = w * trapezoid_weights(gmap.N, gmap.dx).reshape(shape)
    P = gmap.N**m
    return FieldSample(
        x=gmap.points().reshape(P, m),
        dV=w.reshape(P),
        f=gmap.values.reshape(P, gmap.n + 1),
        Tf=gmap.differential().reshape(P, m, gmap.n + 1),
        tau=gmap.tension_vectors().reshape(P, gmap.n + 1),
        hess=gmap.hessian_vectors().reshape(P, m, m, gmap.n + 1) if hessian else None,
    )


def field_sample(fmap, rule: AngularRule | None = None, hessian: bool = False) -> FieldSample:
    if isinstance(fmap, EquivariantProfile):
        return sample_profile(fmap, rule, hessian)
    if isinstance(fmap, GridMap):
        return sample_grid(fmap, hessian)
    raise TypeError(f"no pointwise sampling for {type(fmap).__name__}")
