"""Geometry of the round unit sphere S^n inside R^{n+1}.

Scalar-level types (SpherePoint, TangentVector, ...) validate their invariants.
The ``*_rows`` helpers are the vectorized versions used by the discrete maps,
where the last axis always holds ambient coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateInput, InvalidBasis, InvalidTangent, OutOfDomain

UNIT_TOL = 1e-12


@dataclass(frozen=True)
class SpherePoint:
    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if c.ndim != 1 or c.size < 2:
            raise DegenerateInput("sphere point needs a 1-d coordinate vector of length >= 2")
        if abs(np.linalg.norm(c) - 1.0) > UNIT_TOL:
            raise DegenerateInput("coordinates are not unit length; use project_to_sphere")
        object.__setattr__(self, "coords", c)

    @property
    def n(self) -> int:
        return self.coords.size - 1


@dataclass(frozen=True)
class TangentVector:
    base: SpherePoint
    vec: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vec, dtype=float)
        if v.shape != self.base.coords.shape:
            raise InvalidTangent("vector and base point have different lengths")
        if abs(v @ self.base.coords) > UNIT_TOL * max(1.0, np.linalg.norm(v)):
            raise InvalidTangent("vector is not tangent at its base point")
        object.__setattr__(self, "vec", v)


@dataclass(frozen=True)
class ConformalField:
    """W_p = w - <w, p> p for a unit pole w."""

    pole: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.pole, dtype=float)
        if abs(np.linalg.norm(w) - 1.0) > UNIT_TOL:
            raise InvalidBasis("conformal pole must be a unit vector")
        object.__setattr__(self, "pole", w)


@dataclass(frozen=True)
class HingeConvexFunction:
    """F_K = exp(kappa (phi + arcsin(c / nu))) / kappa on {nu > c}.

    ``axes`` picks the two ambient coordinates (a, b) with a = nu sin(phi),
    b = nu cos(phi). The hinge is {a = 0, b >= 0}; the angle is measured in
    [0, 2 pi) so its branch cut sits on the hinge.
    """

    c: float = 0.5
    kappa: float = 20.0
    axes: tuple[int, int] = (0, 1)

    def __post_init__(self):
        if not 0.0 < self.c < 1.0:
            raise ValueError("c must lie in (0, 1)")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.axes[0] == self.axes[1]:
            raise ValueError("axes must be distinct")


@dataclass(frozen=True)
class HeightFunction:
    """F(p) = -<p, axis> on the open hemisphere {<p, axis> > floor}.

    Its spherical Hessian is <p, axis> times the metric, so it is strictly
    convex wherever it is defined (floor >= 0).
    """

    axis: np.ndarray
    floor: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.axis, dtype=float)
        if abs(np.linalg.norm(a) - 1.0) > UNIT_TOL:
            raise InvalidBasis("height axis must be a unit vector")
        object.__setattr__(self, "axis", a)


# ---------------------------------------------------------------------------
# vectorized helpers


def normalize_rows(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(nrm == 0):
        raise DegenerateInput("cannot normalize a zero vector")
    return v / nrm


def tangent_rows(p: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Tangential part of v at p, broadcasting over leading axes."""
    return v - np.sum(v * p, axis=-1, keepdims=True) * p


def conformal_rows(w: np.ndarray, p: np.ndarray) -> np.ndarray:
    return w - (p @ w)[..., None] * p


def curvature_rows(v: np.ndarray, frame: np.ndarray) -> np.ndarray:
    """Sum_a R(V, E_a) E_a on the unit sphere.

    ``frame`` has shape (..., k, n+1) and ``v`` shape (..., n+1); the result is
    |E|^2 V - sum_a <V, E_a> E_a, so that -R(V,E)E = -|E|^2 V + <V,E>E.
    """
    sq = np.sum(frame * frame, axis=(-2, -1))
    proj = np.einsum("...ai,...i->...a", frame, v)
    return sq[..., None] * v - np.einsum("...a,...ai->...i", proj, frame)


def hinge_polar(F: HingeConvexFunction, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=float)
    a = p[..., F.axes[0]]
    b = p[..., F.axes[1]]
    nu = np.hypot(a, b)
    phi = np.mod(np.arctan2(a, b), 2.0 * np.pi)
    return nu, phi


def hinge_log_rows(F: HingeConvexFunction, p: np.ndarray) -> np.ndarray:
    """log F_K at each point, NaN where nu <= c.

    Working in log space keeps large kappa finite; the log is monotone so it
    carries the same maximum-principle information.
    """
    nu, phi = hinge_polar(F, p)
    out = np.full(nu.shape, np.nan)
    ok = nu > F.c
    out[ok] = F.kappa * (phi[ok] + np.arcsin(F.c / nu[ok])) - np.log(F.kappa)
    return out


def _hinge_exponent(F: HingeConvexFunction, x: np.ndarray) -> np.ndarray:
    """g = phi + arcsin(c / nu) for the degree-0 extension x -> x / |x|."""
    p = x / np.linalg.norm(x, axis=-1, keepdims=True)
    nu, phi = hinge_polar(F, p)
    with np.errstate(invalid="ignore"):
        return phi + np.arcsin(F.c / nu)


def convex_domain(F, p: np.ndarray) -> np.ndarray:
    """Boolean mask of points inside the domain of F."""
    p = np.asarray(p, dtype=float)
    if isinstance(F, HeightFunction):
        return p @ F.axis > F.floor
    if isinstance(F, HingeConvexFunction):
        return hinge_polar(F, p)[0] > F.c
    raise TypeError(f"unknown convex function {type(F).__name__}")


def convex_log_value(F, p: np.ndarray) -> np.ndarray:
    """A monotone reparametrization of F (log F for F_K, F itself for heights); NaN off-domain."""
    p = np.asarray(p, dtype=float)
    if isinstance(F, HeightFunction):
        out = -(p @ F.axis)
        return np.where(convex_domain(F, p), out, np.nan)
    return hinge_log_rows(F, p)


def convex_derivatives(F, p: np.ndarray, h: float = 1e-5) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(F, grad F, Hess F) at points p (..., n+1); Hess is an ambient matrix acting on tangent vectors.

    Heights are exact. F_K uses central differences of the smooth exponent g of
    its degree-0 extension, then Hess F = kappa F (D^2 g + kappa Dg Dg^T) and
    grad F = kappa F Dg (both tangent since the extension is homogeneous).
    """
    p = np.asarray(p, dtype=float)
    if isinstance(F, HeightFunction):
        val = -(p @ F.axis)
        grad = -conformal_rows(F.axis, p)
        hess = (p @ F.axis)[..., None, None] * np.eye(p.shape[-1])
        return val, grad, hess
    if not isinstance(F, HingeConvexFunction):
        raise TypeError(f"unknown convex function {type(F).__name__}")
    d = p.shape[-1]
    E = np.eye(d) * h
    g0 = _hinge_exponent(F, p)
    Dg = np.stack([(_hinge_exponent(F, p + E[i]) - _hinge_exponent(F, p - E[i])) / (2 * h) for i in range(d)], -1)
    D2 = np.empty(p.shape + (d,))
    for i in range(d):
        for j in range(i, d):
            v = (
                _hinge_exponent(F, p + E[i] + E[j])
                - _hinge_exponent(F, p + E[i] - E[j])
                - _hinge_exponent(F, p - E[i] + E[j])
                + _hinge_exponent(F, p - E[i] - E[j])
            ) / (4 * h * h)
            D2[..., i, j] = D2[..., j, i] = v
    val = np.exp(F.kappa * g0) / F.kappa
    grad = F.kappa * val[..., None] * Dg
    hess = F.kappa * val[..., None, None] * (D2 + F.kappa * Dg[..., :, None] * Dg[..., None, :])
    return val, grad, hess


def convexity_constant(F, p: np.ndarray) -> float:
    """Smallest eigenvalue of Hess F over tangent spaces at the points p (rows)."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    _, _, H = convex_derivatives(F, p)
    out = np.inf
    for q, Hq in zip(p, H):
        # orthonormal tangent basis via QR of the complement
        Q, _ = np.linalg.qr(np.column_stack([q, np.eye(q.size)]))
        T = Q[:, 1 : q.size]
        out = min(out, float(np.linalg.eigvalsh(T.T @ Hq @ T)[0]))
    return out


# ---------------------------------------------------------------------------
# scalar operations


def _as_point(p) -> SpherePoint:
    return p if isinstance(p, SpherePoint) else SpherePoint(np.asarray(p, dtype=float))


def project_to_sphere(v) -> SpherePoint:
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v)
    if nrm == 0 or not np.isfinite(nrm):
        raise DegenerateInput("cannot project a zero or non-finite vector")
    return SpherePoint(v / nrm)


def project_to_tangent(p, v) -> TangentVector:
    p = _as_point(p)
    v = np.asarray(v, dtype=float)
    return TangentVector(p, v - (v @ p.coords) * p.coords)


def conformal_value(W: ConformalField, p) -> TangentVector:
    p = _as_point(p)
    return TangentVector(p, W.pole - (W.pole @ p.coords) * p.coords)


def check_orthonormal(poles: np.ndarray, tol: float = UNIT_TOL) -> None:
    poles = np.atleast_2d(np.asarray(poles, dtype=float))
    gram = poles @ poles.T
    if np.max(np.abs(gram - np.eye(poles.shape[0]))) > tol:
        raise InvalidBasis("pole vectors are not orthonormal")


def conformal_sum_checks(basis: Sequence[ConformalField], p, v) -> tuple[float, float]:
    """Residuals of sum |W_i|^2 = n and sum <W_i, v>^2 = |v|^2."""
    p = _as_point(p)
    poles = np.array([W.pole for W in basis])
    if poles.shape != (p.n + 1, p.n + 1):
        raise InvalidBasis("need n+1 poles in R^{n+1}")
    check_orthonormal(poles)
    vec = v.vec if isinstance(v, TangentVector) else np.asarray(v, dtype=float)
    if abs(vec @ p.coords) > UNIT_TOL * max(1.0, np.linalg.norm(vec)):
        raise InvalidTangent("v must be tangent at p")
    Ws = poles - (poles @ p.coords)[:, None] * p.coords
    r1 = abs(np.sum(Ws * Ws) - p.n)
    r2 = abs(np.sum((Ws @ vec) ** 2) - vec @ vec)
    return float(r1), float(r2)


def sphere_curvature_term(p, V, frame: Sequence) -> TangentVector:
    """R(V, E_a) E_a summed over the frame, sign fixed as in ``curvature_rows``."""
    p = _as_point(p)
    vecs = [e.vec if isinstance(e, TangentVector) else np.asarray(e, dtype=float) for e in frame]
    vv = V.vec if isinstance(V, TangentVector) else np.asarray(V, dtype=float)
    for u in [vv, *vecs]:
        if abs(u @ p.coords) > 1e-10 * max(1.0, np.linalg.norm(u)):
            raise InvalidTangent("curvature term needs tangent inputs")
    if not vecs:
        return TangentVector(p, np.zeros_like(p.coords))
    out = curvature_rows(vv, np.array(vecs))
    return TangentVector(p, tangent_rows(p.coords, out))


def hinge_convex_eval(F: HingeConvexFunction, p) -> float:
    coords = p.coords if isinstance(p, SpherePoint) else np.asarray(p, dtype=float)
    nu, phi = hinge_polar(F, coords)
    if nu <= F.c:
        raise OutOfDomain(f"nu = {float(nu):.6g} <= c = {F.c}")
    return float(np.exp(F.kappa * (phi + np.arcsin(F.c / nu))) / F.kappa)


def height_convexity(p, axis) -> float:
    """Factor h in Hess(-<p, axis>) = h * metric, i.e. h = <p, axis>."""
    coords = p.coords if isinstance(p, SpherePoint) else np.asarray(p, dtype=float)
    return float(coords @ np.asarray(axis, dtype=float))


def random_points(rng: np.random.Generator, n: int, count: int) -> np.ndarray:
    return normalize_rows(rng.normal(size=(count, n + 1)))


def random_tangents(rng: np.random.Generator, p: np.ndarray) -> np.ndarray:
    return tangent_rows(p, rng.normal(size=p.shape))


def random_orthonormal(rng: np.random.Generator, dim: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)))
    return q * np.sign(np.diag(r))
