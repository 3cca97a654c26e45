"""Sampled sphere-valued maps and their finite-difference differential operators.

Three carriers are supported:

* ``CurveMap``: periodic samples of S^1 -> S^n on a uniform grid in s.
* ``EquivariantProfile``: f(x) = (sin psi(r) x/r, cos psi(r)) on R^m -> S^m,
  stored as psi on r_j = j dr.
* ``GridMap``: samples on a uniform lattice over [-R, R]^m, m in {2, 3}.

``CylindricalMap`` wraps an equivariant profile or grid map as a map on
R^{m+k} that is constant along the extra k directions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import AlignmentError, DegenerateInput, GridTooCoarse
from .sphere import normalize_rows, tangent_rows

MIN_CURVE_NODES = 16
MIN_GRID_NODES = 8


def _check_unit(values: np.ndarray, tol: float = 1e-12) -> None:
    err = np.max(np.abs(np.linalg.norm(values, axis=-1) - 1.0)) if values.size else 0.0
    if not err <= tol:
        raise DegenerateInput(f"samples are not unit vectors (max error {err:.3g})")


# ---------------------------------------------------------------------------
# 1-d stencils


def radial_derivatives(y: np.ndarray, dr: float, parity: int) -> tuple[np.ndarray, np.ndarray]:
    """First and second derivatives on r_j = j dr.

    The ghost value y_{-1} = parity * y_1 encodes the extension across r = 0
    (parity -1 for odd functions such as psi). The last node uses one-sided
    second-order stencils.
    """
    y = np.asarray(y, dtype=float)
    if y.size < 4:
        raise GridTooCoarse("radial grid needs at least 4 nodes")
    ext = np.concatenate(([parity * y[1]], y))
    d1 = np.empty_like(y)
    d2 = np.empty_like(y)
    d1[:-1] = (ext[2:] - ext[:-2]) / (2 * dr)
    d2[:-1] = (ext[2:] - 2 * ext[1:-1] + ext[:-2]) / dr**2
    d1[-1] = (3 * y[-1] - 4 * y[-2] + y[-3]) / (2 * dr)
    d2[-1] = (2 * y[-1] - 5 * y[-2] + 4 * y[-3] - y[-4]) / dr**2
    return d1, d2


def radial_derivatives4(y: np.ndarray, dr: float, parity: int) -> tuple[np.ndarray, np.ndarray]:
    """Fourth-order first and second derivatives with two reflected ghost values.

    Second-order stencils near r = 0 carry errors that do not vanish at the
    origin; divided by r or r^2 they spoil the mode sectors there. The last
    two nodes fall back to the second-order stencils.
    """
    y = np.asarray(y, dtype=float)
    d1, d2 = radial_derivatives(y, dr, parity)
    if y.size < 6:
        return d1, d2
    e = np.concatenate(([parity * y[2], parity * y[1]], y))
    d1[:-2] = (-e[4:] + 8 * e[3:-1] - 8 * e[1:-3] + e[:-4]) / (12 * dr)
    d2[:-2] = (-e[4:] + 16 * e[3:-1] - 30 * e[2:-2] + 16 * e[1:-3] - e[:-4]) / (12 * dr**2)
    return d1, d2


def _second_diff(a: np.ndarray, h: float, axis: int) -> np.ndarray:
    a = np.moveaxis(a, axis, 0)
    out = np.empty_like(a)
    out[1:-1] = (a[2:] - 2 * a[1:-1] + a[:-2]) / h**2
    out[0] = (2 * a[0] - 5 * a[1] + 4 * a[2] - a[3]) / h**2
    out[-1] = (2 * a[-1] - 5 * a[-2] + 4 * a[-3] - a[-4]) / h**2
    return np.moveaxis(out, 0, axis)


# ---------------------------------------------------------------------------
# curve


@dataclass(frozen=True)
class CurveMap:
    samples: np.ndarray
    kind: str = field(default="curve", init=False)

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if s.ndim != 2:
            raise DegenerateInput("curve samples must be an (N, n+1) array")
        if s.shape[0] < MIN_CURVE_NODES or s.shape[0] % 2:
            raise GridTooCoarse(f"curve needs an even number of nodes >= {MIN_CURVE_NODES}")
        _check_unit(s)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def N(self) -> int:
        return self.samples.shape[0]

    @property
    def n(self) -> int:
        return self.samples.shape[1] - 1

    m = 1

    @property
    def ds(self) -> float:
        return 2 * np.pi / self.N

    @property
    def s(self) -> np.ndarray:
        return np.arange(self.N) * self.ds

    @property
    def spacing(self) -> float:
        return self.ds

    def replace(self, samples: np.ndarray) -> "CurveMap":
        return CurveMap(samples)

    def derivative(self) -> np.ndarray:
        f = self.samples
        return (np.roll(f, -1, axis=0) - np.roll(f, 1, axis=0)) / (2 * self.ds)

    def laplacian(self) -> np.ndarray:
        f = self.samples
        return (np.roll(f, -1, axis=0) - 2 * f + np.roll(f, 1, axis=0)) / self.ds**2

    def differential(self) -> np.ndarray:
        return tangent_rows(self.samples, self.derivative())[:, None, :]

    def energy_density(self) -> np.ndarray:
        return 0.5 * np.sum(self.differential() ** 2, axis=(-2, -1))

    def tension_vectors(self) -> np.ndarray:
        f = self.samples
        d = self.derivative()
        sq = np.sum(d * d, axis=-1, keepdims=True)
        return tangent_rows(f, self.laplacian() + sq * f)

    def dirichlet_energy(self) -> float:
        """Discrete energy (1/2) sum |f_{j+1} - f_j|^2 / ds, dissipated by the flow."""
        d = np.roll(self.samples, -1, axis=0) - self.samples
        return float(0.5 * np.sum(d * d) / self.ds)


# ---------------------------------------------------------------------------
# equivariant profile


@dataclass(frozen=True)
class EquivariantProfile:
    """f(x) = (sin psi(r) (x - c)/r, cos psi(r)) with r = |x - c|.

    With ``codim`` > 0 the image sits in the equatorial S^m of S^{m+codim}
    (trailing ambient coordinates are zero).
    """

    psi: np.ndarray
    m: int
    R_max: float
    center: np.ndarray | None = None
    codim: int = 0
    kind: str = field(default="equivariant", init=False)

    def __post_init__(self):
        p = np.array(self.psi, dtype=float)
        if p.ndim != 1 or p.size < 8:
            raise GridTooCoarse("profile needs at least 8 radial nodes")
        if self.m < 2:
            raise DegenerateInput("source dimension must be at least 2")
        if abs(p[0]) > 1e-14:
            raise DegenerateInput("psi(0) must vanish")
        if not np.all(np.isfinite(p)):
            raise DegenerateInput("psi has non-finite entries")
        p.setflags(write=False)
        object.__setattr__(self, "psi", p)
        c = np.zeros(self.m) if self.center is None else np.array(self.center, dtype=float)
        if c.shape != (self.m,):
            raise DegenerateInput("center must have length m")
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "R_max", float(self.R_max))

    @property
    def n(self) -> int:
        return self.m + self.codim

    @property
    def J(self) -> int:
        return self.psi.size - 1

    @property
    def dr(self) -> float:
        return self.R_max / self.J

    @property
    def spacing(self) -> float:
        return self.dr

    @property
    def r(self) -> np.ndarray:
        return np.arange(self.J + 1) * self.dr

    def replace(self, psi: np.ndarray) -> "EquivariantProfile":
        return EquivariantProfile(psi, self.m, self.R_max, self.center, self.codim)

    def lifted(self, codim: int = 1) -> "EquivariantProfile":
        """Same map composed with the totally geodesic inclusion S^m -> S^{m+codim}."""
        return EquivariantProfile(self.psi, self.m, self.R_max, self.center, codim)

    def derivatives(self) -> tuple[np.ndarray, np.ndarray]:
        return radial_derivatives4(self.psi, self.dr, parity=-1)

    def sin_over_r(self) -> np.ndarray:
        r = self.r
        out = np.empty_like(r)
        out[1:] = np.sin(self.psi[1:]) / r[1:]
        out[0] = (4 * out[1] - out[2]) / 3  # even extrapolation, O(dr^4)
        return out

    def energy_density_radial(self) -> np.ndarray:
        """|Tf|^2 = psi'^2 + (m-1) sin^2(psi)/r^2 at the radial nodes."""
        d1, _ = self.derivatives()
        return d1**2 + (self.m - 1) * self.sin_over_r() ** 2

    def reduced_tension(self) -> np.ndarray:
        """tau_psi = psi'' + (m-1) psi'/r - (m-1) sin(2 psi)/(2 r^2); zero at r = 0."""
        d1, d2 = self.derivatives()
        r = self.r
        out = np.zeros_like(r)
        rr = r[1:]
        out[1:] = d2[1:] + (self.m - 1) * d1[1:] / rr - (self.m - 1) * np.sin(2 * self.psi[1:]) / (2 * rr**2)
        return out

    def _meridian(self) -> tuple[np.ndarray, np.ndarray]:
        m = self.m
        f = np.zeros((self.J + 1, self.n + 1))
        e = np.zeros((self.J + 1, self.n + 1))
        f[:, 0] = np.sin(self.psi)
        f[:, m] = np.cos(self.psi)
        e[:, 0] = np.cos(self.psi)
        e[:, m] = -np.sin(self.psi)
        return f, e

    def values(self) -> np.ndarray:
        """Samples of f along the meridian x = c + r e_1."""
        return self._meridian()[0]

    def differential(self) -> np.ndarray:
        """Frames Tf_alpha at the meridian points, shape (J+1, m, m+1)."""
        _, e = self._meridian()
        d1, _ = self.derivatives()
        so = self.sin_over_r()
        T = np.zeros((self.J + 1, self.m, self.n + 1))
        T[:, 0, :] = d1[:, None] * e
        for a in range(1, self.m):
            T[:, a, a] = so
        return T

    def energy_density(self) -> np.ndarray:
        return 0.5 * self.energy_density_radial()

    def tension_vectors(self) -> np.ndarray:
        _, e = self._meridian()
        return self.reduced_tension()[:, None] * e


# ---------------------------------------------------------------------------
# full lattice


@dataclass(frozen=True)
class GridMap:
    values: np.ndarray
    R_max: float
    kind: str = field(default="grid", init=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        m = v.ndim - 1
        if m not in (1, 2, 3):
            raise DegenerateInput("grid maps support source dimension 1, 2 or 3")
        if len(set(v.shape[:-1])) != 1:
            raise DegenerateInput("grid must have the same node count on every axis")
        if v.shape[0] < MIN_GRID_NODES:
            raise GridTooCoarse(f"grid needs at least {MIN_GRID_NODES} nodes per axis")
        _check_unit(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "R_max", float(self.R_max))

    @property
    def m(self) -> int:
        return self.values.ndim - 1

    @property
    def n(self) -> int:
        return self.values.shape[-1] - 1

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def dx(self) -> float:
        return 2 * self.R_max / (self.N - 1)

    @property
    def spacing(self) -> float:
        return self.dx

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.R_max, self.R_max, self.N)

    def points(self) -> np.ndarray:
        ax = self.axis
        mesh = np.meshgrid(*([ax] * self.m), indexing="ij")
        return np.stack(mesh, axis=-1)

    def replace(self, values: np.ndarray) -> "GridMap":
        return GridMap(values, self.R_max)

    @classmethod
    def from_function(cls, fn, m: int, N: int, R_max: float) -> "GridMap":
        ax = np.linspace(-R_max, R_max, N)
        mesh = np.stack(np.meshgrid(*([ax] * m), indexing="ij"), axis=-1)
        return cls(normalize_rows(fn(mesh)), R_max)

    def partials(self) -> np.ndarray:
        """Ambient partial derivatives, shape grid + (m, n+1)."""
        parts = [np.gradient(self.values, self.dx, axis=a, edge_order=2) for a in range(self.m)]
        return np.stack(parts, axis=-2)

    def laplacian(self) -> np.ndarray:
        return sum(_second_diff(self.values, self.dx, a) for a in range(self.m))

    def differential(self) -> np.ndarray:
        return tangent_rows(self.values[..., None, :], self.partials())

    def energy_density(self) -> np.ndarray:
        return 0.5 * np.sum(self.differential() ** 2, axis=(-2, -1))

    def tension_vectors(self) -> np.ndarray:
        f = self.values
        sq = np.sum(self.partials() ** 2, axis=(-2, -1))[..., None]
        return tangent_rows(f, self.laplacian() + sq * f)

    def hessian_vectors(self) -> np.ndarray:
        """Tangential part of the second partials, shape grid + (m, m, n+1)."""
        P = self.partials()
        H = np.empty(self.values.shape[:-1] + (self.m, self.m, self.n + 1))
        for a in range(self.m):
            H[..., a, :, :] = np.gradient(P, self.dx, axis=a, edge_order=2)
        for a in range(self.m):
            H[..., a, a, :] = _second_diff(self.values, self.dx, a)
        return tangent_rows(self.values[..., None, None, :], H)


# ---------------------------------------------------------------------------
# product with a line


@dataclass(frozen=True)
class CylindricalMap:
    """f(y, s) = base(y) for s in R^k; every direction of s annihilates Tf."""

    base: Union[EquivariantProfile, GridMap]
    extra_dims: int = 1
    line_half_width: float = 25.0
    line_nodes: int = 2001
    kind: str = field(default="cylindrical", init=False)

    @property
    def m(self) -> int:
        return self.base.m + self.extra_dims

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def line(self) -> np.ndarray:
        return np.linspace(-self.line_half_width, self.line_half_width, self.line_nodes)

    def energy_density(self) -> np.ndarray:
        return self.base.energy_density()


DiscreteMap = Union[CurveMap, EquivariantProfile, GridMap, CylindricalMap]


# ---------------------------------------------------------------------------
# generic operations


def differential(fmap) -> np.ndarray:
    """Per-node frames Tf_alpha (tangent-projected central differences)."""
    return fmap.differential()


def energy_density(fmap) -> np.ndarray:
    return fmap.energy_density()


def tension(fmap):
    """Tension field as a section: ModeSection for profiles, TangentSection otherwise."""
    from .sections import ModeSection, TangentSection

    if isinstance(fmap, EquivariantProfile):
        return ModeSection.radial(fmap, fmap.reduced_tension())
    return TangentSection(fmap, fmap.tension_vectors())


def same_grid(a, b) -> bool:
    if type(a) is not type(b):
        return False
    if isinstance(a, CurveMap):
        return a.samples.shape == b.samples.shape
    if isinstance(a, EquivariantProfile):
        return (
            a.J == b.J
            and a.m == b.m
            and a.codim == b.codim
            and a.R_max == b.R_max
            and np.array_equal(a.center, b.center)
        )
    if isinstance(a, GridMap):
        return a.values.shape == b.values.shape and a.R_max == b.R_max
    return a is b


def require_same_grid(a, b) -> None:
    if not same_grid(a, b):
        raise AlignmentError("section and map live on different grids")


# ---------------------------------------------------------------------------
# constructors


def equator_curve(N: int = 512, n: int = 2) -> CurveMap:
    s = np.arange(N) * 2 * np.pi / N
    f = np.zeros((N, n + 1))
    f[:, 0] = np.cos(s)
    f[:, 1] = np.sin(s)
    return CurveMap(f)


def hinge_curve(eps: float, N: int = 512) -> CurveMap:
    """(theta, phi) = (s, pi/2 + eps cos 2s) in the chart x1 = cos t sin p, x2 = sin t sin p, x3 = cos p."""
    s = np.arange(N) * 2 * np.pi / N
    a = eps * np.cos(2 * s)  # phi = pi/2 + a, written so that eps = 0 gives x3 = 0 exactly
    f = np.stack([np.cos(s) * np.cos(a), np.sin(s) * np.cos(a), -np.sin(a)], axis=-1)
    return CurveMap(normalize_rows(f))


def constant_curve(N: int = 512, n: int = 2) -> CurveMap:
    f = np.zeros((N, n + 1))
    f[:, n] = 1.0
    return CurveMap(f)


def constant_profile(m: int = 3, J: int = 2000, R_max: float = 10.0) -> EquivariantProfile:
    return EquivariantProfile(np.zeros(J + 1), m, R_max)


def profile_from_function(fn, m: int, J: int, R_max: float) -> EquivariantProfile:
    r = np.linspace(0.0, R_max, J + 1)
    psi = np.asarray(fn(r), dtype=float)
    psi[0] = 0.0
    return EquivariantProfile(psi, m, R_max)


def profile_to_grid(profile: EquivariantProfile, N: int = 64, R_max: float = 6.0) -> GridMap:
    """Sample an m = 2 or 3 profile on a lattice (cubic interpolation in r)."""
    from scipy.interpolate import CubicSpline

    if profile.m not in (2, 3):
        raise DegenerateInput("lattice sampling supports m = 2, 3")
    r = profile.r
    spline = CubicSpline(np.concatenate((-r[:0:-1], r)), np.concatenate((-profile.psi[:0:-1], profile.psi)))

    def fn(x):
        y = x - profile.center
        rho = np.linalg.norm(y, axis=-1)
        psi = spline(rho)
        with np.errstate(invalid="ignore", divide="ignore"):
            omega = np.where(rho[..., None] > 0, y / np.where(rho > 0, rho, 1.0)[..., None], 0.0)
        return np.concatenate([np.sin(psi)[..., None] * omega, np.cos(psi)[..., None]], axis=-1)

    return GridMap.from_function(fn, profile.m, N, R_max)


# ---------------------------------------------------------------------------
# serialization


def map_to_dict(fmap) -> dict:
    if isinstance(fmap, CurveMap):
        return {
            "kind": "curve",
            "dims": {"m": 1, "n": fmap.n},
            "grid": {"N": fmap.N, "period": "2pi"},
            "samples": fmap.samples.ravel().tolist(),
        }
    if isinstance(fmap, EquivariantProfile):
        return {
            "kind": "equivariant",
            "dims": {"m": fmap.m, "n": fmap.n},
            "grid": {"J": fmap.J, "R_max": fmap.R_max, "center": fmap.center.tolist(), "codim": fmap.codim},
            "samples": fmap.psi.tolist(),
        }
    if isinstance(fmap, GridMap):
        return {
            "kind": "grid",
            "dims": {"m": fmap.m, "n": fmap.n},
            "grid": {"N": fmap.N, "R_max": fmap.R_max},
            "samples": fmap.values.ravel().tolist(),
        }
    raise TypeError(f"cannot serialize {type(fmap).__name__}")


def map_from_dict(d: dict):
    kind = d["kind"]
    dims = d["dims"]
    grid = d["grid"]
    data = np.array(d["samples"], dtype=float)
    if kind == "curve":
        return CurveMap(data.reshape(grid["N"], dims["n"] + 1))
    if kind == "equivariant":
        center = np.array(grid.get("center", [0.0] * dims["m"]))
        return EquivariantProfile(data, dims["m"], grid["R_max"], center, dims["n"] - dims["m"])
    if kind == "grid":
        shape = (grid["N"],) * dims["m"] + (dims["n"] + 1,)
        return GridMap(data.reshape(shape), grid["R_max"])
    raise ValueError(f"unknown map kind {kind!r}")


def dumps_map(fmap) -> str:
    return json.dumps(map_to_dict(fmap))


def loads_map(text: str):
    return map_from_dict(json.loads(text))
