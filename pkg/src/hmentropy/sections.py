"""Sections of f*TS^n: sampled tangent fields and mode-decomposed equivariant fields.

On an equivariant profile f = (sin psi omega, cos psi) every section we need
is a finite sum of rotation-adapted modes

    X = (phi(r) + sum_k A_k(r) omega_k) e_psi + sum_k B_k(r) (e_k - omega_k omega, 0)
        + sum_i nu_i(r) N_i

with e_psi = (cos psi omega, -sin psi) and N_i the ambient axes orthogonal
to the S^m containing the image (only present for lifted profiles). The
radial part phi is the l = 0 sector, (A_k, B_k) the l = 1 sector in the
direction e_k, and nu_i the normal sector. These sectors are mutually
orthogonal for the G-weighted pairing and are invariant under L^f.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, DegenerateInput, InvalidTangent
from .maps import CurveMap, EquivariantProfile, GridMap, require_same_grid


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# sampled sections


@dataclass(frozen=True)
class TangentSection:
    """Per-node ambient vectors tangent to ``fmap`` (a CurveMap or GridMap)."""

    fmap: CurveMap | GridMap
    vectors: np.ndarray
    admissible: bool | None = None

    def __post_init__(self):
        v = _frozen(self.vectors)
        f = self.fmap.samples if isinstance(self.fmap, CurveMap) else self.fmap.values
        if v.shape != f.shape:
            raise AlignmentError(f"section shape {v.shape} does not match map samples {f.shape}")
        dots = np.sum(v * f, axis=-1)
        fin = np.isfinite(dots)
        scale = np.maximum(1.0, np.linalg.norm(np.where(np.isfinite(v), v, 0.0), axis=-1))
        if np.any(np.abs(dots[fin]) > 1e-12 * scale[fin]):
            raise InvalidTangent("section vectors are not tangent to the map")
        object.__setattr__(self, "vectors", v)

    @classmethod
    def project(cls, fmap, vectors: np.ndarray) -> "TangentSection":
        f = fmap.samples if isinstance(fmap, CurveMap) else fmap.values
        v = np.asarray(vectors, dtype=float)
        return cls(fmap, v - np.sum(v * f, axis=-1, keepdims=True) * f)

    @classmethod
    def zeros(cls, fmap) -> "TangentSection":
        f = fmap.samples if isinstance(fmap, CurveMap) else fmap.values
        return cls(fmap, np.zeros_like(f))

    def _same(self, other: "TangentSection") -> None:
        require_same_grid(self.fmap, other.fmap)

    def __add__(self, other: "TangentSection") -> "TangentSection":
        self._same(other)
        return TangentSection(self.fmap, self.vectors + other.vectors)

    def __sub__(self, other: "TangentSection") -> "TangentSection":
        self._same(other)
        return TangentSection(self.fmap, self.vectors - other.vectors)

    def __mul__(self, s: float) -> "TangentSection":
        return TangentSection(self.fmap, float(s) * self.vectors)

    __rmul__ = __mul__

    def __neg__(self) -> "TangentSection":
        return TangentSection(self.fmap, -self.vectors)


# ---------------------------------------------------------------------------
# equivariant mode sections


@dataclass(frozen=True)
class ModeSection:
    profile: EquivariantProfile
    phi: np.ndarray
    A: np.ndarray
    B: np.ndarray
    nu: np.ndarray
    label: str = field(default="", compare=False)

    def __post_init__(self):
        p = self.profile
        shape = (p.J + 1,)
        phi = _frozen(self.phi)
        A = _frozen(np.reshape(self.A, (p.m,) + shape))
        B = _frozen(np.reshape(self.B, (p.m,) + shape))
        nu = _frozen(np.reshape(self.nu, (p.codim,) + shape))
        if phi.shape != shape:
            raise AlignmentError(f"radial part has shape {phi.shape}, profile grid needs {shape}")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "nu", nu)

    # -- constructors -------------------------------------------------------

    @classmethod
    def build(cls, profile, phi=None, A=None, B=None, nu=None, label: str = "") -> "ModeSection":
        z = np.zeros(profile.J + 1)
        return cls(
            profile,
            z if phi is None else phi,
            np.zeros((profile.m, profile.J + 1)) if A is None else A,
            np.zeros((profile.m, profile.J + 1)) if B is None else B,
            np.zeros((profile.codim, profile.J + 1)) if nu is None else nu,
            label,
        )

    @classmethod
    def zeros(cls, profile) -> "ModeSection":
        return cls.build(profile, label="zero")

    @classmethod
    def radial(cls, profile, phi, label: str = "") -> "ModeSection":
        return cls.build(profile, phi=np.asarray(phi, dtype=float), label=label)

    @classmethod
    def dipole(cls, profile, zeta, a, b, label: str = "") -> "ModeSection":
        """a(r) <zeta, omega> e_psi + b(r) (zeta - <zeta, omega> omega, 0)."""
        zeta = np.asarray(zeta, dtype=float)
        if zeta.shape != (profile.m,):
            raise DegenerateInput("zeta must have length m")
        return cls.build(profile, A=np.outer(zeta, a), B=np.outer(zeta, b), label=label)

    @classmethod
    def normal(cls, profile, g, index: int = 0, label: str = "") -> "ModeSection":
        if not 0 <= index < profile.codim:
            raise DegenerateInput("profile has no normal direction with that index")
        nu = np.zeros((profile.codim, profile.J + 1))
        nu[index] = g
        return cls.build(profile, nu=nu, label=label)

    @classmethod
    def tau(cls, profile) -> "ModeSection":
        """Discrete tension of the profile."""
        return cls.radial(profile, profile.reduced_tension(), label="tau")

    @classmethod
    def position(cls, profile, t0: float = 1.0) -> "ModeSection":
        """(x / 2 t0) contracted with Tf."""
        d1, _ = profile.derivatives()
        return cls.radial(profile, profile.r * d1 / (2 * t0), label="position")

    @classmethod
    def translation(cls, profile, zeta) -> "ModeSection":
        """zeta contracted with Tf for a constant source vector zeta."""
        d1, _ = profile.derivatives()
        return cls.dipole(profile, zeta, d1, profile.sin_over_r(), label="translation")

    @classmethod
    def conformal(cls, profile, pole) -> "ModeSection":
        """W = w - <w, f> f for an ambient pole w = (zeta, c, normal part)."""
        w = np.asarray(pole, dtype=float)
        m = profile.m
        if w.shape != (profile.n + 1,):
            raise DegenerateInput(f"pole must have length {profile.n + 1}")
        one = np.ones(profile.J + 1)
        return cls.build(
            profile,
            phi=-w[m] * np.sin(profile.psi),
            A=np.outer(w[:m], np.cos(profile.psi)),
            B=np.outer(w[:m], one),
            nu=np.outer(w[m + 1 :], one),
            label="conformal",
        )

    @classmethod
    def from_vector_field(cls, profile, p0, p1, p2, c) -> "ModeSection":
        """zeta contracted with Tf for zeta(x) = p0(r^2) y + p1(r^2) c + p2(r^2) <c, y> y, y = x - center.

        p0, p1, p2 are callables of r^2.
        """
        r = profile.r
        r2 = r**2
        d1, _ = profile.derivatives()
        c = np.asarray(c, dtype=float)
        a1, a2, a0 = p1(r2), p2(r2), p0(r2)
        return cls.build(
            profile,
            phi=a0 * r * d1,
            A=np.outer(c, (a1 + a2 * r2) * d1),
            B=np.outer(c, a1 * profile.sin_over_r()),
            label="vector-field",
        )

    # -- arithmetic ---------------------------------------------------------

    def _same(self, other: "ModeSection") -> None:
        require_same_grid(self.profile, other.profile)

    def __add__(self, other: "ModeSection") -> "ModeSection":
        self._same(other)
        return ModeSection(
            self.profile, self.phi + other.phi, self.A + other.A, self.B + other.B, self.nu + other.nu
        )

    def __sub__(self, other: "ModeSection") -> "ModeSection":
        return self + (-1.0) * other

    def __mul__(self, s: float) -> "ModeSection":
        s = float(s)
        return ModeSection(self.profile, s * self.phi, s * self.A, s * self.B, s * self.nu, self.label)

    __rmul__ = __mul__

    def __neg__(self) -> "ModeSection":
        return -1.0 * self

    def coarsen(self) -> "ModeSection":
        """Restriction to every other radial node (profile must have even J)."""
        p = self.profile
        if p.J % 2:
            raise DegenerateInput("coarsening needs an even number of radial cells")
        q = EquivariantProfile(p.psi[::2], p.m, p.R_max, p.center, p.codim)
        return ModeSection(q, self.phi[::2], self.A[:, ::2], self.B[:, ::2], self.nu[:, ::2], self.label)

    def is_finite(self) -> bool:
        return bool(all(np.all(np.isfinite(a)) for a in (self.phi, self.A, self.B, self.nu)))

    # -- pointwise values ---------------------------------------------------

    def sample(self, fs) -> np.ndarray:
        """Ambient vectors at the points of a FieldSample drawn from this profile."""
        p = self.profile
        if fs.radial_index is None:
            raise AlignmentError("field sample was not drawn from an equivariant profile")
        idx = fs.radial_index
        r = p.r[idx]
        m = p.m
        omega = (fs.x - p.center) / r[:, None]
        psi = p.psi[idx]
        e_psi = np.zeros((idx.size, p.n + 1))
        e_psi[:, :m] = np.cos(psi)[:, None] * omega
        e_psi[:, m] = -np.sin(psi)
        coef = self.phi[idx] + np.einsum("kp,pk->p", self.A[:, idx], omega)
        bt = self.B[:, idx].T
        tang = bt - np.sum(bt * omega, axis=-1, keepdims=True) * omega
        out = coef[:, None] * e_psi
        out[:, :m] += tang
        out[:, m + 1 :] += self.nu[:, idx].T
        return out


def as_ambient(section) -> np.ndarray:
    if isinstance(section, TangentSection):
        return section.vectors
    raise TypeError("mode sections have no per-node ambient array; use ModeSection.sample")


# ---------------------------------------------------------------------------
# admissibility


@dataclass(frozen=True)
class W22Result:
    admissible: bool
    norm: float
    parts: dict


def section_w22_check(fmap, X, weight=None) -> W22Result:
    """Discrete int (|X|^2 + |grad X|^2 + |L^f X|^2) G; admissible iff finite."""
    from . import stability
    from .quadrature import Basepoint, GaussianWeight

    if isinstance(X, ModeSection):
        if X.profile is not fmap:
            require_same_grid(X.profile, fmap)
    else:
        require_same_grid(X.fmap, fmap)
    if weight is None:
        weight = GaussianWeight(Basepoint.origin(fmap.m, 1.0))
    with np.errstate(all="ignore"):
        if isinstance(X, ModeSection):
            forms = stability.sector_forms(fmap, weight.basepoint.t0)
            finite = X.is_finite()
            l2 = forms.mass(X) if finite else np.inf
            grad = forms.gradient_energy(X) if finite else np.inf
            LX = stability.apply_Lf(fmap, X, weight.basepoint.t0, check=False) if finite else None
            lx = forms.mass(LX) if finite else np.inf
        else:
            v = X.vectors
            finite = bool(np.all(np.isfinite(v)))
            forms = stability.grid_forms(fmap, weight.basepoint.t0)
            l2 = forms.mass(v) if finite else np.inf
            grad = forms.gradient_energy(v) if finite else np.inf
            lx = forms.mass(stability.apply_Lf(fmap, X, weight.basepoint.t0, check=False).vectors) if finite else np.inf
    parts = {"l2": float(l2), "grad": float(grad), "LX": float(lx)}
    norm = float(l2 + grad + lx)
    return W22Result(bool(finite and np.isfinite(norm)), norm, parts)


def checked(fmap, X, weight=None):
    """Return X with its admissibility flag filled in (TangentSection only)."""
    res = section_w22_check(fmap, X, weight)
    if isinstance(X, TangentSection):
        return TangentSection(X.fmap, X.vectors, res.admissible)
    return X
