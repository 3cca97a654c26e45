"""Second variation operator L^f, Rayleigh quotients, mu_1 and instability certificates.

For sphere targets and tangent X the G-weighted quadratic form of
L^f = -Delta - R(., Tf_a) Tf_a + grad_{(x - x0)/2t0} reduces to

    Q(X) = int (|dX|^2 - |Tf|^2 |X|^2) G,

with dX the componentwise ambient derivative. Both discretizations below are
built from this form: a weighted stiffness matrix K and a lumped mass M, so
the discrete L = M^{-1} K is self-adjoint in the G pairing by construction.

Equivariant profiles use the mode sectors of ``sections.ModeSection`` with
finite volumes: face fluxes with G at the faces, exact cell volumes as the
mass, and 1/r^2 potentials weighted so that the regular behaviour at the
origin (phi ~ r, u = a - b ~ r^2) is reproduced.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy import sparse
from scipy.linalg import eig_banded, eigh_tridiagonal
from scipy.sparse.linalg import LinearOperator, eigsh, splu

from .errors import (
    DegenerateSection,
    InadmissibleSection,
    InvalidBasis,
    PreconditionFailed,
    UnsupportedDimension,
)
from .maps import EquivariantProfile, GridMap, require_same_grid
from .quadrature import (
    AngularRule,
    Basepoint,
    GaussianWeight,
    default_rule,
    field_sample,
    sphere_area,
)
from .sections import ModeSection, TangentSection
from .sphere import check_orthonormal, conformal_rows

THRESHOLD = -1.5
SHARP_THRESHOLD = -1.0


# ---------------------------------------------------------------------------
# radial sector forms


def _tridiag(kappa: np.ndarray) -> sparse.csr_matrix:
    n = kappa.size + 1
    d = np.zeros(n)
    d[:-1] += kappa
    d[1:] += kappa
    return sparse.diags([-kappa, d, -kappa], [-1, 0, 1], format="csr")


@dataclass(frozen=True)
class SectorForms:
    """Assembled quadratic forms of L^f on the mode sectors of a profile at basepoint (center, t0)."""

    profile: EquivariantProfile
    t0: float
    K0: sparse.csr_matrix
    M0: np.ndarray
    K1: sparse.csr_matrix
    M1: np.ndarray
    P1: sparse.csr_matrix  # ties a_0 = b_0 (regular dipole fields at the origin)
    Kn: sparse.csr_matrix
    Mn: np.ndarray
    wm: np.ndarray
    tf2: np.ndarray
    d1: np.ndarray
    so: np.ndarray

    # -- packing ------------------------------------------------------------

    @staticmethod
    def _ab(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        v = np.empty(2 * a.size)
        v[0::2] = a
        v[1::2] = b
        return v

    def _check(self, X: ModeSection) -> None:
        if X.profile is not self.profile:
            require_same_grid(X.profile, self.profile)

    def pair(self, X: ModeSection, Y: ModeSection) -> float:
        """Bilinear form <X, L^f Y>_G."""
        self._check(X)
        self._check(Y)
        s = X.phi @ (self.K0 @ Y.phi)
        for k in range(self.profile.m):
            s += self._ab(X.A[k], X.B[k]) @ (self.K1 @ self._ab(Y.A[k], Y.B[k]))
        for i in range(self.profile.codim):
            s += X.nu[i] @ (self.Kn @ Y.nu[i])
        return float(s)

    def mass_pair(self, X: ModeSection, Y: ModeSection) -> float:
        self._check(X)
        self._check(Y)
        s = np.sum(self.M0 * X.phi * Y.phi)
        for k in range(self.profile.m):
            s += np.sum(self.M1 * self._ab(X.A[k], X.B[k]) * self._ab(Y.A[k], Y.B[k]))
        for i in range(self.profile.codim):
            s += np.sum(self.Mn * X.nu[i] * Y.nu[i])
        return float(s)

    @property
    def M1r(self) -> np.ndarray:
        return self.P1.T @ self.M1

    def quad(self, X: ModeSection) -> float:
        return self.pair(X, X)

    def mass(self, X: ModeSection) -> float:
        return self.mass_pair(X, X)

    def apply(self, X: ModeSection) -> ModeSection:
        self._check(X)
        phi = (self.K0 @ X.phi) / self.M0
        phi[0] = 0.0
        A = np.empty_like(X.A)
        B = np.empty_like(X.B)
        for k in range(self.profile.m):
            red = (self.P1.T @ (self.K1 @ self._ab(X.A[k], X.B[k]))) / self.M1r
            v = self.P1 @ red
            A[k], B[k] = v[0::2], v[1::2]
        nu = np.array([(self.Kn @ X.nu[i]) / self.Mn for i in range(self.profile.codim)]).reshape(X.nu.shape)
        return ModeSection(self.profile, phi, A, B, nu, X.label)

    def gradient_energy(self, X: ModeSection) -> float:
        """int |grad X|^2 G = Q(X) + int (|Tf|^2 |X|^2 - sum <X, Tf_a>^2) G."""
        m = self.profile.m
        w = self.wm
        curv = np.sum(w * X.phi**2 * (m - 1) * self.so**2)
        for k in range(m):
            a, b = X.A[k], X.B[k]
            curv += np.sum(w * (self.tf2 * (a**2 + (m - 1) * b**2) - a**2 * self.d1**2 - (m - 1) * b**2 * self.so**2)) / m
        for i in range(self.profile.codim):
            curv += np.sum(w * self.tf2 * X.nu[i] ** 2)
        return self.quad(X) + float(curv)

    def tf_pairing(self, X: ModeSection) -> np.ndarray:
        """b_a = int <X, Tf_a> G, a = 1..m."""
        m = self.profile.m
        return np.array([np.sum(self.wm * (X.A[k] * self.d1 + (m - 1) * X.B[k] * self.so)) / m for k in range(m)])

    def tf_gram(self) -> np.ndarray:
        m = self.profile.m
        return np.eye(m) * np.sum(self.wm * self.tf2) / m

    def energy(self) -> float:
        """int |Tf|^2 G."""
        return float(np.sum(self.wm * self.tf2))

    # -- sector matrices with Dirichlet truncation at R_max -------------------

    def sector(self, name: str) -> tuple[sparse.csr_matrix, np.ndarray, np.ndarray]:
        """(K, M, dof indices) for 'radial', 'dipole' or 'normal'."""
        J = self.profile.J
        if name == "radial":
            dofs = np.arange(1, J)
            K, M = self.K0, self.M0
        elif name == "dipole":
            # reduced unknowns (b_0, a_1, b_1, ..., a_J, b_J); drop node J
            dofs = np.arange(0, 2 * J - 1)
            K, M = (self.P1.T @ self.K1 @ self.P1).tocsr(), self.M1r
        elif name == "normal":
            if self.profile.codim == 0:
                raise UnsupportedDimension("profile has no normal directions")
            dofs = np.arange(0, J)
            K, M = self.Kn, self.Mn
        else:
            raise ValueError(f"unknown sector {name!r}")
        return K[dofs][:, dofs].tocsr(), M[dofs], dofs


def sector_forms(profile: EquivariantProfile, t0: float = 1.0) -> SectorForms:
    return _sector_forms_cached(_ProfileKey(profile), float(t0))


class _ProfileKey:
    """Hashable-by-identity wrapper so forms are reused for the same profile object."""

    def __init__(self, p):
        self.p = p

    def __hash__(self):
        return id(self.p)

    def __eq__(self, other):
        return self.p is other.p


@lru_cache(maxsize=16)
def _sector_forms_cached(key: _ProfileKey, t0: float) -> SectorForms:
    p = key.p
    m, J, h = p.m, p.J, p.dr
    r = p.r
    S = sphere_area(m)
    norm = (4 * np.pi * t0) ** (-m / 2)
    G = norm * np.exp(-(r**2) / (4 * t0))
    # finite volumes: cells [r_{j-1/2}, r_{j+1/2}] clipped to [0, R_max]
    faces = np.clip((np.arange(J + 2) - 0.5) * h, 0.0, p.R_max)
    lo, hi = faces[:-1], faces[1:]
    rf = faces[1:-1]
    Gf = norm * np.exp(-(rf**2) / (4 * t0))
    kappa = S * Gf * rf ** (m - 1) / h
    wm = S * G * (hi**m - lo**m) / m
    # 1/r^2 weights: l = 0 uses face areas so that phi = r is annihilated by
    # stiffness + potential; the dipole u-part uses nodal volumes
    sing0 = np.zeros(J + 1)
    sing0[1:] = S * G[1:] * (hi[1:] ** (m - 1) - lo[1:] ** (m - 1)) / ((m - 1) * r[1:])
    sing = np.empty(J + 1)
    sing[1:] = wm[1:] / r[1:] ** 2
    sing[0] = wm[0] / (h / 2) ** 2
    d1, _ = p.derivatives()
    so = p.sin_over_r()
    c = np.cos(p.psi)
    tf2 = d1**2 + (m - 1) * so**2

    stiff = _tridiag(kappa)
    K0 = (stiff + sparse.diags((m - 1) * np.cos(2 * p.psi) * sing0)).tocsr()
    M0 = wm.copy()

    # dipole sector in u = a - b and b; only u sees the 1/r^2 potential, the
    # other couplings carry (cos psi - 1)/r^2, which stays bounded
    n = J + 1
    crr = np.empty(n)
    crr[1:] = (c[1:] - 1) / r[1:] ** 2
    crr[0] = -0.5 * d1[0] ** 2
    Kuu = stiff + sparse.diags((m - 1) * 2 * c**2 * sing)
    Kub = stiff + sparse.diags((m - 1) * 2 * c * crr * wm)
    Kbb = m * stiff + sparse.diags((m - 1) * (3 * c - 1) * crr * wm - (m - 1) * wm * (d1**2 + (m - 2) * so**2))
    # (u, b) -> (a, b): a-rows pick up u, b-rows pick up b - u
    Pa = sparse.csr_matrix((np.ones(n), (2 * np.arange(n), np.arange(n))), shape=(2 * n, n))
    Pb = sparse.csr_matrix((np.ones(n), (2 * np.arange(n) + 1, np.arange(n))), shape=(2 * n, n))
    Tu = Pa - Pb  # u = a - b
    Kub_full = Tu @ Kuu @ Tu.T + Pb @ Kbb @ Pb.T + Tu @ Kub @ Pb.T + Pb @ Kub @ Tu.T
    K1 = Kub_full / m
    M1 = np.empty(2 * n)
    M1[0::2] = wm / m
    M1[1::2] = (m - 1) * wm / m
    cols = np.concatenate([[0, 0], np.arange(1, 2 * n - 1)])
    P1 = sparse.csr_matrix((np.ones(2 * n), (np.arange(2 * n), cols)), shape=(2 * n, 2 * n - 1))

    Kn = (stiff - sparse.diags(tf2 * wm)).tocsr()
    return SectorForms(p, t0, K0, M0, K1.tocsr(), M1, P1, Kn, wm.copy(), wm, tf2, d1, so)


# ---------------------------------------------------------------------------
# lattice sector


def tangent_bases(f: np.ndarray) -> np.ndarray:
    """Orthonormal bases of the tangent spaces, shape (P, n+1, n), via Householder reflections."""
    P, d = f.shape
    e = np.zeros(d)
    e[-1] = 1.0
    sgn = np.where(f[:, -1] >= 0, 1.0, -1.0)
    v = f + sgn[:, None] * e
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    H = np.eye(d)[None] - 2 * v[:, :, None] * v[:, None, :]
    return H[:, :, : d - 1]


@dataclass(frozen=True)
class GridForms:
    gmap: GridMap
    t0: float
    x0: np.ndarray
    L: sparse.csr_matrix  # weighted scalar graph Laplacian (stiffness)
    M: np.ndarray
    tf2: np.ndarray
    Tf: np.ndarray
    f: np.ndarray

    def _flat(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v, dtype=float).reshape(self.M.size, -1)

    def pair_vectors(self, u: np.ndarray, v: np.ndarray) -> float:
        u, v = self._flat(u), self._flat(v)
        return float(np.sum(u * (self.L @ v)) - np.sum(self.M * self.tf2 * np.sum(u * v, -1)))

    def quad(self, v) -> float:
        return self.pair_vectors(v, v)

    def mass(self, v) -> float:
        v = self._flat(v)
        return float(np.sum(self.M * np.sum(v * v, -1)))

    def mass_pair(self, u, v) -> float:
        u, v = self._flat(u), self._flat(v)
        return float(np.sum(self.M * np.sum(u * v, -1)))

    def apply_vectors(self, v: np.ndarray) -> np.ndarray:
        v = self._flat(v)
        out = (self.L @ v) / self.M[:, None]
        f = self.f
        out = out - np.sum(out * f, -1, keepdims=True) * f
        out = out - self.tf2[:, None] * v
        return out.reshape(self.gmap.values.shape)

    def gradient_energy(self, v) -> float:
        v = self._flat(v)
        proj = np.einsum("pai,pi->pa", self.Tf, v)
        return float(np.sum(v * (self.L @ v)) - np.sum(self.M * np.sum(proj**2, -1)))

    def tf_pairing(self, v) -> np.ndarray:
        v = self._flat(v)
        return np.einsum("p,pai,pi->a", self.M, self.Tf, v)

    def tf_gram(self) -> np.ndarray:
        return np.einsum("p,pai,pbi->ab", self.M, self.Tf, self.Tf)

    def energy(self) -> float:
        return float(np.sum(self.M * self.tf2))

    def tangent_problem(self, dirichlet: bool = True):
        """(K, Mdiag, bases, interior) restricted to tangent coordinates."""
        g = self.gmap
        P, d = self.f.shape
        n = d - 1
        idx = np.indices((g.N,) * g.m).reshape(g.m, -1).T
        interior = np.all((idx > 0) & (idx < g.N - 1), axis=1) if dirichlet else np.ones(P, bool)
        nodes = np.flatnonzero(interior)
        B = tangent_bases(self.f[nodes])
        Lr = self.L[nodes][:, nodes].tocsr()
        Z = sparse.block_diag(list(B), format="csr")  # (k d, k n)
        Lamb = sparse.kron(Lr, sparse.identity(d), format="csr")
        K = (Z.T @ Lamb @ Z).tocsr() - sparse.diags(np.repeat(self.M[nodes] * self.tf2[nodes], n))
        return K.tocsr(), np.repeat(self.M[nodes], n), B, nodes


def grid_forms(gmap: GridMap, t0: float = 1.0, x0=None) -> GridForms:
    m = gmap.m
    x0 = np.zeros(m) if x0 is None else np.asarray(x0, dtype=float)
    w = GaussianWeight(Basepoint(x0, t0))
    pts = gmap.points().reshape(-1, m)
    P = pts.shape[0]
    h = gmap.dx
    G = w(pts)
    idx = np.arange(P).reshape((gmap.N,) * m)
    rows, cols, vals = [], [], []
    for a in range(m):
        i = np.take(idx, np.arange(gmap.N - 1), axis=a).ravel()
        j = np.take(idx, np.arange(1, gmap.N), axis=a).ravel()
        ge = w(0.5 * (pts[i] + pts[j])) * h ** (m - 2)
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [-ge, -ge, ge, ge]
    L = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(P, P))
    Tf = gmap.differential().reshape(P, m, gmap.n + 1)
    tf2 = np.sum(Tf**2, axis=(-2, -1))
    return GridForms(gmap, t0, x0, L, G * h**m, tf2, Tf, gmap.values.reshape(P, gmap.n + 1))


def forms_for(fmap, t0: float = 1.0):
    if isinstance(fmap, EquivariantProfile):
        return sector_forms(fmap, t0)
    if isinstance(fmap, GridMap):
        return grid_forms(fmap, t0)
    raise TypeError(f"no L^f discretization for {type(fmap).__name__}")


# ---------------------------------------------------------------------------
# operator, quotients


def apply_Lf(fmap, X, t0: float = 1.0, check: bool = True):
    """L^f X as a section of the same kind (difference-then-project on lattices)."""
    if check:
        from .sections import section_w22_check

        if not section_w22_check(fmap, X, GaussianWeight(Basepoint(_center(fmap), t0))).admissible:
            raise InadmissibleSection("section is not in the weighted W^{2,2} space")
    if isinstance(X, ModeSection):
        return sector_forms(fmap, t0).apply(X)
    require_same_grid(X.fmap, fmap)
    out = grid_forms(fmap, t0).apply_vectors(X.vectors)
    return TangentSection(fmap, out)


def _center(fmap) -> np.ndarray:
    return fmap.center if isinstance(fmap, EquivariantProfile) else np.zeros(fmap.m)


def _vec(X):
    return X.vectors if isinstance(X, TangentSection) else X


def quad_form(fmap, X, t0: float = 1.0) -> float:
    F = forms_for(fmap, t0)
    return F.quad(X) if isinstance(X, ModeSection) else F.quad(_vec(X))


def weighted_inner(fmap, X, Y, t0: float = 1.0) -> float:
    F = forms_for(fmap, t0)
    if isinstance(X, ModeSection):
        return F.mass_pair(X, Y)
    return F.mass_pair(_vec(X), _vec(Y))


def weighted_norm2(fmap, X, t0: float = 1.0) -> float:
    return weighted_inner(fmap, X, X, t0)


def rayleigh_quotient(fmap, X, t0: float = 1.0) -> float:
    den = weighted_norm2(fmap, X, t0)
    if not den > 1e-300:
        raise DegenerateSection("section has zero weighted norm")
    return quad_form(fmap, X, t0) / den


# ---------------------------------------------------------------------------
# Lemma-type closed form for L^f(zeta . Tf)


@dataclass(frozen=True)
class PolyField:
    """zeta(y) = p0(|y|^2) y + p1(|y|^2) c + p2(|y|^2) <c, y> y with numpy polynomial coefficients."""

    p0: tuple
    p1: tuple
    p2: tuple
    c: tuple

    def polys(self):
        P = np.polynomial.Polynomial
        return P(self.p0), P(self.p1), P(self.p2)

    def section(self, profile) -> ModeSection:
        q0, q1, q2 = self.polys()
        return ModeSection.from_vector_field(profile, q0, q1, q2, np.array(self.c))

    def evaluate(self, y: np.ndarray):
        """(zeta, D zeta with D[p, a, b] = d_a zeta^b, Laplacian of zeta)."""
        m = y.shape[1]
        c = np.array(self.c, dtype=float)
        s = np.sum(y * y, -1)
        out = []
        for q in self.polys():
            out.append((q(s), q.deriv(1)(s), q.deriv(2)(s)))
        (a0, a0p, a0pp), (a1, a1p, a1pp), (a2, a2p, a2pp) = out
        cy = y @ c
        I = np.eye(m)
        zeta = a0[:, None] * y + a1[:, None] * c + (a2 * cy)[:, None] * y
        D = (
            2 * a0p[:, None, None] * y[:, :, None] * y[:, None, :]
            + a0[:, None, None] * I
            + 2 * a1p[:, None, None] * y[:, :, None] * c[None, None, :]
            + 2 * (a2p * cy)[:, None, None] * y[:, :, None] * y[:, None, :]
            + a2[:, None, None] * c[None, :, None] * y[:, None, :]
            + (a2 * cy)[:, None, None] * I
        )
        lap = (
            (4 * s * a0pp + (2 * m + 4) * a0p)[:, None] * y
            + (4 * s * a1pp + 2 * m * a1p)[:, None] * c
            + ((4 * s * a2pp + (2 * m + 8) * a2p) * cy)[:, None] * y
            + 2 * a2[:, None] * c
        )
        return zeta, D, lap


def apply_Lf_general_zeta(profile: EquivariantProfile, zeta: PolyField, rule: AngularRule | None = None):
    """Closed form -(zeta/2).Tf - 2 (d_a zeta^b) hess_ab f - (Delta zeta).Tf + (d_{y/2} zeta).Tf.

    Returns (FieldSample, ambient values at its points). Only the soliton
    equation is used, so the result equals L^f(zeta . Tf) on solitons.
    """
    fs = field_sample(profile, rule, hessian=True)
    y = fs.x - profile.center
    z, D, lap = zeta.evaluate(y)
    Tf = fs.Tf
    out = -0.5 * np.einsum("pa,pai->pi", z, Tf)
    out -= 2 * np.einsum("pab,pabi->pi", D, fs.hess)
    out -= np.einsum("pb,pbi->pi", lap, Tf)
    drift = np.einsum("pa,pab->pb", y / 2, D)
    out += np.einsum("pb,pbi->pi", drift, Tf)
    return fs, out


def two_path_check(profile: EquivariantProfile, zeta: PolyField, rule: AngularRule | None = None) -> float:
    """|| L^f(zeta.Tf) (discrete operator) - closed form ||_G / || zeta.Tf ||_G.

    The outermost two nodes are left out: the free-boundary row there also
    carries the boundary flux, which is not part of L^f.
    """
    fs, closed = apply_Lf_general_zeta(profile, zeta, rule)
    X = zeta.section(profile)
    LX = sector_forms(profile).apply(X).sample(fs)
    w = GaussianWeight(Basepoint(profile.center, 1.0))
    keep = fs.radial_index < profile.J - 1
    diff = fs.integrate(keep * np.sum((LX - closed) ** 2, -1), w)
    nrm = fs.integrate(keep * np.sum(X.sample(fs) ** 2, -1), w)
    return float(np.sqrt(diff / nrm))


# ---------------------------------------------------------------------------
# mu_1


def factor_symmetric(A):
    """Sparse LU with a symmetric fill-reducing ordering (much less fill on lattices)."""
    return splu(sparse.csc_matrix(A), permc_spec="MMD_AT_PLUS_A", options={"SymmetricMode": True})


def inverse_iteration(K, Mdiag: np.ndarray, shift: float, v0: np.ndarray, tol: float = 1e-10, maxit: int = 200):
    """Shifted inverse iteration for K v = mu M v with diagonal M.

    Returns (mu, v, eigenresidual, iterations); the residual is
    ||K v - mu M v||_{M^{-1}} with ||v||_M = 1.
    """
    lu = factor_symmetric(K - shift * sparse.diags(Mdiag))
    v = v0 / np.sqrt(np.sum(Mdiag * v0 * v0))
    mu, res = np.nan, np.inf
    for it in range(1, maxit + 1):
        w = lu.solve(Mdiag * v)
        v = w / np.sqrt(np.sum(Mdiag * w * w))
        Kv = K @ v
        mu = float(v @ Kv)
        r = Kv - mu * Mdiag * v
        res = float(np.sqrt(np.sum(r * r / Mdiag)))
        if res < tol:
            break
    return mu, v, res, it


def _bottom_banded(K: sparse.csr_matrix, Mdiag: np.ndarray, bw: int) -> float:
    """Lowest eigenvalue of M^{-1/2} K M^{-1/2} (values only; vectors come from inverse iteration)."""
    s = 1 / np.sqrt(Mdiag)
    A = sparse.diags(s) @ K @ sparse.diags(s)
    if bw == 1:
        vals = eigh_tridiagonal(A.diagonal(0), A.diagonal(1), eigvals_only=True, select="i", select_range=(0, 0))
    else:
        n = A.shape[0]
        band = np.zeros((bw + 1, n))
        for k in range(bw + 1):
            band[bw - k, k:] = A.diagonal(k)
        vals = eig_banded(band, lower=False, eigvals_only=True, select="i", select_range=(0, 0))
    return float(vals[0])


@dataclass
class Mu1Result:
    value: float
    converged: bool
    eigenresidual: float
    refinement_gap: float
    sectors: dict
    vector: object = field(default=None, repr=False)
    label: str = "sector-restricted upper bound"


def _solve_sector(forms: SectorForms, name: str, tol: float):
    K, M, dofs = forms.sector(name)
    bw = 1 if name != "dipole" else 3
    mu0 = _bottom_banded(K, M, bw)
    v0 = np.random.default_rng(0).standard_normal(M.size)
    try:
        mu, v, res, _ = inverse_iteration(K, M, mu0 - 1e-6 * (1 + abs(mu0)), v0, tol=tol)
    except RuntimeError:
        # Lanczos fallback if the shifted factorization fails
        vals, vecs = eigsh(K, k=1, M=sparse.diags(M), sigma=mu0 - 1e-3, which="LM")
        mu, v = float(vals[0]), vecs[:, 0]
        r = K @ v - mu * M * v
        res = float(np.sqrt(np.sum(r * r / M)) / np.sqrt(np.sum(M * v * v)))
    return mu, v, dofs, res


def _mode_from_vector(forms: SectorForms, name: str, v: np.ndarray, dofs: np.ndarray) -> ModeSection:
    p = forms.profile
    if name == "dipole":
        red = np.zeros(2 * p.J + 1)
        red[dofs] = v
        full = forms.P1 @ red
    else:
        full = np.zeros(p.J + 1)
        full[dofs] = v
    if name == "radial":
        return ModeSection.radial(p, full, label="mu1-radial")
    if name == "dipole":
        zeta = np.zeros(p.m)
        zeta[0] = 1.0
        return ModeSection.dipole(p, zeta, full[0::2], full[1::2], label="mu1-dipole")
    return ModeSection.normal(p, full, 0, label="mu1-normal")


def mu1_estimate(
    fmap,
    sectors=None,
    t0: float = 1.0,
    tol: float = 1e-8,
    refine: bool = True,
    refine_tol: float = 5e-3,
) -> Mu1Result:
    """Bottom of the G-weighted spectrum of L^f on the chosen sectors (Dirichlet at the grid edge)."""
    if isinstance(fmap, GridMap):
        return _mu1_grid(fmap, t0, tol)
    if sectors is None:
        sectors = ["radial", "dipole"] + (["normal"] if fmap.codim else [])
    forms = sector_forms(fmap, t0)
    results = {}
    best = None
    for name in sectors:
        mu, v, dofs, res = _solve_sector(forms, name, tol * 1e-2)
        results[name] = {"mu": mu, "eigenresidual": res}
        if best is None or mu < best[0]:
            best = (mu, name, v, dofs, res)
    mu, name, v, dofs, res = best
    gap = 0.0
    if refine and fmap.J % 2 == 0 and fmap.J >= 16:
        coarse = EquivariantProfile(fmap.psi[::2], fmap.m, fmap.R_max, fmap.center, fmap.codim)
        cf = sector_forms(coarse, t0)
        mu_c = min(_solve_sector(cf, s, tol * 1e-2)[0] for s in sectors)
        gap = abs(mu - mu_c)
        results["coarse_mu"] = mu_c
    converged = bool(res <= tol and gap <= refine_tol)
    return Mu1Result(mu, converged, res, gap, results, _mode_from_vector(forms, name, v, dofs))


def _mu1_grid(gmap: GridMap, t0: float, tol: float) -> Mu1Result:
    """Coarse lattice sector; the shift sits just below the best trial quotient."""
    gf = grid_forms(gmap, t0)
    K, M, B, nodes = gf.tangent_problem()
    P, d = gf.f.shape
    trials = [gf.f * 0 + gmap.tension_vectors().reshape(P, d)]
    trials += [conformal_rows(w, gf.f) for w in np.eye(d)]
    best = np.inf
    for T in trials:
        c = np.einsum("kij,ki->kj", B, T[nodes]).ravel()
        den = np.sum(M * c * c)
        if den > 1e-300:
            best = min(best, float(c @ (K @ c)) / den)
    sigma = best - 0.25 * (1 + abs(best))
    k = min(4, K.shape[0] - 2)
    lu = factor_symmetric(K - sigma * sparse.diags(M))
    op = LinearOperator(K.shape, matvec=lambda x: lu.solve(np.ravel(x)), dtype=float)
    vals, vecs = eigsh(K, k=k, M=sparse.diags(M), sigma=sigma, which="LM", OPinv=op, tol=1e-10)
    i = int(np.argmin(vals))
    mu, v, res, _ = inverse_iteration(K, M, vals[i] - 1e-6 * (1 + abs(vals[i])), vecs[:, i], tol=tol * 1e-2)
    amb = np.zeros((P, d))
    amb[nodes] = np.einsum("kij,kj->ki", B, v.reshape(len(nodes), d - 1))
    X = TangentSection(gmap, amb.reshape(gmap.values.shape))
    info = {"mu": mu, "eigenresidual": res, "shift": sigma, "best_trial": best}
    return Mu1Result(mu, bool(res <= tol), res, 0.0, {"grid": info}, X)


# ---------------------------------------------------------------------------
# F'' certificate


@dataclass
class FppResult:
    value: float
    q: float
    V: np.ndarray
    norm2: float
    parts: dict

    def to_dict(self) -> dict:
        return {"value": self.value, "q": self.q, "V": list(map(float, self.V)), "norm2": self.norm2, "parts": self.parts}


def _fpp_data(fmap, X, t0: float):
    F = forms_for(fmap, t0)
    if isinstance(X, ModeSection):
        tau = ModeSection.tau(fmap)
        LX = F.quad(X)
        xt = F.mass_pair(X, tau)
        tt = F.mass(tau)
        b = F.tf_pairing(X)
        n2 = F.mass(X)
    else:
        v = _vec(X)
        tau = fmap.tension_vectors()
        LX = F.quad(v)
        xt = F.mass_pair(v, tau)
        tt = F.mass(tau)
        b = F.tf_pairing(v)
        n2 = F.mass(v)
    return LX, xt, tt, b, F.tf_gram(), n2


def fpp_value(fmap, X, q: float, V, t0: float = 1.0, data=None) -> float:
    """F''(q, V, X) = t0 (<X, LX> - 2 q <X, tau> - <X, V.Tf>) - q^2 |tau|^2 - 1/2 <V, M V>."""
    LX, xt, tt, b, M, _ = data or _fpp_data(fmap, X, t0)
    V = np.atleast_1d(np.asarray(V, dtype=float))
    return float(t0 * (LX - 2 * q * xt - b @ V) - q * q * tt - 0.5 * V @ M @ V)


def fpp_certificate(fmap, X, t0: float = 1.0, rcond: float = 1e-10) -> FppResult:
    """Closed-form maximum of F'' over basepoint variations (q, V)."""
    LX, xt, tt, b, M, n2 = data = _fpp_data(fmap, X, t0)
    q = -t0 * xt / tt if tt > 0 else 0.0
    Mp = np.linalg.pinv(M, rcond=rcond, hermitian=True)
    V = -t0 * Mp @ b
    val = fpp_value(fmap, X, q, V, t0, data)
    return FppResult(val, float(q), V, n2, {"LX": LX, "X_tau": xt, "tau2": tt, "b": b.tolist()})


def fpp_grid_search(fmap, X, t0: float = 1.0, levels: int = 14, points: int = 21, span: float | None = None) -> FppResult:
    """Zooming grid search for max F'' (oracle for the closed form).

    F'' separates into a q part and a V part; each is searched on its own
    dense grid, refined around the incumbent at every level.
    """
    data = _fpp_data(fmap, X, t0)
    _, xt, tt, b, M, n2 = data
    m = b.size
    scale = span or 4.0 * (1.0 + np.sqrt(n2) / max(np.sqrt(tt), 1e-30) + np.sqrt(n2) / max(np.sqrt(np.trace(M) / m), 1e-30))
    q, hq = 0.0, scale
    for _ in range(levels):
        cand = q + np.linspace(-hq, hq, points)
        vals = [fpp_value(fmap, X, c, np.zeros(m), t0, data) for c in cand]
        q = float(cand[int(np.argmax(vals))])
        hq *= 2.5 / points * 2
    V = np.zeros(m)
    hv = np.full(m, scale)
    for _ in range(levels):
        for a in range(m):
            cand = V[a] + np.linspace(-hv[a], hv[a], points)
            vals = []
            for c in cand:
                W = V.copy()
                W[a] = c
                vals.append(fpp_value(fmap, X, 0.0, W, t0, data))
            V[a] = float(cand[int(np.argmax(vals))])
        hv *= 2.5 / points * 2
    return FppResult(fpp_value(fmap, X, q, V, t0, data), q, V, n2, {})


# ---------------------------------------------------------------------------
# conformal fields


@dataclass
class ConformalReport:
    rayleighs: list
    numerators: list
    denominators: list
    trace_operator: float
    trace_closed: float
    trace_target: float
    trace_residual: float
    verdict: str
    basepoint: tuple

    @property
    def min_rayleigh(self) -> float:
        return float(min(self.rayleighs))


def conformal_quotient_parts(f: np.ndarray, Tf: np.ndarray, Gw: np.ndarray, poles: np.ndarray):
    """Per-pole numerator int (2 sum <W,Tf_a>^2 - |Tf|^2 |W|^2) G and denominator int |W|^2 G.

    ``Gw`` holds quadrature weights times G at the sample points; f, Tf may be
    injected directly (the identity is pointwise algebra).
    """
    tf2 = np.sum(Tf**2, axis=(-2, -1))
    num, den = [], []
    for w in poles:
        W = conformal_rows(w, f)
        proj = np.einsum("pai,pi->pa", Tf, W)
        W2 = np.sum(W * W, -1)
        num.append(float(np.sum((2 * np.sum(proj**2, -1) - tf2 * W2) * Gw)))
        den.append(float(np.sum(W2 * Gw)))
    return np.array(num), np.array(den), float(np.sum(tf2 * Gw))


def _profile_conformal_samples(profile, pole, bp: Basepoint):
    m = profile.m
    off = np.linalg.norm(bp.x0 - profile.center)
    axis = pole[:m] if np.linalg.norm(pole[:m]) > 0 else None
    if off > 0:
        if m >= 4:
            u = (bp.x0 - profile.center) / off
            z = pole[:m]
            if np.linalg.norm(z - (z @ u) * u) > 1e-12:
                raise UnsupportedDimension("off-center conformal quotients for m >= 4 need poles along the offset")
        axis = bp.x0 - profile.center
    return field_sample(profile, default_rule(m, axis=axis, offcenter=off))


def conformal_certificates(fmap, poles=None, basepoint: Basepoint | None = None, sharp: bool = False) -> ConformalReport:
    n = fmap.n
    poles = np.eye(n + 1) if poles is None else np.asarray(poles, dtype=float)
    if poles.shape != (n + 1, n + 1):
        raise InvalidBasis(f"need {n + 1} poles in R^{n + 1}")
    check_orthonormal(poles)
    bp = basepoint or Basepoint(_center(fmap), 1.0)
    w = GaussianWeight(bp)
    num, den = [], []
    energy = None
    if isinstance(fmap, EquivariantProfile):
        for pole in poles:
            fs = _profile_conformal_samples(fmap, pole, bp)
            a, b, e = conformal_quotient_parts(fs.f, fs.Tf, fs.gaussian(w), pole[None])
            num.append(a[0])
            den.append(b[0])
            energy = e if energy is None else energy
    else:
        fs = field_sample(fmap)
        a, b, energy = conformal_quotient_parts(fs.f, fs.Tf, fs.gaussian(w), poles)
        num, den = list(a), list(b)
    num, den = np.array(num), np.array(den)
    # quotients are reported for the map rescaled so that the basepoint scale is 1
    R = bp.t0 * np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    target = (2 - n) * energy
    trace_closed = float(np.sum(num))
    trace_op = np.nan
    centered = np.allclose(bp.x0, _center(fmap))
    if centered:
        if isinstance(fmap, EquivariantProfile):
            F = sector_forms(fmap, bp.t0)
            trace_op = sum(F.quad(ModeSection.conformal(fmap, p)) for p in poles)
            target = (2 - n) * F.energy()
        elif isinstance(fmap, GridMap):
            F = grid_forms(fmap, bp.t0)
            trace_op = sum(F.quad(conformal_rows(p, F.f)) for p in poles)
            target = (2 - n) * F.energy()
    ref = trace_op if np.isfinite(trace_op) else trace_closed
    resid = abs(ref - target) / max(abs(ref), abs(target), 1.0)
    thr = SHARP_THRESHOLD if sharp else THRESHOLD
    verdict = "UNSTABLE" if R.min() < thr else "NO_WITNESS"
    return ConformalReport(
        R.tolist(), num.tolist(), den.tolist(), float(trace_op), trace_closed, float(target), float(resid), verdict,
        (bp.x0.tolist(), bp.t0),
    )


@dataclass
class PerpendicularResult:
    quotient: float
    max_pairing: float
    verdict: str


def perpendicular_conformal_test(fmap, pole, tol: float = 1e-8) -> PerpendicularResult:
    """Conformal field of a pole orthogonal to the image: quotient -int |W|^2 |Tf|^2 G / int |W|^2 G."""
    pole = np.asarray(pole, dtype=float)
    if abs(np.linalg.norm(pole) - 1) > 1e-12:
        raise InvalidBasis("pole must be a unit vector")
    bp = Basepoint(_center(fmap), 1.0)
    if isinstance(fmap, EquivariantProfile):
        fs = _profile_conformal_samples(fmap, pole, bp)
    else:
        fs = field_sample(fmap)
    W = conformal_rows(pole, fs.f)
    pairing = float(np.max(np.abs(np.einsum("pai,pi->pa", fs.Tf, W)))) if W.size else 0.0
    if pairing > tol:
        raise PreconditionFailed(f"<W, Tf> reaches {pairing:.3g}; pole is not perpendicular to the image")
    Gw = fs.gaussian(GaussianWeight(bp))
    W2 = np.sum(W * W, -1)
    tf2 = np.sum(fs.Tf**2, axis=(-2, -1))
    q = -float(np.sum(W2 * tf2 * Gw) / np.sum(W2 * Gw))
    verdict = "CONSTANT" if abs(q) <= 1e-12 else "UNSTABLE_OR_CONSTANT"
    return PerpendicularResult(q, pairing, verdict)


# ---------------------------------------------------------------------------
# reports


def entropy_bound(n: int) -> float:
    if n < 3:
        raise UnsupportedDimension("the entropy bound needs n >= 3")
    return 3 * n / (4 * (n - 2))


@dataclass
class StabilityReport:
    mu1_estimate: float
    mu1_converged: bool
    named_eigen_residuals: dict
    conformal_rayleighs: list
    fpp_certificates: list
    verdict: str
    witnesses: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=float)


def stability_report(
    fmap,
    fields=("conformal", "translations", "dilation"),
    sectors=None,
    basepoint: Basepoint | None = None,
    sharp: bool = False,
    fpp_tol: float = 2e-3,
) -> StabilityReport:
    """mu_1, named eigen-residuals, conformal quotients and F'' certificates, with a verdict.

    UNSTABLE needs a witness: converged mu_1 below the threshold, a conformal
    quotient below it, or a section whose maximized F'' is below -fpp_tol |X|^2.
    """
    thr = SHARP_THRESHOLD if sharp else THRESHOLD
    mu = mu1_estimate(fmap, sectors) if isinstance(fmap, EquivariantProfile) else mu1_estimate(fmap)
    named, certs, witnesses = {}, [], []
    m = fmap.m
    if isinstance(fmap, EquivariantProfile):
        if "dilation" in fields:
            tau = ModeSection.tau(fmap)
            if weighted_norm2(fmap, tau) > 1e-300:
                named["position_field"] = abs(rayleigh_quotient(fmap, tau) + 1.0)
                certs.append(("position_field", fpp_certificate(fmap, tau).to_dict()))
        if "translations" in fields:
            for k in range(m):
                X = ModeSection.translation(fmap, np.eye(m)[k])
                if weighted_norm2(fmap, X) > 1e-300:
                    named[f"constant_field_{k}"] = abs(rayleigh_quotient(fmap, X) + 0.5)
                    certs.append((f"constant_field_{k}", fpp_certificate(fmap, X).to_dict()))
        if "conformal" in fields:
            for k in range(fmap.n + 1):
                X = ModeSection.conformal(fmap, np.eye(fmap.n + 1)[k])
                if weighted_norm2(fmap, X) > 1e-300:
                    certs.append((f"conformal_{k}", fpp_certificate(fmap, X).to_dict()))
    conf = conformal_certificates(fmap, basepoint=basepoint, sharp=sharp) if "conformal" in fields else None
    if mu.converged and mu.value < thr:
        witnesses.append(f"mu1={mu.value:.6g}")
    if conf is not None and conf.min_rayleigh < thr:
        witnesses.append(f"conformal_rayleigh={conf.min_rayleigh:.6g}")
    for name, c in certs:
        if c["value"] < -fpp_tol * max(c["norm2"], 1e-300):
            witnesses.append(f"fpp[{name}]={c['value']:.6g}")
    if witnesses:
        verdict = "UNSTABLE"
    elif mu.converged:
        verdict = "STABLE_CANDIDATE"
    else:
        verdict = "INCONCLUSIVE"
    details = {"mu1": {k: v for k, v in mu.sectors.items()}, "mu1_refinement_gap": mu.refinement_gap}
    if conf is not None:
        details["conformal"] = {
            "trace_operator": conf.trace_operator,
            "trace_closed": conf.trace_closed,
            "trace_target": conf.trace_target,
            "trace_residual": conf.trace_residual,
            "basepoint": conf.basepoint,
        }
    return StabilityReport(
        float(mu.value), mu.converged, named, conf.rayleighs if conf else [], certs, verdict, witnesses, details
    )


@dataclass
class AuditResult:
    consistent: bool
    bound: float
    lam: float
    verdict: str
    message: str


def entropy_bound_audit(fmap, stability: StabilityReport, entropy_report, tol: float = 1e-2) -> AuditResult:
    """Consistency of lambda with the verdict: above the bound an UNSTABLE conformal witness is required.

    ``entropy_report`` may be an EntropyReport or a bare lambda. The conformal
    quotients should come from the entropy argmax (see stability_report's
    basepoint), where the pigeonhole over the n + 1 poles applies.
    """
    n = fmap.n
    bound = entropy_bound(n)
    lam = float(getattr(entropy_report, "lam", entropy_report))
    if lam > bound:
        ok = stability.verdict == "UNSTABLE" and any(r < THRESHOLD for r in stability.conformal_rayleighs)
        msg = "entropy above the bound carries an unstable conformal certificate" if ok else "entropy above the bound without a certificate"
    elif stability.verdict == "STABLE_CANDIDATE":
        ok = lam <= bound + tol
        msg = "stable candidate within the bound"
    else:
        ok = True
        msg = "entropy within the bound"
    return AuditResult(bool(ok), bound, lam, stability.verdict, msg)
