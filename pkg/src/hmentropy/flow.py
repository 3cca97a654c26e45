"""Explicit harmonic map heat flow with monitors.

Curves and lattices step f <- normalize(f + dt P_f(Lap f)), where the
tangential projection of the discrete Laplacian is, node by node, minus the
gradient of the edge energy (1/2) sum |f_i - f_j|^2 h^{m-2}. Profiles step
psi <- psi + dt tau_h with a conservative finite-volume tension tau_h that is
the exact gradient of a discrete radial energy. Either way small steps cannot
raise the monitored energy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from .errors import BlowupDetected, InvalidEpsilon, OutOfDomain, ScaleError, UnsupportedDimension
from .maps import CurveMap, CylindricalMap, EquivariantProfile, GridMap, map_to_dict
from .quadrature import field_sample, sphere_area
from .solitons import profile_interpolant
from .sphere import convex_domain, convex_log_value, tangent_rows

MAX_CFL = 0.25
DEFAULT_CADENCE = 100


def default_cfl(fmap) -> float:
    """Largest factor we use by default; lattices need 1/(2m) for explicit stability."""
    if isinstance(fmap, CylindricalMap):
        return default_cfl(fmap.base)
    if isinstance(fmap, GridMap):
        return min(0.2, 0.4 / fmap.m)
    return 0.2


def _spacing(fmap) -> float:
    return fmap.base.spacing if isinstance(fmap, CylindricalMap) else fmap.spacing


@dataclass(frozen=True)
class FlowState:
    map: object
    time: float = 0.0
    step_count: int = 0
    dt: float | None = None

    def __post_init__(self):
        h = _spacing(self.map)
        dt = default_cfl(self.map) * h * h if self.dt is None else float(self.dt)
        if not dt > 0:
            raise ValueError("dt must be positive")
        if dt > MAX_CFL * h * h * (1 + 1e-12):
            raise ValueError(f"dt = {dt:.3g} violates dt <= {MAX_CFL} h^2 (h = {h:.3g})")
        object.__setattr__(self, "dt", dt)

    def to_dict(self) -> dict:
        m = self.map.base if isinstance(self.map, CylindricalMap) else self.map
        return {"map": map_to_dict(m), "time": self.time, "step_count": self.step_count, "dt": self.dt}


# ---------------------------------------------------------------------------
# array kernels


class _CurveKernel:
    def __init__(self, fmap: CurveMap):
        self.ds = fmap.ds

    def state(self, fmap):
        return np.array(fmap.samples)

    def tension(self, f):
        lap = (np.roll(f, -1, axis=0) - 2 * f + np.roll(f, 1, axis=0)) / self.ds**2
        return tangent_rows(f, lap)

    def advance(self, f, dt):
        g = f + dt * self.tension(f)
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    def to_map(self, f):
        return CurveMap(f)

    def energy(self, f):
        d = np.roll(f, -1, axis=0) - f
        return float(0.5 * np.sum(d * d) / self.ds)


class _GridKernel:
    """Interior nodes move; the boundary layer is held fixed."""

    def __init__(self, gmap: GridMap):
        self.m = gmap.m
        self.h = gmap.dx
        self.R = gmap.R_max
        self.interior = (slice(1, -1),) * self.m

    def state(self, gmap):
        return np.array(gmap.values)

    def _lap(self, f):
        out = np.zeros_like(f)
        core = out[self.interior]
        for a in range(self.m):
            lo = [slice(1, -1)] * self.m
            hi = [slice(1, -1)] * self.m
            lo[a] = slice(0, -2)
            hi[a] = slice(2, None)
            core += f[tuple(lo)] + f[tuple(hi)] - 2 * f[self.interior]
        return out / self.h**2

    def tension(self, f):
        return tangent_rows(f, self._lap(f))

    def advance(self, f, dt):
        g = f + dt * self.tension(f)
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    def to_map(self, f):
        return GridMap(f, self.R)

    def energy(self, f):
        e = 0.0
        for a in range(self.m):
            d = np.diff(f, axis=a)
            e += float(np.sum(d * d))
        return 0.5 * e * self.h ** (self.m - 2)


class _ProfileKernel:
    """Finite volumes on cells [(j - 1/2) h, (j + 1/2) h] clipped to [0, R]; psi_J is held fixed."""

    def __init__(self, profile: EquivariantProfile):
        m, J, h = profile.m, profile.J, profile.dr
        self.m, self.h = m, h
        self.template = profile
        r = profile.r
        self.r = r
        faces = (np.arange(J) + 0.5) * h
        self.kf = faces ** (m - 1) / h
        lo = np.clip(r - h / 2, 0.0, r[-1])
        hi = np.clip(r + h / 2, 0.0, r[-1])
        self.vol = (hi**m - lo**m) / m
        self.S = sphere_area(m)
        # potential weights: exact cell integrals of r^{m-3}, so psi = a r is consistent at the first cell
        self.pw = np.zeros_like(r)
        if m == 2:
            self.pw[1:] = np.log(hi[1:] / lo[1:])
        else:
            self.pw[1:] = (hi[1:] ** (m - 2) - lo[1:] ** (m - 2)) / (m - 2)
        self.ir2 = np.zeros_like(r)
        self.ir2[1:] = self.pw[1:] / self.vol[1:]

    def state(self, profile):
        return np.array(profile.psi)

    def tension(self, psi):
        flux = self.kf * np.diff(psi)
        out = np.zeros_like(psi)
        out[1:-1] = (flux[1:] - flux[:-1]) / self.vol[1:-1] - (self.m - 1) * np.sin(2 * psi[1:-1]) * self.ir2[1:-1] / 2
        return out

    def advance(self, psi, dt):
        return psi + dt * self.tension(psi)

    def to_map(self, psi):
        return self.template.replace(psi)

    def energy(self, psi):
        grad = np.sum(self.kf * np.diff(psi) ** 2)
        pot = (self.m - 1) * np.sum(self.pw[1:] * np.sin(psi[1:]) ** 2)
        return float(0.5 * self.S * (grad + pot))


class _CylinderKernel:
    def __init__(self, cmap: CylindricalMap):
        self.cmap = cmap
        self.inner = _kernel(cmap.base)

    def state(self, cmap):
        return self.inner.state(cmap.base)

    def tension(self, f):
        return self.inner.tension(f)

    def advance(self, f, dt):
        return self.inner.advance(f, dt)

    def to_map(self, f):
        c = self.cmap
        return CylindricalMap(self.inner.to_map(f), c.extra_dims, c.line_half_width, c.line_nodes)

    def energy(self, f):
        # energy per unit volume of the line factor
        return self.inner.energy(f)


def _kernel(fmap):
    if isinstance(fmap, CurveMap):
        return _CurveKernel(fmap)
    if isinstance(fmap, GridMap):
        return _GridKernel(fmap)
    if isinstance(fmap, EquivariantProfile):
        if fmap.codim:
            raise UnsupportedDimension("profile flow needs the image in S^m (codim 0)")
        return _ProfileKernel(fmap)
    if isinstance(fmap, CylindricalMap):
        return _CylinderKernel(fmap)
    raise TypeError(f"unsupported map {type(fmap).__name__}")


def flow_energy(fmap) -> float:
    """The discrete energy dissipated by the scheme."""
    k = _kernel(fmap)
    return k.energy(k.state(fmap))


def flow_tension(fmap) -> np.ndarray:
    """Per-node tension used by the scheme (radial coefficient for profiles)."""
    k = _kernel(fmap)
    return k.tension(k.state(fmap))


def sup_tension(fmap) -> float:
    t = flow_tension(fmap)
    return float(np.max(np.abs(t))) if t.ndim == 1 else float(np.sqrt(np.max(np.sum(t * t, -1))))


# ---------------------------------------------------------------------------
# stepping


def step(state: FlowState) -> FlowState:
    k = _kernel(state.map)
    new = k.advance(k.state(state.map), state.dt)
    if not np.all(np.isfinite(new)):
        raise BlowupDetected(f"non-finite values at t = {state.time + state.dt:.6g}", state=state)
    return FlowState(k.to_map(new), state.time + state.dt, state.step_count + 1, state.dt)


@dataclass
class MonitorTrace:
    names: tuple
    times: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def append(self, time: float, values: dict) -> None:
        if self.times and not time > self.times[-1]:
            raise ValueError("monitor times must increase strictly")
        self.times.append(float(time))
        self.rows.append([float(values[n]) for n in self.names])

    def column(self, name: str) -> np.ndarray:
        i = self.names.index(name)
        return np.array([row[i] for row in self.rows])

    def __len__(self) -> int:
        return len(self.times)

    def to_csv(self) -> str:
        lines = [",".join(("time",) + tuple(self.names))]
        for t, row in zip(self.times, self.rows):
            lines.append(",".join(f"{v:.17g}" for v in [t] + row))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class StopRule:
    max_time: float
    energy_below: float | None = None
    gradient_below: float | None = None


def convexity_monitor(state: FlowState, F) -> float:
    """sup over the image of F o f (log F for the hinge function).

    Raises OutOfDomain carrying the first offending node and the time.
    """
    fmap = state.map.base if isinstance(state.map, CylindricalMap) else state.map
    pts = _image_points(fmap)
    ok = convex_domain(F, pts)
    if not np.all(ok):
        node = int(np.flatnonzero(~ok)[0])
        raise OutOfDomain(f"node {node} left the domain at t = {state.time:.6g}", node=node, time=state.time)
    return float(np.max(convex_log_value(F, pts)))


def _image_points(fmap) -> np.ndarray:
    if isinstance(fmap, CurveMap):
        return fmap.samples
    if isinstance(fmap, GridMap):
        return fmap.values.reshape(-1, fmap.n + 1)
    if isinstance(fmap, EquivariantProfile):
        return field_sample(fmap).f
    raise TypeError(f"unsupported map {type(fmap).__name__}")


def diameter(fmap) -> float:
    """Largest chordal distance between image samples."""
    pts = _image_points(fmap.base if isinstance(fmap, CylindricalMap) else fmap)
    if len(pts) > 4096:
        return float(np.linalg.norm(pts.max(0) - pts.min(0)))
    return float(pdist(pts).max()) if len(pts) > 1 else 0.0


def distance_to(reference):
    ref = _image_points(reference)

    def mon(fmap):
        return float(np.max(np.linalg.norm(_image_points(fmap) - ref, axis=-1)))

    return mon


# hinge symmetry: reflection in x3 = 0 followed by a quarter turn about the x3 axis
HINGE_ISOMETRY = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])


def symmetry_drift(curve: CurveMap, isometry: np.ndarray = HINGE_ISOMETRY, shift: int | None = None) -> float:
    """max_j |f_{j + shift} - A f_j|; the hinge curve satisfies f(s + pi/2) = A f(s)."""
    N = curve.N
    if shift is None:
        if N % 4:
            raise ValueError("quarter-period shift needs N divisible by 4")
        shift = N // 4
    f = curve.samples
    return float(np.max(np.abs(np.roll(f, -shift, axis=0) - f @ isometry.T)))


def run_until(
    state: FlowState,
    stop: StopRule,
    monitors: dict | None = None,
    cadence: int = DEFAULT_CADENCE,
    convex=None,
) -> tuple[FlowState, MonitorTrace]:
    """Step until a stop predicate holds, sampling monitors every ``cadence`` steps.

    Built-in monitors: energy, sup_energy_density, gradient (sup |tau|) and,
    with ``convex``, convex_sup. Domain exits of the convex function are kept
    in ``trace.events`` and the monitor reads NaN afterwards.
    """
    k = _kernel(state.map)
    extra = dict(monitors or {})
    names = ["energy", "sup_energy_density", "gradient"]
    if convex is not None:
        names.append("convex_sup")
    names += list(extra)
    trace = MonitorTrace(tuple(names))
    f = k.state(state.map)
    t0, n0, dt = state.time, state.step_count, state.dt
    exited = False

    def record(i, arr):
        nonlocal exited
        fmap = k.to_map(arr)
        tau = k.tension(arr)
        grad = float(np.max(np.abs(tau))) if tau.ndim == 1 else float(np.sqrt(np.max(np.sum(tau * tau, -1))))
        em = fmap.base if isinstance(fmap, CylindricalMap) else fmap
        vals = {"energy": k.energy(arr), "sup_energy_density": float(np.max(em.energy_density())), "gradient": grad}
        st = FlowState(fmap, t0 + i * dt, n0 + i, dt)
        if convex is not None:
            if exited:
                vals["convex_sup"] = np.nan
            else:
                try:
                    vals["convex_sup"] = convexity_monitor(st, convex)
                except OutOfDomain as exc:
                    exited = True
                    trace.events.append({"event": "OutOfDomain", "time": exc.time, "node": exc.node})
                    vals["convex_sup"] = np.nan
        for name, fn in extra.items():
            vals[name] = fn(fmap)
        trace.append(st.time, vals)
        return st, vals

    def done(vals, time):
        if vals["gradient"] == 0.0:
            return True
        if stop.energy_below is not None and vals["energy"] < stop.energy_below:
            return True
        if stop.gradient_below is not None and vals["gradient"] < stop.gradient_below:
            return True
        return time >= stop.max_time - 1e-12 * max(1.0, abs(stop.max_time))

    st, vals = record(0, f)
    if done(vals, st.time):
        return st, trace
    n_max = int(np.ceil((stop.max_time - t0) / dt - 1e-9))
    i = 0
    while i < n_max:
        new = k.advance(f, dt)
        if not np.all(np.isfinite(new)):
            last = FlowState(k.to_map(f), t0 + i * dt, n0 + i, dt)
            raise BlowupDetected(f"non-finite values at t = {t0 + (i + 1) * dt:.6g}", state=last, trace=trace)
        f = new
        i += 1
        if i % cadence == 0 or i == n_max:
            st, vals = record(i, f)
            if done(vals, st.time):
                break
    return st, trace


# ---------------------------------------------------------------------------
# constructions


def self_similar_reconstruct(profile: EquivariantProfile, t: float, J: int | None = None, R_max: float | None = None):
    """The time-t slice psi(r / sqrt(-t)) of the self-similar solution through ``profile`` at t = -1.

    Resampled by an odd cubic spline; radii beyond the sampled range use the
    far-field tail. Raises ScaleError when the core scale sqrt(-t) drops below
    ten grid cells.
    """
    if not t < 0:
        raise ScaleError("reconstruction needs t < 0")
    J = profile.J if J is None else J
    R = profile.R_max if R_max is None else float(R_max)
    dr = R / J
    lam = np.sqrt(-t)
    if lam < 10 * dr:
        raise ScaleError(f"scale sqrt(-t) = {lam:.3g} is below ten grid cells ({10 * dr:.3g})")
    if t == -1.0 and J == profile.J and R == profile.R_max:
        return profile
    r = np.linspace(0.0, R, J + 1)
    psi = profile_interpolant(profile)(r / lam)
    psi[0] = 0.0
    return EquivariantProfile(psi, profile.m, R, profile.center, profile.codim)


def hemisphere_perturb(fmap, eps: float):
    """(sqrt(1 - eps^2) f, eps): into the open upper hemisphere of S^{n+1} at height eps."""
    if not 0.0 <= eps < 1.0:
        raise InvalidEpsilon("eps must lie in [0, 1)")
    if isinstance(fmap, EquivariantProfile):
        if eps == 0.0:
            return fmap.lifted(fmap.codim + 1)
        raise UnsupportedDimension("a tilted lift of a profile is not equivariant; sample it on a lattice first")
    a = np.sqrt(1 - eps * eps)
    if isinstance(fmap, CurveMap):
        v = fmap.samples
        return CurveMap(np.concatenate([a * v, np.full(v.shape[:-1] + (1,), eps)], axis=-1))
    if isinstance(fmap, GridMap):
        v = fmap.values
        return GridMap(np.concatenate([a * v, np.full(v.shape[:-1] + (1,), eps)], axis=-1), fmap.R_max)
    raise TypeError(f"unsupported map {type(fmap).__name__}")


def sample_flow(state: FlowState, t_end: float, samples: int) -> tuple[list, list]:
    """Flow to t_end and return ``samples`` + 1 equally spaced (times, maps), endpoints included.

    The step is shrunk (never enlarged) so that the sample times fall on steps.
    """
    total = t_end - state.time
    if total <= 0:
        raise ValueError("t_end must lie after the current time")
    per = int(np.ceil(total / (samples * state.dt)))
    dt = total / (samples * per)
    k = _kernel(state.map)
    f = k.state(state.map)
    times, maps = [state.time], [state.map]
    for s in range(1, samples + 1):
        for _ in range(per):
            f = k.advance(f, dt)
        if not np.all(np.isfinite(f)):
            raise BlowupDetected(f"non-finite values before t = {state.time + s * per * dt:.6g}", state=FlowState(maps[-1], times[-1], 0, dt))
        times.append(state.time + s * per * dt)
        maps.append(k.to_map(f))
    return times, maps
