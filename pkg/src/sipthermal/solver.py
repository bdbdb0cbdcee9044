"""Structured finite-volume discretisation and steady-state solve.

Voxel arrays are indexed ``[k, j, i]`` = ``[z, y, x]``.  Unknowns are the
non-void voxels in C order.  Internally the solver works on the
temperature rise over a reference temperature (the top ambient), in K.
"""

from __future__ import annotations

import math
import re
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from .powermap import PowerMap, check_fits, overlap_matrix, total_power
from .stackmodel import PackageStack

VOID = -2
GAP = -1
DEFAULT_MAX_VOXELS = 20_000_000
FACES = ("west", "east", "south", "north", "bottom", "top")


class MeshError(ValueError):
    pass


class SolverError(RuntimeError):
    pass


class SingularSystemError(SolverError):
    pass


class ConvergenceError(SolverError):
    def __init__(self, msg, best=None, residual=None, iterations=None):
        super().__init__(msg)
        self.best = best
        self.residual = residual
        self.iterations = iterations


# --------------------------------------------------------------------------
# Mesh

def parse_z_policy(policy) -> float | None:
    """Return the max aspect ratio, or None for one cell per layer."""
    if policy is None or policy == "one_cell_per_layer":
        return None
    if isinstance(policy, (int, float)):
        return float(policy)
    if isinstance(policy, (tuple, list)) and len(policy) == 2 and policy[0] == "max_aspect":
        return float(policy[1])
    m = re.fullmatch(r"\s*max_aspect\(\s*([0-9.eE+-]+)\s*\)\s*", str(policy))
    if m:
        return float(m.group(1))
    raise MeshError(f"unknown z policy {policy!r}")


@dataclass(frozen=True, eq=False)
class Mesh:
    stack: PackageStack
    pitch: float                        # um
    x_edges: np.ndarray                 # mm
    y_edges: np.ndarray                 # mm
    z_edges: np.ndarray                 # um
    layer_names: tuple[str, ...]
    layer_id: np.ndarray                # (nz, ny, nx) int16; GAP / VOID
    k: np.ndarray                       # (nz, ny, nx) W/mK, 0 in void
    power: np.ndarray                   # (nz, ny, nx) W
    cut: dict = field(default_factory=dict)  # face -> True if the face is a cut
    z_policy: object = None

    @property
    def shape(self):
        return self.k.shape

    @property
    def nx(self):
        return self.k.shape[2]

    @property
    def ny(self):
        return self.k.shape[1]

    @property
    def nz(self):
        return self.k.shape[0]

    @property
    def active(self) -> np.ndarray:
        return self.layer_id != VOID

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(self.active))

    @property
    def x_centers(self):
        return 0.5 * (self.x_edges[1:] + self.x_edges[:-1])

    @property
    def y_centers(self):
        return 0.5 * (self.y_edges[1:] + self.y_edges[:-1])

    @property
    def z_centers(self):
        return 0.5 * (self.z_edges[1:] + self.z_edges[:-1])

    @property
    def dz(self):
        return np.diff(self.z_edges)

    @property
    def region(self):
        return (self.x_edges[0], self.y_edges[0], self.x_edges[-1], self.y_edges[-1])

    def layer_index(self, name: str) -> int:
        try:
            return self.layer_names.index(name)
        except ValueError:
            raise KeyError(f"layer {name!r} not in mesh") from None

    def layer_slabs(self, name: str) -> range:
        """z-slab indices spanned by layer ``name``."""
        lay = self.stack.layer(name)
        zc = self.z_centers
        ks = np.nonzero((zc > lay.z) & (zc < lay.z_top))[0]
        if ks.size == 0:
            raise KeyError(f"layer {name!r} has no slab in this mesh")
        return range(int(ks[0]), int(ks[-1]) + 1)

    def layer_mask(self, name: str) -> np.ndarray:
        return self.layer_id == self.layer_index(name)

    @property
    def total_power(self) -> float:
        return float(math.fsum(self.power.ravel()))

    def with_power(self, power: np.ndarray) -> "Mesh":
        power = np.asarray(power, dtype=float)
        if power.shape != self.shape:
            raise MeshError(f"power shape {power.shape} != mesh shape {self.shape}")
        return replace(self, power=power)


def _count(length_um, pitch, fit):
    n = length_um / pitch
    rn = round(n)
    if rn >= 1 and abs(n - rn) <= 1e-6 * max(1.0, n):
        return rn
    if fit == "pad":
        return math.ceil(n)
    if fit == "crop":
        return max(1, math.floor(n))
    raise MeshError(
        f"footprint {length_um:g} um is not a whole number of {pitch:g} um cells; "
        "use fit='pad' to grow the domain or fit='crop' to shrink it"
    )


def _z_edges(bounds, aspect, pitch):
    edges = [bounds[0]]
    for z0, z1 in zip(bounds[:-1], bounds[1:]):
        n = 1 if aspect is None else max(1, math.ceil((z1 - z0) / (aspect * pitch) - 1e-9))
        edges.extend(z0 + (z1 - z0) * np.arange(1, n + 1) / n)
    edges[-1] = bounds[-1]
    return np.array(edges, dtype=float)


def discretize(
    stack: PackageStack,
    pitch: float,
    z_policy="max_aspect(8)",
    *,
    region=None,
    layers=None,
    fit="error",
    max_voxels=DEFAULT_MAX_VOXELS,
) -> Mesh:
    """Voxelise ``stack`` at in-plane ``pitch`` (um).

    ``region`` (x0, y0, x1, y1 in mm) restricts the plane and ``layers``
    (a sequence of layer names) restricts the z range to the span of those
    layers; side-by-side layers sharing that span come along.  Faces of a
    restricted mesh that lie inside the full package are flagged as cuts.
    """
    if not (pitch > 0):
        raise MeshError(f"pitch must be positive, got {pitch}")
    aspect = parse_z_policy(z_policy)
    fx0, fy0, fx1, fy1 = stack.footprint
    if region is None:
        region = (fx0, fy0, fx1, fy1)
    x0, y0, x1, y1 = (float(v) for v in region)
    tol = 1e-9 * max(1.0, fx1 - fx0, fy1 - fy0)
    if x0 < fx0 - tol or y0 < fy0 - tol or x1 > fx1 + tol or y1 > fy1 + tol or x1 <= x0 or y1 <= y0:
        raise MeshError(f"region {region} outside package footprint {stack.footprint}")
    nx = _count((x1 - x0) * 1e3, pitch, fit)
    ny = _count((y1 - y0) * 1e3, pitch, fit)
    x_edges = x0 + np.arange(nx + 1) * pitch * 1e-3
    y_edges = y0 + np.arange(ny + 1) * pitch * 1e-3

    if layers is None:
        zlo, zhi = 0.0, stack.height
    else:
        sel = [stack.layer(n) for n in layers]
        zlo, zhi = min(s.z for s in sel), max(s.z_top for s in sel)
    involved = [lay for lay in stack.layers if lay.z < zhi - 1e-9 and lay.z_top > zlo + 1e-9]
    bounds = sorted({zlo, zhi, *(min(max(v, zlo), zhi) for lay in involved for v in (lay.z, lay.z_top))})
    merged = [bounds[0]]
    for b in bounds[1:]:
        if b - merged[-1] > 1e-9 * max(1.0, b):
            merged.append(b)
    z_edges = _z_edges(merged, aspect, pitch)
    nz = len(z_edges) - 1

    total = nx * ny * nz
    names = tuple(lay.name for lay in involved)
    xc = 0.5 * (x_edges[1:] + x_edges[:-1])
    yc = 0.5 * (y_edges[1:] + y_edges[:-1])
    zc = 0.5 * (z_edges[1:] + z_edges[:-1])
    layer_id = np.full((nz, ny, nx), VOID, dtype=np.int16)
    kk = np.zeros((nz, ny, nx))
    # z slabs that share the same set of layers share one in-plane pattern
    patterns: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}
    for kz in range(nz):
        present = tuple(li for li, lay in enumerate(involved) if lay.z < zc[kz] < lay.z_top)
        if present not in patterns:
            lid = np.full((ny, nx), VOID, dtype=np.int16)
            kpl = np.zeros((ny, nx))
            if present:
                rects = [involved[li].rect for li in present]
                hx = (xc >= min(r[0] for r in rects)) & (xc <= max(r[2] for r in rects))
                hy = (yc >= min(r[1] for r in rects)) & (yc <= max(r[3] for r in rects))
                hull = hy[:, None] & hx[None, :]
                lid[hull] = GAP
                kpl[hull] = stack.gap_fill.k
                for li in present:
                    lay = involved[li]
                    r = lay.rect
                    inx = (xc > r[0]) & (xc < r[2])
                    iny = (yc > r[1]) & (yc < r[3])
                    m = iny[:, None] & inx[None, :] & (lid == GAP)
                    lid[m] = li
                    kpl[m] = lay.k
            patterns[present] = (lid, kpl)
        layer_id[kz], kk[kz] = patterns[present]

    n_active = int(np.count_nonzero(layer_id != VOID))
    if n_active > max_voxels:
        raise MeshError(f"voxel budget exceeded: {n_active} active voxels > cap {max_voxels}")
    if n_active == 0:
        raise MeshError("mesh has no solid voxels")
    del total

    ftol = 1e-9 * max(1.0, fx1 - fx0)
    cut = {
        "west": x_edges[0] > fx0 + ftol,
        "east": x_edges[-1] < fx1 - ftol,
        "south": y_edges[0] > fy0 + ftol,
        "north": y_edges[-1] < fy1 - ftol,
        "bottom": zlo > 1e-9,
        "top": zhi < stack.height - 1e-9,
    }
    return Mesh(
        stack=stack,
        pitch=float(pitch),
        x_edges=x_edges,
        y_edges=y_edges,
        z_edges=z_edges,
        layer_names=names,
        layer_id=layer_id,
        k=kk,
        power=np.zeros((nz, ny, nx)),
        cut=cut,
        z_policy=z_policy,
    )


def bin_power_plane(mesh: Mesh, pmap: PowerMap) -> np.ndarray:
    """Area-weighted binning of ``pmap`` onto the mesh's in-plane grid."""
    p_mm = pmap.pitch * 1e-3
    src_x = pmap.origin[0] + np.arange(pmap.nx + 1) * p_mm
    src_y = pmap.origin[1] + np.arange(pmap.ny + 1) * p_mm
    wx = overlap_matrix(src_x, mesh.x_edges)
    wy = overlap_matrix(src_y, mesh.y_edges)
    return wy @ pmap.cells @ wx.T


def attach_power(mesh: Mesh, pmap: PowerMap, side: str = "top", replace_region: bool = False) -> Mesh:
    """Add ``pmap`` to the top (or bottom) z-slab of its target layer.

    With ``replace_region`` the power already present in the layer under
    the map footprint is removed first.
    """
    layer = pmap.target_layer
    if layer not in mesh.layer_names:
        raise MeshError(f"power map targets layer {layer!r}, which is not in the mesh")
    try:
        check_fits(pmap, mesh.stack)
    except ValueError as exc:
        raise MeshError(str(exc)) from None
    mx0, my0, mx1, my1 = mesh.region
    px0, py0, px1, py1 = pmap.rect
    tol = 1e-9 * max(1.0, mx1 - mx0)
    if px0 < mx0 - tol or py0 < my0 - tol or px1 > mx1 + tol or py1 > my1 + tol:
        raise MeshError(f"power map footprint {pmap.rect} overflows mesh region {mesh.region}")
    slabs = mesh.layer_slabs(layer)
    kz = slabs[-1] if side == "top" else slabs[0]
    plane = bin_power_plane(mesh, pmap)
    target = total_power(pmap)
    got = math.fsum(plane.ravel())
    if target > 0 and abs(got - target) > 1e-12 * target:
        plane *= target / got
    power = mesh.power.copy()
    if replace_region:
        ones = PowerMap(np.ones((pmap.ny, pmap.nx)), pmap.pitch, pmap.origin, layer)
        cover = np.clip(bin_power_plane(mesh, ones) / ((mesh.pitch / pmap.pitch) ** 2), 0, 1)
        lid = mesh.layer_index(layer)
        for ks in slabs:
            power[ks] *= np.where(mesh.layer_id[ks] == lid, 1.0 - cover, 1.0)
    power[kz] += plane
    return mesh.with_power(power)


# --------------------------------------------------------------------------
# Assembly

@dataclass(eq=False)
class LinearSystem:
    """``G @ theta = q`` with ``theta`` the rise over ``t_ref`` (K).

    ``boundary`` maps a face name to ``(voxel ids, conductance W/K,
    fixed temperature degC)``; convective faces carry the ambient.
    """

    G: sp.csr_matrix
    q: np.ndarray
    t_ref: float
    mesh: Mesh
    index: np.ndarray
    boundary: dict
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.G.shape[0]

    @property
    def boundary_diag(self) -> np.ndarray:
        d = np.zeros(self.n)
        for ids, g, _ in self.boundary.values():
            np.add.at(d, ids, g)
        return d

    def rhs_for(self, power: np.ndarray) -> np.ndarray:
        q = np.asarray(power, dtype=float)[self.mesh.active].copy()
        for ids, g, temp in self.boundary.values():
            np.add.at(q, ids, g * (temp - self.t_ref))
        return q

    def with_power(self, mesh: Mesh) -> "LinearSystem":
        """Same matrix (and preconditioner cache), new sources."""
        if mesh.shape != self.mesh.shape or not np.array_equal(mesh.layer_id, self.mesh.layer_id):
            raise MeshError("mesh geometry differs from the assembled one")
        return LinearSystem(self.G, self.rhs_for(mesh.power), self.t_ref, mesh, self.index,
                            self.boundary, self._cache)


def _series(g1, g2):
    return g1 * g2 / (g1 + g2)


def assemble(mesh: Mesh, top=None, bottom=None, dirichlet=None) -> LinearSystem:
    """Seven-point conductance matrix with convective and fixed-T faces.

    ``top`` / ``bottom`` override the stack's boundary conditions.
    ``dirichlet`` maps cut-face names to temperature grids in degC:
    west/east ``(nz, ny)``, south/north ``(nz, nx)``, bottom/top ``(ny, nx)``.
    Convective faces are only applied where the face is not a cut.
    """
    top = mesh.stack.top if top is None else top
    bottom = mesh.stack.bottom if bottom is None else bottom
    dirichlet = dirichlet or {}
    active = mesh.active
    index = np.full(mesh.shape, -1, dtype=np.int64)
    index[active] = np.arange(int(active.sum()))
    n = int(active.sum())

    k = mesh.k
    dx = mesh.pitch * 1e-6
    dy = dx
    dz = mesh.dz * 1e-6
    rows, cols, vals = [], [], []
    diag = np.zeros(n)

    def couple(a_idx, b_idx, g):
        m = (a_idx >= 0) & (b_idx >= 0)
        a, b, g = a_idx[m], b_idx[m], g[m]
        rows.extend((a, b))
        cols.extend((b, a))
        vals.extend((-g, -g))
        np.add.at(diag, a, g)
        np.add.at(diag, b, g)

    with np.errstate(divide="ignore", invalid="ignore"):
        # x faces: half-cell conductance k * (dy dz) / (dx / 2)
        area = dy * dz[:, None, None]
        g1 = k[:, :, :-1] * area / (dx / 2)
        g2 = k[:, :, 1:] * area / (dx / 2)
        couple(index[:, :, :-1].ravel(), index[:, :, 1:].ravel(), _series(g1, g2).ravel())
        g1 = k[:, :-1, :] * (dx * dz[:, None, None]) / (dy / 2)
        g2 = k[:, 1:, :] * (dx * dz[:, None, None]) / (dy / 2)
        couple(index[:, :-1, :].ravel(), index[:, 1:, :].ravel(), _series(g1, g2).ravel())
        g1 = k[:-1] * (dx * dy) / (dz[:-1, None, None] / 2)
        g2 = k[1:] * (dx * dy) / (dz[1:, None, None] / 2)
        couple(index[:-1].ravel(), index[1:].ravel(), _series(g1, g2).ravel())

    boundary = {}
    t_ref = top.ambient

    def fixed(face, ids, g, temp):
        m = (ids >= 0) & (g > 0)
        ids, g = ids[m], g[m]
        temp = np.broadcast_to(np.asarray(temp, dtype=float), m.shape)[m]
        boundary[face] = (ids, g, temp.copy())
        np.add.at(diag, ids, g)

    for face, bc, kz in (("top", top, -1), ("bottom", bottom, 0)):
        ids = index[kz]
        half = dz[kz] / 2
        if mesh.cut[face]:
            if face in dirichlet:
                g = k[kz] * dx * dy / half
                fixed(face, ids.ravel(), g.ravel(), np.asarray(dirichlet[face]).ravel())
        elif bc.htc > 0:
            a = dx * dy
            with np.errstate(divide="ignore"):
                g = 1.0 / (1.0 / (bc.htc * a) + half / (np.where(k[kz] > 0, k[kz], np.inf) * a))
            fixed(face, ids.ravel(), g.ravel(), bc.ambient)

    lateral = {
        "west": (np.s_[:, :, 0], dy * dz[:, None]),
        "east": (np.s_[:, :, -1], dy * dz[:, None]),
        "south": (np.s_[:, 0, :], dx * dz[:, None]),
        "north": (np.s_[:, -1, :], dx * dz[:, None]),
    }
    for face, (sl, area) in lateral.items():
        if mesh.cut[face] and face in dirichlet:
            g = k[sl] * area / ((dx if face in ("west", "east") else dy) / 2)
            vals_t = np.asarray(dirichlet[face], dtype=float)
            fixed(face, index[sl].ravel(), g.ravel(), vals_t.ravel())

    unknown = set(dirichlet) - set(FACES)
    if unknown:
        raise MeshError(f"unknown boundary faces {sorted(unknown)}")

    r = np.concatenate(rows + [np.arange(n)])
    c = np.concatenate(cols + [np.arange(n)])
    v = np.concatenate(vals + [diag])
    G = sp.csr_matrix((v, (r, c)), shape=(n, n))
    G.sum_duplicates()
    G.sort_indices()
    system = LinearSystem(G, np.zeros(n), t_ref, mesh, index, boundary)
    system.q = system.rhs_for(mesh.power)
    return system


# --------------------------------------------------------------------------
# Solve

@dataclass(eq=False)
class TemperatureField:
    values: np.ndarray          # (nz, ny, nx) degC, NaN in void
    mesh: Mesh
    iterations: int
    residual: float
    system: LinearSystem | None = None
    elapsed: float = 0.0
    preconditioner: str = ""

    def layer_values(self, name: str) -> np.ndarray:
        """Temperatures of voxels belonging to layer ``name`` (flat)."""
        return self.values[self.mesh.layer_mask(name)]

    def layer_slice(self, name: str, slab: str = "top") -> np.ndarray:
        """(ny, nx) plane through the layer's top (or bottom) slab.

        Voxels of that slab outside the layer's footprint are NaN.
        """
        slabs = self.mesh.layer_slabs(name)
        kz = slabs[-1] if slab == "top" else slabs[0]
        plane = self.values[kz].copy()
        plane[self.mesh.layer_id[kz] != self.mesh.layer_index(name)] = np.nan
        return plane

    @property
    def t_max(self) -> float:
        return float(np.nanmax(self.values))

    @property
    def t_min(self) -> float:
        return float(np.nanmin(self.values))


def _check_escape(system: LinearSystem):
    bdiag = system.boundary_diag
    if not np.any(bdiag > 0):
        raise SingularSystemError("no heat escape path: every boundary is adiabatic")
    ncomp, labels = csgraph.connected_components(system.G, directed=False)
    if ncomp > 1:
        grounded = np.zeros(ncomp, dtype=bool)
        grounded[np.unique(labels[bdiag > 0])] = True
        if not grounded.all():
            raise SingularSystemError(
                f"no heat escape path for {int((~grounded).sum())} isolated region(s)"
            )


def _preconditioner(system: LinearSystem, kind: str):
    if kind in system._cache:
        return system._cache[kind]
    if kind == "jacobi":
        inv = 1.0 / system.G.diagonal()
        apply = lambda r: inv * r
    elif kind == "amg":
        import pyamg

        # classical AMG copes with the thin-layer anisotropy far better
        # than smoothed aggregation here
        ml = pyamg.ruge_stuben_solver(system.G, max_coarse=500)
        apply = ml.aspreconditioner(cycle="V").matvec
    else:
        raise SolverError(f"unknown preconditioner {kind!r}")
    system._cache[kind] = apply
    return apply


def _dot_ordered(a, b):
    # pairwise summation in a fixed order, independent of BLAS threading
    return float(np.add.reduce(a * b))


def pcg(A, b, apply_m, x0=None, tol=1e-8, max_iter=10000, deterministic=True):
    """Preconditioned conjugate gradient on the relative residual ||b - Ax|| / ||b||.

    Returns ``(x, iterations, relative residual)``; raises ConvergenceError
    with the best iterate on failure.
    """
    dot = _dot_ordered if deterministic else (lambda u, v: float(u @ v))
    x = np.zeros_like(b) if x0 is None else x0.copy()
    bnorm = math.sqrt(dot(b, b))
    if bnorm == 0.0:
        return np.zeros_like(b), 0, 0.0
    r = b - A @ x
    rel = math.sqrt(dot(r, r)) / bnorm
    best, best_rel = x.copy(), rel
    it = 0
    while rel > tol and it < max_iter:
        z = apply_m(r)
        p = z.copy()
        rz = dot(r, z)
        stall = 0
        while it < max_iter:
            Ap = A @ p
            pAp = dot(p, Ap)
            if pAp <= 0:
                raise SingularSystemError("matrix is not positive definite")
            alpha = rz / pAp
            x += alpha * p
            r -= alpha * Ap
            it += 1
            rel = math.sqrt(dot(r, r)) / bnorm
            if rel < best_rel:
                best, best_rel, stall = x.copy(), rel, 0
            else:
                stall += 1
            if rel <= tol or stall > 200:
                break
            z = apply_m(r)
            rz_new = dot(r, z)
            p = z + (rz_new / rz) * p
            rz = rz_new
        # confirm with the true residual; restart if recurrence drifted
        r = b - A @ x
        rel = math.sqrt(dot(r, r)) / bnorm
        if stall > 200:
            break
    if rel > tol:
        raise ConvergenceError(
            f"PCG did not converge: relative residual {best_rel:.3e} after {it} iterations",
            best=best, residual=best_rel, iterations=it,
        )
    return x, it, rel


def solve(system: LinearSystem, tol=1e-8, max_iter=20000, preconditioner="auto",
          deterministic=True, x0=None) -> TemperatureField:
    """Solve for the steady temperature field."""
    _check_escape(system)
    if preconditioner == "auto":
        preconditioner = "amg" if system.n > 20000 else "jacobi"
    t0 = time.perf_counter()
    apply_m = _preconditioner(system, preconditioner)
    try:
        theta, it, rel = pcg(system.G, system.q, apply_m, x0=x0, tol=tol, max_iter=max_iter,
                             deterministic=deterministic)
    except ConvergenceError as exc:
        if exc.best is not None:
            exc.best = _to_field(system, exc.best, exc.iterations, exc.residual, preconditioner, 0.0)
        raise
    return _to_field(system, theta, it, rel, preconditioner, time.perf_counter() - t0)


def _to_field(system, theta, it, rel, pre, elapsed):
    values = np.full(system.mesh.shape, np.nan)
    values[system.mesh.active] = theta + system.t_ref
    return TemperatureField(values, system.mesh, it, rel, system, elapsed, pre)


@dataclass(frozen=True)
class EnergyBalance:
    p_in: float
    q_top: float
    q_bottom: float
    q_cut: float
    residual: float

    @property
    def top_fraction(self) -> float:
        out = self.q_top + self.q_bottom + self.q_cut
        return self.q_top / out if out else 0.0


def boundary_flux(field_: TemperatureField, face: str) -> float:
    """Heat leaving through ``face`` in W (positive outward)."""
    system = field_.system
    if face not in system.boundary:
        return 0.0
    ids, g, temp = system.boundary[face]
    t = field_.values[system.mesh.active][ids]
    return float(math.fsum(g * (t - temp)))


def energy_balance(field_: TemperatureField, system: LinearSystem | None = None) -> EnergyBalance:
    """|P_in - Q_out| / P_in together with the top / bottom split."""
    system = field_.system if system is None else system
    if system is not field_.system:
        field_ = replace(field_, system=system)
    p_in = field_.mesh.total_power
    q_top = boundary_flux(field_, "top") if not system.mesh.cut["top"] else 0.0
    q_bot = boundary_flux(field_, "bottom") if not system.mesh.cut["bottom"] else 0.0
    q_cut = sum(
        boundary_flux(field_, f) for f in FACES
        if f in system.boundary and system.mesh.cut[f]
    )
    if p_in == 0:
        return EnergyBalance(0.0, q_top, q_bot, q_cut, 0.0)
    return EnergyBalance(p_in, q_top, q_bot, q_cut, abs(p_in - (q_top + q_bot + q_cut)) / p_in)


def surface_temperature(field_: TemperatureField, face: str) -> np.ndarray:
    """Reconstructed temperature on a convective top/bottom face, degC."""
    system = field_.system
    ids, g, temp = system.boundary[face]
    bc = system.mesh.stack.top if face == "top" else system.mesh.stack.bottom
    area = (system.mesh.pitch * 1e-6) ** 2
    t = field_.values[system.mesh.active][ids]
    return temp + g * (t - temp) / (bc.htc * area)
