"""Meshes: representative cells, macroscopic domains and tiled samples.

All meshes are 2D with 4-node quadrilaterals (3-node triangles are accepted
on import).  Cells are built on the unit square ]-1/2,1/2[^2 as structured
grids whose lines are snapped exactly onto channel-band edges, so region
measures are exact.  Curved channels are produced by an area-preserving
sinusoidal shear of the whole grid, which keeps the periodic pairing exact.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    GeometryError,
    PairingError,
    PartitionError,
    ResolutionError,
    TilingError,
)

MATRIX_REGION = 3
CHANNEL_REGIONS = (1, 2)

_EDGE_LOCAL = {4: ((0, 1), (1, 2), (2, 3), (3, 0)), 3: ((0, 1), (1, 2), (2, 0))}


class Mesh:
    """Unstructured 2D mesh with integer region labels and tagged boundaries.

    nodes: (nn, 2) float coordinates [m]
    elems: (ne, 3|4) int connectivity, counter-clockwise winding
    region: (ne,) int label per element
    boundary_tags: dict name -> (nf, 2) facet node pairs
    """

    def __init__(self, nodes, elems, region=None, boundary_tags=None):
        self.nodes = np.ascontiguousarray(nodes, dtype=float)
        self.elems = np.ascontiguousarray(elems, dtype=np.int64)
        if region is None:
            region = np.zeros(len(self.elems), dtype=np.int64)
        self.region = np.asarray(region, dtype=np.int64)
        self.boundary_tags = dict(boundary_tags or {})
        self._edge_map = None

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elems(self):
        return len(self.elems)

    @property
    def nodes_per_elem(self):
        return self.elems.shape[1]

    def element_areas(self):
        """Signed polygon areas; positive for admissible CCW elements."""
        x = self.nodes[self.elems, 0]
        y = self.nodes[self.elems, 1]
        xs = np.roll(x, -1, axis=1)
        ys = np.roll(y, -1, axis=1)
        return 0.5 * np.sum(x * ys - xs * y, axis=1)

    def edge_map(self):
        """Map of sorted node pair -> list of (element, local edge index)."""
        if self._edge_map is None:
            em = {}
            for e, conn in enumerate(self.elems):
                for le, (a, b) in enumerate(_EDGE_LOCAL[len(conn)]):
                    key = (min(conn[a], conn[b]), max(conn[a], conn[b]))
                    em.setdefault(key, []).append((e, le))
            self._edge_map = em
        return self._edge_map

    def boundary_facets(self):
        """All facets adjacent to exactly one element, as (nf, 2) node pairs."""
        facets = []
        for e, le_list in self.edge_map().items():
            if len(le_list) == 1:
                el, le = le_list[0]
                conn = self.elems[el]
                a, b = _EDGE_LOCAL[len(conn)][le]
                facets.append((conn[a], conn[b]))
        return np.array(sorted((min(f), max(f)) for f in facets), dtype=np.int64)

    def validate(self):
        if self.elems.min(initial=0) < 0 or self.elems.max(initial=-1) >= self.n_nodes:
            raise GeometryError("element connectivity indices out of range")
        areas = self.element_areas()
        if np.any(areas <= 0):
            bad = int(np.argmin(areas))
            raise GeometryError(f"non-positive area in element {bad}: {areas[bad]:g}")
        bset = {tuple(f) for f in self.boundary_facets()}
        seen = set()
        for tag, facets in self.boundary_tags.items():
            for f in np.asarray(facets):
                key = (min(f), max(f))
                if key not in bset:
                    raise GeometryError(f"tag '{tag}' contains non-boundary facet {key}")
                if key in seen:
                    raise GeometryError(f"facet {key} appears in more than one tag")
                seen.add(key)
        return self

    def copy(self):
        return Mesh(
            self.nodes.copy(),
            self.elems.copy(),
            self.region.copy(),
            {k: np.array(v) for k, v in self.boundary_tags.items()},
        )

    def total_area(self):
        return float(self.element_areas().sum())

    def region_measures(self):
        areas = self.element_areas()
        return {int(r): float(areas[self.region == r].sum()) for r in np.unique(self.region)}


@dataclass
class Interface:
    """Facets of one channel-matrix interface with normals out of the matrix."""

    facets: np.ndarray  # (nf, 2) node pairs, ordered along the matrix winding
    normals: np.ndarray  # (nf, 2) unit, pointing out of Y3 into the channel
    lengths: np.ndarray  # (nf,)
    matrix_elems: np.ndarray  # (nf,) adjacent Y3 element
    channel_elems: np.ndarray  # (nf,) adjacent channel element

    def node_set(self):
        return np.unique(self.facets)


@dataclass
class CellDomain:
    """Periodic representative cell with channel/matrix partition."""

    mesh: Mesh
    master_map: np.ndarray  # (nn,) periodic slave -> master (identity elsewhere)
    pairs: dict  # {'x': [(m,s)...], 'y': [...], 'corners': (master, [slaves])}
    interfaces: dict = field(default_factory=dict)  # region -> Interface
    volume: float = 1.0

    def validate(self):
        self.mesh.validate()
        meas = self.mesh.region_measures()
        total = sum(meas.values())
        if abs(total - self.volume) > 1e-12 * max(1.0, abs(self.volume)):
            raise GeometryError("region measures do not sum to the cell volume")
        mm = self.master_map
        slaves = np.nonzero(mm != np.arange(len(mm)))[0]
        if np.any(mm[mm[slaves]] != mm[slaves]):
            raise PairingError("periodic master map is not fully resolved")
        for alpha in CHANNEL_REGIONS:
            if not np.any(self.mesh.region == alpha):
                continue
            cn = np.unique(self.mesh.elems[self.mesh.region == alpha])
            x = self.mesh.nodes[cn, 0]
            lo, hi = self.mesh.nodes[:, 0].min(), self.mesh.nodes[:, 0].max()
            if not (np.any(np.isclose(x, lo)) and np.any(np.isclose(x, hi))):
                raise GeometryError(f"channel {alpha} does not reach the periodic boundary")
        return self

    def region_measures(self):
        return self.mesh.region_measures()


@dataclass
class MacroDomain:
    """Macroscopic sample mesh with tagged edges and micro sample points."""

    mesh: Mesh
    sample_points: np.ndarray  # (ns, 2) element centroids carrying a micro state
    sample_elems: np.ndarray  # (ns,) owning element of each sample point


def _snap_grid(n, edges):
    """Uniform n+1 point grid on [-1/2, 1/2] with interior lines moved onto edges."""
    g = np.linspace(-0.5, 0.5, n + 1)
    taken = {}
    for c in edges:
        idx = int(np.argmin(np.abs(g[1:-1] - c))) + 1
        if idx in taken:
            raise ResolutionError(
                f"mesh density {n} too coarse: band edges {taken[idx]:g} and {c:g} "
                "snap to the same grid line"
            )
        taken[idx] = c
    for idx, c in taken.items():
        g[idx] = c
    if np.any(np.diff(g) <= 0):
        raise ResolutionError(f"mesh density {n} too coarse for the requested bands")
    return g


def _structured_quads(gx, gy):
    nx, ny = len(gx) - 1, len(gy) - 1
    xx, yy = np.meshgrid(gx, gy, indexing="ij")
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    def nid(i, j):
        return i * (ny + 1) + j

    elems = np.empty((nx * ny, 4), dtype=np.int64)
    k = 0
    for i in range(nx):
        for j in range(ny):
            elems[k] = (nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1))
            k += 1
    return nodes, elems, nx, ny


def build_unit_cell(
    style="straight",
    widths=(0.2, 0.2),
    centers=(-0.25, 0.25),
    curvature=0.1,
    resolution=32,
):
    """Build the representative cell: two channel bands in a porous matrix.

    The bands run along the first axis and are exact (grid lines snapped to
    band edges).  ``style='curved'`` shears the grid by
    ``curvature * sin(2 pi y1)``, keeping areas and periodicity exact.
    """
    widths = tuple(float(w) for w in widths)
    centers = tuple(float(c) for c in centers)
    if len(widths) != 2 or len(centers) != 2:
        raise GeometryError("exactly two channel bands are expected")
    for w in widths:
        if not 0.0 < w < 1.0:
            raise GeometryError(f"channel width fraction {w:g} outside (0, 1)")
    bands = sorted(zip(centers, widths))
    lo0, hi0 = bands[0][0] - bands[0][1] / 2, bands[0][0] + bands[0][1] / 2
    lo1, hi1 = bands[1][0] - bands[1][1] / 2, bands[1][0] + bands[1][1] / 2
    if hi0 > lo1:
        raise GeometryError("channel bands overlap")
    if lo0 <= -0.5 or hi1 >= 0.5:
        raise GeometryError("channel bands reach the top/bottom cell faces")
    if style not in ("straight", "curved"):
        raise GeometryError(f"unknown channel style '{style}'")

    n = int(resolution)
    gx = np.linspace(-0.5, 0.5, n + 1)
    gy = _snap_grid(n, [lo0, hi0, lo1, hi1])
    nodes, elems, nx, ny = _structured_quads(gx, gy)

    # label elements by row centre; bands listed in original channel order
    yc = 0.5 * (gy[:-1] + gy[1:])
    region = np.full(nx * ny, MATRIX_REGION, dtype=np.int64)
    row_region = np.full(ny, MATRIX_REGION, dtype=np.int64)
    for alpha, (c, w) in enumerate(zip(centers, widths), start=1):
        inside = (yc > c - w / 2) & (yc < c + w / 2)
        if inside.sum() < 2:
            raise ResolutionError(
                f"channel {alpha} resolved by {int(inside.sum())} element layers (< 2)"
            )
        row_region[inside] = alpha
    region = np.tile(row_region, nx)

    if style == "curved" and curvature != 0.0:
        nodes = nodes.copy()
        nodes[:, 1] += curvature * np.sin(2.0 * np.pi * nodes[:, 0])

    mesh = Mesh(nodes, elems, region)

    # periodic pairing from the grid structure (exact for sheared grids too)
    def nid(i, j):
        return i * (ny + 1) + j

    pairs_x = [(nid(0, j), nid(nx, j)) for j in range(1, ny)]
    pairs_y = [(nid(i, 0), nid(i, ny)) for i in range(1, nx)]
    corner_master = nid(0, 0)
    corner_slaves = [nid(nx, 0), nid(0, ny), nid(nx, ny)]
    master_map = np.arange(mesh.n_nodes, dtype=np.int64)
    for m, s in pairs_x + pairs_y:
        master_map[s] = m
    for s in corner_slaves:
        master_map[s] = corner_master

    cell = CellDomain(
        mesh=mesh,
        master_map=master_map,
        pairs={"x": pairs_x, "y": pairs_y, "corners": (corner_master, corner_slaves)},
        volume=mesh.total_area(),
    )
    cell.interfaces = extract_interfaces(cell)
    return cell.validate()


def extract_interfaces(cell):
    """Facet sets between each channel and the matrix, with outward normals.

    Normals point out of the matrix region into the channel.  A facet
    adjacent to two different channels is a partition error.
    """
    mesh = cell.mesh if isinstance(cell, CellDomain) else cell
    per_channel = {alpha: [] for alpha in CHANNEL_REGIONS}
    for key, adj in mesh.edge_map().items():
        if len(adj) != 2:
            continue
        (e0, le0), (e1, le1) = adj
        r0, r1 = mesh.region[e0], mesh.region[e1]
        if r0 == r1:
            continue
        regs = {int(r0), int(r1)}
        if MATRIX_REGION not in regs:
            raise PartitionError(f"facet {key} separates two channel regions {regs}")
        alpha = (regs - {MATRIX_REGION}).pop()
        if int(r0) == MATRIX_REGION:
            emat, lemat, echan = e0, le0, e1
        else:
            emat, lemat, echan = e1, le1, e0
        conn = mesh.elems[emat]
        a, b = _EDGE_LOCAL[len(conn)][lemat]
        n1, n2 = conn[a], conn[b]
        t = mesh.nodes[n2] - mesh.nodes[n1]
        length = float(np.hypot(t[0], t[1]))
        normal = np.array([t[1], -t[0]]) / length
        per_channel[alpha].append(((n1, n2), normal, length, emat, echan))

    out = {}
    for alpha, items in per_channel.items():
        if not items:
            if not np.any(mesh.region == alpha):
                warnings.warn(f"channel region {alpha} is empty; empty interface set")
            out[alpha] = Interface(
                facets=np.zeros((0, 2), dtype=np.int64),
                normals=np.zeros((0, 2)),
                lengths=np.zeros(0),
                matrix_elems=np.zeros(0, dtype=np.int64),
                channel_elems=np.zeros(0, dtype=np.int64),
            )
            continue
        items.sort(key=lambda it: (it[0][0], it[0][1]))
        out[alpha] = Interface(
            facets=np.array([it[0] for it in items], dtype=np.int64),
            normals=np.array([it[1] for it in items]),
            lengths=np.array([it[2] for it in items]),
            matrix_elems=np.array([it[3] for it in items], dtype=np.int64),
            channel_elems=np.array([it[4] for it in items], dtype=np.int64),
        )
    return out


def find_periodic_pairs(mesh, tol=1e-8):
    """Pair boundary nodes of a rectangular mesh across opposite faces.

    Masters live on the min-coordinate faces.  All corner nodes chain to a
    single master.  Any boundary node without a partner within ``tol`` is a
    pairing error.
    """
    bnodes = np.unique(mesh.boundary_facets())
    xy = mesh.nodes[bnodes]
    lo = mesh.nodes.min(axis=0)
    hi = mesh.nodes.max(axis=0)

    on_face = {}
    for axis in range(2):
        on_face[(axis, 0)] = bnodes[np.abs(xy[:, axis] - lo[axis]) <= tol]
        on_face[(axis, 1)] = bnodes[np.abs(xy[:, axis] - hi[axis]) <= tol]

    corner_set = set()
    for sx in (0, 1):
        for sy in (0, 1):
            corner_set |= set(on_face[(0, sx)]) & set(on_face[(1, sy)])
    corners = sorted(corner_set, key=lambda n: tuple(mesh.nodes[n]))

    pairs = {"x": [], "y": []}
    for axis, name in ((0, "x"), (1, "y")):
        other = 1 - axis
        low = [n for n in on_face[(axis, 0)] if n not in corner_set]
        high = [n for n in on_face[(axis, 1)] if n not in corner_set]
        low.sort(key=lambda n: mesh.nodes[n, other])
        high.sort(key=lambda n: mesh.nodes[n, other])
        if len(low) != len(high):
            extra = (set(low) ^ set(high)) or set(low) | set(high)
            raise PairingError(
                f"unequal node counts on opposite {name}-faces", node=sorted(extra)[0]
            )
        for m, s in zip(low, high):
            if abs(mesh.nodes[m, other] - mesh.nodes[s, other]) > tol:
                raise PairingError(
                    f"boundary node {s} has no periodic partner within {tol:g}", node=int(s)
                )
            pairs[name].append((int(m), int(s)))

    master_map = np.arange(mesh.n_nodes, dtype=np.int64)
    for m, s in pairs["x"] + pairs["y"]:
        master_map[s] = m
    if corners:
        cm = corners[0]
        for s in corners[1:]:
            master_map[s] = cm
        pairs["corners"] = (int(cm), [int(s) for s in corners[1:]])
    else:
        pairs["corners"] = (None, [])
    return pairs, master_map


def tile_cell(cell, nx, ny, scale):
    """Tile nx x ny copies of the cell at physical size ``scale`` per cell.

    Duplicate nodes on shared faces are merged; copies cover
    [0, nx*scale] x [0, ny*scale] up to the shear of curved cells.
    """
    if nx < 1 or ny < 1:
        raise GeometryError("tiling counts must be >= 1")
    if scale <= 0:
        raise GeometryError("tiling scale must be positive")
    mesh = cell.mesh
    nn = mesh.n_nodes
    all_nodes = []
    all_elems = []
    all_region = []
    k = 0
    for i in range(nx):
        for j in range(ny):
            offs = np.array([(i + 0.5) * scale, (j + 0.5) * scale])
            all_nodes.append(mesh.nodes * scale + offs)
            all_elems.append(mesh.elems + k * nn)
            all_region.append(mesh.region)
            k += 1
    nodes = np.vstack(all_nodes)
    elems = np.vstack(all_elems)
    region = np.concatenate(all_region)

    tol = 1e-8 * scale
    tree = cKDTree(nodes)
    root = np.arange(len(nodes))

    def find(a):
        while root[a] != a:
            root[a] = root[root[a]]
            a = root[a]
        return a

    for a, b in sorted(tree.query_pairs(tol)):
        ra, rb = find(a), find(b)
        if ra != rb:
            root[max(ra, rb)] = min(ra, rb)
    for a in range(len(nodes)):
        root[a] = find(a)

    keep = np.nonzero(root == np.arange(len(nodes)))[0]
    new_id = np.full(len(nodes), -1, dtype=np.int64)
    new_id[keep] = np.arange(len(keep))
    nodes = nodes[keep]
    elems = new_id[root[elems]]

    tiled = Mesh(nodes, elems, region)

    # unmatched interior traces leave spurious boundary facets inside the box
    lo = nodes.min(axis=0)
    hi = nodes.max(axis=0)
    bfacets = tiled.boundary_facets()
    for f in bfacets:
        mid = 0.5 * (nodes[f[0]] + nodes[f[1]])
        inner = np.all(mid > lo + scale * 0.25) and np.all(mid < hi - scale * 0.25)
        if inner:
            raise TilingError(f"interior facet {tuple(f)} left open after node merge")

    tags = {"left": [], "right": [], "bottom": [], "top": []}
    for f in bfacets:
        p, q = nodes[f[0]], nodes[f[1]]
        if abs(p[0] - 0.0) <= tol and abs(q[0] - 0.0) <= tol:
            tags["left"].append(f)
        elif abs(p[0] - nx * scale) <= tol and abs(q[0] - nx * scale) <= tol:
            tags["right"].append(f)
        elif abs(p[1] - 0.0) <= tol and abs(q[1] - 0.0) <= tol:
            tags["bottom"].append(f)
        elif abs(p[1] - ny * scale) <= tol and abs(q[1] - ny * scale) <= tol:
            tags["top"].append(f)
    tiled.boundary_tags = {k: np.array(v, dtype=np.int64) for k, v in tags.items() if v}
    return tiled.validate()


def macro_rectangle(lx=0.2, ly=0.1, nx=8, ny=4):
    """Rectangular macroscopic sample with tagged edges and per-element samples."""
    gx = np.linspace(0.0, lx, nx + 1)
    gy = np.linspace(0.0, ly, ny + 1)
    nodes, elems, _, _ = _structured_quads(gx, gy)
    mesh = Mesh(nodes, elems)
    tol = 1e-12 * max(lx, ly)
    tags = {"left": [], "right": [], "bottom": [], "top": []}
    for f in mesh.boundary_facets():
        p, q = nodes[f[0]], nodes[f[1]]
        if abs(p[0]) <= tol and abs(q[0]) <= tol:
            tags["left"].append(f)
        elif abs(p[0] - lx) <= tol and abs(q[0] - lx) <= tol:
            tags["right"].append(f)
        elif abs(p[1]) <= tol and abs(q[1]) <= tol:
            tags["bottom"].append(f)
        elif abs(p[1] - ly) <= tol and abs(q[1] - ly) <= tol:
            tags["top"].append(f)
    mesh.boundary_tags = {k: np.array(v, dtype=np.int64) for k, v in tags.items()}
    mesh.validate()
    centroids = mesh.nodes[mesh.elems].mean(axis=1)
    return MacroDomain(
        mesh=mesh,
        sample_points=centroids,
        sample_elems=np.arange(mesh.n_elems, dtype=np.int64),
    )


def region_components(mesh, region_label):
    """Number of connected components of one region (adjacency via shared facets)."""
    elems = np.nonzero(mesh.region == region_label)[0]
    if len(elems) == 0:
        return 0
    idx = {int(e): i for i, e in enumerate(elems)}
    root = list(range(len(elems)))

    def find(a):
        while root[a] != a:
            root[a] = root[root[a]]
            a = root[a]
        return a

    for adj in mesh.edge_map().values():
        if len(adj) == 2:
            e0, e1 = adj[0][0], adj[1][0]
            if e0 in idx and e1 in idx:
                r0, r1 = find(idx[e0]), find(idx[e1])
                if r0 != r1:
                    root[max(r0, r1)] = min(r0, r1)
    return len({find(i) for i in range(len(elems))})
