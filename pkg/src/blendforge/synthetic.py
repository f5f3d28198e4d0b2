"""Procedural meshes and pose generators for tests, demos, and benchmarks.

Stand-ins for scanned datasets: a segmented tube that bends at a joint, a
four-limb cross sheet with distinguishable arms, and spheres with smooth
radial bumps. Pose generators are plain linear-blend transforms so ground
truth stays available.
"""
from __future__ import annotations

import numpy as np

from .mesh import TriMesh


def rot_axis(axis, angle: float) -> np.ndarray:
    """Rotation matrix about a (unit) axis by angle, Rodrigues form."""
    a = np.asarray(axis, dtype=np.float64)
    a = a / np.linalg.norm(a)
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)


def tetrahedron(edge: float = 1.0) -> TriMesh:
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    v *= edge / (2.0 * np.sqrt(2.0))
    f = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return TriMesh(v, f)


def icosahedron() -> TriMesh:
    phi = (1 + np.sqrt(5)) / 2
    v = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=float,
    )
    v /= np.linalg.norm(v[0])
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ]
    )
    return TriMesh(v, f)


def icosphere(subdivisions: int = 2) -> TriMesh:
    mesh = icosahedron()
    v = mesh.vertices
    f = mesh.faces
    for _ in range(subdivisions):
        cache = {}
        verts = list(v)

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                p = verts[i] + verts[j]
                verts.append(p / np.linalg.norm(p))
                cache[key] = len(verts) - 1
            return cache[key]

        newf = []
        for a, b, c in f:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            newf += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        v = np.array(verts)
        v /= np.linalg.norm(v, axis=1)[:, None]
        f = np.array(newf)
    return TriMesh(v, f)


def grid_sheet(nx: int, ny: int, width: float = 1.0, height: float = 1.0) -> TriMesh:
    xs = np.linspace(0, width, nx)
    ys = np.linspace(0, height, ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    v = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(nx * ny)])
    faces = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a = i * ny + j
            b = (i + 1) * ny + j
            faces += [[a, b, a + 1], [b, b + 1, a + 1]]
    return TriMesh(v, np.array(faces))


def tube(length: float = 2.0, radius: float = 0.25, n_rings: int = 40,
         n_seg: int = 12, caps: bool = True) -> TriMesh:
    """Capped cylinder along +x, rings evenly spaced."""
    xs = np.linspace(0.0, length, n_rings)
    ang = np.arange(n_seg) * 2 * np.pi / n_seg
    verts = []
    for x in xs:
        for a in ang:
            verts.append([x, radius * np.cos(a), radius * np.sin(a)])
    faces = []
    for i in range(n_rings - 1):
        for s in range(n_seg):
            a = i * n_seg + s
            b = i * n_seg + (s + 1) % n_seg
            c = (i + 1) * n_seg + s
            d = (i + 1) * n_seg + (s + 1) % n_seg
            faces += [[a, b, c], [b, d, c]]
    if caps:
        c0 = len(verts)
        verts.append([0.0, 0.0, 0.0])
        c1 = len(verts)
        verts.append([length, 0.0, 0.0])
        last = (n_rings - 1) * n_seg
        for s in range(n_seg):
            faces.append([c0, (s + 1) % n_seg, s])
            faces.append([c1, last + s, last + (s + 1) % n_seg])
    return TriMesh(np.array(verts), np.array(faces))


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def bend_weights(mesh: TriMesh, hinge_x: float, band: float) -> np.ndarray:
    """Two-bone partition of unity along x: [before hinge, after hinge]."""
    s = (mesh.vertices[:, 0] - (hinge_x - band / 2)) / max(band, 1e-12)
    w1 = _smoothstep(s)
    return np.column_stack([1.0 - w1, w1])


def lbs_pose(vertices: np.ndarray, weights: np.ndarray, rotations, pivots,
             translations=None) -> np.ndarray:
    """Blend per-bone rigid motions: sum_b w_b (R_b (v - p_b) + p_b + t_b)."""
    out = np.zeros_like(vertices)
    m = weights.shape[1]
    translations = np.zeros((m, 3)) if translations is None else np.asarray(translations)
    for bkey in range(m):
        p = np.asarray(pivots[bkey], dtype=float)
        moved = (vertices - p) @ np.asarray(rotations[bkey]).T + p + translations[bkey]
        out += weights[:, bkey : bkey + 1] * moved
    return out


# ---------------------------------------------------------------------------
# four-limb cross sheet


class CrossSheet:
    """Flat cross with four distinguishable arms and a five-bone rig.

    Bones: 0 = body, 1..4 = arms along +x, -x, +y, -y. Arm lengths and
    widths differ by default so no leg permutation is an isometry.
    """

    DIRS = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], dtype=float)

    def __init__(self, arm_lengths=(0.7, 0.6, 0.45, 0.65), arm_widths=(0.3, 0.36, 0.24, 0.33),
                 core_half: float = 0.35, h: float = 0.05, band: float = 0.25,
                 dome: float = 0.12):
        self.arm_lengths = np.asarray(arm_lengths, dtype=float)
        self.arm_widths = np.asarray(arm_widths, dtype=float)
        self.core = float(core_half)
        self.band = float(band)
        self.mesh = self._build(h)
        if dome:
            # lift the sheet into a shallow dome; a perfectly flat rest pose
            # would zero out every z-coordinate atom of its dictionary block
            v = self.mesh.vertices
            rr = (v[:, 0] ** 2 + v[:, 1] ** 2)
            v[:, 2] = dome * np.exp(-rr / (2.0 * (0.8 * self.core + 0.4) ** 2))
        self.weights = self._weights()
        self.pivots = np.array(
            [[0, 0, 0]] + [[d[0] * self.core, d[1] * self.core, 0.0] for d in self.DIRS]
        )

    def _inside(self, p):
        x, y = p[..., 0], p[..., 1]
        c = self.core + 1e-9
        ok = (np.abs(x) <= c) & (np.abs(y) <= c)
        L, W = self.arm_lengths, self.arm_widths
        ok |= (x >= -1e-9) & (x <= self.core + L[0] + 1e-9) & (np.abs(y) <= W[0] + 1e-9)
        ok |= (x <= 1e-9) & (x >= -self.core - L[1] - 1e-9) & (np.abs(y) <= W[1] + 1e-9)
        ok |= (y >= -1e-9) & (y <= self.core + L[2] + 1e-9) & (np.abs(x) <= W[2] + 1e-9)
        ok |= (y <= 1e-9) & (y >= -self.core - L[3] - 1e-9) & (np.abs(x) <= W[3] + 1e-9)
        return ok

    def _build(self, h):
        L = self.arm_lengths
        xmax = self.core + max(L[0], L[1])
        ymax = self.core + max(L[2], L[3])
        xs = np.arange(-xmax - h, xmax + 2 * h, h)
        ys = np.arange(-ymax - h, ymax + 2 * h, h)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        pts = np.stack([gx, gy], axis=-1)
        keep = self._inside(pts)
        nxg, nyg = len(xs), len(ys)
        index = -np.ones((nxg, nyg), dtype=np.int64)
        faces = []
        verts = []
        for i in range(nxg - 1):
            for j in range(nyg - 1):
                corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
                if not all(keep[a, b] for a, b in corners):
                    continue
                ids = []
                for a, b in corners:
                    if index[a, b] < 0:
                        index[a, b] = len(verts)
                        verts.append([xs[a], ys[b], 0.0])
                    ids.append(index[a, b])
                faces += [[ids[0], ids[1], ids[2]], [ids[0], ids[2], ids[3]]]
        return TriMesh(np.array(verts), np.array(faces))

    def _weights(self):
        v = self.mesh.vertices
        n = len(v)
        w = np.zeros((n, 5))
        for a, d in enumerate(self.DIRS):
            along = v[:, 0] * d[0] + v[:, 1] * d[1]
            perp = np.abs(v[:, 0] * d[1] - v[:, 1] * d[0])
            in_arm = (along > self.core - self.band) & (perp <= self.arm_widths[a] + 1e-6)
            s = (along - (self.core - self.band)) / (2 * self.band)
            w[in_arm, 1 + a] = _smoothstep(s[in_arm])
        w[:, 0] = 1.0 - w[:, 1:].sum(axis=1)
        return np.clip(w, 0.0, 1.0)

    def arm_tips(self):
        """Vertex index at the far end of each arm."""
        v = self.mesh.vertices
        tips = []
        for a, d in enumerate(self.DIRS):
            along = v[:, 0] * d[0] + v[:, 1] * d[1]
            perp = np.abs(v[:, 0] * d[1] - v[:, 1] * d[0])
            score = along - 10.0 * perp
            tips.append(int(np.argmax(score)))
        return tips

    def anchor_pins(self):
        """Eight well-spread handle vertices: arm tips plus core corners."""
        v = self.mesh.vertices
        corners = [
            int(np.argmin(np.linalg.norm(v[:, :2] - np.array([sx * self.core, sy * self.core]), axis=1)))
            for sx, sy in [(1, 1), (1, -1), (-1, 1), (-1, -1)]
        ]
        return self.arm_tips() + corners

    def pose(self, bends, swings=None) -> TriMesh:
        """Pose by bending each arm out of plane (and optionally swinging
        it in plane) about its hinge."""
        bends = np.asarray(bends, dtype=float)
        swings = np.zeros(4) if swings is None else np.asarray(swings, dtype=float)
        rotations = [np.eye(3)]
        for a, d in enumerate(self.DIRS):
            bend_axis = np.array([-d[1], d[0], 0.0])  # in-plane, perpendicular to arm
            R = rot_axis([0, 0, 1], swings[a]) @ rot_axis(bend_axis, bends[a])
            rotations.append(R)
        v = lbs_pose(self.mesh.vertices, self.weights, rotations, self.pivots)
        return self.mesh.copy_with(v)


def bumpy_sphere_pose(mesh: TriMesh, directions, amounts, sharpness: float = 0.25) -> TriMesh:
    """Radially scale a sphere by smooth directional bumps."""
    v = mesh.vertices
    unit = v / np.linalg.norm(v, axis=1)[:, None]
    scale = np.ones(len(v))
    for c, a in zip(np.atleast_2d(directions), np.atleast_1d(amounts)):
        c = np.asarray(c, dtype=float)
        c = c / np.linalg.norm(c)
        scale += a * np.exp((unit @ c - 1.0) / sharpness)
    return mesh.copy_with(v * scale[:, None])


def write_weights_file(path, weights: np.ndarray) -> None:
    """Write the skeleton-weight text format: 'n m' then n rows of m reals."""
    n, m = weights.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{n} {m}\n")
        for row in weights:
            fh.write(" ".join(f"{x:.12g}" for x in row) + "\n")
