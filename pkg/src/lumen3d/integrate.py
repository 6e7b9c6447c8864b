"""Normal-field integration: relative depth from per-pixel orientation.

Depth is solved as the least-squares fit of discrete gradients to the slopes
implied by the normals, p = dz/dx = -n_x/n_z and q = dz/dy = -n_y/n_z, over
an arbitrary (possibly multiply-connected) mask with natural boundary
conditions. Mind the axes: y points image-up, so row r sits at y = H-1-r and
q couples rows in the direction opposite to row index.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import pyamg
import scipy.ndimage
import scipy.sparse
import scipy.sparse.linalg

from .errors import DataError
from .psolve import AlbedoMap, NormalField

logger = logging.getLogger(__name__)

GRAZING_NZ = 0.05  # below this the gradients -n_x/n_z blow up; pixel excluded
SOLVER_RTOL = 1e-10


@dataclass(frozen=True)
class DepthMap:
    """Relative depth per pixel (larger z = closer to camera), zero-mean gauge.

    Depth carries an arbitrary additive constant per connected region, so all
    comparisons must be offset-free. `solver_residual` is the relative
    normal-equation residual of the integration solve (diagnostic).
    """

    depth: np.ndarray
    valid: np.ndarray
    pixel_pitch: float = None
    solver_residual: float = 0.0

    def __post_init__(self):
        z = np.asarray(self.depth, dtype=np.float64)
        v = np.asarray(self.valid, dtype=bool)
        if z.ndim != 2 or v.shape != z.shape:
            raise DataError(f"depth/valid shapes disagree: {z.shape} vs {v.shape}")
        if not np.all(np.isfinite(z[v])):
            raise DataError("depth must be finite on valid pixels")
        z = np.where(v, z, 0.0)
        z = np.ascontiguousarray(z)
        v = np.ascontiguousarray(v)
        z.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "depth", z)
        object.__setattr__(self, "valid", v)


def _gradients(normals: NormalField, region: np.ndarray):
    n = normals.normals
    nz = n[:, :, 2]
    grazing = region & (nz < GRAZING_NZ)
    if np.any(grazing):
        logger.warning(
            "%d grazing pixels (n_z < %.2f) excluded from integration",
            int(grazing.sum()), GRAZING_NZ,
        )
    keep = region & ~grazing
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(keep, -n[:, :, 0] / nz, 0.0)
        q = np.where(keep, -n[:, :, 1] / nz, 0.0)
    return p, q, keep


def integrate_gradients(p: np.ndarray, q: np.ndarray, region: np.ndarray) -> DepthMap:
    """Least-squares integration of a gradient field over a mask.

    Each adjacent in-region pixel pair contributes one equation matching the
    depth difference to the average of the two pixels' slopes (y up):

        z[r, c+1] - z[r, c]   = (p[r, c] + p[r, c+1]) / 2
        z[r, c]   - z[r+1, c] = (q[r, c] + q[r+1, c]) / 2

    The normal equations form a graph Laplacian per connected component,
    solved with algebraic-multigrid-preconditioned conjugate gradients; each
    component is then shifted to zero mean.
    """
    region = np.asarray(region, dtype=bool)
    n_px = int(region.sum())
    if n_px == 0:
        raise DataError("integration region is empty")
    h, w = region.shape

    index = np.full((h, w), -1, dtype=np.int64)
    index[region] = np.arange(n_px)

    rows_eq = []
    cols_eq = []
    vals_eq = []
    rhs = []

    def add_pairs(ra, ca, rb, cb, g):
        # one equation per pair: z[b] - z[a] = g
        ia = index[ra, ca]
        ib = index[rb, cb]
        n_eq = ia.size
        base = len(rhs)
        eq_ids = np.arange(base, base + n_eq)
        rows_eq.append(np.repeat(eq_ids, 2))
        cols_eq.append(np.stack([ia, ib], axis=1).ravel())
        vals_eq.append(np.tile([-1.0, 1.0], n_eq))
        rhs.extend(g.tolist())

    horiz = region[:, :-1] & region[:, 1:]
    hr, hc = np.nonzero(horiz)
    add_pairs(hr, hc, hr, hc + 1, (p[hr, hc] + p[hr, hc + 1]) / 2.0)

    vert = region[:-1, :] & region[1:, :]
    vr, vc = np.nonzero(vert)
    # row r+1 is below row r, i.e. at smaller y; stepping up adds q
    add_pairs(vr + 1, vc, vr, vc, (q[vr, vc] + q[vr + 1, vc]) / 2.0)

    comps, n_comp = scipy.ndimage.label(
        region, structure=np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    )
    if n_comp > 1:
        logger.warning(
            "integration region has %d disconnected components; "
            "each gets an independent zero-mean depth", n_comp,
        )

    if rhs:
        n_eq = len(rhs)
        A = scipy.sparse.csr_matrix(
            (np.concatenate(vals_eq), (np.concatenate(rows_eq), np.concatenate(cols_eq))),
            shape=(n_eq, n_px),
        )
        b = np.asarray(rhs)
        L = (A.T @ A).tocsr()
        rhs_n = A.T @ b
        rhs_norm = np.linalg.norm(rhs_n)
        if rhs_norm == 0.0:
            z_flat = np.zeros(n_px)
            residual = 0.0
        else:
            # The Laplacian is singular (constants per component). Anchoring
            # one unknown per component with a diagonal penalty yields the
            # exact least-squares solution in the gauge z[anchor] = 0: the
            # anchored equation decouples, since the consistent part is
            # already solvable. The anchored system is SPD and nonsingular.
            anchors = np.zeros(n_px)
            flat_comps = comps[region]
            first = np.unique(flat_comps, return_index=True)[1]
            anchors[first] = 4.0  # same scale as the Laplacian diagonal
            Ls = L + scipy.sparse.diags(anchors)
            # pyamg's setup probes the spectral radius from a random vector;
            # pin the seed so repeated runs build byte-identical hierarchies.
            rng_state = np.random.get_state()
            try:
                np.random.seed(451)
                ml = pyamg.smoothed_aggregation_solver(
                    Ls.tocsr(),
                    max_coarse=64,
                    presmoother=("gauss_seidel", {"sweep": "symmetric"}),
                    postsmoother=("gauss_seidel", {"sweep": "symmetric"}),
                )
            finally:
                np.random.set_state(rng_state)
            maxiter = int(10 * np.sqrt(n_px)) + 10
            try:
                z_flat, info = scipy.sparse.linalg.cg(
                    Ls, rhs_n, rtol=SOLVER_RTOL, maxiter=maxiter, M=ml.aspreconditioner()
                )
            except TypeError:  # older scipy spells the tolerance "tol"
                z_flat, info = scipy.sparse.linalg.cg(
                    Ls, rhs_n, tol=SOLVER_RTOL, maxiter=maxiter, M=ml.aspreconditioner()
                )
            if info != 0:
                logger.warning("integration CG stopped early (info=%d)", info)
            # Report against the gauge-free normal equations; L kills the
            # per-component constants the anchor fixed.
            residual = float(np.linalg.norm(L @ z_flat - rhs_n) / rhs_norm)
    else:
        z_flat = np.zeros(n_px)  # isolated pixels only
        residual = 0.0

    depth = np.zeros((h, w))
    depth[region] = z_flat
    for comp in range(1, n_comp + 1):
        sel = comps == comp
        depth[sel] -= depth[sel].mean()

    return DepthMap(depth, region, solver_residual=residual)


def integrate_normals(normals: NormalField, region: np.ndarray) -> DepthMap:
    """Depth from normals over a mask; see integrate_gradients for the model."""
    region = np.asarray(region, dtype=bool)
    if region.shape != normals.normals.shape[:2]:
        raise DataError(
            f"region shape {region.shape} does not match normals "
            f"{normals.normals.shape[:2]}"
        )
    if np.any(region & ~normals.valid):
        raise DataError(
            f"region includes {int((region & ~normals.valid).sum())} pixels "
            "with no valid normal"
        )
    p, q, keep = _gradients(normals, region)
    return integrate_gradients(p, q, keep)


def export_mesh(depth: DepthMap, albedo: AlbedoMap, path, pixel_pitch: float = None) -> None:
    """Write an ASCII PLY height-field mesh with per-vertex colors.

    One vertex per valid depth pixel at (x, y, z) * pitch with y = H-1-row;
    two triangles per fully valid 2x2 pixel quad, split along the
    top-left/bottom-right diagonal. Colors come from the albedo clamped to
    [0, 1] and quantized to 8 bits.
    """
    if albedo.values.shape[:2] != depth.depth.shape:
        raise DataError("depth and albedo dimensions differ")
    valid = depth.valid
    if not np.any(valid):
        raise DataError("mesh export needs at least one valid pixel")
    pitch = pixel_pitch if pixel_pitch is not None else (depth.pixel_pitch or 1.0)
    h, w = depth.depth.shape

    vidx = np.full((h, w), -1, dtype=np.int64)
    rr, cc = np.nonzero(valid)
    vidx[rr, cc] = np.arange(rr.size)

    colors = albedo.values
    if colors.shape[2] == 1:
        colors = np.repeat(colors, 3, axis=2)
    colors = np.floor(np.clip(colors, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)

    quad = valid[:-1, :-1] & valid[:-1, 1:] & valid[1:, :-1] & valid[1:, 1:]
    qr, qc = np.nonzero(quad)
    tl = vidx[qr, qc]
    tr = vidx[qr, qc + 1]
    bl = vidx[qr + 1, qc]
    br = vidx[qr + 1, qc + 1]
    # counterclockwise as seen from +z (the camera)
    faces = np.concatenate(
        [np.stack([tl, bl, br], axis=1), np.stack([tl, br, tr], axis=1)]
    ) if qr.size else np.zeros((0, 3), dtype=np.int64)

    try:
        with open(path, "w") as f:
            f.write("ply\nformat ascii 1.0\n")
            f.write(f"element vertex {rr.size}\n")
            f.write("property float x\nproperty float y\nproperty float z\n")
            f.write("property uchar red\nproperty uchar green\nproperty uchar blue\n")
            f.write(f"element face {faces.shape[0]}\n")
            f.write("property list uchar int vertex_indices\nend_header\n")
            xs = cc * pitch
            ys = (h - 1 - rr) * pitch
            zs = depth.depth[rr, cc] * pitch
            cols8 = colors[rr, cc]
            for x, y, z, (cr, cg, cb) in zip(xs, ys, zs, cols8):
                f.write(f"{x:.6f} {y:.6f} {z:.6f} {cr} {cg} {cb}\n")
            for a, b, c in faces:
                f.write(f"3 {a} {b} {c}\n")
    except OSError as exc:
        raise DataError(f"{path}: cannot write mesh: {exc}") from exc
    logger.info("wrote mesh with %d vertices, %d faces to %s", rr.size, faces.shape[0], path)
