"""Julia-set approximants along independent characterizations, plus
agreement metrics and chaos probes.

Grids classify by cell centers only; every statement is at a declared
resolution.  For n = 2 the 4-real-dimensional window is gridded on a
2-plane slice with the remaining coordinates fixed.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .maps import MapOverflowError, PolyMap, Window
from .periodic import find_periodic, poly_roots


@dataclass(frozen=True)
class EscapeGrid:
    window: Window  # the 2-real-dim window actually gridded
    res: tuple  # (rows, cols) = (axis0 cells, axis1 cells)
    escaped: np.ndarray  # bool (rows, cols)
    escape_iter: np.ndarray  # int (rows, cols), -1 where bounded
    axes: tuple  # indices of the two real coordinates gridded
    fixed: tuple  # fixed values of the remaining real coordinates

    @property
    def cellwidth(self):
        (lo0, hi0), (lo1, hi1) = (self.window.bounds[self.axes[0]],
                                  self.window.bounds[self.axes[1]])
        return max((hi0 - lo0) / self.res[0], (hi1 - lo1) / self.res[1])

    def centers(self):
        """Complex cell centers, shape (rows, cols, n)."""
        return _slice_centers(self.window, self.res, self.axes, self.fixed)


def _slice_centers(window, res, axes, fixed):
    n = window.n
    reals = np.empty(res + (2 * n,))
    it = iter(fixed)
    for a in range(2 * n):
        if a == axes[0]:
            lo, hi = window.bounds[a]
            w = (hi - lo) / res[0]
            reals[..., a] = (lo + w * (np.arange(res[0]) + 0.5))[:, None]
        elif a == axes[1]:
            lo, hi = window.bounds[a]
            w = (hi - lo) / res[1]
            reals[..., a] = (lo + w * (np.arange(res[1]) + 0.5))[None, :]
        else:
            reals[..., a] = next(it)
    return window.to_complex(reals)


def escape_grid(pmap, window, res, n_max, R, axes=(0, 1), fixed=()):
    """Iterate every cell center; mark cells whose orbit leaves ||.||_inf <= R.

    Deterministic: classification depends only on the center orbit.
    """
    if res < 2:
        raise ValueError("res must be >= 2 per axis")
    shape = (res, res)
    centers = _slice_centers(window, shape, axes, fixed)
    z = centers.reshape(-1, pmap.n).copy()
    escaped = np.zeros(len(z), dtype=bool)
    esc_iter = np.full(len(z), -1)
    alive = np.abs(z).max(axis=-1) <= R
    escaped[~alive] = True
    esc_iter[~alive] = 0
    for k in range(1, n_max + 1):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        with np.errstate(over="ignore", invalid="ignore"):
            try:
                z[idx] = pmap.eval(z[idx])
                out = np.abs(z[idx]).max(axis=-1) > R
            except MapOverflowError:
                # fall back per point on overflow
                out = np.zeros(idx.size, dtype=bool)
                for t, i in enumerate(idx):
                    try:
                        z[i] = pmap.eval(z[i])
                        out[t] = np.abs(z[i]).max() > R
                    except MapOverflowError:
                        out[t] = True
        escaped[idx[out]] = True
        esc_iter[idx[out]] = k
        alive[idx[out]] = False
    return EscapeGrid(
        window=window,
        res=shape,
        escaped=escaped.reshape(shape),
        escape_iter=esc_iter.reshape(shape),
        axes=tuple(axes),
        fixed=tuple(fixed),
    )


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray  # (N, n) complex
    tag: str

    def __len__(self):
        return len(self.points)


def dedup_points(pts, tol=1e-8):
    """Deterministic dedup at sup-norm tol, preserving sorted order."""
    pts = np.asarray(pts, dtype=complex).reshape(-1, pts.shape[-1])
    if len(pts) == 0:
        return pts
    key = np.lexsort(
        tuple(pts[:, j].imag for j in reversed(range(pts.shape[1])))
        + tuple(pts[:, j].real for j in reversed(range(pts.shape[1])))
    )
    pts = pts[key]
    keep = [pts[0]]
    for q in pts[1:]:
        if np.abs(q - keep[-1]).max() >= tol:
            keep.append(q)
    return np.array(keep)


def boundary_extract(grid):
    """Centers of bounded cells 4-adjacent to an escaped cell.

    Empty (with a warning flag in the tag) when the grid is all-bounded or
    all-escaped.
    """
    esc = grid.escaped
    if esc.all() or not esc.any():
        return PointCloud(points=np.empty((0, grid.window.n), dtype=complex),
                          tag="boundary:empty")
    nb = np.zeros_like(esc)
    nb[1:, :] |= esc[:-1, :]
    nb[:-1, :] |= esc[1:, :]
    nb[:, 1:] |= esc[:, :-1]
    nb[:, :-1] |= esc[:, 1:]
    mask = (~esc) & nb
    centers = grid.centers()[mask]
    return PointCloud(points=centers.reshape(-1, grid.window.n),
                      tag="boundary")


def repeller_cloud(pmap, m_max, window, seeds=1024, tol=1e-10, seed=0,
                   include_saddles=False):
    """All orbit points of repelling (optionally also saddle) cycles."""
    cycles = find_periodic(pmap, m_max, window, seeds=seeds, tol=tol, seed=seed)
    kinds = {"repelling"} | ({"saddle"} if include_saddles else set())
    pts = [np.asarray(q).reshape(pmap.n)
           for c in cycles if c.klass in kinds for q in c.points]
    if not pts:
        return PointCloud(points=np.empty((0, pmap.n), dtype=complex),
                          tag="repellers")
    return PointCloud(points=dedup_points(np.array(pts)), tag="repellers")


def hausdorff(A, B):
    """Symmetric Hausdorff distance in sup-norm between finite clouds."""
    if len(A) == 0 or len(B) == 0:
        raise ValueError("hausdorff of an empty cloud")
    return float(max(directed_distance(A, B), directed_distance(B, A)))


def directed_distance(A, B, chunk=1024):
    """sup over A of the distance to B (one direction only)."""
    if len(A) == 0 or len(B) == 0:
        raise ValueError("distance from/to an empty cloud")
    b = B.points
    worst = 0.0
    for s in range(0, len(A), chunk):
        a = A.points[s : s + chunk]
        d = np.abs(a[:, None, :] - b[None, :, :]).max(axis=-1)
        worst = max(worst, float(d.min(axis=1).max()))
    return worst


def cloud_to_csv(cloud, n):
    buf = io.StringIO()
    buf.write(",".join(f"re_{i+1},im_{i+1}" for i in range(n)) + "\n")
    for p in cloud.points:
        buf.write(",".join(f"{v:.12g}" for z in p for v in (z.real, z.imag)))
        buf.write("\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# probes


def spread_probe(pmap, cellU, cellV, k_max, samples=256, R=None, seed=0):
    """Smallest k <= k_max with f^k(sample of U) meeting V, else None."""
    pts = np.concatenate([cellU.sample(samples, seed=seed),
                          cellU.grid_centers(2)])
    if R is None:
        R = 1e6
    x = pts.copy()
    alive = np.ones(len(x), dtype=bool)
    for k in range(1, k_max + 1):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            return None
        try:
            x[idx] = pmap.eval(x[idx])
        except MapOverflowError:
            for i in idx:
                try:
                    x[i] = pmap.eval(x[i])
                except MapOverflowError:
                    alive[i] = False
            idx = np.flatnonzero(alive)
        far = np.abs(x[idx]).max(axis=-1) > R
        alive[idx[far]] = False
        idx = idx[~far]
        if idx.size and bool(cellV.contains(x[idx]).any()):
            return k
    return None


def cycle_through(pmap, cellU, cellV, m_max, seeds=1024, tol=1e-10, seed=0,
                  window=None):
    """A repelling cycle with points in both cells, if the finder sees one."""
    if window is None:
        bounds = []
        for a in range(2 * cellU.n):
            lo = min(cellU.bounds[a][0], cellV.bounds[a][0]) - 1.0
            hi = max(cellU.bounds[a][1], cellV.bounds[a][1]) + 1.0
            bounds.append((lo, hi))
        window = Window(bounds=tuple(bounds))
    cycles = find_periodic(pmap, m_max, window, seeds=seeds, tol=tol, seed=seed)
    for c in cycles:
        if c.klass != "repelling":
            continue
        inU = any(bool(cellU.contains(q)) for q in c.points)
        inV = any(bool(cellV.contains(q)) for q in c.points)
        if inU and inV:
            return c
    return None


def inverse_iteration_cloud(pmap, depth=12, keep_last=8, seed=0):
    """Classical 1-D cross-check: random backward orbits of a polynomial.

    Pulls a generic start back through random preimages (roots of
    f(z) = w found by the same polynomial solver) and keeps the tail.
    """
    if pmap.n != 1 or not pmap.is_polynomial():
        raise ValueError("inverse iteration is for 1-D polynomial maps")
    deg = pmap.degree()
    coeffs = np.zeros(deg + 1, dtype=complex)
    for exps, c in pmap.components[0]:
        coeffs[exps[0]] = c
    rng = np.random.default_rng(seed)
    w = complex(2.0 + 0.5j)
    pts = []
    for k in range(depth):
        shifted = coeffs.copy()
        shifted[0] -= w
        roots = poly_roots(shifted)
        w = complex(roots[rng.integers(len(roots))])
        if k >= depth - keep_last:
            pts.extend(complex(r) for r in roots)
    arr = np.array(pts, dtype=complex).reshape(-1, 1)
    return PointCloud(points=dedup_points(arr), tag="inverse_iteration")


# ---------------------------------------------------------------------------
# PGM output


def grid_to_pgm(grid):
    """Binary PGM, escape iteration scaled to 0..255 (bounded cells = 0)."""
    it = grid.escape_iter.astype(float)
    img = np.zeros(grid.res, dtype=np.uint8)
    esc = grid.escaped
    if esc.any():
        top = max(1.0, it[esc].max())
        img[esc] = np.clip(
            np.round(55 + 200 * it[esc] / top), 0, 255
        ).astype(np.uint8)
    header = f"P5\n{grid.res[1]} {grid.res[0]}\n255\n".encode()
    return header + img.tobytes()


def mask_to_pgm(mask):
    mask = np.asarray(mask, dtype=bool)
    img = np.where(mask, 255, 0).astype(np.uint8)
    header = f"P5\n{mask.shape[1]} {mask.shape[0]}\n255\n".encode()
    return header + img.tobytes()
