"""Orbit iteration, escape detection, omega-limits, basin membership tests
and a sampling proxy for robust non-expulsion.

The open-condition notions (basins, robust non-expulsion) are realized as
finite sampling probes with declared sample counts: a "true" answer is
evidence at the sampled points, never a proof.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .maps import MapOverflowError, PolyMap, Window

N_MAX_DEFAULT = 2000
BURN_IN_DEFAULT = 500
SAMPLES_DEFAULT = 500
SHELL_POINTS = 16  # per dimension pair, plus the center


@dataclass(frozen=True)
class Orbit:
    points: np.ndarray  # (k+1, n) complex
    escaped: bool
    escape_index: Optional[int]

    @property
    def last(self):
        return self.points[-1]


def orbit(pmap, p, n_max, R):
    """Iterate until the sup-norm exceeds R or n_max steps elapse.

    Overflow counts as escape at the step where it happened.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    p = np.asarray(p, dtype=complex).reshape(pmap.n)
    pts = [p]
    for k in range(n_max + 1):
        if np.abs(pts[-1]).max() > R:
            return Orbit(points=np.array(pts), escaped=True, escape_index=k)
        if k == n_max:
            break
        try:
            pts.append(pmap.eval(pts[-1]))
        except MapOverflowError:
            return Orbit(points=np.array(pts), escaped=True, escape_index=k + 1)
    return Orbit(points=np.array(pts), escaped=False, escape_index=None)


def orbit_to_csv(o):
    buf = io.StringIO()
    n = o.points.shape[1]
    buf.write("k," + ",".join(f"re_{i+1},im_{i+1}" for i in range(n)) + "\n")
    for k, p in enumerate(o.points):
        row = [str(k)] + [f"{v:.12g}" for z in p for v in (z.real, z.imag)]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def omega_limit(pmap, p, R, burn_in=BURN_IN_DEFAULT, samples=SAMPLES_DEFAULT,
                cluster_tol=1e-3):
    """Cluster representatives of the orbit tail.

    Greedy sup-norm clustering at cluster_tol; raises if the orbit escapes
    before the sampling window completes.
    """
    o = orbit(pmap, p, burn_in + samples, R)
    if o.escaped:
        raise ValueError("orbit escaped")
    tail = o.points[burn_in:]
    reps = []
    for q in tail:
        if not any(np.abs(q - r).max() < cluster_tol for r in reps):
            reps.append(q)
    return reps


# ---------------------------------------------------------------------------
# basin tests (the four-way basin lemma, realized as two sampled probes)


def basin_test_B1(pmap, cycle, p, n_max=N_MAX_DEFAULT, tol=1e-6, R=None):
    """True iff the subsampled orbit f^{mk}(p) enters and stays within tol
    of a single cycle point through the horizon."""
    if cycle.klass not in ("attracting", "super_attracting"):
        raise ValueError("cycle must be attracting")
    m = cycle.period
    p = np.asarray(p, dtype=complex).reshape(pmap.n)
    if R is None:
        R = _default_radius(pmap, cycle)
    x = p
    locked = None  # index of the cycle point being tracked
    steps = max(1, n_max // m)
    for _ in range(steps):
        try:
            x = pmap.iterate(x, m)
        except MapOverflowError:
            return False
        if np.abs(x).max() > R:
            return False
        d = [np.abs(x - q).max() for q in cycle.points]
        j = int(np.argmin(d))
        if locked is None:
            if d[j] < tol:
                locked = j
        elif j != locked or d[j] >= tol:
            return False
    return locked is not None


def basin_test_B2prime(pmap, cycle, p, radius, n_max=N_MAX_DEFAULT, tol=1e-6,
                       R=None):
    """Uniform version: all points of a shell around p must enter the
    tol-neighbourhood of the cycle set by the horizon, simultaneously."""
    if cycle.klass not in ("attracting", "super_attracting"):
        raise ValueError("cycle must be attracting")
    p = np.asarray(p, dtype=complex).reshape(pmap.n)
    if R is None:
        R = _default_radius(pmap, cycle)
    pts = shell_points(p, radius, pmap.n)
    x = pts.copy()
    cyc = np.array([np.asarray(q).reshape(pmap.n) for q in cycle.points])
    entered = np.zeros(len(pts), dtype=bool)
    for _ in range(n_max):
        try:
            x = pmap.eval(x)
        except MapOverflowError:
            return False
        if np.any(np.abs(x).max(axis=-1) > R):
            return False
        d = np.abs(x[:, None, :] - cyc[None, :, :]).max(axis=-1).min(axis=-1)
        entered |= d < tol
        if entered.all():
            # trapped: attracting cycles do not release a tol-neighbourhood
            return True
    return False


def _default_radius(pmap, cycle):
    from .maps import escape_radius

    try:
        R = escape_radius(pmap)
    except ValueError:
        R = 1.0
    top = max(float(np.abs(np.asarray(q)).max()) for q in cycle.points)
    return max(R, 2.0 * top + 1.0)


def shell_points(center, radius, n, per_pair=SHELL_POINTS):
    """Center plus SHELL_POINTS points per complex coordinate on the sphere
    of the given radius (each point offsets one coordinate on a circle)."""
    center = np.asarray(center, dtype=complex).reshape(n)
    pts = [center]
    ang = 2 * np.pi * np.arange(per_pair) / per_pair
    for j in range(n):
        off = radius * np.exp(1j * ang)
        for w in off:
            q = center.copy()
            q[j] += w
            pts.append(q)
    return np.array(pts)


# ---------------------------------------------------------------------------
# vectorized basin mask (same predicate as basin_test_B1, batched)


def basin_mask(pmap, cycle, points, n_max=N_MAX_DEFAULT, tol=1e-6, R=None):
    """basin_test_B1 evaluated at many points at once; returns a bool array."""
    if cycle.klass not in ("attracting", "super_attracting"):
        raise ValueError("cycle must be attracting")
    pts = np.asarray(points, dtype=complex).reshape(-1, pmap.n)
    if R is None:
        R = _default_radius(pmap, cycle)
    m = cycle.period
    cyc = np.array([np.asarray(q).reshape(pmap.n) for q in cycle.points])
    x = pts.copy()
    alive = np.ones(len(pts), dtype=bool)
    locked = np.full(len(pts), -1)
    steps = max(1, n_max // m)
    for _ in range(steps):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        try:
            x[idx] = pmap.iterate(x[idx], m)
        except MapOverflowError:
            for i in idx:
                try:
                    x[i] = pmap.iterate(x[i], m)
                except MapOverflowError:
                    alive[i] = False
                    locked[i] = -1
            idx = np.flatnonzero(alive)
            if idx.size == 0:
                break
        esc = np.abs(x[idx]).max(axis=-1) > R
        alive[idx[esc]] = False
        locked[idx[esc]] = -1
        idx = idx[~esc]
        d = np.abs(x[idx][:, None, :] - cyc[None, :, :]).max(axis=-1)
        j = d.argmin(axis=1)
        near = d[np.arange(len(idx)), j] < tol
        fresh = locked[idx] < 0
        locked[idx[near & fresh]] = j[near & fresh]
        broke = ~fresh & (~near | (j != locked[idx]))
        alive[idx[broke]] = False
        locked[idx[broke]] = -1
    return locked >= 0


# ---------------------------------------------------------------------------
# robust non-expulsion probe


def rne_probe(pmap, p, nbhd_radius, K, pert_count=8, pert_eps=1e-3,
              horizon=N_MAX_DEFAULT, seed=0):
    """Sampling proxy for robust non-expulsion of p.

    Perturbs the map pert_count times (coefficient noise with sampled
    sup-norm <= pert_eps on K) and iterates a shell of starts around p
    under each; true iff every sampled orbit stays inside K through the
    horizon.  True is evidence, not proof.
    """
    from .perturb import random_perturbation

    p = np.asarray(p, dtype=complex).reshape(pmap.n)
    if not bool(K.contains(p)):
        raise ValueError("p must lie in K")
    starts = shell_points(p, nbhd_radius, pmap.n)
    maps = [pmap] + [
        random_perturbation(pmap, pert_eps, K, seed=seed + i)
        for i in range(pert_count)
    ]
    for g in maps:
        x = starts.copy()
        for _ in range(horizon):
            if not bool(K.contains(x).all()):
                return False
            try:
                x = g.eval(x)
            except MapOverflowError:
                return False
        if not bool(K.contains(x).all()):
            return False
    return True
