"""Periodic points: Newton search, minimal periods, multipliers, stability.

The finder runs damped Newton on f^m(x) - x from a batch of scrambled
low-discrepancy seeds, dedups the converged roots, groups them into
cycles and classifies each cycle from the eigenvalues of the iterated
Jacobian at a base point.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .maps import MapOverflowError, PolyMap, Window

DEDUP_TOL = 1e-8
UNIT_MARGIN = 1e-6  # |lambda| within this of 1 counts as borderline
SUPER_TOL = 1e-8  # Jacobian entries below this: derivative treated as zero

CLASSES = ("super_attracting", "attracting", "repelling", "saddle",
           "non_hyperbolic")


@dataclass(frozen=True)
class Cycle:
    points: tuple  # orbit as 1-D complex arrays, length = minimal period
    multipliers: tuple  # eigenvalues of D f^m at points[0], |.| descending
    klass: str
    transverse: bool
    newton_residual: float

    @property
    def period(self):
        return len(self.points)


class EigenvalueError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# eigenvalues of small complex matrices (n <= 3)


def _char_poly(M):
    """Monic characteristic polynomial coefficients, low degree first."""
    M = np.asarray(M, dtype=complex)
    n = M.shape[0]
    tr = np.trace(M)
    if n == 1:
        return np.array([-M[0, 0], 1.0], dtype=complex)
    if n == 2:
        det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
        return np.array([det, -tr, 1.0], dtype=complex)
    det = np.linalg.det(M)
    # sum of principal 2x2 minors
    s2 = 0.0 + 0.0j
    for i in range(3):
        idx = [k for k in range(3) if k != i]
        sub = M[np.ix_(idx, idx)]
        s2 += sub[0, 0] * sub[1, 1] - sub[0, 1] * sub[1, 0]
    return np.array([-det, s2, -tr, 1.0], dtype=complex)


def poly_roots(coeffs, max_sweeps=200, tol=1e-14):
    """All roots of a monic-normalizable polynomial via Durand-Kerner,
    polished by a few plain Newton steps.  Coefficients low degree first."""
    c = np.asarray(coeffs, dtype=complex)
    while len(c) > 1 and c[-1] == 0:
        c = c[:-1]
    d = len(c) - 1
    if d < 1:
        return np.array([], dtype=complex)
    c = c / c[-1]
    scale = 1.0 + np.abs(c[:-1]).max()
    # standard spread-out initial guesses, non-real ratio avoids symmetry locks
    z = scale * (0.4 + 0.9j) ** np.arange(d)

    def p(x):
        acc = np.zeros_like(x)
        for ck in c[::-1]:
            acc = acc * x + ck
        return acc

    def dp(x):
        acc = np.zeros_like(x)
        for k in range(d, 0, -1):
            acc = acc * x + k * c[k]
        return acc

    converged = False
    for _ in range(max_sweeps):
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, 1.0)
        denom = diff.prod(axis=1)
        step = p(z) / denom
        z = z - step
        if np.abs(step).max() < tol * max(1.0, np.abs(z).max()):
            converged = True
            break
    if not converged:
        raise EigenvalueError("eigenvalue iteration failed")
    for _ in range(3):
        dz = dp(z)
        safe = np.abs(dz) > 1e-300
        z = np.where(safe, z - p(z) / np.where(safe, dz, 1.0), z)
    return z


def eigenvalues(M):
    """Eigenvalues of an n x n complex matrix (n <= 3), |.| descending."""
    M = np.asarray(M, dtype=complex)
    if M.shape[0] > 3:
        raise ValueError("n <= 3 only")
    lam = poly_roots(_char_poly(M))
    order = np.lexsort((lam.real, -np.abs(lam)))
    return lam[order]


# ---------------------------------------------------------------------------
# classification


def classify_multipliers(multipliers, jacobian=None):
    """Stability class from multiplier moduli with a declared unit margin."""
    mods = np.abs(np.asarray(multipliers, dtype=complex))
    if jacobian is not None and np.abs(jacobian).max() < SUPER_TOL:
        return "super_attracting"
    if np.any(np.abs(mods - 1.0) <= UNIT_MARGIN):
        return "non_hyperbolic"
    if np.all(mods < 1.0):
        return "attracting"
    if np.all(mods > 1.0):
        return "repelling"
    return "saddle"


def classify(pmap, points, residual=None, tol=1e-9):
    """Build a Cycle record from verified orbit points.

    ``points``: the full cycle, in orbit order; multipliers come from the
    iterated Jacobian over one full period at points[0].
    """
    points = [np.asarray(p, dtype=complex).reshape(pmap.n) for p in points]
    m = len(points)
    if residual is None:
        residual = float(
            np.abs(pmap.iterate(points[0], m) - points[0]).max()
        )
    jt = pmap.iterated_jet(points[0], m)
    lam = eigenvalues(jt.jacobian)
    klass = classify_multipliers(lam, jacobian=jt.jacobian)
    transverse = bool(np.all(np.abs(lam - 1.0) > UNIT_MARGIN))
    return Cycle(
        points=tuple(points),
        multipliers=tuple(lam),
        klass=klass,
        transverse=transverse,
        newton_residual=residual,
    )


def minimal_period(pmap, p, m, tol):
    """Smallest divisor d of m with ||f^d(p) - p|| < tol."""
    p = np.asarray(p, dtype=complex).reshape(pmap.n)
    if float(np.abs(pmap.iterate(p, m) - p).max()) >= tol:
        raise ValueError("not periodic at tolerance")
    for d in sorted(k for k in range(1, m + 1) if m % k == 0):
        if float(np.abs(pmap.iterate(p, d) - p).max()) < tol:
            return d
    return m


# ---------------------------------------------------------------------------
# Newton search


def _newton_batch(pmap, x0, m, tol, max_steps=50, max_halvings=30):
    """Damped Newton on g(x) = f^m(x) - x for a batch of seeds.

    Returns (points, residuals); non-converged seeds keep residual inf.
    Seeds whose Newton system goes singular or overflows are discarded.
    """
    n = pmap.n
    x = np.array(x0, dtype=complex)
    S = x.shape[0]
    res = np.full(S, np.inf)
    active = np.ones(S, dtype=bool)
    eye = np.eye(n, dtype=complex)

    def g_and_jac(pts):
        jt = pmap.iterated_jet(pts, m)
        return jt.value - pts, jt.jacobian - eye

    # initial residuals; seeds that overflow immediately are dropped
    for k in range(max_steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xs = x[idx]
        try:
            g, J = g_and_jac(xs)
        except MapOverflowError:
            # retry seed by seed so one overflow doesn't kill the batch
            g = np.empty((idx.size, n), dtype=complex)
            J = np.empty((idx.size, n, n), dtype=complex)
            keep = np.ones(idx.size, dtype=bool)
            for t, i in enumerate(idx):
                try:
                    g[t], J[t] = g_and_jac(x[i : i + 1])
                except MapOverflowError:
                    keep[t] = False
                    active[i] = False
            idx = idx[keep]
            if idx.size == 0:
                break
            g, J = g[keep], J[keep]
        r = np.abs(g).max(axis=-1)
        res[idx] = r
        done = r < tol
        active[idx[done]] = False
        idx = idx[~done]
        if idx.size == 0:
            break
        g, J, r = g[~done], J[~done], r[~done]
        with np.errstate(all="ignore"):
            try:
                step = np.linalg.solve(J, g[..., None])[..., 0]
            except np.linalg.LinAlgError:
                step = np.full_like(g, np.nan)
                for t in range(len(idx)):
                    try:
                        step[t] = np.linalg.solve(J[t], g[t])
                    except np.linalg.LinAlgError:
                        pass
        ok = np.isfinite(step).all(axis=-1)
        active[idx[~ok]] = False
        idx, step, r = idx[ok], step[ok], r[ok]
        if idx.size == 0:
            break
        # damping: halve until the residual no longer increases
        t_damp = np.ones(len(idx))
        best = x[idx] - step
        for _ in range(max_halvings):
            try:
                gn = pmap.iterated_jet(best, m).value - best
                rn = np.abs(gn).max(axis=-1)
            except MapOverflowError:
                rn = np.full(len(idx), np.inf)
                for t in range(len(idx)):
                    try:
                        v = pmap.iterate(best[t], m) - best[t]
                        rn[t] = np.abs(v).max()
                    except MapOverflowError:
                        pass
            worse = ~(rn <= r) & (t_damp > 2.0 ** -float(max_halvings))
            if not worse.any():
                break
            t_damp[worse] *= 0.5
            best[worse] = x[idx[worse]] - t_damp[worse, None] * step[worse]
        x[idx] = best
    return x, res


def find_periodic(pmap, m_max, window, seeds=1024, tol=1e-10, seed=0):
    """All cycles found with minimal period <= m_max and base point in the
    window, sorted by period then lexicographically by base point."""
    if m_max < 1 or seeds < 1:
        raise ValueError("m_max and seeds must be >= 1")
    roots = []  # (point, residual)
    for m in range(1, m_max + 1):
        x0 = window.sample(seeds, seed=seed + m)
        pts, res = _newton_batch(pmap, x0, m, tol)
        for p, r in zip(pts, res):
            if r < tol:
                roots.append((p, float(r)))
    return _collect_cycles(pmap, roots, m_max, window, tol)


def _collect_cycles(pmap, roots, m_max, window, tol):
    reps = []  # dedup at DEDUP_TOL in sup-norm
    for p, r in roots:
        hit = False
        for q in reps:
            if np.abs(p - q[0]).max() < DEDUP_TOL:
                hit = True
                if r < q[1]:
                    q[0], q[1] = p, r
                break
        if not hit:
            reps.append([p, r])

    cycles = []
    used = np.zeros(len(reps), dtype=bool)
    for i, (p, r) in enumerate(reps):
        if used[i]:
            continue
        # period of p itself (it converged for some m <= m_max)
        per = None
        for m in range(1, m_max + 1):
            if np.abs(pmap.iterate(p, m) - p).max() < max(tol, DEDUP_TOL):
                per = minimal_period(pmap, p, m, max(tol, DEDUP_TOL))
                break
        if per is None:
            continue
        orbit = [p]
        for _ in range(per - 1):
            orbit.append(pmap.eval(orbit[-1]))
        # base point: lexicographically smallest orbit point inside window
        inside = [q for q in orbit if bool(window.contains(q))]
        pool = inside if inside else orbit
        base = min(pool, key=_lex_key)
        k = next(t for t, q in enumerate(orbit)
                 if np.abs(q - base).max() < DEDUP_TOL)
        orbit = orbit[k:] + orbit[:k]
        if not inside:
            continue
        for j, (q, _) in enumerate(reps):
            if any(np.abs(q - o).max() < 10 * DEDUP_TOL for o in orbit):
                used[j] = True
        cycles.append(classify(pmap, orbit, residual=r))
    cycles.sort(key=lambda c: (c.period, _lex_key(c.points[0])))
    return cycles


def _lex_key(p):
    p = np.asarray(p, dtype=complex).ravel()
    return tuple(np.round(v, 9) for v in
                 np.concatenate([p.real, p.imag]))


# ---------------------------------------------------------------------------
# aggregate report and CSV


def hyperbolicity_report(pmap, m_max, window, seeds=1024, tol=1e-10, seed=0):
    cycles = find_periodic(pmap, m_max, window, seeds=seeds, tol=tol, seed=seed)
    return {
        "cycles": cycles,
        "all_transverse": all(c.transverse for c in cycles),
        "all_hyperbolic": all(c.klass != "non_hyperbolic" for c in cycles),
    }


def cycles_to_csv(cycles, n):
    """One deterministic row per cycle:
    period, re/im of each base-point coordinate, multiplier moduli,
    class, transverse, residual."""
    buf = io.StringIO()
    head = ["period"]
    head += [f"{ax}(p_{i+1})" for i in range(n) for ax in ("re", "im")]
    head += [f"|lambda_{i+1}|" for i in range(n)]
    head += ["class", "transverse", "residual"]
    buf.write(",".join(head) + "\n")
    for c in cycles:
        p = np.asarray(c.points[0]).ravel()
        row = [str(c.period)]
        row += [f"{v:.12g}" for z in p for v in (z.real, z.imag)]
        row += [f"{abs(l):.12g}" for l in c.multipliers]
        row += [c.klass, str(c.transverse).lower(), f"{c.newton_residual:.3g}"]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()
