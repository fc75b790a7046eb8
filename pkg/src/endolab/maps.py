"""Polynomial (and 1-D entire) self-maps of C^n with forward-mode jets.

A map is stored as n sparse component term lists; each term is a
(multi-index, complex coefficient) pair.  Jacobians come from dual-number
propagation, so they are exact up to rounding and compose cleanly through
iteration.  All evaluation routines broadcast over a leading batch axis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

MAX_DIM = 3

_FINITE_LIMIT = 1e150  # values beyond this are treated as overflow


class MapOverflowError(ArithmeticError):
    """Evaluation left the representable range.

    ``index`` is the orbit step at which the overflow occurred (0 for a
    single evaluation).
    """

    def __init__(self, message="numeric overflow", index=0):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class EntireNode:
    """Node of a composition tree over {polynomial, exp, sin} (n=1 only)."""

    kind: str  # "poly" | "exp" | "sin"
    coeffs: tuple = ()  # dense low-to-high, for kind == "poly"
    inner: Optional["EntireNode"] = None  # None means the identity argument z

    def __post_init__(self):
        if self.kind not in ("poly", "exp", "sin"):
            raise ValueError(f"unknown entire node kind {self.kind!r}")
        if self.kind == "poly" and len(self.coeffs) == 0:
            raise ValueError("poly node needs coefficients")


@dataclass(frozen=True)
class PolyMap:
    """Endomorphism of C^n given by sparse multi-index terms per component."""

    n: int
    components: tuple  # n tuples of ((e_1..e_n), coeff) terms
    entire: Optional[EntireNode] = None
    # corrections/deltas may be constant or identically zero
    allow_constant: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self):
        if not 1 <= self.n <= MAX_DIM:
            raise ValueError(f"dimension must be in 1..{MAX_DIM}")
        if self.entire is not None:
            if self.n != 1:
                raise ValueError("entire builtins are 1-D only")
            return
        if len(self.components) != self.n:
            raise ValueError("component count must equal dimension")
        for comp in self.components:
            seen = set()
            for exps, _ in comp:
                if len(exps) != self.n:
                    raise ValueError("exponent vector length mismatch")
                if any(e < 0 for e in exps):
                    raise ValueError("negative exponent")
                if exps in seen:
                    raise ValueError(f"duplicate multi-index {exps}")
                seen.add(exps)
        if self.degree() < 1 and not self.allow_constant:
            raise ValueError("constant map: total degree >= 1 required")

    # -- constructors ---------------------------------------------------

    @staticmethod
    def from_terms(n, components, allow_constant=False):
        comps = tuple(
            tuple((tuple(int(e) for e in exps), complex(c)) for exps, c in comp)
            for comp in components
        )
        return PolyMap(n=n, components=comps, allow_constant=allow_constant)

    @staticmethod
    def from_coeffs_1d(coeffs):
        """1-D map from dense coefficients, low degree first."""
        terms = [((k,), complex(c)) for k, c in enumerate(coeffs) if c != 0]
        return PolyMap.from_terms(1, [terms])

    @staticmethod
    def entire_1d(node: EntireNode):
        return PolyMap(n=1, components=((),), entire=node)

    # -- structure ------------------------------------------------------

    def degree(self):
        """Maximal total degree over all components (0 for empty)."""
        degs = [sum(e) for comp in self.components for e, _ in comp]
        return max(degs) if degs else 0

    def is_polynomial(self):
        return self.entire is None

    # -- evaluation -----------------------------------------------------

    def eval(self, p):
        """Evaluate at p, shape (..., n) complex; returns the same shape."""
        p = _as_points(p, self.n)
        with np.errstate(over="ignore", invalid="ignore"):
            if self.entire is not None:
                out = _entire_eval(self.entire, p[..., 0])[..., None]
            else:
                out = _poly_eval(self, p)
        if not np.all(np.isfinite(out)) or np.any(np.abs(out) > _FINITE_LIMIT):
            raise MapOverflowError()
        return out

    def jet(self, p):
        """Value and Jacobian at p via forward-mode duals.

        Returns a Jet with value shape (..., n) and jacobian (..., n, n),
        row i holding the gradient of component i.
        """
        p = _as_points(p, self.n)
        with np.errstate(over="ignore", invalid="ignore"):
            if self.entire is not None:
                v, g = _entire_dual(self.entire, p[..., 0],
                                    np.ones_like(p[..., 0]))
                value = v[..., None]
                jac = g[..., None, None]
            else:
                value, jac = _poly_dual(self, p)
        bad = not (np.isfinite(value).all() and np.isfinite(jac).all())
        if bad or np.any(np.abs(value) > _FINITE_LIMIT):
            raise MapOverflowError()
        return Jet(value=value, jacobian=jac)

    def iterated_jet(self, p, m):
        """Value and chain-rule Jacobian of the m-th iterate at p."""
        if m < 1:
            raise ValueError("m must be >= 1")
        p = _as_points(p, self.n)
        jac = np.broadcast_to(
            np.eye(self.n, dtype=complex), p.shape[:-1] + (self.n, self.n)
        ).copy()
        x = p
        for k in range(m):
            try:
                jt = self.jet(x)
            except MapOverflowError:
                raise MapOverflowError(
                    f"numeric overflow at orbit index {k}", index=k
                ) from None
            jac = jt.jacobian @ jac
            x = jt.value
        return Jet(value=x, jacobian=jac)

    def iterate(self, p, m):
        """f^m(p) without derivative bookkeeping."""
        p = _as_points(p, self.n)
        for k in range(m):
            try:
                p = self.eval(p)
            except MapOverflowError:
                raise MapOverflowError(
                    f"numeric overflow at orbit index {k}", index=k
                ) from None
        return p

    # -- JSON round trip ------------------------------------------------

    def to_json_dict(self):
        comps = [
            [
                {"exps": list(e), "re": c.real, "im": c.imag}
                for e, c in comp
            ]
            for comp in self.components
        ]
        d = {"n": self.n, "components": comps}
        if self.entire is not None:
            d["entire"] = _entire_to_json(self.entire)
        return d

    def to_json(self):
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @staticmethod
    def from_json_dict(d):
        n = int(d["n"])
        comps = [
            [(tuple(t["exps"]), complex(t.get("re", 0.0), t.get("im", 0.0)))
             for t in comp]
            for comp in d.get("components", [[]] * n)
        ]
        entire = d.get("entire")
        if entire is not None:
            if n != 1:
                raise ValueError("entire builtins are 1-D only")
            return PolyMap.entire_1d(_entire_from_json(entire))
        return PolyMap.from_terms(n, comps)

    @staticmethod
    def from_json(s):
        return PolyMap.from_json_dict(json.loads(s))


@dataclass(frozen=True)
class Jet:
    """Map value together with the n x n Jacobian at the same point."""

    value: np.ndarray
    jacobian: np.ndarray


# ---------------------------------------------------------------------------
# dual-number kernels


def _as_points(p, n):
    p = np.asarray(p, dtype=complex)
    if p.shape == () and n == 1:
        p = p.reshape(1)
    if p.shape[-1] != n:
        raise ValueError(f"point dimension {p.shape[-1]} != map dimension {n}")
    return p


def _poly_eval(pmap, p):
    out = np.zeros_like(p)
    pows = _coord_powers(pmap, p)
    for i, comp in enumerate(pmap.components):
        acc = np.zeros(p.shape[:-1], dtype=complex)
        for exps, c in comp:
            term = np.full(p.shape[:-1], c, dtype=complex)
            for j, e in enumerate(exps):
                if e:
                    term = term * pows[j][e]
            acc += term
        out[..., i] = acc
    return out


def _coord_powers(pmap, p):
    """pows[j][e] = p_j**e for every exponent used by the map."""
    maxe = [0] * pmap.n
    for comp in pmap.components:
        for exps, _ in comp:
            for j, e in enumerate(exps):
                maxe[j] = max(maxe[j], e)
    pows = []
    for j in range(pmap.n):
        zj = p[..., j]
        table = [np.ones_like(zj), zj]
        for _ in range(2, maxe[j] + 1):
            table.append(table[-1] * zj)
        pows.append(table)
    return pows


def _poly_dual(pmap, p):
    """Forward-mode propagation: per-coordinate dual powers, then products."""
    n = pmap.n
    batch = p.shape[:-1]
    value = np.zeros(batch + (n,), dtype=complex)
    jac = np.zeros(batch + (n, n), dtype=complex)
    # dual powers per coordinate: (value, d/dz_j) of z_j**e
    pows = _coord_powers(pmap, p)
    dpows = []
    for j in range(n):
        table = [np.zeros(batch, dtype=complex), np.ones(batch, dtype=complex)]
        for e in range(2, len(pows[j])):
            # product rule on z^(e-1) * z
            table.append(table[-1] * pows[j][1] + pows[j][e - 1])
        dpows.append(table)
    for i, comp in enumerate(pmap.components):
        for exps, c in comp:
            val = np.full(batch, c, dtype=complex)
            grad = np.zeros(batch + (n,), dtype=complex)
            for j, e in enumerate(exps):
                if e == 0:
                    continue
                pv, pd = pows[j][e], dpows[j][e]
                grad = grad * pv[..., None]
                grad[..., j] += val * pd
                val = val * pv
            value[..., i] += val
            jac[..., i, :] += grad
    return value, jac


def _entire_eval(node, z):
    if node is None:
        return z
    x = _entire_eval(node.inner, z)
    if node.kind == "exp":
        return np.exp(x)
    if node.kind == "sin":
        return np.sin(x)
    acc = np.zeros_like(x)
    for c in reversed(node.coeffs):
        acc = acc * x + c
    return acc


def _entire_dual(node, z, dz):
    if node is None:
        return z, dz
    x, dx = _entire_dual(node.inner, z, dz)
    if node.kind == "exp":
        v = np.exp(x)
        return v, v * dx
    if node.kind == "sin":
        return np.sin(x), np.cos(x) * dx
    acc = np.zeros_like(x)
    dacc = np.zeros_like(x)
    for c in reversed(node.coeffs):
        dacc = dacc * x + acc
        acc = acc * x + c
    return acc, dacc * dx


def _entire_to_json(node):
    d = {"kind": node.kind}
    if node.kind == "poly":
        d["coeffs"] = [[c.real, c.imag] for c in map(complex, node.coeffs)]
    if node.inner is not None:
        d["inner"] = _entire_to_json(node.inner)
    return d


def _entire_from_json(d):
    inner = d.get("inner")
    return EntireNode(
        kind=d["kind"],
        coeffs=tuple(complex(re, im) for re, im in d.get("coeffs", [])),
        inner=_entire_from_json(inner) if inner is not None else None,
    )


# ---------------------------------------------------------------------------
# rank and escape bounds


def rank_check(pmap, p):
    """Numerical Jacobian rank (singular values above 1e-10 * sigma_max)."""
    jac = pmap.jet(p).jacobian
    sv = np.linalg.svd(jac, compute_uv=False)
    smax = sv.max() if sv.size else 0.0
    if smax == 0.0:
        return 0
    return int(np.sum(sv > 1e-10 * smax))


def escape_radius(pmap):
    """Conservative R with ||p||_inf > R  =>  ||f(p)||_inf >= 2 ||p||_inf.

    Coefficient-bound estimate: for each coordinate j, component j must
    contain a pure z_j^d term (d >= 2) dominating the rest of its terms,
    which all must have total degree <= d-1.  For the argmax coordinate
    that term then outgrows everything else once ||p||_inf is large.
    """
    if not pmap.is_polynomial():
        raise ValueError("no polynomial escape bound: entire map, supply R")
    if pmap.degree() < 2:
        raise ValueError("no polynomial escape bound")
    radii = []
    for j, comp in enumerate(pmap.components):
        lead = None  # (degree, coeff) of the dominant pure z_j power
        for exps, c in comp:
            if exps[j] == sum(exps) and exps[j] >= 2:
                if lead is None or exps[j] > lead[0]:
                    lead = (exps[j], c)
        if lead is None:
            raise ValueError(
                f"no polynomial escape bound: component {j} lacks a pure "
                f"z_{j}^d term with d >= 2"
            )
        d, cd = lead
        rest = 0.0
        for exps, c in comp:
            if (exps[j], sum(exps)) == (d, d):
                continue
            if sum(exps) > d - 1:
                raise ValueError(
                    f"no polynomial escape bound: component {j} has a "
                    f"degree-{sum(exps)} term competing with its z^{d} lead"
                )
            rest += abs(c)
        radii.append(max(1.0, (2.0 + rest) / abs(cd)))
    return float(max(radii))


# ---------------------------------------------------------------------------
# windows (boxes in the 2n real coordinates)


@dataclass(frozen=True)
class Window:
    """Closed box: one (lo, hi) interval per real coordinate, order
    (re_1, im_1, ..., re_n, im_n)."""

    bounds: tuple  # 2n pairs

    def __post_init__(self):
        if len(self.bounds) % 2 != 0 or not self.bounds:
            raise ValueError("need 2n interval bounds")
        for lo, hi in self.bounds:
            if not lo < hi:
                raise ValueError(f"degenerate interval [{lo}, {hi}]")

    @property
    def n(self):
        return len(self.bounds) // 2

    @staticmethod
    def square(n, lo, hi):
        return Window(bounds=tuple((float(lo), float(hi)) for _ in range(2 * n)))

    @staticmethod
    def from_radius(n, r, center=None):
        if center is None:
            center = [0.0] * (2 * n)
        return Window(bounds=tuple(
            (c - r, c + r) for c in center
        ))

    def reals(self, points):
        """Complex points (..., n) -> real coordinates (..., 2n)."""
        points = np.asarray(points, dtype=complex)
        out = np.empty(points.shape[:-1] + (2 * self.n,))
        out[..., 0::2] = points.real
        out[..., 1::2] = points.imag
        return out

    def to_complex(self, reals):
        reals = np.asarray(reals, dtype=float)
        return reals[..., 0::2] + 1j * reals[..., 1::2]

    def contains(self, points):
        r = self.reals(points)
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        return np.all((r >= lo) & (r <= hi), axis=-1)

    @property
    def center(self):
        return self.to_complex(np.array([(lo + hi) / 2 for lo, hi in self.bounds]))

    @property
    def widths(self):
        return np.array([hi - lo for lo, hi in self.bounds])

    def sample(self, count, seed=0):
        """Scrambled low-discrepancy sample of complex points, (count, n)."""
        from scipy.stats import qmc

        eng = qmc.Halton(d=2 * self.n, scramble=True, seed=seed)
        u = eng.random(count)
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        return self.to_complex(lo + u * (hi - lo))

    def grid_centers(self, per_axis):
        """Centers of a regular subdivision, flattened to (N, n) complex."""
        axes = []
        for lo, hi in self.bounds:
            w = (hi - lo) / per_axis
            axes.append(lo + w * (np.arange(per_axis) + 0.5))
        mesh = np.meshgrid(*axes, indexing="ij")
        r = np.stack([m.ravel() for m in mesh], axis=-1)
        return self.to_complex(r)
