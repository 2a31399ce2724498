"""Majorana polynomial, stellar constellations, and the Husimi function.

The polynomial of a state is sum_m sqrt(C(2J, J+m)) psi_m z^{J+m}; its roots,
sent through the inverse stereographic map z = tan(polar/2) e^{i azimuth},
are the 2J stars (a degree deficiency d < 2J contributes 2J - d stars at the
south pole).  Taken literally, this machinery places the constellation of a
coherent state at the mirror image (polar, azimuth + pi) of its Bloch point,
and a rotation of the state by M moves stars by diag(-1,-1,1) M diag(-1,-1,1);
the rotational-covariance test pins this convention.
"""

from dataclasses import dataclass
import cmath
import math

import numpy as np

from .errors import DomainError, RootFindingError
from .states import BlochPoint, SpinState, coherent_state

_MERGE_TOL = 1e-7          # chordal distance below which stars are one star
_COARSE_TOL = 0.25         # chordal scale above which roots are surely distinct
_DEFLATE_TOL = 1e-13       # relative size treated as an exactly-zero coefficient
_CERT_TOL = 1e-7           # multiple-root certificate tolerance
_RESIDUAL_TOL = 1e-9       # acceptance residual, relative to max |coeff|


@dataclass(frozen=True)
class MajoranaPoly:
    """Coefficients c[k] of z^k for k = 0 .. 2J."""

    j: "object"
    coeffs: np.ndarray

    def degree_capacity(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, z):
        return np.polynomial.polynomial.polyval(z, self.coeffs)


@dataclass(frozen=True)
class Star:
    point: BlochPoint
    multiplicity: int


@dataclass(frozen=True)
class Constellation:
    """Multiset of 2J stars on the unit sphere."""

    stars: tuple

    @property
    def total_multiplicity(self) -> int:
        return sum(s.multiplicity for s in self.stars)

    def expanded(self):
        """Unit vectors with multiplicity expanded, shape (2J, 3)."""
        rows = []
        for s in self.stars:
            rows.extend([s.point.unit_vector] * s.multiplicity)
        return np.array(rows)


def majorana_poly(state: SpinState) -> MajoranaPoly:
    """Binomially weighted amplitudes as polynomial coefficients."""
    n = state.j.twice_j
    coeffs = np.empty(n + 1, dtype=complex)
    for k in range(n + 1):
        # coefficient of z^k belongs to m = k - J, stored at index 2J - k
        coeffs[k] = math.sqrt(math.comb(n, k)) * state.amps[n - k]
    return MajoranaPoly(j=state.j, coeffs=coeffs)


def _polyval_and_deriv(c: np.ndarray, z: complex):
    """Horner evaluation of p and p' at a scalar z."""
    p = 0.0 + 0.0j
    dp = 0.0 + 0.0j
    for coeff in c[::-1]:
        dp = dp * z + p
        p = p * z + coeff
    return p, dp


def _deriv_coeffs(c: np.ndarray) -> np.ndarray:
    if len(c) <= 1:
        return np.zeros(1, dtype=complex)
    return c[1:] * np.arange(1, len(c))


def _aberth(c: np.ndarray, maxiter: int = 400, tol: float = 1e-14) -> np.ndarray:
    """Aberth-Ehrlich simultaneous iteration for all roots of sum c[k] z^k.

    Expects c[0] != 0 and c[-1] != 0 (callers deflate exact zeros first).
    """
    d = len(c) - 1
    if d == 0:
        return np.empty(0, dtype=complex)
    if d == 1:
        return np.array([-c[0] / c[1]])
    radius = abs(c[0] / c[-1]) ** (1.0 / d)
    radius = min(max(radius, 1e-3), 1e3)
    angles = 2.0 * math.pi * (np.arange(d) + 0.37) / d
    z = radius * np.exp(1j * angles) * (1.0 + 0.05 * np.cos(3.1 * np.arange(d)))
    dc = _deriv_coeffs(c)
    for _ in range(maxiter):
        p = np.polynomial.polynomial.polyval(z, c)
        dp = np.polynomial.polynomial.polyval(z, dc)
        dp = np.where(np.abs(dp) < 1e-300, 1e-300, dp)
        newton = p / dp
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, np.inf)
        repel = np.sum(1.0 / diff, axis=1)
        denom = 1.0 - newton * repel
        denom = np.where(np.abs(denom) < 1e-300, 1e-300, denom)
        w = newton / denom
        z = z - w
        if np.all(np.abs(w) <= tol * (1.0 + np.abs(z))):
            break
    return z


def _chordal(a: complex, b: complex) -> float:
    """Euclidean distance between the sphere images of two roots."""
    return 2.0 * abs(a - b) / math.sqrt((1.0 + abs(a) ** 2) * (1.0 + abs(b) ** 2))


def _split_by_largest_gap(roots):
    """Partition a set of roots by removing the largest edge of a minimum
    spanning tree in the chordal metric (single-linkage split)."""
    n = len(roots)
    in_tree = [0]
    edges = []
    best = {i: (_chordal(roots[0], roots[i]), 0) for i in range(1, n)}
    while len(in_tree) < n:
        i = min(best, key=lambda k: best[k][0])
        dist, parent = best.pop(i)
        edges.append((dist, parent, i))
        in_tree.append(i)
        for k in best:
            d = _chordal(roots[i], roots[k])
            if d < best[k][0]:
                best[k] = (d, i)
    cut = max(range(len(edges)), key=lambda e: edges[e][0])
    adj = {i: set() for i in range(n)}
    for e, (dist, a, b) in enumerate(edges):
        if e != cut:
            adj[a].add(b)
            adj[b].add(a)
    seen = {0}
    stack = [0]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    left = sorted(seen)
    right = sorted(set(range(n)) - seen)
    return left, right


def _eval_scale(c: np.ndarray, z: complex) -> float:
    """Magnitude bound sum |c_k| |z|^k used to normalize residuals."""
    az = abs(z)
    return float(np.polynomial.polynomial.polyval(az, np.abs(c))) + 1e-300


def _refine_multiple(c: np.ndarray, center: complex, k: int) -> complex:
    """Newton-polish the center of a multiplicity-k cluster on p^(k-1)."""
    q = c.copy()
    for _ in range(k - 1):
        q = _deriv_coeffs(q)
    z = center
    for _ in range(80):
        val, dval = _polyval_and_deriv(q, z)
        if abs(dval) < 1e-300:
            break
        step = val / dval
        z = z - step
        if abs(step) <= 1e-16 * (1.0 + abs(z)):
            break
    return z


def _certified_multiple(c: np.ndarray, center: complex, k: int) -> bool:
    """True when center is consistent with a multiplicity-k root: all
    derivatives below order k vanish to the certificate tolerance."""
    q = c.copy()
    for order in range(k):
        val = np.polynomial.polynomial.polyval(center, q)
        if abs(val) > _CERT_TOL * _eval_scale(q, center):
            return False
        q = _deriv_coeffs(q)
    return True


def _cluster_roots(c: np.ndarray, roots, indices):
    """Recursively merge a candidate cluster, certificate-checked."""
    pts = [roots[i] for i in indices]
    if len(pts) == 1:
        return [(pts[0], 1)]
    spread = max(_chordal(a, b) for a in pts for b in pts)
    center = complex(np.mean(pts))
    if spread <= _MERGE_TOL:
        return [(_refine_multiple(c, center, len(pts)), len(pts))]
    refined = _refine_multiple(c, center, len(pts))
    if _chordal(refined, center) <= 2.0 * spread and _certified_multiple(c, refined, len(pts)):
        return [(refined, len(pts))]
    left, right = _split_by_largest_gap(pts)
    out = _cluster_roots(c, pts, left)
    out.extend(_cluster_roots(c, pts, right))
    return out


def _coarse_components(roots):
    """Connected components at the coarse chordal scale."""
    n = len(roots)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(n):
        for k in range(i + 1, n):
            if _chordal(roots[i], roots[k]) <= _COARSE_TOL:
                parent[find(i)] = find(k)
    comps = {}
    for i in range(n):
        comps.setdefault(find(i), []).append(i)
    return list(comps.values())


def roots_with_multiplicity(coeffs: np.ndarray):
    """All finite roots of the polynomial with multiplicities, plus the
    number of roots at infinity (degree deficiency).

    Returns (list[(root, multiplicity)], n_at_infinity).
    """
    c = np.asarray(coeffs, dtype=complex)
    scale = np.max(np.abs(c))
    if scale == 0.0:
        raise DomainError("polynomial has no nonzero coefficients")
    c = c / scale
    n_inf = 0
    while len(c) > 1 and abs(c[-1]) <= _DEFLATE_TOL:
        c = c[:-1]
        n_inf += 1
    n_zero = 0
    while len(c) > 1 and abs(c[0]) <= _DEFLATE_TOL:
        c = c[1:]
        n_zero += 1
    result = []
    if n_zero:
        result.append((0.0 + 0.0j, n_zero))
    if len(c) > 1:
        raw = _aberth(c)
        for comp in _coarse_components(raw):
            pts = [raw[i] for i in comp]
            result.extend(_cluster_roots(c, pts, list(range(len(pts)))))
        # quality gate: scaled residual at every reported root
        worst = 0.0
        for root, mult in result:
            if root == 0.0 and n_zero:
                continue
            res = abs(np.polynomial.polynomial.polyval(root, c)) / _eval_scale(c, root)
            worst = max(worst, res)
        if worst > _RESIDUAL_TOL:
            raise RootFindingError(
                f"root residual {worst:.3e} exceeds {_RESIDUAL_TOL:.1e}",
                residual=worst)
    return result, n_inf


def constellation(state: SpinState) -> Constellation:
    """Stars of the state: polynomial roots through the stereographic map."""
    poly = majorana_poly(state)
    pairs, n_inf = roots_with_multiplicity(poly.coeffs)
    stars = []
    for root, mult in pairs:
        r = abs(root)
        stars.append(Star(BlochPoint(2.0 * math.atan(r), cmath.phase(root) % (2.0 * math.pi)),
                          mult))
    if n_inf:
        stars.append(Star(BlochPoint(math.pi, 0.0), n_inf))
    stars = _merge_coincident(stars)
    total = sum(s.multiplicity for s in stars)
    if total != state.j.twice_j:
        raise RootFindingError(
            f"recovered {total} stars for 2J = {state.j.twice_j}")
    stars.sort(key=lambda s: (s.point.polar, s.point.azimuth))
    return Constellation(stars=tuple(stars))


def _merge_coincident(stars):
    """Merge stars whose sphere points coincide to the merge tolerance."""
    merged = []
    for s in stars:
        for idx, t in enumerate(merged):
            if np.linalg.norm(s.point.unit_vector - t.point.unit_vector) <= _MERGE_TOL:
                merged[idx] = Star(t.point, t.multiplicity + s.multiplicity)
                break
        else:
            merged.append(s)
    return merged


def husimi(state: SpinState, point: BlochPoint) -> float:
    """Overlap probability |<n|psi>|^2 with the coherent state along point."""
    probe = coherent_state(state.j, point)
    return float(abs(np.vdot(probe.amps, state.amps)) ** 2)


@dataclass(frozen=True)
class HusimiGrid:
    """Regular (polar x azimuth) sampling of the Husimi function."""

    polar: np.ndarray
    azimuth: np.ndarray
    q: np.ndarray
    scaled_q: np.ndarray


def husimi_grid(state: SpinState, n_polar: int, n_azimuth: int) -> HusimiGrid:
    """Sample the Husimi function on a regular grid.

    scaled_q carries the display scaling (4 q / pi)^(3/4).
    """
    if n_polar < 2 or n_azimuth < 2:
        raise DomainError("grid needs at least 2 points per direction")
    polar = np.linspace(0.0, math.pi, n_polar)
    azimuth = np.linspace(0.0, 2.0 * math.pi, n_azimuth, endpoint=False)
    q = np.empty((n_polar, n_azimuth))
    for a, pol in enumerate(polar):
        for b, az in enumerate(azimuth):
            q[a, b] = husimi(state, BlochPoint(pol, az))
    scaled = (4.0 * q / math.pi) ** 0.75
    return HusimiGrid(polar=polar, azimuth=azimuth, q=q, scaled_q=scaled)
