"""Discretized probability measures on the real line.

A grid distribution is piecewise uniform over bins plus an optional list of
point masses.  Its CDF is therefore piecewise linear with jumps, and every
operation in this module (quantiles, equal-measure splitting, sup distances,
stochastic-dominance checks) is computed from that exact profile rather than
by sampling.  Downstream constructions rely on this measure arithmetic being
reproducible to float precision.

Conventions fixed here and used everywhere else:

* intervals and cells are half open ``[a, b)``, so every point belongs to
  exactly one cell of a partition;
* the quantile function is the generalized inverse ``Q(p) = inf {x: F(x) >= p}``
  with linear interpolation inside bins;
* normalization of user inputs is checked at ``INPUT_TOL``, internal
  construction arithmetic at ``INTERNAL_TOL``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import NonAtomicityError, ValidationError

INPUT_TOL = 1e-9
INTERNAL_TOL = 1e-12


def _as_readonly(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# GridDistribution
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GridDistribution:
    """A probability measure given by bin edges, bin masses and point masses.

    ``edges`` has one more entry than ``masses`` and is strictly increasing;
    mass inside a bin is spread uniformly.  ``atoms`` is a tuple of
    ``(location, mass)`` pairs lying inside ``[edges[0], edges[-1]]``.
    Total mass must be 1 within ``INPUT_TOL``.
    """

    edges: np.ndarray
    masses: np.ndarray
    atoms: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "edges", _as_readonly(self.edges))
        object.__setattr__(self, "masses", _as_readonly(self.masses))
        object.__setattr__(
            self, "atoms", tuple((float(a), float(m)) for a, m in self.atoms)
        )
        if self.edges.ndim != 1 or self.masses.ndim != 1:
            raise ValidationError("edges and masses must be one-dimensional")
        if len(self.edges) != len(self.masses) + 1:
            raise ValidationError("need len(edges) == len(masses) + 1")
        if len(self.edges) < 2:
            raise ValidationError("need at least one bin")
        if not np.all(np.diff(self.edges) > 0):
            raise ValidationError("edges must be strictly increasing")
        if np.any(self.masses < 0):
            raise ValidationError("bin masses must be non-negative")
        for loc, m in self.atoms:
            if m < 0:
                raise ValidationError("atom masses must be non-negative")
            if not (self.edges[0] <= loc <= self.edges[-1]):
                raise ValidationError(
                    f"atom at {loc} lies outside [{self.edges[0]}, {self.edges[-1]}]"
                )
        locs = [a for a, _ in self.atoms]
        if len(set(locs)) != len(locs):
            raise ValidationError("atom locations must be distinct")
        total = float(self.masses.sum()) + sum(m for _, m in self.atoms)
        if abs(total - 1.0) > INPUT_TOL:
            raise ValidationError(f"total mass {total} differs from 1 by more than {INPUT_TOL}")

    # -- constructors -------------------------------------------------------

    @classmethod
    def uniform(cls, lo: float, hi: float, bins: int = 1) -> "GridDistribution":
        edges = np.linspace(lo, hi, bins + 1)
        return cls(edges, np.full(bins, 1.0 / bins))

    @classmethod
    def point_mass(cls, loc: float, pad: float = 0.5) -> "GridDistribution":
        return cls(np.array([loc - pad, loc + pad]), np.array([0.0]), ((loc, 1.0),))

    @classmethod
    def from_atoms(
        cls, atoms: Sequence[tuple[float, float]], pad: float = 0.5
    ) -> "GridDistribution":
        locs = [a for a, _ in atoms]
        lo, hi = min(locs) - pad, max(locs) + pad
        return cls(np.array([lo, hi]), np.array([0.0]), tuple(atoms))

    # -- exact CDF profile --------------------------------------------------

    @cached_property
    def _profile(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Breakpoints ``B`` with left/right CDF values ``CL``/``CR``.

        Between consecutive breakpoints the CDF is linear from ``CR[k]`` to
        ``CL[k+1]``; at a breakpoint it jumps from ``CL[k]`` to ``CR[k]``
        (atoms only).
        """
        atom_at = {loc: m for loc, m in self.atoms}
        locs = np.unique(np.concatenate([self.edges, np.array(sorted(atom_at))]))
        widths = np.diff(self.edges)
        cl = np.empty(len(locs))
        cr = np.empty(len(locs))
        cum = 0.0
        for k, x in enumerate(locs):
            cl[k] = cum
            cum += atom_at.get(float(x), atom_at.get(x, 0.0))
            cr[k] = cum
            if k + 1 < len(locs):
                b = int(np.searchsorted(self.edges, x, side="right")) - 1
                b = min(max(b, 0), len(self.masses) - 1)
                piece = (locs[k + 1] - x) / widths[b] * self.masses[b]
                cum += piece
        return locs, cl, cr

    def cdf(self, x) -> np.ndarray | float:
        """P(X <= x), right-continuous."""
        return self._cdf_eval(x, left=False)

    def cdf_left(self, x) -> np.ndarray | float:
        """P(X < x)."""
        return self._cdf_eval(x, left=True)

    def _cdf_eval(self, x, left: bool):
        B, CL, CR = self._profile
        xs = np.asarray(x, dtype=float)
        scalar = xs.ndim == 0
        xs = np.atleast_1d(xs)
        out = np.empty_like(xs)
        below = xs < B[0]
        above = xs >= B[-1]
        out[below] = 0.0
        out[above] = CR[-1] if not left else np.where(xs[above] > B[-1], CR[-1], CL[-1])
        mid = ~below & ~above
        if np.any(mid):
            k = np.searchsorted(B, xs[mid], side="right") - 1
            at_break = xs[mid] == B[k]
            base = np.where(at_break, CL[k] if left else CR[k], 0.0)
            frac = (xs[mid] - B[k]) / (B[k + 1] - B[k])
            interp = CR[k] + frac * (CL[k + 1] - CR[k])
            out[mid] = np.where(at_break, base, interp)
        return float(out[0]) if scalar else out

    def quantile(self, p) -> np.ndarray | float:
        """Generalized inverse CDF, ``inf {x: F(x) >= p}``, linear in bins."""
        return self._quantile_eval(p, strict=False)

    def quantile_right(self, p) -> np.ndarray | float:
        """Right-continuous version ``inf {x: F(x) > p}``."""
        return self._quantile_eval(p, strict=True)

    def _quantile_eval(self, p, strict: bool):
        B, CL, CR = self._profile
        ps = np.asarray(p, dtype=float)
        scalar = ps.ndim == 0
        ps = np.atleast_1d(ps).copy()
        if np.any(ps < -INPUT_TOL) or np.any(ps > 1.0 + INPUT_TOL):
            raise ValidationError("probability level outside [0, 1]")
        np.clip(ps, 0.0, CR[-1], out=ps)
        lo, hi = self.support_bounds()
        out = np.empty_like(ps)
        side = "right" if strict else "left"
        k = np.searchsorted(CR, ps, side=side)
        k = np.minimum(k, len(B) - 1)
        # jump at B[k] covers p when CL[k] < p <= CR[k] (or <= for strict)
        if strict:
            at_jump = (CL[k] <= ps) & (ps < CR[k])
        else:
            at_jump = (CL[k] < ps) & (ps <= CR[k])
        out[at_jump] = B[k][at_jump]
        rest = ~at_jump
        if np.any(rest):
            kk = k[rest]
            prev = np.maximum(kk - 1, 0)
            denom = CL[kk] - CR[prev]
            safe = denom > 0
            frac = np.zeros_like(denom)
            frac[safe] = (ps[rest][safe] - CR[prev][safe]) / denom[safe]
            vals = B[prev] + frac * (B[kk] - B[prev])
            vals[~safe] = B[kk][~safe]
            out[rest] = vals
        out[ps <= 0.0] = lo
        return float(out[0]) if scalar else out

    # -- support ------------------------------------------------------------

    def support_intervals(self) -> list[tuple[float, float]]:
        """Maximal closed intervals carrying positive mass (atoms are points)."""
        B, CL, CR = self._profile
        raw: list[tuple[float, float]] = []
        for k in range(len(B) - 1):
            if CL[k + 1] > CR[k]:
                raw.append((float(B[k]), float(B[k + 1])))
        for k in range(len(B)):
            if CR[k] > CL[k]:
                raw.append((float(B[k]), float(B[k])))
        if not raw:
            raise ValidationError("distribution has empty support")
        raw.sort()
        merged = [raw[0]]
        for a, b in raw[1:]:
            la, lb = merged[-1]
            if a <= lb:
                merged[-1] = (la, max(lb, b))
            else:
                merged.append((a, b))
        return merged

    def support_bounds(self) -> tuple[float, float]:
        iv = self.support_intervals()
        return iv[0][0], iv[-1][1]

    def measure_of(self, mset: "MeasurableSet") -> float:
        """Mass of a finite union of half-open intervals."""
        return float(
            sum(self.cdf_left(b) - self.cdf_left(a) for a, b in mset.intervals)
        )

    # -- serialization ------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "edges": [float(e) for e in self.edges],
            "masses": [float(m) for m in self.masses],
            "atoms": [[a, m] for a, m in self.atoms],
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "GridDistribution":
        try:
            return cls(
                np.asarray(obj["edges"], dtype=float),
                np.asarray(obj["masses"], dtype=float),
                tuple((float(a), float(m)) for a, m in obj.get("atoms", [])),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed distribution object: {exc}") from exc

    def __repr__(self):
        return (
            f"GridDistribution({len(self.masses)} bins on "
            f"[{self.edges[0]:g}, {self.edges[-1]:g}], {len(self.atoms)} atoms)"
        )


# ---------------------------------------------------------------------------
# MeasurableSet
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MeasurableSet:
    """Finite disjoint union of half-open intervals ``[a, b)``.

    Intervals are normalized on construction: sorted, empties dropped,
    touching pieces merged.  Overlaps are rejected.
    """

    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pieces = sorted((float(a), float(b)) for a, b in self.intervals if b > a)
        for (a1, b1), (a2, b2) in zip(pieces, pieces[1:]):
            if a2 < b1:
                raise ValidationError("intervals overlap")
        merged: list[tuple[float, float]] = []
        for a, b in pieces:
            if merged and a == merged[-1][1]:
                merged[-1] = (merged[-1][0], b)
            else:
                merged.append((a, b))
        object.__setattr__(self, "intervals", tuple(merged))

    @classmethod
    def interval(cls, a: float, b: float) -> "MeasurableSet":
        return cls(((a, b),))

    def is_empty(self) -> bool:
        return not self.intervals

    def contains(self, x: float) -> bool:
        return any(a <= x < b for a, b in self.intervals)

    def bounds(self) -> tuple[float, float]:
        if self.is_empty():
            raise ValidationError("empty set has no bounds")
        return self.intervals[0][0], self.intervals[-1][1]

    def union(self, other: "MeasurableSet") -> "MeasurableSet":
        return MeasurableSet(self.intervals + other.intervals)

    def intersect_interval(self, lo: float, hi: float) -> "MeasurableSet":
        out = [(max(a, lo), min(b, hi)) for a, b in self.intervals]
        return MeasurableSet(tuple(p for p in out if p[1] > p[0]))

    def split_at(self, x: float) -> tuple["MeasurableSet", "MeasurableSet"]:
        """Left part ``set ∩ [-inf, x)`` and right part ``set ∩ [x, +inf)``."""
        left, right = [], []
        for a, b in self.intervals:
            if b <= x:
                left.append((a, b))
            elif a >= x:
                right.append((a, b))
            else:
                left.append((a, x))
                right.append((x, b))
        return MeasurableSet(tuple(left)), MeasurableSet(tuple(right))


# ---------------------------------------------------------------------------
# Joint laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Conditional2D:
    """A 2-D grid measure over (Y, X): bin edges per axis and a mass matrix.

    ``mass[i, j]`` is the probability of the cell ``y_bin i x x_bin j``; the
    matrix sums to 1 within ``INPUT_TOL``.
    """

    y_edges: np.ndarray
    x_edges: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y_edges", _as_readonly(self.y_edges))
        object.__setattr__(self, "x_edges", _as_readonly(self.x_edges))
        object.__setattr__(self, "mass", _as_readonly(self.mass))
        if self.mass.ndim != 2:
            raise ValidationError("mass must be a matrix")
        ny, nx = self.mass.shape
        if len(self.y_edges) != ny + 1 or len(self.x_edges) != nx + 1:
            raise ValidationError("edge lengths do not match the mass matrix")
        if not (np.all(np.diff(self.y_edges) > 0) and np.all(np.diff(self.x_edges) > 0)):
            raise ValidationError("edges must be strictly increasing")
        if np.any(self.mass < 0):
            raise ValidationError("cell masses must be non-negative")
        if abs(float(self.mass.sum()) - 1.0) > INPUT_TOL:
            raise ValidationError("conditional mass matrix must sum to 1")

    def x_marginal(self) -> GridDistribution:
        return GridDistribution(self.x_edges, self.mass.sum(axis=0))

    def y_marginal(self) -> GridDistribution:
        return GridDistribution(self.y_edges, self.mass.sum(axis=1))

    def to_json_dict(self) -> dict:
        return {
            "y_edges": [float(e) for e in self.y_edges],
            "x_edges": [float(e) for e in self.x_edges],
            "mass": [[float(v) for v in row] for row in self.mass],
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "Conditional2D":
        try:
            return cls(
                np.asarray(obj["y_edges"], dtype=float),
                np.asarray(obj["x_edges"], dtype=float),
                np.asarray(obj["mass"], dtype=float),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed conditional object: {exc}") from exc


@dataclass(frozen=True)
class Site:
    """One z location carrying a conditional: a pz bin or a pz atom."""

    kind: str  # "bin" or "atom"
    z_value: float
    lo: float
    hi: float
    mass: float


def sites_of(pz: GridDistribution, z_grid: Sequence[float]) -> list[Site]:
    """Pair each z-grid value with the pz bin or atom it belongs to.

    Every positive-mass bin and every atom must be matched by exactly one grid
    value; grid values must be strictly increasing.
    """
    z_grid = [float(z) for z in z_grid]
    if any(b <= a for a, b in zip(z_grid, z_grid[1:])):
        raise ValidationError("z_grid must be strictly increasing")
    atom_locs = {loc: m for loc, m in pz.atoms}
    used_bins: set[int] = set()
    used_atoms: set[float] = set()
    sites: list[Site] = []
    for z in z_grid:
        if z in atom_locs:
            sites.append(Site("atom", z, z, z, atom_locs[z]))
            used_atoms.add(z)
            continue
        b = int(np.searchsorted(pz.edges, z, side="right")) - 1
        if not (0 <= b < len(pz.masses)):
            raise ValidationError(f"z value {z} outside the pz grid")
        if b in used_bins:
            raise ValidationError(f"two z values fall in the same pz bin ({z})")
        used_bins.add(b)
        sites.append(
            Site("bin", z, float(pz.edges[b]), float(pz.edges[b + 1]), float(pz.masses[b]))
        )
    for b, m in enumerate(pz.masses):
        if m > 0 and b not in used_bins:
            raise ValidationError(f"pz bin {b} has positive mass but no z value")
    for loc in atom_locs:
        if loc not in used_atoms:
            raise ValidationError(f"pz atom at {loc} has no z value")
    return sites


@dataclass(frozen=True, eq=False)
class JointLaw:
    """The observed object: P_{Y,X|Z=z} for each z-grid site plus P_Z."""

    z_grid: np.ndarray
    pz: GridDistribution
    conditionals: tuple[Conditional2D, ...]

    def __post_init__(self):
        object.__setattr__(self, "z_grid", _as_readonly(self.z_grid))
        object.__setattr__(self, "conditionals", tuple(self.conditionals))
        if len(self.z_grid) != len(self.conditionals):
            raise ValidationError("need one conditional per z value")
        if len(self.z_grid) == 0:
            raise ValidationError("empty z grid")
        sites_of(self.pz, self.z_grid)  # validates the pairing

    @cached_property
    def sites(self) -> list[Site]:
        return sites_of(self.pz, self.z_grid)

    def x_marginals(self) -> list[GridDistribution]:
        return [c.x_marginal() for c in self.conditionals]

    def y_marginals(self) -> list[GridDistribution]:
        return [c.y_marginal() for c in self.conditionals]

    def to_json_dict(self) -> dict:
        return {
            "z_grid": [float(z) for z in self.z_grid],
            "pz": self.pz.to_json_dict(),
            "conditionals": [c.to_json_dict() for c in self.conditionals],
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "JointLaw":
        try:
            return cls(
                np.asarray(obj["z_grid"], dtype=float),
                GridDistribution.from_json_dict(obj["pz"]),
                tuple(Conditional2D.from_json_dict(c) for c in obj["conditionals"]),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed joint-law object: {exc}") from exc


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    """A transport plan between two discrete laws, marginals checked at INPUT_TOL."""

    row_marginal: np.ndarray
    col_marginal: np.ndarray
    plan: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_marginal", _as_readonly(self.row_marginal))
        object.__setattr__(self, "col_marginal", _as_readonly(self.col_marginal))
        object.__setattr__(self, "plan", _as_readonly(self.plan))
        if self.plan.shape != (len(self.row_marginal), len(self.col_marginal)):
            raise ValidationError("plan shape does not match marginals")
        if np.any(self.plan < -INPUT_TOL):
            raise ValidationError("plan entries must be non-negative")
        if np.max(np.abs(self.plan.sum(axis=1) - self.row_marginal)) > INPUT_TOL:
            raise ValidationError("row sums do not match the row marginal")
        if np.max(np.abs(self.plan.sum(axis=0) - self.col_marginal)) > INPUT_TOL:
            raise ValidationError("column sums do not match the column marginal")


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def quantile(dist: GridDistribution, p: float) -> float:
    """Generalized inverse CDF at level ``p``; rejects p outside [0, 1]."""
    return dist.quantile(p)


def split_equal_measure(
    dist: GridDistribution, mset: MeasurableSet
) -> tuple[MeasurableSet, MeasurableSet]:
    """Split ``mset`` into two pieces of equal ``dist`` measure.

    The split point is found by accumulating measure left to right, bisecting
    inside a bin when the half-measure point falls there.  Raises
    ``NonAtomicityError`` when a point mass intersects the set, since an atom
    can make an exact half impossible.
    """
    for loc, m in dist.atoms:
        if m > 0 and mset.contains(loc):
            raise NonAtomicityError(
                f"atom at {loc} intersects the set; equal split not guaranteed"
            )
    total = dist.measure_of(mset)
    if total <= 0:
        raise ValidationError("set has zero measure; nothing to split")
    target = total / 2.0
    cum = 0.0
    for a, b in mset.intervals:
        piece = dist.cdf_left(b) - dist.cdf_left(a)
        if cum + piece < target:
            cum += piece
            continue
        # half-measure point lands inside [a, b): invert the CDF there
        p_star = dist.cdf_left(a) + (target - cum)
        x_star = float(dist.quantile(min(p_star, 1.0)))
        x_star = min(max(x_star, a), b)
        return mset.split_at(x_star)
    # fell through on float dust: split at the far end
    return mset.split_at(mset.intervals[-1][1])


def _eval_points(a: GridDistribution, b: GridDistribution) -> np.ndarray:
    return np.unique(np.concatenate([a._profile[0], b._profile[0]]))


def cdf_distance_sup(a: GridDistribution, b: GridDistribution) -> float:
    """Kolmogorov-Smirnov distance ``sup_x |F_a(x) - F_b(x)|``, exact.

    Both CDFs are piecewise linear, so the sup is attained at a breakpoint of
    either, approached from the left or the right.
    """
    xs = _eval_points(a, b)
    right = np.max(np.abs(a.cdf(xs) - b.cdf(xs)))
    left = np.max(np.abs(a.cdf_left(xs) - b.cdf_left(xs)))
    return float(max(right, left))


def hausdorff_support_distance(a: GridDistribution, b: GridDistribution) -> float:
    """Hausdorff distance between the positive-mass supports."""

    def dist_to(x: float, intervals: list[tuple[float, float]]) -> float:
        return min(max(lo - x, x - hi, 0.0) for lo, hi in intervals)

    def directed(src: list[tuple[float, float]], dst: list[tuple[float, float]]) -> float:
        candidates = [p for lo, hi in src for p in (lo, hi)]
        # interior maxima of dist(., dst) sit at midpoints of dst gaps
        for (_, h1), (l2, _) in zip(dst, dst[1:]):
            mid = 0.5 * (h1 + l2)
            if any(lo <= mid <= hi for lo, hi in src):
                candidates.append(mid)
        return max(dist_to(x, dst) for x in candidates)

    sa, sb = a.support_intervals(), b.support_intervals()
    return max(directed(sa, sb), directed(sb, sa))


def _quantile_levels(a: GridDistribution, b: GridDistribution) -> np.ndarray:
    cums = []
    for d in (a, b):
        _, cl, cr = d._profile
        cums.append(cl)
        cums.append(cr)
    ps = np.unique(np.concatenate(cums))
    return ps[(ps > 0.0) & (ps <= 1.0)]


def winf_distance(a: GridDistribution, b: GridDistribution) -> float:
    """Sup over probability levels of the quantile gap ``|Q_a(p) - Q_b(p)|``.

    This equals the infimum over couplings of the almost-sure bound on
    ``|X_a - X_b|`` in one dimension, attained by the comonotone coupling.
    Quantile functions are piecewise linear between the merged CDF
    breakpoints, so checking both one-sided limits at each breakpoint is
    exact.
    """
    ps = _quantile_levels(a, b)
    gap_left = np.max(np.abs(a.quantile(ps) - b.quantile(ps)))
    # right limits, including p -> 0+ where Q+ is the support infimum
    ps_r = np.concatenate([[0.0], ps])
    gap_right = np.max(np.abs(a.quantile_right(ps_r) - b.quantile_right(ps_r)))
    return float(max(gap_left, gap_right))


def fosd_check(lower: GridDistribution, upper: GridDistribution, tol: float) -> bool:
    """True iff ``upper`` first-order stochastically dominates ``lower``.

    Checked as ``F_upper(x) <= F_lower(x) + tol`` at every breakpoint of
    either CDF, from both sides.
    """
    xs = _eval_points(lower, upper)
    if np.any(upper.cdf(xs) > lower.cdf(xs) + tol):
        return False
    if np.any(upper.cdf_left(xs) > lower.cdf_left(xs) + tol):
        return False
    return True


def fosd_violation(lower: GridDistribution, upper: GridDistribution) -> float:
    """Largest violation ``max_x (F_upper(x) - F_lower(x))``, 0 when dominated."""
    xs = _eval_points(lower, upper)
    v = max(
        float(np.max(upper.cdf(xs) - lower.cdf(xs))),
        float(np.max(upper.cdf_left(xs) - lower.cdf_left(xs))),
    )
    return max(v, 0.0)
