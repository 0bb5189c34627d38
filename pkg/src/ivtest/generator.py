"""Construction of one-to-one first-stage maps on grid measures.

The object built here is a map ``g(z, u)`` that transports a uniform latent
``u`` onto the conditional treatment law of every z site while being
injective across z at a chosen cell resolution.  The mechanism: the latent
interval ``[0, 1)`` is cut into ``K**depth`` equal cells, each z cell of an
iteratively halved z partition carries a permutation of those cells, and the
per-site quantile map is applied after the permutation.  Permuting
equal-mass cells never changes the pushforward, so every depth replicates
the input conditionals exactly; what changes with depth is how much z-pair
mass still shares an identical map.  Halving continues breadth first on
every z cell, so the colliding mass shrinks by the cell arity at each level.

With ``k`` point masses in the z law, the latent interval is cut into
``(k+2)**depth`` cells instead; atoms receive cyclic within-block shifts and
the two halves of the continuum receive the two remaining shifts, which
separates all top-level groups after one level.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import (
    MarginalMismatchError,
    NonAtomicityError,
    NonInvertibleError,
    ValidationError,
)
from .measures import (
    Conditional2D,
    GridDistribution,
    JointLaw,
    MeasurableSet,
    Site,
    sites_of,
    split_equal_measure,
)

INTERNAL_TOL = 1e-12


def _address_str(address: tuple[int, ...]) -> str:
    return "".join(str(s) for s in address)


@dataclass(frozen=True, eq=False)
class ZCell:
    """A leaf of the z partition: either a set of continuum z values or one atom.

    ``perm`` maps latent-cell index to image-cell index at the generator's
    final resolution.
    """

    address: tuple[int, ...]
    perm: np.ndarray
    z_set: MeasurableSet | None = None
    atom: float | None = None

    def __post_init__(self):
        perm = np.array(self.perm, dtype=np.int64)
        perm.setflags(write=False)
        object.__setattr__(self, "perm", perm)
        if (self.z_set is None) == (self.atom is None):
            raise ValidationError("cell must hold either a z set or an atom")
        if sorted(perm.tolist()) != list(range(len(perm))):
            raise ValidationError("perm must be a permutation of cell indices")

    @property
    def address_str(self) -> str:
        return _address_str(self.address)

    def contains(self, z: float) -> bool:
        if self.atom is not None:
            return z == self.atom
        return self.z_set.contains(z)


@dataclass(frozen=True, eq=False)
class PartitionNode:
    """One node of the iterative z/u partition.

    ``u_cells`` is the current equal-measure decomposition of the latent
    interval at this node's level; ``x_cells`` is its image decomposition
    under the representative conditional, each of conditional measure
    ``arity**-level``.
    """

    address: tuple[int, ...]
    z_set: MeasurableSet
    level: int
    arity: int
    rep_marginal: GridDistribution
    children: tuple["PartitionNode", ...] = ()

    @property
    def u_cells(self) -> tuple[MeasurableSet, ...]:
        n = self.arity**self.level
        return tuple(
            MeasurableSet.interval(j / n, (j + 1) / n) for j in range(n)
        )

    @property
    def x_cells(self) -> tuple[MeasurableSet, ...]:
        n = self.arity**self.level
        qs = self.rep_marginal.quantile(np.arange(n + 1) / n)
        return tuple(
            MeasurableSet.interval(float(qs[j]), float(qs[j + 1])) for j in range(n)
        )


@dataclass(frozen=True, eq=False)
class GeneratorMap:
    """A first-stage map: per-site quantile transforms behind cell permutations."""

    depth: int
    arity: int
    pz: GridDistribution
    z_grid: np.ndarray
    marginals: tuple[GridDistribution, ...]
    cells: tuple[ZCell, ...]
    root: PartitionNode | None = None

    def __post_init__(self):
        zg = np.array(self.z_grid, dtype=float)
        zg.setflags(write=False)
        object.__setattr__(self, "z_grid", zg)
        object.__setattr__(self, "marginals", tuple(self.marginals))
        object.__setattr__(self, "cells", tuple(self.cells))
        n = self.n_u_cells
        for c in self.cells:
            if len(c.perm) != n:
                raise ValidationError("cell permutation length does not match depth")

    @property
    def n_u_cells(self) -> int:
        return self.arity**self.depth

    @cached_property
    def sites(self) -> list[Site]:
        return sites_of(self.pz, self.z_grid)

    def site_index(self, z: float) -> int:
        for i, s in enumerate(self.sites):
            if s.kind == "atom" and z == s.z_value:
                return i
        for i, s in enumerate(self.sites):
            if s.kind == "bin" and s.lo <= z < s.hi:
                return i
        raise ValidationError(f"z value {z} carries no conditional")

    def cell_of(self, z: float) -> ZCell:
        for c in self.cells:
            if c.atom is not None and z == c.atom:
                return c
        for c in self.cells:
            if c.z_set is not None and c.z_set.contains(z):
                return c
        raise ValidationError(f"z value {z} lies outside every cell")

    def permuted_level(self, perm: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Relocate latent levels within their cells according to ``perm``."""
        n = self.n_u_cells
        idx = np.minimum((u * n).astype(np.int64), n - 1)
        offset = u * n - idx
        return (perm[idx] + offset) / n

    def __call__(self, z: float, u) -> np.ndarray | float:
        us = np.atleast_1d(np.asarray(u, dtype=float))
        cell = self.cell_of(z)
        marg = self.marginals[self.site_index(z)]
        out = marg.quantile(self.permuted_level(cell.perm, us))
        return float(out[0]) if np.asarray(u).ndim == 0 else out

    # -- serialization ------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "depth": self.depth,
            "cells": [
                {"z_addr": c.address_str, "perm": [int(v) for v in c.perm]}
                for c in self.cells
            ],
        }

    @classmethod
    def from_json_dict(
        cls,
        obj: dict,
        marginals: Sequence[GridDistribution],
        pz: GridDistribution,
        z_grid: Sequence[float],
    ) -> "GeneratorMap":
        """Rebuild from the wire format; cell geometry is recomputed from pz."""
        try:
            depth = int(obj["depth"])
            perms = {c["z_addr"]: np.asarray(c["perm"], dtype=np.int64) for c in obj["cells"]}
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed generator object: {exc}") from exc
        rebuilt = _build(marginals, pz, z_grid, depth)
        if {c.address_str for c in rebuilt.cells} != set(perms):
            raise ValidationError("cell addresses do not match this pz")
        cells = tuple(
            ZCell(c.address, perms[c.address_str], z_set=c.z_set, atom=c.atom)
            for c in rebuilt.cells
        )
        return cls(depth, rebuilt.arity, pz, rebuilt.z_grid, rebuilt.marginals, cells, rebuilt.root)


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------


def _refine_and_shift(perm: np.ndarray, arity: int, shift: int) -> np.ndarray:
    """One level of the iteration applied to an inherited permutation.

    Each coarse cell splits into ``arity`` children preserving within-block
    order; the new level then rotates images within every image block by
    ``shift``.  Shift 0 keeps the inherited map.
    """
    k = arity
    j = np.repeat(perm, k) * k  # image block of each refined index
    r = np.tile(np.arange(k), len(perm))
    return j + (r + shift) % k


def _continuum_support(pz: GridDistribution) -> MeasurableSet:
    ivs = []
    atom_locs = {loc for loc, m in pz.atoms if m > 0}
    for k, m in enumerate(pz.masses):
        if m > 0:
            ivs.append((float(pz.edges[k]), float(pz.edges[k + 1])))
    s = MeasurableSet(tuple(ivs))
    for loc in sorted(atom_locs):
        left, right = s.split_at(loc)
        # drop the atom point itself from the continuum set
        right = right.intersect_interval(np.nextafter(loc, np.inf), np.inf)
        s = left.union(right)
    return s


def _already_one_to_one(
    marginals: Sequence[GridDistribution], sites: Sequence[Site], n_cells: int
) -> bool:
    """True when no two atom sites share an image cell and no continuum exists.

    A continuum site always collides with itself (nearby z share the map), so
    the shortcut only applies to purely atomic z laws.
    """
    if any(s.kind == "bin" and s.mass > 0 for s in sites):
        return False
    grids = np.arange(n_cells + 1) / n_cells
    images = [m.quantile(grids) for m in marginals]
    for i in range(len(images)):
        for j in range(i + 1, len(images)):
            same = (images[i][:-1] == images[j][:-1]) & (images[i][1:] == images[j][1:])
            if np.any(same):
                return False
    return True


def _build(
    marginals: Sequence[GridDistribution],
    pz: GridDistribution,
    z_grid: Sequence[float],
    depth: int,
) -> GeneratorMap:
    if depth < 0:
        raise ValidationError("depth must be non-negative")
    sites = sites_of(pz, z_grid)
    if len(marginals) != len(sites):
        raise ValidationError("need one x-marginal per z site")
    for m in marginals:
        if any(mass > 0 for _, mass in m.atoms):
            raise NonAtomicityError("conditional x-marginals must be non-atomic")
    k = sum(1 for s in sites if s.kind == "atom")
    arity = k + 2 if k > 0 else 2
    n_cells = arity**depth

    atom_sites = [(i, s) for i, s in enumerate(sites) if s.kind == "atom"]
    cont_mass = sum(s.mass for s in sites if s.kind == "bin")

    identity = np.arange(n_cells, dtype=np.int64)
    if _already_one_to_one(marginals, sites, max(n_cells, 1)):
        # purely atomic z with pairwise distinct image cells: keep the
        # base map, every permutation is the identity
        cells = [
            ZCell((j + 1,), identity.copy(), atom=s.z_value)
            for j, (_, s) in enumerate(atom_sites)
        ]
        return GeneratorMap(depth, arity, pz, z_grid, tuple(marginals), tuple(cells), None)

    # atoms: atom j applies a within-block rotation by j at every level
    atom_cells = []
    for j, (_, s) in enumerate(atom_sites):
        perm = np.zeros(1, dtype=np.int64)
        for _ in range(depth):
            perm = _refine_and_shift(perm, arity, j)
        atom_cells.append(ZCell((j + 1,), perm, atom=s.z_value))

    # continuum: breadth-first halving; the first child takes shift k+1,
    # the second keeps the inherited map via shift k
    cont_cells: list[ZCell] = []
    root = None
    if cont_mass > 0:
        support = _continuum_support(pz)
        cont_bins = GridDistribution(
            pz.edges, np.asarray(pz.masses) / cont_mass if cont_mass != 1.0 else pz.masses
        )
        rep = marginals[0]

        def grow(address, z_set, perm, level):
            if level == depth:
                cont_cells.append(ZCell(address, perm, z_set=z_set))
                return PartitionNode(address, z_set, level, arity, rep)
            left, right = split_equal_measure(cont_bins, z_set)
            kids = (
                grow(address + (k + 1,), left, _refine_and_shift(perm, arity, k + 1), level + 1),
                grow(address + (k + 2,), right, _refine_and_shift(perm, arity, k), level + 1),
            )
            return PartitionNode(address, z_set, level, arity, rep, kids)

        root = grow((), support, np.zeros(1, dtype=np.int64), 0)

    cells = tuple(atom_cells + cont_cells)
    return GeneratorMap(depth, arity, pz, z_grid, tuple(marginals), cells, root)


def build_generator(
    marginals: Sequence[GridDistribution],
    pz: GridDistribution,
    z_grid: Sequence[float],
    depth: int,
) -> GeneratorMap:
    """Build the injectivity-improving map for a non-atomic z law.

    ``marginals`` are the conditional x-marginals in z-grid order.  Raises
    ``NonAtomicityError`` when pz carries point masses (use
    :func:`build_generator_with_atoms`) or when a marginal does.
    """
    if any(m > 0 for _, m in pz.atoms):
        raise NonAtomicityError("pz has atoms; use build_generator_with_atoms")
    return _build(marginals, pz, z_grid, depth)


def build_generator_with_atoms(
    marginals: Sequence[GridDistribution],
    pz: GridDistribution,
    z_grid: Sequence[float],
    depth: int,
) -> GeneratorMap:
    """Variant for a z law with finitely many atoms (``pz.atoms``).

    With k atoms the latent interval is cut ``(k+2)``-fold per level; atom j
    rotates images within blocks by j, the continuum halves take the two
    remaining rotations.  With k = 0 this is exactly :func:`build_generator`.
    """
    return _build(marginals, pz, z_grid, depth)


# ---------------------------------------------------------------------------
# Collision accounting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Piece:
    """Largest unit on which the map is a single function: one site inside one cell."""

    cell_idx: int
    site_idx: int
    weight: float
    is_atom: bool


def _pieces(gen: GeneratorMap) -> list[_Piece]:
    out = []
    for ci, cell in enumerate(gen.cells):
        if cell.atom is not None:
            si = gen.site_index(cell.atom)
            out.append(_Piece(ci, si, gen.sites[si].mass, True))
            continue
        for si, site in enumerate(gen.sites):
            if site.kind != "bin":
                continue
            w = gen.pz.measure_of(cell.z_set.intersect_interval(site.lo, site.hi))
            if w > 0:
                out.append(_Piece(ci, si, w, False))
    return out


def _image_codes(gen: GeneratorMap, pieces: list[_Piece], u_resolution: int) -> np.ndarray:
    """Integer code of the image cell interval for each (piece, u point).

    Two entries get the same code iff the image intervals are identical as
    real intervals, which is the cell-resolution notion of collision.
    """
    n = gen.n_u_cells
    t = (np.arange(u_resolution) + 0.5) / u_resolution
    ucell = np.minimum((t * n).astype(np.int64), n - 1)
    grid = np.arange(n + 1) / n
    qs = {si: gen.marginals[si].quantile(grid) for si in {p.site_idx for p in pieces}}
    lo = np.empty((len(pieces), u_resolution))
    hi = np.empty((len(pieces), u_resolution))
    for r, p in enumerate(pieces):
        mapped = gen.cells[p.cell_idx].perm[ucell]
        lo[r] = qs[p.site_idx][mapped]
        hi[r] = qs[p.site_idx][mapped + 1]
    flat = np.stack([lo.ravel(), hi.ravel()], axis=1)
    _, codes = np.unique(flat, axis=0, return_inverse=True)
    return codes.reshape(len(pieces), u_resolution).astype(np.int32)


def collision_fraction(
    gen: GeneratorMap,
    z_pairs: int = 4096,
    u_resolution: int | None = None,
    seed: int = 0,
) -> float:
    """Probability mass of (z_i, z_j, u) triples on which the map is not one-to-one.

    z_i and z_j are independent draws from pz; u is scanned on a regular grid
    of ``u_resolution`` points (defaulting to one per latent cell, which makes
    the u average exact).  When the full set of piece pairs fits inside the
    ``z_pairs`` budget the pair expectation is enumerated exactly; otherwise
    pairs are Monte Carlo sampled, deterministically in ``seed``.  A draw of
    the same atom twice gives z_i = z_j and never counts as a collision.
    """
    pieces = _pieces(gen)
    res = u_resolution or gen.n_u_cells
    codes = _image_codes(gen, pieces, res)
    w = np.array([p.weight for p in pieces])
    self_collides = np.array([not p.is_atom for p in pieces], dtype=float)
    P = len(pieces)
    if P * P <= max(z_pairs, P):
        total = 0.0
        for i in range(P):
            agree = (codes == codes[i]).mean(axis=1)
            total += w[i] * float(agree @ w)
            # replace the self term: full collision for continuum, none for atoms
            total += w[i] * w[i] * (self_collides[i] - float(agree[i]))
        return float(total)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xC0111DE)))
    probs = w / w.sum()
    ii = rng.choice(P, size=z_pairs, p=probs)
    jj = rng.choice(P, size=z_pairs, p=probs)
    vals = (codes[ii] == codes[jj]).mean(axis=1)
    same = ii == jj
    vals[same] = self_collides[ii[same]]
    return float(vals.mean())


def group_collision_matrix(
    gen: GeneratorMap, u_resolution: int | None = None
) -> tuple[list[str], np.ndarray]:
    """Collision fraction between every pair of top-level z groups, exact.

    Entry (g, h) is the u fraction on which groups g and h share identical
    image cells, weighted over the piece pairs of the two groups.  The
    diagonal uses the same-z convention as :func:`collision_fraction`.
    """
    pieces = _pieces(gen)
    res = u_resolution or gen.n_u_cells
    codes = _image_codes(gen, pieces, res)
    labels = sorted({_address_str(gen.cells[p.cell_idx].address[:1]) for p in pieces})
    index = {lab: g for g, lab in enumerate(labels)}
    G = len(labels)
    mass = np.zeros((G, G))
    hits = np.zeros((G, G))
    for a, pa in enumerate(pieces):
        ga = index[_address_str(gen.cells[pa.cell_idx].address[:1])]
        for b, pb in enumerate(pieces):
            gb = index[_address_str(gen.cells[pb.cell_idx].address[:1])]
            wab = pa.weight * pb.weight
            mass[ga, gb] += wab
            if a == b:
                hits[ga, gb] += wab * (0.0 if pa.is_atom else 1.0)
            else:
                hits[ga, gb] += wab * float((codes[a] == codes[b]).mean())
    out = np.zeros((G, G))
    nz = mass > 0
    out[nz] = hits[nz] / mass[nz]
    return labels, out


# ---------------------------------------------------------------------------
# Structural model
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StructuralModel:
    """A full two-equation model replicating an observed joint law.

    The first stage is the generator; the outcome stage maps an independent
    uniform through the per-(x bin, z site) conditional outcome quantiles.
    ``independent`` asserts that the instrument is drawn without reading the
    latent pair, which the sampler honors by construction.
    """

    generator: GeneratorMap
    joint: JointLaw
    outcome: tuple[tuple[GridDistribution | None, ...], ...]
    u_law: GridDistribution
    v_law: GridDistribution
    independent: bool = True

    def sample(self, n: int, seed: int) -> np.ndarray:
        """Draw (y, x, z) rows; the latent pair never reads z."""
        if n < 1:
            raise ValidationError("need n >= 1")
        rng = np.random.default_rng(np.random.SeedSequence((seed,)))
        u = self.u_law.quantile(rng.uniform(size=n))
        v = self.v_law.quantile(rng.uniform(size=n))
        z = self.generator.pz.quantile(rng.uniform(size=n))
        y = np.empty(n)
        x = np.empty(n)
        for i in range(n):
            si = self.generator.site_index(float(z[i]))
            cell = self.generator.cell_of(float(z[i]))
            lvl = self.generator.permuted_level(cell.perm, np.array([u[i]]))
            x[i] = self.generator.marginals[si].quantile(float(lvl[0]))
            cond = self.joint.conditionals[si]
            xb = int(np.searchsorted(cond.x_edges, x[i], side="right")) - 1
            xb = min(max(xb, 0), cond.mass.shape[1] - 1)
            col = self.outcome[si][xb]
            if col is None:
                raise ValidationError("sampled an x bin with zero conditional mass")
            y[i] = col.quantile(float(v[i]))
        return np.column_stack([y, x, z])

    def induced_conditional(self, site_idx: int) -> np.ndarray:
        """Exact (y, x) cell masses this model induces at one z site."""
        frac = _induced_conditional_fractions(self, site_idx)
        return np.array([[float(v) for v in row] for row in frac])

    def induced_law(self) -> JointLaw:
        conds = []
        for i, c in enumerate(self.joint.conditionals):
            conds.append(Conditional2D(c.y_edges, c.x_edges, self.induced_conditional(i)))
        return JointLaw(self.joint.z_grid, self.joint.pz, tuple(conds))

    def to_json_dict(self) -> dict:
        return {
            "joint": self.joint.to_json_dict(),
            "generator": self.generator.to_json_dict(),
            "independence": self.independent,
        }


def compose_structural_model(joint: JointLaw, gen: GeneratorMap) -> StructuralModel:
    """Assemble the model whose first stage is ``gen`` and whose outcome stage
    realizes each conditional outcome law by a quantile transform.

    Raises ``MarginalMismatchError`` when the generator was built from
    different x-marginals than the joint law provides.
    """
    margs = joint.x_marginals()
    if len(margs) != len(gen.marginals):
        raise MarginalMismatchError("site counts differ")
    for a, b in zip(margs, gen.marginals):
        if len(a.masses) != len(b.masses) or np.max(np.abs(a.edges - b.edges)) > 0:
            raise MarginalMismatchError("marginal grids differ")
        if 0.5 * float(np.abs(a.masses - b.masses).sum()) > 1e-9:
            raise MarginalMismatchError("marginal masses differ beyond tolerance")
    outcome = []
    for c in joint.conditionals:
        cols: list[GridDistribution | None] = []
        colsums = c.mass.sum(axis=0)
        for b in range(c.mass.shape[1]):
            if colsums[b] > 0:
                cols.append(GridDistribution(c.y_edges, c.mass[:, b] / colsums[b]))
            else:
                cols.append(None)
        outcome.append(tuple(cols))
    unit = GridDistribution.uniform(0.0, 1.0)
    return StructuralModel(gen, joint, tuple(outcome), unit, unit, independent=True)


def _induced_conditional_fractions(model: StructuralModel, site_idx: int):
    """Pushforward of the latent product measure at one z site, in exact rationals.

    Geometry lives in probability space: latent cell c occupies
    ``[c/K^n, (c+1)/K^n)`` and x bin b occupies the interval between the
    rational cumulative column sums.  Per cell the image mass lands in the
    permuted slot and is split across bins by interval overlap; the outcome
    stage then distributes each bin's mass down its column.  A z site spanning
    several z cells averages the per-cell results by cell weight.
    """
    gen = model.generator
    site = gen.sites[site_idx]
    cond = model.joint.conditionals[site_idx]
    ny, nx = cond.mass.shape
    mass_q = [[Fraction(float(cond.mass[i, j])) for j in range(nx)] for i in range(ny)]
    colsum = [sum(mass_q[i][j] for i in range(ny)) for j in range(nx)]
    cum = [Fraction(0)]
    for j in range(nx):
        cum.append(cum[-1] + colsum[j])
    n = gen.n_u_cells
    # equal-mass cells of the conditional as given: its float entries sum to
    # 1 only within tolerance, so cells carry total/n each, keeping the
    # overlap telescoping exact
    h = cum[-1] / n

    if site.kind == "atom":
        overlapping = [(gen.cell_of(site.z_value), Fraction(1))]
    else:
        weighted = []
        for cell in gen.cells:
            if cell.z_set is None:
                continue
            w = gen.pz.measure_of(cell.z_set.intersect_interval(site.lo, site.hi))
            if w > 0:
                weighted.append((cell, Fraction(float(w))))
        total = sum(w for _, w in weighted)
        overlapping = [(cell, w / total) for cell, w in weighted]

    out = [[Fraction(0)] * nx for _ in range(ny)]
    for cell, cell_weight in overlapping:
        xbin_mass = [Fraction(0)] * nx
        for j in range(n):
            c = int(cell.perm[j])
            lo, hi = c * h, (c + 1) * h
            b = max(bisect_right(cum, lo) - 1, 0)
            while b < nx and cum[b] < hi:
                ov = min(hi, cum[b + 1]) - max(lo, cum[b])
                if ov > 0:
                    xbin_mass[b] += ov
                b += 1
        for b in range(nx):
            if colsum[b] == 0:
                continue
            scale = cell_weight * xbin_mass[b] / colsum[b]
            for i in range(ny):
                out[i][b] += scale * mass_q[i][b]
    return out


def verify_replication(model: StructuralModel, joint: JointLaw) -> float:
    """Largest total-variation gap, over z sites, between the model's induced
    conditional and the observed one, computed in exact rational arithmetic.

    Exactly 0.0 whenever the model was composed from a generator built on the
    joint's own marginals, at any depth: cell permutations never move mass
    across the conditional.
    """
    if len(joint.conditionals) != len(model.joint.conditionals):
        raise MarginalMismatchError("site counts differ")
    worst = Fraction(0)
    for i, c in enumerate(joint.conditionals):
        induced = _induced_conditional_fractions(model, i)
        ny, nx = c.mass.shape
        tv = sum(
            abs(induced[r][b] - Fraction(float(c.mass[r, b])))
            for r in range(ny)
            for b in range(nx)
        ) / 2
        worst = max(worst, tv)
    return float(worst)


def invert_generator(gen: GeneratorMap, x: float, u: float) -> str:
    """Recover the z-cell address that maps u's cell onto x's cell.

    Raises ``NonInvertibleError`` when the generator has a single z group
    (nothing to distinguish) or when two or more cells match (depth too
    small for this point).
    """
    groups = {c.address for c in gen.cells}
    if len(groups) <= 1:
        raise NonInvertibleError("generator has a single z group at this resolution")
    n = gen.n_u_cells
    j = min(int(u * n), n - 1)
    grid = np.arange(n + 1) / n
    matches: set[tuple[int, ...]] = set()
    for p in _pieces(gen):
        cell = gen.cells[p.cell_idx]
        c = int(cell.perm[j])
        qs = gen.marginals[p.site_idx].quantile(grid[[c, c + 1]])
        lo, hi = float(qs[0]), float(qs[1])
        inside = lo <= x < hi or (c == n - 1 and x == hi)
        if inside:
            matches.add(cell.address)
    if not matches:
        raise NonInvertibleError(f"no z cell maps u={u} onto x={x}")
    if len(matches) > 1:
        raise NonInvertibleError(
            f"{len(matches)} z cells match at this resolution; increase depth"
        )
    return _address_str(next(iter(matches)))
