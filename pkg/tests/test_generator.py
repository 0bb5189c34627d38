"""Construction invariants: measure preservation, injectivity decay, replication."""

import numpy as np
import pytest

from ivtest import (
    GeneratorMap,
    GridDistribution,
    MarginalMismatchError,
    NonAtomicityError,
    NonInvertibleError,
    build_generator,
    build_generator_with_atoms,
    collision_fraction,
    compose_structural_model,
    group_collision_matrix,
    invert_generator,
    verify_replication,
)
from ivtest.measures import Conditional2D, JointLaw

from conftest import identical_conditional_setup, random_joint_law


def pointwise_collision_oracle(gen, u_points=256):
    """Independent collision estimate: evaluate g(z, u) through the public
    map at one representative z per piece and compare values exactly.

    Pieces of continuum cells share the map among all their z values, so a
    same-piece pair is a full collision; an atom paired with itself is the
    same z twice and never counts.
    """
    reps, weights, is_atom = [], [], []
    for cell in gen.cells:
        if cell.atom is not None:
            reps.append(cell.atom)
            weights.append(gen.sites[gen.site_index(cell.atom)].mass)
            is_atom.append(True)
            continue
        for s in gen.sites:
            if s.kind != "bin":
                continue
            piece = cell.z_set.intersect_interval(s.lo, s.hi)
            if piece.is_empty():
                continue
            w = gen.pz.measure_of(piece)
            if w <= 0:
                continue
            a, b = piece.intervals[0]
            reps.append(0.5 * (a + b))
            weights.append(w)
            is_atom.append(False)
    us = (np.arange(u_points) + 0.5) / u_points
    values = np.array([gen(z, us) for z in reps])
    total = 0.0
    for i in range(len(reps)):
        for j in range(len(reps)):
            if i == j:
                frac = 0.0 if is_atom[i] else 1.0
            else:
                frac = float(np.mean(values[i] == values[j]))
            total += weights[i] * weights[j] * frac
    return total


# ---------------------------------------------------------------------------
# build_generator
# ---------------------------------------------------------------------------


def test_identical_conditionals_depth0_full_collision():
    margs, pz, zg = identical_conditional_setup()
    gen = build_generator(margs, pz, zg, 0)
    assert collision_fraction(gen) == 1.0


def test_identical_conditionals_dyadic_decay_exact():
    margs, pz, zg = identical_conditional_setup()
    for n in range(7):
        gen = build_generator(margs, pz, zg, n)
        assert collision_fraction(gen, z_pairs=10**7) == 2.0**-n


def test_collision_matches_pointwise_oracle():
    margs, pz, zg = identical_conditional_setup()
    for n in (1, 2, 3, 4):
        gen = build_generator(margs, pz, zg, n)
        assert collision_fraction(gen, z_pairs=10**6) == pytest.approx(
            pointwise_collision_oracle(gen), abs=1e-12
        )


def test_collision_monte_carlo_mode_close_to_exact():
    margs, pz, zg = identical_conditional_setup(n_sites=8)
    gen = build_generator(margs, pz, zg, 4)
    exact = collision_fraction(gen, z_pairs=10**6)
    mc = collision_fraction(gen, z_pairs=400, seed=5)
    assert mc == collision_fraction(gen, z_pairs=400, seed=5)  # deterministic
    assert abs(mc - exact) < 0.05


def test_rejects_atomic_marginal_or_pz():
    margs, pz, zg = identical_conditional_setup()
    with pytest.raises(NonAtomicityError):
        build_generator([GridDistribution.point_mass(0.5)] * 4, pz, zg, 1)
    pz_atom = GridDistribution(np.array([0.0, 1.0]), np.array([0.5]), ((0.5, 0.5),))
    with pytest.raises(NonAtomicityError):
        build_generator(
            [GridDistribution.uniform(0, 1)] * 2, pz_atom, [0.25, 0.5], 1
        )


def test_disjoint_supports_zero_collision():
    # purely atomic z, each site its own support: ranges never intersect
    pz = GridDistribution(
        np.array([-0.5, 4.5]), np.array([0.0]), ((0.0, 0.3), (2.0, 0.3), (4.0, 0.4))
    )
    margs = [GridDistribution.uniform(2 * k, 2 * k + 1, 2) for k in range(3)]
    gen = build_generator_with_atoms(margs, pz, [0.0, 2.0, 4.0], 2)
    assert collision_fraction(gen) == 0.0


# ---------------------------------------------------------------------------
# atomic variant
# ---------------------------------------------------------------------------


def test_atoms_cyclic_three_groups_depth1():
    # one atom plus the two continuum halves: three distinct shifts of 3 cells
    pz = GridDistribution(np.array([0.0, 1.0]), np.array([2 / 3]), ((0.5, 1 / 3),))
    margs = [GridDistribution.uniform(0, 1)] * 2
    gen = build_generator_with_atoms(margs, pz, [0.25, 0.5], 1)
    assert gen.arity == 3
    perms = {c.address_str: tuple(c.perm) for c in gen.cells}
    assert perms["1"] == (0, 1, 2)  # first atom keeps the base map
    assert len({p for p in perms.values()}) == 3  # all groups distinct
    labels, mat = group_collision_matrix(gen)
    off = mat.copy()
    np.fill_diagonal(off, 0.0)
    assert off.max() == 0.0


@pytest.mark.parametrize("k", [1, 2, 3])
def test_atoms_cross_group_zero_after_level1(k):
    atom_mass = 0.4 / k
    atoms = tuple((0.1 + 0.2 * j, atom_mass) for j in range(k))
    pz = GridDistribution(np.array([0.0, 1.0]), np.array([0.6]), atoms)
    z_grid = sorted([a for a, _ in atoms] + [0.95])
    margs = [GridDistribution.uniform(0, 1)] * (k + 1)
    for depth in (1, 2):
        gen = build_generator_with_atoms(margs, pz, z_grid, depth)
        assert gen.arity == k + 2
        labels, mat = group_collision_matrix(gen)
        assert len(labels) == k + 2
        off = mat.copy()
        np.fill_diagonal(off, 0.0)
        assert off.max() == 0.0


def test_atoms_k0_delegates_to_binary():
    margs, pz, zg = identical_conditional_setup()
    g_plain = build_generator(margs, pz, zg, 3)
    g_atoms = build_generator_with_atoms(margs, pz, zg, 3)
    assert g_plain.arity == g_atoms.arity == 2
    assert [c.address for c in g_plain.cells] == [c.address for c in g_atoms.cells]
    for a, b in zip(g_plain.cells, g_atoms.cells):
        assert np.array_equal(a.perm, b.perm)


def test_atoms_already_injective_identity_perms():
    # distinct supports at depth 0: nothing to permute
    pz = GridDistribution(np.array([-0.5, 3.5]), np.array([0.0]), ((0.0, 0.5), (3.0, 0.5)))
    margs = [GridDistribution.uniform(0, 1, 2), GridDistribution.uniform(3, 4, 2)]
    gen = build_generator_with_atoms(margs, pz, [0.0, 3.0], 0)
    assert all(np.array_equal(c.perm, np.arange(len(c.perm))) for c in gen.cells)


# ---------------------------------------------------------------------------
# partition tree invariants
# ---------------------------------------------------------------------------


def test_partition_tree_invariants():
    margs, pz, zg = identical_conditional_setup()
    gen = build_generator(margs, pz, zg, 3)

    def walk(node):
        k = gen.arity**node.level
        u_measures = [
            sum(b - a for a, b in cell.intervals) for cell in node.u_cells
        ]
        assert all(abs(m - 1.0 / k) <= 1e-12 for m in u_measures)
        x_measures = [
            node.rep_marginal.measure_of(cell) for cell in node.x_cells
        ]
        assert all(abs(m - 1.0 / k) <= 1e-12 for m in x_measures)
        if node.children:
            assert len(node.children) == 2
            union = node.children[0].z_set.union(node.children[1].z_set)
            assert union.intervals == node.z_set.intervals
            m1 = gen.pz.measure_of(node.children[0].z_set)
            m2 = gen.pz.measure_of(node.children[1].z_set)
            assert abs(m1 - m2) <= 1e-12
            for child in node.children:
                assert child.address[: node.level] == node.address
                walk(child)

    walk(gen.root)


def test_measure_preservation_per_cell():
    """Pushing the uniform through any cell's map reproduces the conditional."""
    rng = np.random.default_rng(7)
    law = random_joint_law(rng, nz=4, ny=4, nx=6)
    margs = law.x_marginals()
    gen = build_generator(margs, law.pz, law.z_grid, 3)
    n = gen.n_u_cells
    for cell in gen.cells:
        # each image cell is hit by exactly one latent cell
        assert sorted(cell.perm.tolist()) == list(range(n))
    model = compose_structural_model(law, gen)
    for i in range(len(law.z_grid)):
        induced = model.induced_conditional(i)
        np.testing.assert_allclose(
            induced.sum(axis=0), law.conditionals[i].mass.sum(axis=0), atol=1e-15
        )


# ---------------------------------------------------------------------------
# structural model and replication
# ---------------------------------------------------------------------------


def test_replication_zero_at_every_depth(rng):
    law = random_joint_law(rng, nz=4, ny=5, nx=6)
    margs = law.x_marginals()
    for depth in (0, 1, 3, 5):
        gen = build_generator(margs, law.pz, law.z_grid, depth)
        model = compose_structural_model(law, gen)
        assert verify_replication(model, law) == 0.0


def test_replication_gaussian_mixture_8x8x8():
    """z-varying two-component normal mixtures on an 8x8x8 grid, depth 6."""
    from scipy.stats import norm

    y_edges = np.linspace(-3.0, 4.0, 9)
    x_edges = np.linspace(-3.0, 4.0, 9)
    conds = []
    zs = (np.arange(8) + 0.5) / 8
    for z in zs:
        wx = norm.cdf(x_edges, loc=z, scale=0.7)
        wx2 = norm.cdf(x_edges, loc=2 - z, scale=0.4)
        px = 0.6 * np.diff(wx) + 0.4 * np.diff(wx2)
        wy = norm.cdf(y_edges, loc=1 - z, scale=0.9)
        py = np.diff(wy)
        m = np.outer(py, px)
        conds.append(Conditional2D(y_edges, x_edges, m / m.sum()))
    law = JointLaw(zs, GridDistribution.uniform(0, 1, 8), tuple(conds))
    gen = build_generator(law.x_marginals(), law.pz, law.z_grid, 6)
    model = compose_structural_model(law, gen)
    assert verify_replication(model, law) == 0.0


def test_monotone_model_class_soundness():
    """A replicating model of a monotone law induces a law passing FOSD at tol 0."""
    from conftest import location_family_law

    law = location_family_law([0.0, 0.25, 0.5, 0.75])
    gen = build_generator(law.x_marginals(), law.pz, law.z_grid, 3)
    model = compose_structural_model(law, gen)
    assert model.independent
    from ivtest import monotonicity_test

    report = monotonicity_test(model.induced_law(), tol=0.0)
    assert report.statistic == 0.0
    assert report.decision == "consistent"


def test_replication_detects_perturbation(rng):
    law = random_joint_law(rng, nz=3, ny=4, nx=4)
    gen = build_generator(law.x_marginals(), law.pz, law.z_grid, 2)
    model = compose_structural_model(law, gen)
    eps = 0.04
    m = law.conditionals[1].mass.copy()
    hi = np.unravel_index(np.argmax(m), m.shape)
    lo = np.unravel_index(np.argmin(m + (m == 0)), m.shape)
    m[lo] += eps
    m[hi] -= eps
    m = np.clip(m, 0, None)
    m /= m.sum()
    conds = list(law.conditionals)
    conds[1] = Conditional2D(law.conditionals[1].y_edges, law.conditionals[1].x_edges, m)
    perturbed = JointLaw(law.z_grid, law.pz, tuple(conds))
    assert verify_replication(model, perturbed) >= eps / 2 - 1e-9


def test_degenerate_outcome_replicates_exactly():
    # Y concentrated on the diagonal of (y, x) cells: outcome map is x itself
    edges = np.linspace(0.0, 1.0, 5)
    mass = np.diag([0.25, 0.25, 0.25, 0.25])
    cond = Conditional2D(edges, edges, mass)
    pz = GridDistribution.uniform(0, 1, 2)
    law = JointLaw([0.25, 0.75], pz, (cond, cond))
    gen = build_generator(law.x_marginals(), pz, law.z_grid, 2)
    model = compose_structural_model(law, gen)
    assert verify_replication(model, law) == 0.0


def test_outcome_independent_of_treatment_replicates():
    edges = np.linspace(0.0, 1.0, 5)
    mass = np.full((4, 4), 1 / 16)
    cond = Conditional2D(edges, edges, mass)
    pz = GridDistribution.uniform(0, 1, 2)
    law = JointLaw([0.25, 0.75], pz, (cond, cond))
    gen = build_generator(law.x_marginals(), pz, law.z_grid, 1)
    model = compose_structural_model(law, gen)
    assert verify_replication(model, law) == 0.0


def test_compose_rejects_marginal_mismatch(rng):
    law = random_joint_law(rng, nz=3, ny=4, nx=4)
    other = random_joint_law(np.random.default_rng(123), nz=3, ny=4, nx=4)
    gen = build_generator(other.x_marginals(), other.pz, other.z_grid, 1)
    with pytest.raises(MarginalMismatchError):
        compose_structural_model(law, gen)


def test_model_sampling_never_reads_z_for_latents(rng):
    law = random_joint_law(rng, nz=3, ny=4, nx=4)
    gen = build_generator(law.x_marginals(), law.pz, law.z_grid, 2)
    model = compose_structural_model(law, gen)
    assert model.independent
    rows = model.sample(200, seed=4)
    assert rows.shape == (200, 3)
    again = model.sample(200, seed=4)
    assert np.array_equal(rows, again)


def test_induced_law_equals_input_bitwise(rng):
    law = random_joint_law(rng, nz=3, ny=4, nx=4)
    gen = build_generator(law.x_marginals(), law.pz, law.z_grid, 3)
    model = compose_structural_model(law, gen)
    induced = model.induced_law()
    for a, b in zip(induced.conditionals, law.conditionals):
        assert np.array_equal(a.mass, b.mass)


# ---------------------------------------------------------------------------
# inversion
# ---------------------------------------------------------------------------


def test_invert_depth1_identical_uniform():
    margs, pz, zg = identical_conditional_setup()
    gen = build_generator(margs, pz, zg, 1)
    # the permuted half sends the first latent cell to the second image cell
    assert invert_generator(gen, x=0.75, u=0.25) == "1"
    assert invert_generator(gen, x=0.25, u=0.25) == "2"


def test_invert_depth0_refuses():
    margs, pz, zg = identical_conditional_setup()
    gen = build_generator(margs, pz, zg, 0)
    with pytest.raises(NonInvertibleError):
        invert_generator(gen, x=0.5, u=0.5)


def test_invert_from_support_alone():
    pz = GridDistribution(
        np.array([-0.5, 4.5]), np.array([0.0]), ((0.0, 0.5), (4.0, 0.5))
    )
    margs = [GridDistribution.uniform(0, 1, 2), GridDistribution.uniform(4, 5, 2)]
    gen = build_generator_with_atoms(margs, pz, [0.0, 4.0], 0)
    assert invert_generator(gen, x=4.5, u=0.3) == "2"
    assert invert_generator(gen, x=0.5, u=0.3) == "1"


def test_invert_roundtrip_when_injective():
    margs, pz, zg = identical_conditional_setup()
    gen = build_generator(margs, pz, zg, 4)
    rng = np.random.default_rng(3)
    for _ in range(50):
        z = float(rng.uniform(0, 1))
        u = float(rng.uniform(0, 1))
        x = gen(z, u)
        addr = invert_generator(gen, x, u)
        assert gen.cell_of(z).address_str == addr


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def test_generator_json_roundtrip():
    margs, pz, zg = identical_conditional_setup()
    gen = build_generator(margs, pz, zg, 3)
    obj = gen.to_json_dict()
    assert obj["depth"] == 3
    assert all(set(c) == {"z_addr", "perm"} for c in obj["cells"])
    back = GeneratorMap.from_json_dict(obj, margs, pz, zg)
    assert [c.address for c in back.cells] == [c.address for c in gen.cells]
    for a, b in zip(back.cells, gen.cells):
        assert np.array_equal(a.perm, b.perm)
