"""Shared builders for analytic test laws."""

import numpy as np
import pytest

from ivtest import (
    Conditional2D,
    GridDistribution,
    JointLaw,
    population_law,
    product_conditional,
)


def uniform_grid(lo, hi, bins=1):
    return GridDistribution.uniform(lo, hi, bins)


def triangular_grid(z, bins=16):
    """Grid version of the sum of two independent uniforms, shifted by z."""
    e = np.linspace(z, z + 2.0, bins + 1)
    mids = 0.5 * (e[:-1] + e[1:]) - z
    dens = np.minimum(mids, 2.0 - mids)
    return GridDistribution(e, dens / dens.sum())


def location_family_law(z_values, x_bins=8, y_bins=16):
    """Population law of X = Z + U[0,1], Y = X + V[0,1] on a z grid.

    Conditionals carry their own shifted edges, so neighbouring z values give
    exact translates of one another.
    """
    z_values = [float(z) for z in z_values]
    edges = []
    prev = z_values[0] - 0.5 * (z_values[1] - z_values[0])
    for a, b in zip(z_values, z_values[1:]):
        edges.append(0.5 * (a + b))
    lo = z_values[0] - (edges[0] - z_values[0])
    hi = z_values[-1] + (z_values[-1] - edges[-1])
    pz_edges = np.array([lo] + edges + [hi])
    widths = np.diff(pz_edges)
    pz = GridDistribution(pz_edges, widths / widths.sum())

    def cond(z):
        return product_conditional(
            triangular_grid(z, y_bins), GridDistribution.uniform(z, z + 1, x_bins)
        )

    return population_law(z_values, pz, cond)


def bernoulli_support_jump_law(gap_lo=0.0, gap_hi=3.0):
    """Two z atoms with treatment supports [0,1] and [gap_hi, gap_hi+1]."""
    pz = GridDistribution(np.array([-0.5, 1.5]), np.array([0.0]), ((0.0, 0.5), (1.0, 0.5)))

    def cond(z):
        shift = gap_lo if z < 0.5 else gap_hi
        return product_conditional(
            GridDistribution.uniform(0, 1, 4),
            GridDistribution.uniform(shift, shift + 1, 4),
        )

    return population_law([0.0, 1.0], pz, cond)


def identical_conditional_setup(n_sites=4, bins=1):
    """Uniform pz sites all carrying the same uniform[0,1] treatment marginal."""
    pz = GridDistribution.uniform(0.0, 1.0, n_sites)
    z_grid = [(k + 0.5) / n_sites for k in range(n_sites)]
    margs = [GridDistribution.uniform(0.0, 1.0, bins) for _ in range(n_sites)]
    return margs, pz, z_grid


def random_joint_law(rng, nz=8, ny=8, nx=8):
    """Random mass matrices on a shared grid: every marginal is non-atomic."""
    y_edges = np.linspace(-1.0, 2.0, ny + 1)
    x_edges = np.linspace(0.0, 3.0, nx + 1)
    conds = []
    for _ in range(nz):
        m = rng.gamma(1.0, size=(ny, nx)) + 0.01
        conds.append(Conditional2D(y_edges, x_edges, m / m.sum()))
    pz = GridDistribution.uniform(0.0, 1.0, nz)
    z_grid = (np.arange(nz) + 0.5) / nz
    return JointLaw(z_grid, pz, tuple(conds))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
