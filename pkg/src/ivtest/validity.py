"""Testable implications of instrument validity.

Discrete treatments admit sharp checks: a one-to-one first stage exists iff a
transport plan with pairwise-distinct coordinates fits the observed
conditionals, and Pearl's instrumental inequality bounds what any valid
model can produce.  Continuous treatments admit none without restrictions,
so the remaining tests here presuppose either Hoelder-continuity constants
or monotone first/second stages and reject observed laws that no model in
the restricted class can generate.

The cross-z joint coupling of the observed process is not identified from
the data, so every process-level statistic below is evaluated under the
comonotone (common quantile level) coupling, coordinate by coordinate.  In
one dimension that coupling minimizes both almost-sure and moment distances,
hence each statistic lower-bounds its value under every coupling consistent
with the data and a rejection is valid for all of them.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import DegenerateGridError, DeskScaleError, ValidationError
from .measures import (
    CouplingMatrix,
    GridDistribution,
    JointLaw,
    fosd_violation,
    winf_distance,
)

INPUT_TOL = 1e-9

MAX_SUPPORT = 6
MAX_Z_POINTS = 4


@dataclass(frozen=True)
class ContinuityParams:
    """Hoelder constants of the two stages and the derived rejection bound.

    ``alpha``/``ky``/``beta`` bound the outcome stage moments, ``gamma``/
    ``kx``/``delta`` the first stage; ``d`` is the common dimension, fixed to
    1 in this package.  ``c_bound`` defaults to the constant delivered by the
    Pythagorean bound on the joint process, 2 * max(ky * kx**(beta/alpha),
    ky * kx).
    """

    alpha: float
    beta: float
    gamma: float
    delta: float
    d: int = 1
    ky: float = 1.0
    kx: float = 1.0
    jump_threshold: float = 1.0
    c_bound: float | None = None

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta", "ky", "kx", "jump_threshold"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if self.d != 1:
            raise ValidationError("only d = 1 is supported")
        if self.c_bound is None:
            c = 2.0 * max(self.ky * self.kx ** (self.beta / self.alpha), self.ky * self.kx)
            object.__setattr__(self, "c_bound", c)
        elif self.c_bound <= 0:
            raise ValidationError("c_bound must be positive")

    def moment_exponents(self) -> tuple[float, float]:
        """(moment power, gap power) for the path-regularity moment ratio.

        With beta <= alpha the joint path regularity is beta*gamma /
        (2*alpha*delta), certified by moments of order 2*alpha*delta against
        gap**(d + beta*gamma); otherwise the first stage binds and the pair
        is (2*delta, d + gamma).
        """
        if self.beta <= self.alpha:
            return 2.0 * self.alpha * self.delta, self.d + self.beta * self.gamma
        return 2.0 * self.delta, self.d + self.gamma


@dataclass(frozen=True)
class TestReport:
    """Outcome of one validity check; reject iff statistic > threshold, strictly."""

    __test__ = False  # not a pytest class

    test_name: str
    statistic: float
    threshold: float
    decision: str
    diagnostics: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        expected = "reject" if self.statistic > self.threshold else "consistent"
        if self.decision != expected:
            raise ValidationError("decision must match statistic vs threshold")

    @classmethod
    def build(cls, name: str, statistic: float, threshold: float, diagnostics=None) -> "TestReport":
        statistic = float(statistic)
        threshold = float(threshold)
        decision = "reject" if statistic > threshold else "consistent"
        diag = {k: float(v) for k, v in (diagnostics or {}).items()}
        return cls(name, statistic, threshold, decision, diag)

    def to_json_dict(self) -> dict:
        return {
            "test": self.test_name,
            "statistic": self.statistic,
            "threshold": self.threshold,
            "decision": self.decision,
            "diagnostics": self.diagnostics,
        }

    def csv_row(self) -> str:
        return f"{self.test_name},{self.statistic!r},{self.threshold!r},{self.decision}"


@dataclass(frozen=True)
class InfeasibilityCertificate:
    """Witness that no distinct-coordinate transport plan exists."""

    x_index: int | None
    excess: float
    reason: str


@dataclass(frozen=True, eq=False)
class TupleCoupling:
    """A transport plan over pairwise-distinct value tuples, one axis per z point."""

    tuples: tuple[tuple[int, ...], ...]
    weights: np.ndarray


# ---------------------------------------------------------------------------
# Discrete treatment
# ---------------------------------------------------------------------------


def _check_discrete_law(p: np.ndarray, name: str) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or len(p) == 0:
        raise ValidationError(f"{name} must be a non-empty vector")
    if np.any(p < -INPUT_TOL):
        raise ValidationError(f"{name} has negative entries")
    if abs(float(p.sum()) - 1.0) > INPUT_TOL:
        raise ValidationError(f"{name} does not sum to 1")
    return np.clip(p, 0.0, None)


def minimal_collision_mass(p: Sequence[float], q: Sequence[float]) -> float:
    """Minimum over couplings of P(X1 = X2): sum_x max(0, p(x) + q(x) - 1)."""
    pa = _check_discrete_law(np.asarray(p), "p")
    qa = _check_discrete_law(np.asarray(q), "q")
    if len(pa) != len(qa):
        raise ValidationError("p and q must share a support")
    return float(np.maximum(pa + qa - 1.0, 0.0).sum())


def _zero_diagonal_coupling(p: np.ndarray, q: np.ndarray) -> CouplingMatrix:
    """LP witness: minimize diagonal mass subject to the coupling constraints."""
    n = len(p)
    c = np.zeros(n * n)
    c[:: n + 1] = 1.0
    a_eq = np.zeros((2 * n, n * n))
    for i in range(n):
        a_eq[i, i * n : (i + 1) * n] = 1.0
        a_eq[n + i, i::n] = 1.0
    b_eq = np.concatenate([p, q])
    res = linprog(c, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise ValidationError(f"coupling LP failed: {res.message}")
    plan = np.clip(res.x.reshape(n, n), 0.0, None)
    return CouplingMatrix(p, q, plan)


def discrete_generator_feasible(
    conditionals: Sequence[Sequence[float]], weights: Sequence[float] | None = None
):
    """Decide whether a one-to-one first stage exists for discrete treatments.

    Existence is equivalent to a transport plan over tuples of pairwise
    distinct support values whose coordinate marginals are the observed
    conditionals.  For two z points this reduces to the closed-form check
    p(x) + q(x) <= 1 for every x, with an LP-built zero-diagonal coupling as
    witness; for three or more z points the tuple plan is solved directly
    (exhaustive formulation, desk scale only).

    Returns ``(True, witness)`` or ``(False, InfeasibilityCertificate)``.
    """
    laws = [np.asarray(c, dtype=float) for c in conditionals]
    m = len(laws)
    if m < 2:
        raise ValidationError("need at least two z points")
    support = len(laws[0])
    for i, p in enumerate(laws):
        laws[i] = _check_discrete_law(p, f"conditional {i}")
        if len(p) != support:
            raise ValidationError("conditionals must share a support")
    if weights is not None:
        _check_discrete_law(np.asarray(weights, dtype=float), "weights")
        if len(weights) != m:
            raise ValidationError("need one weight per z point")
    if support < m:
        return False, InfeasibilityCertificate(
            None, float(m - support), f"support size {support} < {m} z points"
        )

    if m == 2:
        excess = laws[0] + laws[1] - 1.0
        worst = int(np.argmax(excess))
        if excess[worst] > INPUT_TOL:
            return False, InfeasibilityCertificate(
                worst,
                float(excess[worst]),
                f"conditionals stack {1 + excess[worst]:.6g} > 1 on value {worst}",
            )
        return True, _zero_diagonal_coupling(laws[0], laws[1])

    if support > MAX_SUPPORT or m > MAX_Z_POINTS:
        raise DeskScaleError(
            f"exhaustive tuple search supports at most {MAX_SUPPORT} values "
            f"and {MAX_Z_POINTS} z points"
        )
    tuples = [t for t in itertools.product(range(support), repeat=m) if len(set(t)) == m]
    a_eq = np.zeros((m * support + 1, len(tuples)))
    b_eq = np.zeros(m * support + 1)
    for col, t in enumerate(tuples):
        for zi, x in enumerate(t):
            a_eq[zi * support + x, col] = 1.0
        a_eq[-1, col] = 1.0
    for zi in range(m):
        b_eq[zi * support : (zi + 1) * support] = laws[zi]
    b_eq[-1] = 1.0
    res = linprog(np.zeros(len(tuples)), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status == 0:
        return True, TupleCoupling(tuple(tuples), np.clip(res.x, 0.0, None))
    pair_excess = -np.inf
    pair_x = None
    for i, j in itertools.combinations(range(m), 2):
        e = laws[i] + laws[j] - 1.0
        x = int(np.argmax(e))
        if e[x] > pair_excess:
            pair_excess, pair_x = float(e[x]), x
    if pair_excess > INPUT_TOL:
        return False, InfeasibilityCertificate(
            pair_x, pair_excess, "a z pair stacks more than unit mass on one value"
        )
    return False, InfeasibilityCertificate(
        None, 0.0, "no distinct-coordinate transport plan exists"
    )


def instrumental_inequality(conditionals: Sequence[np.ndarray]) -> TestReport:
    """Pearl's instrumental inequality for finite (y, x, z).

    Statistic: max over x of sum over y of max over z of P(y, x | z).  Any
    law generated by a valid-instrument model keeps it at or below 1.
    """
    mats = [np.asarray(c, dtype=float) for c in conditionals]
    if len(mats) < 1:
        raise ValidationError("need at least one conditional")
    shape = mats[0].shape
    for i, m in enumerate(mats):
        if m.ndim != 2 or m.shape != shape:
            raise ValidationError("conditionals must be matrices of equal shape")
        if np.any(m < -INPUT_TOL):
            raise ValidationError(f"conditional {i} has negative entries")
        if abs(float(m.sum()) - 1.0) > INPUT_TOL:
            raise ValidationError(f"conditional {i} does not sum to 1")
    stacked = np.stack(mats)  # (z, y, x)
    per_x = stacked.max(axis=0).sum(axis=0)
    worst = int(np.argmax(per_x))
    return TestReport.build(
        "pearl",
        float(per_x[worst]),
        1.0,
        {"worst_x_index": float(worst)},
    )


# ---------------------------------------------------------------------------
# Continuity-based tests
# ---------------------------------------------------------------------------


def _pair_quantile_moment(
    xm1: GridDistribution,
    xm2: GridDistribution,
    ym1: GridDistribution,
    ym2: GridDistribution,
    power: float,
) -> float:
    """E[((Qx1-Qx2)^2 + (Qy1-Qy2)^2)^(power/2)] under the common-level coupling.

    The four quantile functions are piecewise linear between the merged CDF
    breakpoints, so Gauss-Legendre quadrature per segment is exact to float
    precision for these smooth integrands.
    """
    cums = []
    for d in (xm1, xm2, ym1, ym2):
        _, cl, cr = d._profile
        cums.extend([cl, cr])
    ps = np.unique(np.clip(np.concatenate(cums), 0.0, 1.0))
    nodes, weights = np.polynomial.legendre.leggauss(16)
    total = 0.0
    for a, b in zip(ps[:-1], ps[1:]):
        if b <= a:
            continue
        t = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        dx = xm1.quantile(t) - xm2.quantile(t)
        dy = ym1.quantile(t) - ym2.quantile(t)
        vals = (dx * dx + dy * dy) ** (power / 2.0)
        total += 0.5 * (b - a) * float(weights @ vals)
    return total


def continuity_moment_statistic(joint: JointLaw, params: ContinuityParams) -> TestReport:
    """Moment-ratio check of path regularity between neighbouring z values.

    For every adjacent z pair the comonotone moment of the joint displacement
    is divided by the gap raised to the certifying exponent; the statistic is
    the worst ratio among the three smallest gaps, standing in for the limit
    as the gap shrinks.  Rejection (statistic above ``c_bound``) means no
    model with the given constants can generate the law.
    """
    zs = np.asarray(joint.z_grid, dtype=float)
    if len(zs) < 3:
        raise DegenerateGridError("need at least 3 z points for the moment test")
    power, gap_expo = params.moment_exponents()
    xms = joint.x_marginals()
    yms = joint.y_marginals()
    gaps, ratios = [], []
    for i in range(len(zs) - 1):
        gap = float(zs[i + 1] - zs[i])
        moment = _pair_quantile_moment(xms[i], xms[i + 1], yms[i], yms[i + 1], power)
        gaps.append(gap)
        ratios.append(moment / gap**gap_expo)
    order = np.argsort(gaps)[:3]
    statistic = max(ratios[i] for i in order)
    finest = sorted(order, key=lambda i: gaps[i])
    diagnostics = {"n_pairs": float(len(gaps)), "max_ratio_all": float(max(ratios))}
    for rank, i in enumerate(finest):
        diagnostics[f"gap_{rank}"] = gaps[i]
        diagnostics[f"ratio_{rank}"] = ratios[i]
    # ratios growing as gaps shrink signal divergence of the limit
    trend = all(
        ratios[finest[r]] >= ratios[finest[r + 1]] for r in range(len(finest) - 1)
    )
    diagnostics["ratio_increasing_as_gap_shrinks"] = float(trend)
    return TestReport.build("moment", statistic, params.c_bound, diagnostics)


def jump_test(joint: JointLaw, K: float, z_star: float) -> TestReport:
    """Detect an almost-sure jump of size above K at ``z_star``.

    For the nearest grid neighbours of ``z_star`` the statistic is the
    smallest coordinate-wise comonotone a.s. displacement bound; it exceeding
    K means the displacement stays above K as the gap shrinks, which no
    continuous-path model allows under the maintained constants.
    """
    zs = np.asarray(joint.z_grid, dtype=float)
    if K <= 0:
        raise ValidationError("K must be positive")
    hits = np.where(zs == z_star)[0]
    if len(hits) != 1:
        raise ValidationError("z_star must be a z-grid point")
    i_star = int(hits[0])
    others = [i for i in range(len(zs)) if i != i_star]
    if not others:
        raise DegenerateGridError("z_star has no neighbours")
    others.sort(key=lambda i: abs(zs[i] - z_star))
    nearest = others[:3]
    xms = joint.x_marginals()
    yms = joint.y_marginals()
    dists, diagnostics = [], {}
    for rank, i in enumerate(nearest):
        d = max(
            winf_distance(xms[i], xms[i_star]),
            winf_distance(yms[i], yms[i_star]),
        )
        dists.append(d)
        diagnostics[f"gap_{rank}"] = float(abs(zs[i] - z_star))
        diagnostics[f"distance_{rank}"] = float(d)
    diagnostics["distance_decreasing_with_gap"] = float(
        all(dists[r] <= dists[r + 1] for r in range(len(dists) - 1))
    )
    return TestReport.build("jump", min(dists), K, diagnostics)


# ---------------------------------------------------------------------------
# Monotonicity-based tests
# ---------------------------------------------------------------------------


def monotonicity_test(joint: JointLaw, tol: float) -> TestReport:
    """Check first-order stochastic dominance of both marginals along z.

    A model with monotone stages moves the whole conditional law upward in z,
    so any adjacent pair with F_{z2}(x) > F_{z1}(x) + tol (in x or y) is a
    violation; the statistic is the largest such CDF excess.
    """
    zs = np.asarray(joint.z_grid, dtype=float)
    xms = joint.x_marginals()
    yms = joint.y_marginals()
    worst = 0.0
    worst_pair = -1.0
    for i in range(len(zs) - 1):
        v = max(fosd_violation(xms[i], xms[i + 1]), fosd_violation(yms[i], yms[i + 1]))
        if v > worst:
            worst, worst_pair = v, float(i)
    return TestReport.build(
        "fosd", worst, tol, {"worst_pair_index": worst_pair, "n_pairs": float(len(zs) - 1)}
    )


def monotonicity_sure_decrease_test(joint: JointLaw, K: float) -> TestReport:
    """Reject when some coordinate surely falls by more than K as z rises.

    If the entire support at the larger z sits more than K below the entire
    support at the smaller z, every coupling realizes the decrease with
    probability one, contradicting monotone stages.  The statistic is the
    largest such support gap over ordered z pairs and coordinates.
    """
    if K <= 0:
        raise ValidationError("K must be positive")
    zs = np.asarray(joint.z_grid, dtype=float)
    if len(zs) < 2:
        raise DegenerateGridError("need at least 2 z points")
    bounds = []
    for c in joint.conditionals:
        xb = c.x_marginal().support_bounds()
        yb = c.y_marginal().support_bounds()
        bounds.append((xb, yb))
    worst = -np.inf
    worst_pair = -1.0
    for i in range(len(zs)):
        for j in range(i + 1, len(zs)):
            for axis in (0, 1):
                gap = bounds[i][axis][0] - bounds[j][axis][1]
                if gap > worst:
                    worst, worst_pair = float(gap), float(i)
    return TestReport.build(
        "sure-decrease", max(worst, 0.0), K, {"worst_low_z_index": worst_pair}
    )


# ---------------------------------------------------------------------------
# Named test registry (shared by the harness and the CLI)
# ---------------------------------------------------------------------------


def make_test(name: str, **params):
    """Build a ``(name, JointLaw -> TestReport)`` pair for a named test.

    Known names: ``fosd`` (tol), ``sure-decrease`` (K), ``jump`` (K, z_star
    defaulting to the largest grid point), ``moment`` (ContinuityParams
    fields), ``pearl`` (no parameters).
    """
    if name == "fosd":
        tol = float(params.pop("tol", 0.0))
        _reject_unknown(name, params)
        return name, lambda law: monotonicity_test(law, tol)
    if name == "sure-decrease":
        K = float(params.pop("K", 1.0))
        _reject_unknown(name, params)
        return name, lambda law: monotonicity_sure_decrease_test(law, K)
    if name == "jump":
        K = float(params.pop("K", 1.0))
        z_star = params.pop("z_star", None)
        _reject_unknown(name, params)

        def run_jump(law: JointLaw) -> TestReport:
            zs = float(np.max(law.z_grid)) if z_star is None else float(z_star)
            return jump_test(law, K, zs)

        return name, run_jump
    if name == "moment":
        cp = ContinuityParams(
            alpha=float(params.pop("alpha", 2.0)),
            beta=float(params.pop("beta", 1.0)),
            gamma=float(params.pop("gamma", 2.0)),
            delta=float(params.pop("delta", 1.0)),
            ky=float(params.pop("ky", 1.0)),
            kx=float(params.pop("kx", 1.0)),
        )
        _reject_unknown(name, params)
        return name, lambda law: continuity_moment_statistic(law, cp)
    if name == "pearl":
        _reject_unknown(name, params)
        return name, lambda law: instrumental_inequality([c.mass for c in law.conditionals])
    raise ValidationError(f"unknown test name {name!r}")


def _reject_unknown(name: str, params: dict):
    if params:
        raise ValidationError(f"unknown parameters for test {name!r}: {sorted(params)}")
