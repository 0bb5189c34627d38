"""Data-generating processes, discretization, and size/power experiments.

Instrument invalidity is dialed in with a single copula weight: the z draw
is a convex mix of an independent draw and the z quantile evaluated at the
latent rank, so weight 0 is full random assignment and weight 1 ties z
deterministically to the chosen latent.  Everything downstream is seeded
and reproducible bit for bit.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import EmptyBinError, NonAtomicityError, ValidationError
from .generator import (
    StructuralModel,
    build_generator,
    build_generator_with_atoms,
    compose_structural_model,
    verify_replication,
)
from .measures import Conditional2D, GridDistribution, JointLaw
from .validity import TestReport, minimal_collision_mass

FIRST_STAGE_KINDS = ("location", "scale", "jump", "sign_flip", "custom")
OUTCOME_KINDS = ("location", "jump", "custom")


@dataclass(frozen=True)
class DGPSpec:
    """A parametric two-equation process plus the instrument-invalidity dial.

    ``copula_weight`` mixes the independent z draw with the z quantile of the
    rank of one latent (``copula_target`` "u" or "v"); a valid instrument
    forces weight 0.  First-stage kinds: location (z + u), scale
    ((1 + z) * u), jump (u + jump_size past jump_at), sign_flip (-z + u),
    custom.  Outcome kinds: location (x + v), jump (x + v + outcome_jump_size
    past outcome_jump_at), custom.
    """

    name: str
    first_stage: str = "location"
    outcome: str = "location"
    z_law: GridDistribution = field(default_factory=lambda: GridDistribution.uniform(0, 1))
    u_law: GridDistribution = field(default_factory=lambda: GridDistribution.uniform(0, 1))
    v_law: GridDistribution = field(default_factory=lambda: GridDistribution.uniform(0, 1))
    instrument_valid: bool = True
    copula_weight: float = 0.0
    copula_target: str = "u"
    jump_size: float = 3.0
    jump_at: float = 0.5
    outcome_jump_size: float = 1.0
    outcome_jump_at: float = 0.5
    first_stage_fn: Callable | None = None
    outcome_fn: Callable | None = None

    def __post_init__(self):
        if self.first_stage not in FIRST_STAGE_KINDS:
            raise ValidationError(f"unknown first stage {self.first_stage!r}")
        if self.outcome not in OUTCOME_KINDS:
            raise ValidationError(f"unknown outcome {self.outcome!r}")
        if self.first_stage == "custom" and self.first_stage_fn is None:
            raise ValidationError("custom first stage needs first_stage_fn")
        if self.outcome == "custom" and self.outcome_fn is None:
            raise ValidationError("custom outcome needs outcome_fn")
        if not (0.0 <= self.copula_weight <= 1.0):
            raise ValidationError("copula_weight must lie in [0, 1]")
        if self.instrument_valid and self.copula_weight != 0.0:
            raise ValidationError("a valid instrument forces copula_weight 0")
        if self.copula_target not in ("u", "v"):
            raise ValidationError("copula_target must be 'u' or 'v'")

    def first_stage_values(self, z: np.ndarray, u: np.ndarray) -> np.ndarray:
        if self.first_stage == "location":
            return z + u
        if self.first_stage == "scale":
            return (1.0 + z) * u
        if self.first_stage == "jump":
            return u + self.jump_size * (z >= self.jump_at)
        if self.first_stage == "sign_flip":
            return -z + u
        return np.asarray(self.first_stage_fn(z, u), dtype=float)

    def outcome_values(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        if self.outcome == "location":
            return x + v
        if self.outcome == "jump":
            return x + v + self.outcome_jump_size * (x >= self.outcome_jump_at)
        return np.asarray(self.outcome_fn(x, v), dtype=float)

    @classmethod
    def from_json_dict(cls, obj: dict) -> "DGPSpec":
        kwargs = dict(obj)
        for law_key in ("z_law", "u_law", "v_law"):
            if law_key in kwargs:
                kwargs[law_key] = GridDistribution.from_json_dict(kwargs[law_key])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ValidationError(f"malformed DGP spec: {exc}") from exc


@dataclass(frozen=True, eq=False)
class Dataset:
    """Sampled (y, x, z) rows with their provenance."""

    rows: np.ndarray
    seed: int
    spec_name: str

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != 3 or rows.shape[0] == 0:
            raise ValidationError("rows must be a non-empty (n, 3) array")
        if not np.all(np.isfinite(rows)):
            raise ValidationError("rows must be finite")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        buf.write("y,x,z\n")
        for y, x, z in self.rows:
            buf.write(f"{float(y)!r},{float(x)!r},{float(z)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv_text(cls, text: str, seed: int = 0, spec_name: str = "file") -> "Dataset":
        lines = [ln for ln in text.strip().splitlines() if ln]
        if not lines or lines[0].replace(" ", "") != "y,x,z":
            raise ValidationError("dataset CSV must start with header y,x,z")
        try:
            rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        except ValueError as exc:
            raise ValidationError(f"malformed dataset row: {exc}") from exc
        return cls(rows, seed, spec_name)


def sample(spec: DGPSpec, n: int, seed: int) -> Dataset:
    """Forward-simulate n rows; deterministic in (spec, n, seed).

    Latent ranks are drawn first and never depend on z; with a valid
    instrument the z draw in turn never reads them.
    """
    if n < 1:
        raise ValidationError("need n >= 1")
    rng = np.random.default_rng(np.random.SeedSequence((seed,)))
    t_u = rng.uniform(size=n)
    t_v = rng.uniform(size=n)
    t_z = rng.uniform(size=n)
    u = np.asarray(spec.u_law.quantile(t_u))
    v = np.asarray(spec.v_law.quantile(t_v))
    z_indep = np.asarray(spec.z_law.quantile(t_z))
    if spec.copula_weight == 0.0:
        z = z_indep
    else:
        rank = t_u if spec.copula_target == "u" else t_v
        z_tied = np.asarray(spec.z_law.quantile(rank))
        z = (1.0 - spec.copula_weight) * z_indep + spec.copula_weight * z_tied
    x = spec.first_stage_values(z, u)
    y = spec.outcome_values(x, v)
    return Dataset(np.column_stack([y, x, z]), seed, spec.name)


def discretize(data: Dataset, y_bins: int, x_bins: int, z_bins: int) -> JointLaw:
    """Empirical joint law on equal-width grids; every z bin must be populated."""
    for name, b in (("y_bins", y_bins), ("x_bins", x_bins), ("z_bins", z_bins)):
        if b < 2:
            raise ValidationError(f"{name} must be at least 2")
    y, x, z = data.rows[:, 0], data.rows[:, 1], data.rows[:, 2]

    def axis_edges(vals: np.ndarray, bins: int) -> np.ndarray:
        lo, hi = float(vals.min()), float(vals.max())
        if hi <= lo:
            hi = lo + 1.0
        return np.linspace(lo, hi, bins + 1)

    y_edges = axis_edges(y, y_bins)
    x_edges = axis_edges(x, x_bins)
    if float(z.max()) == float(z.min()):
        # constant instrument: a single populated bin is the whole grid
        z_bins = 1
        z_edges = np.array([z.min() - 0.5, z.min() + 0.5])
    else:
        z_edges = axis_edges(z, z_bins)
    zi = np.clip(np.searchsorted(z_edges, z, side="right") - 1, 0, z_bins - 1)
    conds = []
    counts = np.zeros(z_bins)
    for b in range(z_bins):
        mask = zi == b
        counts[b] = mask.sum()
        if counts[b] == 0:
            raise EmptyBinError(f"z bin {b} received no samples")
        mat, _, _ = np.histogram2d(y[mask], x[mask], bins=[y_edges, x_edges])
        conds.append(Conditional2D(y_edges, x_edges, mat / mat.sum()))
    pz = GridDistribution(z_edges, counts / counts.sum())
    z_grid = 0.5 * (z_edges[:-1] + z_edges[1:])
    return JointLaw(z_grid, pz, tuple(conds))


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CellStats:
    rejection_rate: float
    replications: int
    mean_statistic: float


@dataclass(frozen=True)
class ExperimentResult:
    """Rejection rates per (spec, test) over seeded replications."""

    entries: dict[tuple[str, str], CellStats]

    def to_csv_text(self) -> str:
        out = ["spec,test,rejection_rate,reps,mean_statistic"]
        for (spec, test), st in self.entries.items():
            out.append(
                f"{spec},{test},{st.rejection_rate!r},{st.replications},{st.mean_statistic!r}"
            )
        return "\n".join(out) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "results": [
                {
                    "spec": spec,
                    "test": test,
                    "rejection_rate": st.rejection_rate,
                    "reps": st.replications,
                    "mean_statistic": st.mean_statistic,
                }
                for (spec, test), st in self.entries.items()
            ]
        }


def replication_seed(master_seed: int, rep: int) -> int:
    """Stable per-replication stream derived by hashing (seed, index)."""
    return int(np.random.SeedSequence((master_seed, rep)).generate_state(1)[0])


def run_experiment(
    specs: Sequence[DGPSpec],
    tests: Sequence[tuple[str, Callable[[JointLaw], TestReport]]],
    n: int,
    reps: int,
    seed: int,
    bins: tuple[int, int, int] = (4, 4, 4),
    nontestability_depth: int | None = None,
) -> ExperimentResult:
    """Size/power table: rejection rate of every test on every process.

    With ``nontestability_depth`` set, each replicated law is first passed
    through :func:`nontestability_demo` and the resulting valid-instrument
    model's induced law is tested as well, under the process name suffixed
    with ``@replicated``.  Those twin rows belong to the null class by
    construction, which is what bounds any test's power by its size here: a
    law from an invalid process and the law induced by its replicating valid
    model are the same object at cell resolution.
    """
    if reps < 1:
        raise ValidationError("need reps >= 1")
    results: dict[tuple[str, str], CellStats] = {}
    for spec in specs:
        rows = [spec.name]
        if nontestability_depth is not None:
            rows.append(f"{spec.name}@replicated")
        rejected = {(row, name): 0 for row in rows for name, _ in tests}
        stat_sum = {(row, name): 0.0 for row in rows for name, _ in tests}
        for rep in range(reps):
            rep_seed = replication_seed(seed, rep)
            try:
                laws = {spec.name: discretize(sample(spec, n, rep_seed), *bins)}
                if nontestability_depth is not None:
                    model, _ = nontestability_demo(laws[spec.name], nontestability_depth)
                    laws[f"{spec.name}@replicated"] = model.induced_law()
                for row, law in laws.items():
                    for name, fn in tests:
                        report = fn(law)
                        rejected[(row, name)] += report.decision == "reject"
                        stat_sum[(row, name)] += report.statistic
            except Exception as exc:
                raise type(exc)(f"spec {spec.name!r}, replication {rep}: {exc}") from exc
        for row in rows:
            for name, _ in tests:
                results[(row, name)] = CellStats(
                    rejected[(row, name)] / reps, reps, stat_sum[(row, name)] / reps
                )
    return ExperimentResult(results)


# ---------------------------------------------------------------------------
# Non-testability pipeline
# ---------------------------------------------------------------------------


def nontestability_demo(joint: JointLaw, depth: int) -> tuple[StructuralModel, float]:
    """Replicate an arbitrary observed law with a valid-instrument model.

    Builds the depth-``depth`` first stage for the law's x-marginals (the
    atomic-z variant when pz carries point masses), composes the outcome
    stage, and returns the model with its exact replication error, which is
    0 at cell resolution.  Laws whose treatment marginals are atomic at grid
    resolution are refused: for those the first stage may simply not exist.
    """
    margs = joint.x_marginals()
    degenerate = []
    for i, m in enumerate(margs):
        positive = int(np.count_nonzero(m.masses > 0))
        if any(am > 0 for _, am in m.atoms) or positive < 2:
            degenerate.append(i)
    if degenerate:
        detail = ""
        if len(degenerate) >= 2:
            i, j = degenerate[0], degenerate[1]
            a, b = margs[i].masses, margs[j].masses
            if len(a) == len(b):
                excess = minimal_collision_mass(a / a.sum(), b / b.sum())
                if excess > 0:
                    detail = (
                        f"; z sites {i} and {j} force collision mass {excess:.6g}"
                        " under every coupling"
                    )
        raise NonAtomicityError(
            f"x-marginals at z sites {degenerate} are atomic at grid resolution{detail}"
        )
    has_atoms = any(m > 0 for _, m in joint.pz.atoms)
    builder = build_generator_with_atoms if has_atoms else build_generator
    gen = builder(margs, joint.pz, joint.z_grid, depth)
    model = compose_structural_model(joint, gen)
    return model, verify_replication(model, joint)


# ---------------------------------------------------------------------------
# Analytic law construction (used by tests and demo scripts)
# ---------------------------------------------------------------------------


def population_law(
    z_grid: Sequence[float],
    pz: GridDistribution,
    conditional_at: Callable[[float], Conditional2D],
) -> JointLaw:
    """Build a joint law from an analytic conditional per z-grid value."""
    conds = tuple(conditional_at(float(z)) for z in z_grid)
    return JointLaw(np.asarray(z_grid, dtype=float), pz, conds)


def product_conditional(
    y_marg: GridDistribution, x_marg: GridDistribution
) -> Conditional2D:
    """Conditional with independent coordinates and the given marginals."""
    if y_marg.atoms or x_marg.atoms:
        raise ValidationError("product conditionals require atom-free marginals")
    mass = np.outer(y_marg.masses, x_marg.masses)
    s = mass.sum()
    return Conditional2D(y_marg.edges, x_marg.edges, mass / s)
