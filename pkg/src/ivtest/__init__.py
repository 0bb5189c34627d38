"""Grid-measure laboratory for instrument-validity testing.

Core pieces: exact grid measures (:mod:`ivtest.measures`), the
injectivity-improving first-stage construction and structural models
(:mod:`ivtest.generator`), the testable implications
(:mod:`ivtest.validity`), and the simulation harness
(:mod:`ivtest.simulate`).
"""

from .errors import (
    DegenerateGridError,
    DeskScaleError,
    EmptyBinError,
    IVTestError,
    MarginalMismatchError,
    NonAtomicityError,
    NonInvertibleError,
    ValidationError,
)
from .generator import (
    GeneratorMap,
    PartitionNode,
    StructuralModel,
    ZCell,
    build_generator,
    build_generator_with_atoms,
    collision_fraction,
    compose_structural_model,
    group_collision_matrix,
    invert_generator,
    verify_replication,
)
from .measures import (
    Conditional2D,
    CouplingMatrix,
    GridDistribution,
    JointLaw,
    MeasurableSet,
    cdf_distance_sup,
    fosd_check,
    fosd_violation,
    hausdorff_support_distance,
    quantile,
    split_equal_measure,
    winf_distance,
)
from .simulate import (
    Dataset,
    DGPSpec,
    ExperimentResult,
    discretize,
    nontestability_demo,
    population_law,
    product_conditional,
    run_experiment,
    sample,
)
from .validity import (
    ContinuityParams,
    InfeasibilityCertificate,
    TestReport,
    TupleCoupling,
    continuity_moment_statistic,
    discrete_generator_feasible,
    instrumental_inequality,
    jump_test,
    make_test,
    minimal_collision_mass,
    monotonicity_sure_decrease_test,
    monotonicity_test,
)

__all__ = [
    "Conditional2D",
    "ContinuityParams",
    "CouplingMatrix",
    "DGPSpec",
    "Dataset",
    "DegenerateGridError",
    "DeskScaleError",
    "EmptyBinError",
    "ExperimentResult",
    "GeneratorMap",
    "GridDistribution",
    "IVTestError",
    "InfeasibilityCertificate",
    "JointLaw",
    "MarginalMismatchError",
    "MeasurableSet",
    "NonAtomicityError",
    "NonInvertibleError",
    "PartitionNode",
    "StructuralModel",
    "TestReport",
    "TupleCoupling",
    "ValidationError",
    "ZCell",
    "build_generator",
    "build_generator_with_atoms",
    "cdf_distance_sup",
    "collision_fraction",
    "compose_structural_model",
    "continuity_moment_statistic",
    "discrete_generator_feasible",
    "discretize",
    "fosd_check",
    "fosd_violation",
    "group_collision_matrix",
    "hausdorff_support_distance",
    "instrumental_inequality",
    "invert_generator",
    "jump_test",
    "make_test",
    "minimal_collision_mass",
    "monotonicity_sure_decrease_test",
    "monotonicity_test",
    "nontestability_demo",
    "population_law",
    "product_conditional",
    "quantile",
    "run_experiment",
    "sample",
    "split_equal_measure",
    "verify_replication",
    "winf_distance",
]

__version__ = "0.1.0"
