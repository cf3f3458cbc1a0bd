"""Broadcast-controlled ensembles on matrix Lie groups.

Distinguished generator sets and their bracket tables, adjoint matrix
coefficients, ensemble integration, control synthesis from monomials in
parametrization functions, moment-based observability and sphere ensembles.
"""

__version__ = "0.1.0"

from .liecore import (  # noqa: E402
    AlgebraElement,
    GroupElement,
    bracket,
    btheta,
    descriptor,
    expm,
    group_exp,
    identity,
    killing_form,
)
from .structure import (  # noqa: E402
    GeneratorSet,
    catalog_set,
    indicator_sequences,
    lie_closure,
    verify_distinguished,
    verify_pre_distinguished,
)
from .coefficients import CoefficientFamily, center_elements, phi_eval, verify_codistinguished  # noqa: E402
from .ensemble import (  # noqa: E402
    ControlSignal,
    EnsembleSystem,
    ParametrizationSet,
    PiecewiseConstantInput,
    Profile,
    build_grid,
    check_separating,
    ensemble_output,
    integrate_ensemble,
    profile_sup_distance,
)

__all__ = [
    "AlgebraElement",
    "CoefficientFamily",
    "ControlSignal",
    "EnsembleSystem",
    "GeneratorSet",
    "GroupElement",
    "ParametrizationSet",
    "PiecewiseConstantInput",
    "Profile",
    "bracket",
    "btheta",
    "build_grid",
    "catalog_set",
    "center_elements",
    "check_separating",
    "descriptor",
    "ensemble_output",
    "expm",
    "group_exp",
    "identity",
    "indicator_sequences",
    "integrate_ensemble",
    "killing_form",
    "lie_closure",
    "phi_eval",
    "profile_sup_distance",
    "verify_codistinguished",
    "verify_distinguished",
    "verify_pre_distinguished",
]
