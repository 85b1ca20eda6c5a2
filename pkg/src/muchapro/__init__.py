"""Multi-channel SAR despeckling through single-channel projections."""

__version__ = "0.1.0"

from .core import (
    CovarianceField,
    MultiChannelSLCImage,
    devectorize_hermitian,
    interferometric_products,
    quadratic_form,
    vectorize_hermitian,
)
from .projection import (
    ProjectionDirectionSet,
    ProjectionOperator,
    build_operator,
    invert_projections,
    project,
    run_muchapro,
)
from .pdenforce import PDEnforceParams, enforce_pd, enforce_pd_field

__all__ = [
    "CovarianceField",
    "MultiChannelSLCImage",
    "PDEnforceParams",
    "ProjectionDirectionSet",
    "ProjectionOperator",
    "build_operator",
    "devectorize_hermitian",
    "enforce_pd",
    "enforce_pd_field",
    "interferometric_products",
    "invert_projections",
    "project",
    "quadratic_form",
    "run_muchapro",
    "vectorize_hermitian",
]
