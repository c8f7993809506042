"""Piecewise-linear regression with difference of max-affine (DoMA) models."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DivergenceError,
    DomaError,
    InfeasibleSpecError,
    InitializationError,
    InvalidInputError,
    SearchTooLargeError,
)
from .model import (  # noqa: E402
    ActivationIndex,
    Dataset,
    DomaModel,
    activation_index,
    argmax_pair,
    evaluate,
    predict,
    validate,
)
from .optimizer import FitConfig, FitReport, abgd_sweep, fit, loss  # noqa: E402
from .spectral import InitConfig, initialize  # noqa: E402
from .metrics import relative_param_error, resolve_ambiguity, test_nmse  # noqa: E402
from .tropical import compress  # noqa: E402
