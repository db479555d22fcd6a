"""Difference-of-log-sum-exp (DLSE) surrogate models: fitting, optimization and export."""

from .core import (DlseModel, LseParams, eval_dlse, eval_lse, eval_tropical_limit, grad_x_dlse,
                   grad_x_lse, kappa, softmax_weights)
from .dca import Box, DcaConfig, ScaledSimplex, dlsea, multistart
from .errors import (DataError, DimensionError, DlseError, NonFiniteError, NumericalError,
                     RationalizationError)
from .gpos import emit_sf, eval_sf, format_sf, parse_sf, rationalize
from .pwa import PwaSpec, pwa_to_dlse
from .training import Dataset, TrainConfig, fit

__version__ = "0.1.0"
