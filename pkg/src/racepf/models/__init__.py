"""Concrete state-space models packaged for the filter engine."""

from . import gaussian, oucox, sine
from .gaussian import GaussianSSMParams
from .oucox import OUCoxParams
from .sine import SineDiffusionParams

__all__ = [
    "gaussian",
    "sine",
    "oucox",
    "GaussianSSMParams",
    "SineDiffusionParams",
    "OUCoxParams",
]
