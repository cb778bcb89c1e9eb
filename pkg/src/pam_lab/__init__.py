"""Numerical toolkit for parabolic Anderson models driven by fractional Gaussian noise."""
from .spectral import HurstParams, MollifiedSpectralMeasure
from .regime import Skorohod, classify, critical_time
from .moments import (
    MCConfig,
    MomentEstimate,
    blowup_scan,
    hypercontractivity_check,
    skorohod_moment,
    stratonovich_moment,
    subadditivity_check,
)

__version__ = "0.1.0"
