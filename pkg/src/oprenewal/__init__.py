"""Operator renewal sequences for intermittent interval maps.

Builds Ulam discretisations of the first-return transfer operators ``R_n``
of a map with an indifferent fixed point, runs the renewal recursion
``T_n = sum_j T_{n-j} R_j``, and checks its limit laws numerically.
"""
__version__ = "0.1.0"

from .errors import (BetaOutOfRange, CylinderBoundary, HorizonTooLarge, InvalidInducingSet,
                     NoConvergence, NoDominantEigenvalue, NonContractingPreimage,
                     OpRenewalError, SeriesDivergence, SingularResolvent, SupportViolation,
                     TruncationTooCoarse, UnsupportedObservable)
from .maps import LsvParams, PiecewiseMap, make_lsv, make_map
from .induced import TailModel, build_return_structure, induced_apply, tail_model
from .density import induced_density, spread_density
from .renewal_ops import OperatorSeq, ObservableOnX, assemble_Rn, build_operator, convolve_T
from .spectral import ConstantSet, constants, d_beta, fourier_oracle_Tn, leading_eigen, \
    R_of_theta
from .scalar import renewal_sequence
from .limits import NormalizerM, VerifierReport
from .stochastic import RenewalSampler, mittag_leffler_cdf

__all__ = [
    "BetaOutOfRange", "CylinderBoundary", "HorizonTooLarge", "InvalidInducingSet",
    "NoConvergence", "NoDominantEigenvalue", "NonContractingPreimage", "OpRenewalError",
    "SeriesDivergence", "SingularResolvent", "SupportViolation", "TruncationTooCoarse",
    "UnsupportedObservable", "LsvParams", "PiecewiseMap", "make_lsv", "make_map",
    "TailModel", "build_return_structure", "induced_apply", "tail_model",
    "induced_density", "spread_density", "OperatorSeq", "ObservableOnX", "assemble_Rn",
    "build_operator", "convolve_T", "ConstantSet", "constants", "d_beta",
    "fourier_oracle_Tn", "leading_eigen", "R_of_theta", "renewal_sequence",
    "NormalizerM", "VerifierReport", "RenewalSampler", "mittag_leffler_cdf",
]
