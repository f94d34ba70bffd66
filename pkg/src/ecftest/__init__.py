"""Quasi-F tests for equality of covariance functions of k functional samples."""
from .core import (
    FunctionalDataset,
    FunctionalGroup,
    Grid,
    group_cov,
    group_mean,
    pooled_cov,
    subject_effects,
)
from .errors import DegenerateDataError, ECFError, ValidationError
from .permutation import make_plan, perm_test, perm_tests
from .report import TestReport
from .surfaces import globalize, quasi_f_surface, ssb_surface, sse_surface
from .ws import chi2_sf, gpf_nv

__version__ = "0.1.0"

__all__ = [
    "FunctionalDataset",
    "FunctionalGroup",
    "Grid",
    "group_cov",
    "group_mean",
    "pooled_cov",
    "subject_effects",
    "DegenerateDataError",
    "ECFError",
    "ValidationError",
    "make_plan",
    "perm_test",
    "perm_tests",
    "TestReport",
    "globalize",
    "quasi_f_surface",
    "ssb_surface",
    "sse_surface",
    "chi2_sf",
    "gpf_nv",
]
