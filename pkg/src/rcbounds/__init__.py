"""Non-asymptotic Rao-Cramer type lower bounds in rearrangement-invariant norms."""

from .bounds import (general_lower_bound, kb_constant, lower_bound_bphi, lower_bound_gls, lower_bound_lp,
                     rosenthal_bound)
from .families import get_family
from .fisher import fisher_bphi, fisher_gls, fisher_p
from .norms import NormSpec, bphi_norm, gls_norm, lorentz_quasinorm, lp_norm

__all__ = [
    "NormSpec", "bphi_norm", "fisher_bphi", "fisher_gls", "fisher_p", "general_lower_bound", "get_family",
    "gls_norm", "kb_constant", "lorentz_quasinorm", "lower_bound_bphi", "lower_bound_gls", "lower_bound_lp",
    "lp_norm", "rosenthal_bound",
]
