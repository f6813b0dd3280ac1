"""Right inverses of the divergence (Bogovskii operators) on perforated domains.

Modules: ``geometry`` (domains and hole layouts), ``fields`` (staggered grid
fields and discrete operators), ``cutoffs`` (radial cutoff functions),
``divsolve`` (right inverses on a region), ``perforated`` (restriction
operator and the composed perforated inverse), ``harness`` (epsilon sweeps,
Poincare constants), ``ledger`` (exponent identities), ``cli``.
"""
from .errors import DivInvError
from .geometry import BaseDomain, HoleShape, HoleSpec, PerforationConfig, validate_config
from .perforated import bogovskii_perforated, discretize, make_rhs

__version__ = "0.1.0"

__all__ = [
    "DivInvError", "BaseDomain", "HoleShape", "HoleSpec", "PerforationConfig", "validate_config",
    "bogovskii_perforated", "discretize", "make_rhs", "__version__",
]
