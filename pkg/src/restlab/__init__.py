"""Numerical laboratory for multilinear restriction estimates.

Submodules group by subject: ``geometry`` (patches, submanifolds,
transversality), ``profiles`` (polynomial bumps), ``lattice`` (cube
lattices and band-limited partitions of unity), ``oscillation``
(densities, extension fields, slices, decay), ``discrete_lw`` (exact
product-projection inequalities on index boxes), ``sparse``
(superlevel decompositions and sparse covers), ``experiments``
(best-constant ledgers, localization gain, scale recursion, exponent
bookkeeping), and ``cli`` (the batch runner).  The names most scripts
need are re-exported here.
"""

from .geometry import (
    Box,
    HypersurfacePatch,
    SubmanifoldSpec,
    TransversalFamily,
    check_transversality,
    finite_type_order,
    wedge_norm,
)
from .profiles import BumpPolyProfile, random_profile
from .lattice import (
    BumpFamily,
    BumpProfile,
    CubeLattice,
    bump_spectrum_check,
    partition_check,
)
from .oscillation import (
    ResolutionError,
    SampledDensity,
    commutator_check,
    decay_fit,
    density_from_profile,
    evaluate_extension,
    evaluate_field,
    geometric_radii,
    make_density,
    random_density,
    slice_field,
    slice_mass,
)
from .presets import (
    band_submanifold,
    family_from_table,
    flat_patch,
    monomial_patch,
    paraboloid_patch,
    polynomial_patch,
    sphere_cap_patch,
)
from .discrete_lw import (
    LatticeFunction,
    holder_chain_check,
    lattice_function,
    lw_ratio,
    lw_refined_ratio,
    random_lattice_function,
)
from .sparse import (
    coverage_check,
    is_sparse,
    sparse_cover,
    stability_radius,
    superlevel_extract,
)
from .experiments import (
    ConstantLedger,
    GainCurve,
    LedgerEntry,
    best_constant_estimate,
    c_factor,
    cuant_product,
    eps_removal_exponent,
    flatten_density,
    localization_gain_curve,
    localized_slice_bound,
    modulate_density,
    product_quasinorm,
    recursion_check,
    refined_rhs,
    removal_delta,
    sample_localized_density,
    translate_density,
    weak_type_assembly,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "Box",
    "HypersurfacePatch",
    "SubmanifoldSpec",
    "TransversalFamily",
    "check_transversality",
    "finite_type_order",
    "wedge_norm",
    "BumpPolyProfile",
    "random_profile",
    "BumpFamily",
    "BumpProfile",
    "CubeLattice",
    "bump_spectrum_check",
    "partition_check",
    "ResolutionError",
    "SampledDensity",
    "commutator_check",
    "decay_fit",
    "density_from_profile",
    "evaluate_extension",
    "evaluate_field",
    "geometric_radii",
    "make_density",
    "random_density",
    "slice_field",
    "slice_mass",
    "band_submanifold",
    "family_from_table",
    "flat_patch",
    "monomial_patch",
    "paraboloid_patch",
    "polynomial_patch",
    "sphere_cap_patch",
    "LatticeFunction",
    "holder_chain_check",
    "lattice_function",
    "lw_ratio",
    "lw_refined_ratio",
    "random_lattice_function",
    "coverage_check",
    "is_sparse",
    "sparse_cover",
    "stability_radius",
    "superlevel_extract",
    "ConstantLedger",
    "GainCurve",
    "LedgerEntry",
    "best_constant_estimate",
    "c_factor",
    "cuant_product",
    "eps_removal_exponent",
    "flatten_density",
    "localization_gain_curve",
    "localized_slice_bound",
    "modulate_density",
    "product_quasinorm",
    "recursion_check",
    "refined_rhs",
    "removal_delta",
    "sample_localized_density",
    "translate_density",
    "weak_type_assembly",
]
