"""Optimal privacy amplification bounds for shuffled local randomizers."""

from .amplifier import (BoundReport, CurvePoint, LatticeDist, ResourceLimitError,
                        SearchRangeError, curve, default_step, delta_bound,
                        delta_exact_smalln, discretize, find_eps0, find_epsilon,
                        positive_part_mean, self_convolve)
from .decomposition import (CloneComponent, CloneDecomposition, constant_decomposition,
                            five_component, joint, parallel, primary_optimal, simplify,
                            unchanged, validate)
from .gparv import (Gparv, gparv_laplace_lower, gparv_laplace_upper, gparv_lower,
                    gparv_std_clone, gparv_upper)
from .mechanisms import Constant, Joint, Parallel, Single, subsample
from .probdist import FiniteDist, Kernel, hockey_stick, mixture, product
from .randomizers import (Kind, PqrGamma, RandomizerSpec, build_table, closed_form_pqr,
                          laplace01_cdf_parv, load_kernel_json)

__version__ = "0.1.0"
