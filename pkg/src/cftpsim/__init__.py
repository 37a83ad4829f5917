"""Coupling-from-the-past simulator and analysis toolkit for the
random-cluster and Ising heat-bath processes."""

from .connectivity import (EdgeConfig, LabelingOracle, PivotalityOracle,
                           component_count, is_pivotal)
from .coupon import (CouponMoments, coupon_moments, coupon_tail, coupon_time,
                     gumbel_cdf, gumbel_pdf)
from .fk import (CouplingCapError, CouplingSample, CouplingState, FkParams,
                 NoiseStep, apply_update, cftp_sample, coupled_step,
                 forward_coupling_time, heat_bath_threshold,
                 stationary_series)
from .graph import Graph, graph_from_description, make_torus, make_tree
from .ising import (BETA_C_2D, IsingParams, SpinConfig, ising_coupling_time,
                    ising_trel_1d, magnetization_series, spin_update)
from .oracle import (CheckReport, ExactChain, PairChain, check_appendixA,
                     check_lemma1, check_theorem1, check_theorem2iv,
                     enumerate_chain, exact_d, exact_tmix,
                     ising_pair_chain_law, pair_chain_law)
from .stats import (AutocorrEstimate, GevParams, MomentEstimate, ScalingFit,
                    autocorrelation, bootstrap_se, estimate_moments, fit_gev,
                    fit_scaling, fit_texp, gev_cdf, gev_sample, ks_distance,
                    standardize)

__version__ = "0.1.0"
