"""Gibbs sampling and logit dynamics for congestion games."""

from .capacitated import (
    DegreeSequence,
    exact_bipartite_count,
    mckay_estimate,
    sample_bipartite_uniform,
    sample_gibbs_cap,
    sample_load_profile_cap,
)
from .dynamics import ChainConfig, logit_step, relaxed_logit_step, run_chain, suitable_sample
from .ep import sample_gibbs_ep, sample_load_profile_ep, sample_uniform_pne
from .game import (
    EP,
    INF,
    Arc,
    CongestionGame,
    CostFunction,
    Explicit,
    Extension,
    GameError,
    KUniform,
    LoadProfile,
    Parallel,
    is_nash,
    potential,
    rosenthal_potential,
)
from .gamefile import dump_game, load_game, parse_game
from .matroid import MatroidSpec, sample_polymatroid_base
from .verify import (
    check_exact_potential,
    check_m_convex,
    exact_gibbs,
    exact_mixing_time,
    tv_distance,
)

__version__ = "0.1.0"
