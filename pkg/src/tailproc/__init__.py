"""Tail processes of regularly varying sequences: exact laws and simulation."""
__version__ = "0.1.0"

from .seqcore import (
    EmptyExceedanceSet,
    LatticeSeq,
    NotInE0,
    ZeroSequence,
    anchor_first_exceedance,
    anchor_first_maximum,
    canonicalize_mod_shift,
    exceedance_set,
    shift,
    sup_norm,
    tau_cyclic,
    tau_nearest,
)
from .distcalc import (
    AnchoredModel,
    AtomicDist,
    MalformedModel,
    TailModel,
    anchored_from_spectral,
    extremal_index_inverse_count,
    extremal_index_spectral,
    rs_transform,
    spectral_from_anchored,
    tcf_check,
)
from .models import (
    MAStencilModel,
    PRESETS,
    load_model,
    ma_anchored,
    ma_extremal_index,
    ma_spectral,
    preset,
)
from .simulate import (
    PathConfig,
    campbell_check,
    cluster_experiment,
    estimator_convergence,
    poisson_cluster_experiment,
    randomized_origin_experiment,
    simulate_path,
    tail_process_experiment,
)
