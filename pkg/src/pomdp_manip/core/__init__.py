from pomdp_manip.core.belief import (
    BeliefCollapse,
    EmptyBelief,
    ParticleBelief,
    belief_update_exec,
    effective_sample_size,
    resample,
)
from pomdp_manip.core.episode import EpisodeResult, Step, run_episode
from pomdp_manip.core.model import (
    BatchModel,
    GenerativeModel,
    InvalidAction,
    InvalidObservation,
    ObjectBatch,
    as_batch,
    object_array,
)

__all__ = [
    "BatchModel",
    "BeliefCollapse",
    "EmptyBelief",
    "EpisodeResult",
    "GenerativeModel",
    "InvalidAction",
    "InvalidObservation",
    "ObjectBatch",
    "ParticleBelief",
    "Step",
    "as_batch",
    "belief_update_exec",
    "effective_sample_size",
    "object_array",
    "resample",
    "run_episode",
]
