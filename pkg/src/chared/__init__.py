"""Character-wise ensemble decoding for token-level language models.

Combines two models with arbitrary vocabularies and tokenizers at
inference time: each model's next-token distribution is marginalized
into a next-character distribution, the two are mixed with a weight,
and text is emitted character by character, re-querying a model
whenever its current token ends.  Exact brute-force oracles verify at
desk scale that single-model decoding is distribution-preserving and
that the ensemble is invariant to retokenization.
"""

__version__ = "0.1.0"

from .core import (
    BYTE_MODE,
    CHAR_MODE,
    EOS_ATOM,
    EOT_MARK,
    CharDistribution,
    EotSplit,
    ResidualTable,
    TableOrigin,
    Weight,
    atoms_to_text,
    filter_and_strip,
    marginal_char_distribution,
    mix,
    renormalize,
    select_atom,
    split_eot,
    text_to_atoms,
)
from .decoder import (
    DecoderConfig,
    DecoderState,
    GenerationRecord,
    StepOutcome,
    decode,
    init,
    step,
)
from .errors import (
    CharedError,
    CombinatorialBudgetExceeded,
    DecodeFinished,
    EmptySupport,
    HorizonMismatch,
    InvalidWeight,
    LoadError,
    MalformedResponse,
    ProviderUnavailable,
    ReplayMiss,
    UnknownContext,
    ZeroMass,
)
from .oracle import (
    BranchNode,
    EnumerationTrace,
    StringDistribution,
    char_level_conditional,
    characterize_toy_lm,
    exact_chared_distribution,
    exact_lm_string_distribution,
    prefix_mass,
    string_distribution_from_array,
    string_distribution_to_array,
    total_variation,
)
from .providers import (
    ProviderDescriptor,
    RecordingProvider,
    RemoteProvider,
    ReplayProvider,
    TokenDistribution,
    ToyLanguageModel,
    ToyProvider,
    build_provider,
    load_toy_model,
    load_toy_model_file,
    next_token_distribution,
    record_replay,
)
from .sweep import SweepResult, SweepRow, SweepSpec, SweepTask, default_grid, run_sweep

__all__ = [name for name in dir() if not name.startswith("_")]
