"""Cross-modal retrieval and zero-resource spoken-language evaluation toolkit.

Pure numerical kernels over precomputed features: contrastive matching
losses with analytic gradients, product-codebook and k-means
quantization, span mask sampling, coarse-to-fine retrieval with recall
metrics, DTW-based discriminability scoring, pooled-vector rank
correlation, and span-factored pseudo-probabilities under a pluggable
unit language model.
"""

from .abx import AbxReport, abx_error, dtw_distance
from .exceptions import (
    BadMagicError,
    DegenerateInputError,
    DimMismatchError,
    EmptyBatchError,
    EmptyCorpusError,
    EmptyManifestError,
    EmptySequenceError,
    FeatureFormatError,
    InvalidDistributionError,
    KcSmallerThanNError,
    LengthMismatchError,
    ManifestError,
    MaskRowAllOnesError,
    MissingFeatureError,
    NonFiniteEvaluationError,
    NonFiniteValueError,
    NonPositiveTemperatureError,
    ShapeMismatchError,
    TooFewPointsError,
    ToolkitError,
    TruncatedFileError,
    UnknownQueryError,
    ZeroNormFrameError,
    ZeroVectorError,
)
from .featstore import (
    FrameSequence,
    Judgment,
    PairManifest,
    PairRecord,
    Triplet,
    UnitSequence,
    build_positive_mask,
    load_feature_dir,
    read_features,
    read_judgments,
    read_triplets,
    read_unit_sequences,
    write_features,
    write_judgments,
    write_triplets,
    write_unit_sequences,
)
from .losses import (
    LossWeights,
    cosine_contrastive_loss,
    diversity_loss,
    finite_difference_check,
    matching_loss,
    matching_loss_terms,
    total_objective,
)
from .masking import MaskSpec, batch_masks, batch_span_starts, expected_masked_fraction, sample_mask
from .quantize import (
    AssignResult,
    Codebook,
    KMeansQuantizer,
    batch_code_distribution,
    codebook_assign,
    kmeans_fit,
    kmeans_quantize,
    load_kmeans,
    save_kmeans,
)
from .retrieval import (
    DotProductFineScorer,
    RankedList,
    TableFineScorer,
    coarse_scores,
    ctf_retrieve,
    recall_at_n,
    top_k,
)
from .semantic import model_similarity, pool, semantic_score, spearman
from .unitlm import (
    NGramUnitLM,
    SpanSpec,
    UnitLM,
    ngram_train,
    paired_accuracy,
    pseudo_logprob,
    pseudo_logprob_repeated,
    span_sample,
)

__version__ = "0.1.0"
