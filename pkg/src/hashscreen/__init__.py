"""Cross-modal hashing for virtual screening at retrieval scale.

Two feed-forward encoders map protein-pocket and molecule feature vectors
into a shared d-dimensional space, trained with a bidirectional InfoNCE
loss plus a sign-quantization penalty. Databases store one bit per
dimension (32x smaller than float32) and are searched by exact exhaustive
Hamming scans with popcount kernels.

Typical flow: train -> encode -> build_database -> topk_hamming -> metrics.
"""

from .codes import (
    BinaryCode,
    cosine_similarity,
    hamming_distance,
    pack_bits,
    pack_sign_matrix,
    sign_quantize,
    unpack_bits,
    unpack_word_matrix,
)
from .codedb import (
    BenchReport,
    CodeDatabase,
    SearchResult,
    bench,
    build_database,
    open_database,
    payload_sizes,
    topk_cosine,
    topk_hamming,
)
from .dataio import PairDataset, SynthSpec, generate_synthetic, load_pairs, split
from .encoder import (
    EncoderConfig,
    Model,
    backward,
    encode,
    encode_batch,
    init_model,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .errors import (
    CorruptCheckpointError,
    CorruptDatabaseError,
    DegenerateInputError,
    HashscreenError,
    InvalidInputError,
    ParseError,
    ResourceLimitError,
    ShapeError,
    TrainingDivergedError,
    UndefinedMetricError,
)
from .kernels import BACKEND
from .metrics import (
    MetricReport,
    Ranking,
    auroc,
    bedroc,
    enrichment_factor,
    evaluate_ranking,
    evaluate_screen,
    make_ranking,
)
from .training import (
    Adam,
    LossReport,
    TrainingConfig,
    TrainResult,
    contrastive_loss,
    hash_loss,
    loss_gradients,
    total_loss,
    train,
    train_step,
    update_codes,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Adam",
    "BenchReport",
    "BinaryCode",
    "CodeDatabase",
    "CorruptCheckpointError",
    "CorruptDatabaseError",
    "DegenerateInputError",
    "EncoderConfig",
    "HashscreenError",
    "InvalidInputError",
    "LossReport",
    "MetricReport",
    "Model",
    "PairDataset",
    "ParseError",
    "Ranking",
    "ResourceLimitError",
    "SearchResult",
    "ShapeError",
    "SynthSpec",
    "TrainResult",
    "TrainingConfig",
    "TrainingDivergedError",
    "UndefinedMetricError",
    "auroc",
    "backward",
    "bedroc",
    "bench",
    "build_database",
    "contrastive_loss",
    "cosine_similarity",
    "encode",
    "encode_batch",
    "enrichment_factor",
    "evaluate_ranking",
    "evaluate_screen",
    "generate_synthetic",
    "hamming_distance",
    "hash_loss",
    "init_model",
    "init_params",
    "load_checkpoint",
    "load_pairs",
    "loss_gradients",
    "make_ranking",
    "open_database",
    "pack_bits",
    "pack_sign_matrix",
    "payload_sizes",
    "sign_quantize",
    "split",
    "save_checkpoint",
    "topk_cosine",
    "topk_hamming",
    "total_loss",
    "train",
    "train_step",
    "unpack_bits",
    "unpack_word_matrix",
    "update_codes",
]
