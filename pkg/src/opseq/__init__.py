"""opseq: opcode-sequence feature engineering and classification.

Per-sample hidden Markov models and word embeddings turn opcode streams
into fixed-length feature vectors, which feed kNN, SVM, random forest,
and feedforward neural classifiers through a reproducible experiment
harness.
"""

from .corpus import (
    CorpusManifest,
    FamilyGenerator,
    OpcodeSequence,
    RawListing,
    Vocabulary,
    build_vocabulary,
    filter_sequence,
    generate_synthetic_corpus,
    parse_disassembly,
    scramble,
)
from .embed import EmbeddingMatrix, W2vParams, sgns_loss_and_grad, train_word2vec, word2vec_features
from .features import FeatureVector, read_features_csv, write_features_csv
from .harness import (
    ConfusionMatrix,
    ExperimentConfig,
    Report,
    RobustnessReport,
    emit_report,
    grid_search,
    robustness_study,
    run_experiment,
    split,
)
from .hmm import (
    HmmModel,
    RestartPolicy,
    baum_welch,
    forward_log_prob,
    hmm2vec,
    train_with_restarts,
)

__version__ = "0.1.0"

__all__ = [
    "RawListing",
    "OpcodeSequence",
    "Vocabulary",
    "CorpusManifest",
    "FamilyGenerator",
    "parse_disassembly",
    "build_vocabulary",
    "filter_sequence",
    "scramble",
    "generate_synthetic_corpus",
    "HmmModel",
    "RestartPolicy",
    "forward_log_prob",
    "baum_welch",
    "train_with_restarts",
    "hmm2vec",
    "EmbeddingMatrix",
    "W2vParams",
    "sgns_loss_and_grad",
    "train_word2vec",
    "word2vec_features",
    "FeatureVector",
    "read_features_csv",
    "write_features_csv",
    "ExperimentConfig",
    "ConfusionMatrix",
    "Report",
    "RobustnessReport",
    "split",
    "run_experiment",
    "grid_search",
    "robustness_study",
    "emit_report",
    "__version__",
]
