//! Two-step detection of self-admitted technical debt (SATD) in software
//! artifacts: a recurrent binary identifier followed by a transformer
//! type categorizer, with paraphrase augmentation to repair class
//! imbalance, an evaluation harness, and embedding-similarity keyword
//! extraction.

pub mod augment;
pub mod categorizer;
pub mod corpus;
pub mod embeddings;
pub mod gateway;
pub mod identifier;
pub mod keywords;
pub mod manifest;
pub mod metrics;
pub mod nn;
pub mod preprocess;
pub mod reference;
pub mod synthetic;

pub use augment::{
    augment_training_set, build_prompt, entropy_balance, plan_augmentation, AugmentError,
    AugmentOptions, AugmentOutcome, AugmentScope, AugmentationPlan, AugmentedInstance,
    ClassDistribution,
};
pub use categorizer::{
    train_categorizer, two_step_classify, CategorizerConfig, CategorizerError, TrainedCategorizer,
    WordPieceTokenizer,
};
pub use corpus::{
    class_counts, load_dataset, stratified_split, to_binary, write_dataset, ArtifactSource,
    BinaryInstance, BinaryLabel, CorpusError, DatasetFormat, Instance, LabeledInstance, SatdLabel,
    SplitBundle,
};
pub use gateway::{
    build_client, GatewayConfig, GatewayError, GatewayKind, GenerationClient, GenerationResult,
    Message,
};
pub use identifier::{
    build_vocabulary, encode, train_identifier, IdentifierConfig, IdentifierError,
    TrainedIdentifier, Vocabulary,
};
pub use keywords::{
    cosine_similarity, extract_keywords, keyword_tables, Embedder, HashedEmbedder, KeywordError,
    KeywordQuery, KeywordResult,
};
pub use manifest::{RunManifest, SeedFanout};
pub use metrics::{
    emit_report, f1_scores, macro_f1, ConfusionMatrix, MetricReport, MetricsError, ReportFormat,
};
pub use preprocess::{deduplicate, preprocess_text, PreprocessConfig};
