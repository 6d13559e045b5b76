//! Query sessions, splitting, feature preparation and the synthetic
//! multi-domain generator.

mod normalize;
mod session;
mod split;
mod synthetic;
mod text;

pub use normalize::{normalize_features, FeatureStats, MIN_STD};
pub use session::{Item, QuerySession, DEFAULT_MAX_LIST_LENGTH};
pub use split::{filter_domain, split_by_time, Splits};
pub use synthetic::{
    generate_synthetic, logistic, SplitCounts, SyntheticData, SyntheticSpec, SyntheticWorld, TEST_END, TRAIN_END,
    TRAIN_START, VALID_END,
};
pub use text::{append_text_features, text_similarity, trigram_counts, TEXT_FEATURES};
