//! Published class counts of the multi-source SATD benchmark dataset and
//! the whole-dataset table-reproduction mode built on them.
//!
//! This mode never feeds training: it exists so the augmentation plans and
//! entropy balances computed by this crate can be checked against the
//! published tables without the full dataset on disk.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::augment::{
    entropy_balance, plan_augmentation, AugmentError, AugmentScope, AugmentationPlan,
    ClassDistribution,
};
use crate::corpus::{ArtifactSource, SatdLabel};

/// Class counts of one artifact source in the published benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactCounts {
    pub source: ArtifactSource,
    pub code_design: u64,
    pub documentation: u64,
    pub test: u64,
    pub requirement: u64,
    pub not_satd: u64,
}

impl ArtifactCounts {
    pub fn satd_total(&self) -> u64 {
        self.code_design + self.documentation + self.test + self.requirement
    }

    pub fn type_distribution(&self) -> ClassDistribution {
        ClassDistribution::from_counts([
            (SatdLabel::CodeDesign.name().to_string(), self.code_design),
            (SatdLabel::Documentation.name().to_string(), self.documentation),
            (SatdLabel::Test.name().to_string(), self.test),
            (SatdLabel::Requirement.name().to_string(), self.requirement),
        ])
    }

    pub fn binary_distribution(&self) -> ClassDistribution {
        ClassDistribution::from_counts([
            ("SATD".to_string(), self.satd_total()),
            ("NOT_SATD".to_string(), self.not_satd),
        ])
    }
}

/// Published per-source class counts (code comments, issue sections,
/// pull sections, commit messages).
pub const BENCHMARK_COUNTS: [ArtifactCounts; 4] = [
    ArtifactCounts {
        source: ArtifactSource::CodeComment,
        code_design: 2703,
        documentation: 54,
        test: 85,
        requirement: 757,
        not_satd: 58_204,
    },
    ArtifactCounts {
        source: ArtifactSource::IssueSection,
        code_design: 2169,
        documentation: 487,
        test: 338,
        requirement: 97,
        not_satd: 20_089,
    },
    ArtifactCounts {
        source: ArtifactSource::PullSection,
        code_design: 510,
        documentation: 101,
        test: 68,
        requirement: 20,
        not_satd: 4301,
    },
    ArtifactCounts {
        source: ArtifactSource::CommitMessage,
        code_design: 522,
        documentation: 98,
        test: 58,
        requirement: 27,
        not_satd: 4295,
    },
];

pub fn benchmark_counts(source: ArtifactSource) -> ArtifactCounts {
    BENCHMARK_COUNTS
        .iter()
        .copied()
        .find(|c| c.source == source)
        .expect("all four sources are present")
}

/// Everything the table-reproduction mode derives for one artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactTable {
    pub source: String,
    pub original: BTreeMap<String, u64>,
    pub plan: AugmentationPlan,
    /// Final per-type counts after planned augmentation.
    pub augmented: BTreeMap<String, u64>,
    pub entropy_identification_original: f64,
    pub entropy_identification_augmented: f64,
    pub entropy_categorization_original: f64,
    pub entropy_categorization_augmented: f64,
}

/// Derived tables for all four artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTables {
    pub artifacts: Vec<ArtifactTable>,
}

/// Compute plans, final counts, and entropy balances from per-source
/// class counts.
pub fn reproduce_tables(counts: &[ArtifactCounts]) -> Result<BenchmarkTables, AugmentError> {
    let mut artifacts = Vec::with_capacity(counts.len());
    for c in counts {
        let types = c.type_distribution();
        let plan = plan_augmentation(&types, AugmentScope::TypesOnly)?;
        let augmented_types = ClassDistribution::from_counts(
            plan.expected_final
                .iter()
                .map(|(k, v)| (k.clone(), *v)),
        );
        let augmented_satd: u64 = plan.expected_final.values().sum();
        let augmented_binary = ClassDistribution::from_counts([
            ("SATD".to_string(), augmented_satd),
            ("NOT_SATD".to_string(), c.not_satd),
        ]);
        artifacts.push(ArtifactTable {
            source: c.source.code().to_string(),
            original: types.counts().clone(),
            augmented: plan.expected_final.clone(),
            entropy_identification_original: entropy_balance(&c.binary_distribution())?,
            entropy_identification_augmented: entropy_balance(&augmented_binary)?,
            entropy_categorization_original: entropy_balance(&types)?,
            entropy_categorization_augmented: entropy_balance(&augmented_types)?,
            plan,
        });
    }
    Ok(BenchmarkTables { artifacts })
}
