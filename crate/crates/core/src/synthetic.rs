//! Deterministic synthetic corpora for offline demos and tests.
//!
//! Texts are assembled from template families per label with wide filler
//! pools, so debt markers stay the only high-frequency vocabulary and no
//! two instances normalize to the same token string (a trailing
//! letters-only code keeps combinations unique).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{ArtifactSource, Instance, LabeledInstance, SatdLabel};

const VERBS: [&str; 12] = [
    "rewrite", "simplify", "replace", "restructure", "consolidate", "untangle", "split",
    "inline", "extract", "isolate", "decouple", "flatten",
];

const NOUNS: [&str; 20] = [
    "parser", "cache", "scheduler", "loader", "registry", "encoder", "router", "buffer",
    "queue", "mapper", "printer", "resolver", "watcher", "planner", "reader", "writer",
    "monitor", "adapter", "helper", "formatter",
];

const TAILS: [&str; 12] = [
    "eventually", "someday", "properly", "cleanly", "carefully", "separately", "upstream",
    "downstream", "internally", "elsewhere", "sometime", "gradually",
];

const NEUTRAL_VERBS: [&str; 8] = [
    "returns", "computes", "renders", "stores", "loads", "sends", "receives", "formats",
];

/// Base-26 letters-only code, at least three characters, so it survives
/// preprocessing and never collides with template vocabulary.
fn unique_code(mut n: usize) -> String {
    let mut digits = String::new();
    loop {
        digits.push((b'a' + (n % 26) as u8) as char);
        n /= 26;
        if n == 0 {
            break;
        }
    }
    format!("xq{digits}")
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool[rng.gen_range(0..pool.len())]
}

fn text_for(rng: &mut ChaCha8Rng, label: SatdLabel, serial: usize) -> String {
    let code = unique_code(serial);
    let verb = pick(rng, &VERBS);
    let noun = pick(rng, &NOUNS);
    let tail = pick(rng, &TAILS);
    let body = match label {
        SatdLabel::CodeDesign => match rng.gen_range(0..4) {
            0 => format!("todo {verb} {noun} {tail}"),
            1 => format!("fixme {noun} {verb} {tail}"),
            2 => format!("todo {verb} messy {noun}"),
            _ => format!("fixme ugly {noun} workaround"),
        },
        SatdLabel::Documentation => match rng.gen_range(0..4) {
            0 => format!("todo document {noun} {tail}"),
            1 => format!("fixme typo within {noun} documentation"),
            2 => format!("todo docs missing {noun} {tail}"),
            _ => format!("fixme outdated documentation {noun}"),
        },
        SatdLabel::Test => match rng.gen_range(0..4) {
            0 => format!("todo test {noun} {tail}"),
            1 => format!("fixme flaky {noun} test"),
            2 => format!("todo coverage lacking {noun}"),
            _ => format!("fixme unit test {noun} broken"),
        },
        SatdLabel::Requirement => match rng.gen_range(0..4) {
            0 => format!("todo implement {noun} {tail}"),
            1 => format!("fixme unimplemented {noun} path"),
            2 => format!("todo implement proper {noun}"),
            _ => format!("fixme unsupported {noun} case"),
        },
        SatdLabel::NotSatd => {
            let nv = pick(rng, &NEUTRAL_VERBS);
            let noun2 = pick(rng, &NOUNS);
            match rng.gen_range(0..3) {
                0 => format!("{nv} current {noun} state given {noun2}"),
                1 => format!("{nv} configured {noun} entries under {noun2}"),
                _ => format!("standard {noun} wiring around {noun2}"),
            }
        }
    };
    format!("{body} {code}")
}

/// Generate `count` instances for each (source, label) tuple.
pub fn generate(
    seed: u64,
    counts: &[(ArtifactSource, SatdLabel, usize)],
) -> Vec<LabeledInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut serial = 0usize;
    for (source, label, count) in counts {
        for _ in 0..*count {
            serial += 1;
            out.push(Instance {
                id: format!("{}-{}-{serial}", source.code().to_lowercase(), label.name().to_lowercase()),
                source: *source,
                project: format!("project-{}", serial % 7),
                text: text_for(&mut rng, *label, serial),
                label: *label,
            });
        }
    }
    out
}

/// Mixed-artifact corpus of roughly `total` instances with an imbalanced
/// label profile across all four sources.
pub fn demo_corpus(seed: u64, total: usize) -> Vec<LabeledInstance> {
    let share = (total / 4).max(12);
    let mut counts = Vec::new();
    for source in ArtifactSource::ALL {
        let not_satd = share * 58 / 100;
        let code_design = share * 20 / 100;
        let documentation = (share * 9 / 100).max(3);
        let test = (share * 8 / 100).max(3);
        let requirement = (share * 5 / 100).max(3);
        counts.push((source, SatdLabel::NotSatd, not_satd));
        counts.push((source, SatdLabel::CodeDesign, code_design));
        counts.push((source, SatdLabel::Documentation, documentation));
        counts.push((source, SatdLabel::Test, test));
        counts.push((source, SatdLabel::Requirement, requirement));
    }
    generate(seed, &counts)
}

/// Code-comment SATD corpus for keyword extraction exercises.
pub fn cc_satd_corpus(seed: u64, satd_total: usize) -> Vec<LabeledInstance> {
    let counts = [
        (ArtifactSource::CodeComment, SatdLabel::CodeDesign, satd_total * 55 / 100),
        (ArtifactSource::CodeComment, SatdLabel::Documentation, satd_total * 15 / 100),
        (ArtifactSource::CodeComment, SatdLabel::Test, satd_total * 15 / 100),
        (ArtifactSource::CodeComment, SatdLabel::Requirement, satd_total * 15 / 100),
        (ArtifactSource::CodeComment, SatdLabel::NotSatd, satd_total),
    ];
    generate(seed, &counts)
}
