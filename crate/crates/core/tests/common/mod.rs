#![allow(dead_code)]

pub mod oracles;
pub mod stub;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use contrast_core::critique::CritiqueKind;
use contrast_core::gateway::deterministic::respond;
use contrast_core::gateway::grammar::{AttributeGroup, StageOutput};
use contrast_core::gateway::{
    parse_stage_output, render_stage_output, CompletionBackend, CompletionRequest, CompletionResult, GatewayError,
};
use contrast_core::ingest::{CorpusManifest, ManifestDocument, ManifestEntity};
use contrast_core::pipeline::RunOutput;
use contrast_core::text::{member_key, nfc};
use contrast_core::{Corpus, Gateway, GatewayConfig, PipelineConfig, StageTag};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn toy_corpus_path() -> PathBuf {
    fixtures().join("speakers/corpus.json")
}

pub fn golden_path() -> PathBuf {
    fixtures().join("speakers/golden_summary.json")
}

pub fn toy_corpus() -> Corpus {
    contrast_core::load_corpus(&toy_corpus_path(), None).expect("toy corpus loads")
}

/// The persisted form of a summary: timing stripped, pretty JSON, newline.
pub fn summary_json(out: &RunOutput) -> String {
    let mut s = serde_json::to_string_pretty(&out.summary.without_timing()).unwrap();
    s.push('\n');
    s
}

/// Corpus from per-entity document texts, ranks in list order.
pub fn corpus_of(entities: &[(&str, Vec<String>)]) -> Corpus {
    let manifest = CorpusManifest {
        entities: entities
            .iter()
            .map(|(name, docs)| ManifestEntity {
                id: name.to_lowercase(),
                display_name: name.to_string(),
                aliases: vec![],
                documents: docs
                    .iter()
                    .enumerate()
                    .map(|(i, text)| ManifestDocument {
                        url: format!("https://{}.example/{}", name.to_lowercase(), i + 1),
                        search_rank: i as u32 + 1,
                        text: Some(text.clone()),
                        text_file: None,
                    })
                    .collect(),
            })
            .collect(),
    };
    Corpus::from_manifest(manifest, Path::new("."), None).expect("synthetic corpus is well formed")
}

/// Deterministic backend with ATTRIBUTE_MERGE answers corrupted on purpose.
pub struct FaultyMerge {
    pub fault: MergeFault,
}

#[derive(Debug, Clone)]
pub enum MergeFault {
    /// Split the group holding both attributes.
    Under(String, String),
    /// Fuse the groups holding each attribute.
    Over(String, String),
}

impl FaultyMerge {
    fn corrupt(&self, groups: Vec<AttributeGroup>) -> Vec<AttributeGroup> {
        let holds = |g: &AttributeGroup, a: &str| g.members.iter().any(|m| member_key(m) == member_key(a));
        match &self.fault {
            MergeFault::Under(x, y) => groups
                .into_iter()
                .flat_map(|g| {
                    if holds(&g, x) && holds(&g, y) {
                        g.members
                            .iter()
                            .map(|m| AttributeGroup {
                                center: m.clone(),
                                members: vec![m.clone()],
                            })
                            .collect()
                    } else {
                        vec![g]
                    }
                })
                .collect(),
            MergeFault::Over(x, y) => {
                let (gx, rest): (Vec<_>, Vec<_>) = groups.into_iter().partition(|g| holds(g, x));
                let (gy, mut rest): (Vec<_>, Vec<_>) = rest.into_iter().partition(|g| holds(g, y));
                let mut fused = AttributeGroup {
                    center: x.clone(),
                    members: vec![],
                };
                for g in gx.into_iter().chain(gy) {
                    fused.members.extend(g.members);
                }
                if !fused.members.is_empty() {
                    rest.insert(0, fused);
                }
                rest
            }
        }
    }
}

impl CompletionBackend for FaultyMerge {
    fn id(&self) -> String {
        "faulty-merge".into()
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        let mut text = respond(req.stage_tag, &req.prompt);
        if req.stage_tag == StageTag::AttributeMerge {
            if let Ok(StageOutput::AttributeMerge(groups)) = parse_stage_output(StageTag::AttributeMerge, &text) {
                let groups = self.corrupt(groups);
                text = if groups.is_empty() {
                    "NONE\n".into()
                } else {
                    render_stage_output(&StageOutput::AttributeMerge(groups))
                };
            }
        }
        Ok(CompletionResult {
            text,
            latency_ms: 0,
            backend_id: self.id(),
        })
    }
}

pub const A: &str = "Orion";
pub const B: &str = "Vega";

/// One synthetic comparison with a single injected defect.
pub struct Case {
    pub kind: CritiqueKind,
    pub corpus: Corpus,
    pub fault: Option<MergeFault>,
    pub detector: Detector,
}

/// How to tell whether the injected defect survived a run.
#[derive(Debug, Clone)]
pub enum Detector {
    /// A side-A extraction with this attribute and bare value.
    ExtractionValue { attribute: String, value: String },
    /// A side-A extraction whose evidence names the other entity.
    ExtractionMentions(String),
    /// A side-A extraction with this attribute.
    ExtractionAttribute(String),
    /// A final row for `attribute` whose A cell shows `value`.
    CellValue { attribute: String, value: String },
    /// A final row for `attribute` with two or more A values.
    SeveralValues(String),
    /// Both attributes head separate final rows.
    SeparateRows(String, String),
    /// One final row covers both attributes.
    SharedRow(String, String),
}

impl Detector {
    pub fn present(&self, out: &RunOutput) -> bool {
        let ex_a = &out.extractions[0];
        let same = |a: &str, b: &str| member_key(a) == member_key(b);
        let row = |attr: &str| out.summary.rows.iter().find(|r| r.member_attributes.iter().any(|m| same(m, attr)));
        match self {
            Detector::ExtractionValue { attribute, value } => {
                ex_a.iter().any(|e| same(&e.attribute, attribute) && same(&e.value, value))
            }
            Detector::ExtractionMentions(name) => ex_a.iter().any(|e| e.evidence.contains(name.as_str())),
            Detector::ExtractionAttribute(attr) => ex_a.iter().any(|e| same(&e.attribute, attr)),
            Detector::CellValue { attribute, value } => {
                row(attribute).is_some_and(|r| r.cell_a.iter().any(|c| nfc(&c.value) == nfc(value)))
            }
            Detector::SeveralValues(attr) => row(attr).is_some_and(|r| r.cell_a.len() > 1),
            Detector::SeparateRows(x, y) => {
                let rx = out.summary.rows.iter().position(|r| same(&r.attribute, x));
                let ry = out.summary.rows.iter().position(|r| same(&r.attribute, y));
                matches!((rx, ry), (Some(i), Some(j)) if i != j)
            }
            Detector::SharedRow(x, y) => out.summary.rows.iter().any(|r| {
                r.member_attributes.iter().any(|m| same(m, x)) && r.member_attributes.iter().any(|m| same(m, y))
            }),
        }
    }
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, xs: &'a [T]) -> &'a T {
    xs.choose(rng).expect("non-empty choice list")
}

/// Clean background: three documents per side with rows that need no
/// revision.
fn background(rng: &mut ChaCha8Rng) -> [Vec<String>; 2] {
    let (ha, hb) = (rng.gen_range(8..14), rng.gen_range(15..24));
    let (wa, wb) = (rng.gen_range(300..500), rng.gen_range(550..900));
    let (pa, pb) = (rng.gen_range(50..100), rng.gen_range(120..200));
    [
        vec![
            format!("The battery life of {A} is {ha} hours. The weight of {A} is {wa} grams."),
            format!("Reviewers used it for several weeks at home. The battery life of {A} is {ha} hours."),
            format!("{A}'s price is ${pa}. Shipping was quick and the box arrived intact."),
        ],
        vec![
            format!("The battery life of {B} is {hb} hours. The weight of {B} is {wb} grams."),
            format!("{B}'s price is ${pb}. The weight of {B} is {wb} grams."),
            format!("Several owners posted long reports about {B} on forums."),
        ],
    ]
}

fn add(doc: &mut String, sentence: &str) {
    doc.push(' ');
    doc.push_str(sentence);
}

/// Build case `n` of `kind`, deterministic in `(kind, n)`.
pub fn inject(kind: CritiqueKind, n: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(n.wrapping_mul(31).wrapping_add(kind as u64));
    let [mut da, mut db] = background(&mut rng);
    let mut fault = None;
    let detector = match kind {
        CritiqueKind::InsufficientContext => {
            let attr = *pick(&mut rng, &["view", "screen", "keyboard", "display", "camera", "hinge", "trackpad"]);
            let adj = *pick(&mut rng, &["good", "great", "excellent", "nice", "decent", "solid"]);
            let ctx = *pick(
                &mut rng,
                &["from the rooftop terrace", "under direct sunlight", "for long typing sessions", "in low light"],
            );
            add(&mut da[0], &format!("The {attr} of {A} is {adj}."));
            add(&mut da[2], &format!("Testers agree {A} has a {adj} {attr} {ctx}."));
            Detector::ExtractionValue {
                attribute: attr.into(),
                value: adj.into(),
            }
        }
        CritiqueKind::WrongEntity => {
            let (attr, unit) = *pick(
                &mut rng,
                &[("storage", "GB"), ("screen size", "inches"), ("warranty", "years"), ("charging time", "minutes")],
            );
            let v = rng.gen_range(2..90);
            add(&mut da[1], &format!("The {attr} of {B} is {v} {unit}."));
            Detector::ExtractionMentions(B.into())
        }
        CritiqueKind::UnhelpfulAttributeExtract => {
            let (attr, val) = *pick(
                &mut rng,
                &[("wheels", "four"), ("color", "black"), ("logo", "a blue circle"), ("website", "easy to browse")],
            );
            add(&mut da[0], &format!("The {attr} of {A} is {val}."));
            Detector::ExtractionAttribute(attr.into())
        }
        CritiqueKind::OrthogonalValues => {
            let (attr, unit) = *pick(
                &mut rng,
                &[("fuel tank", "gallons"), ("water reservoir", "liters"), ("storage bin", "liters"), ("cable", "meters")],
            );
            let descr = *pick(&mut rng, &["iconic teardrop shape", "brushed steel finish", "classic rounded design"]);
            let vb = rng.gen_range(2..9);
            add(&mut da[0], &format!("The {attr} of {A} is {descr}."));
            add(&mut db[0], &format!("The {attr} of {B} is {vb} {unit}."));
            if rng.gen_bool(0.5) {
                let va = rng.gen_range(10..40) as f64 / 10.0;
                add(&mut da[2], &format!("The {attr} of {A} holds {va} {unit} when full."));
            }
            Detector::CellValue {
                attribute: attr.into(),
                value: descr.into(),
            }
        }
        CritiqueKind::InconsistentValues => {
            let (attr, unit) = *pick(
                &mut rng,
                &[("charging time", "minutes"), ("range", "miles"), ("brightness", "nits"), ("capacity", "liters")],
            );
            // Two of four reports agree: no strict majority at merge time,
            // but a clear plurality for revision to keep.
            let x = rng.gen_range(10..50);
            let y = x + rng.gen_range(1..30);
            let w = y + rng.gen_range(1..30);
            let z = rng.gen_range(10..90);
            add(&mut da[0], &format!("The {attr} of {A} is {x} {unit}."));
            add(&mut da[1], &format!("The {attr} of {A} is {x} {unit}."));
            add(&mut da[2], &format!("The {attr} of {A} is {y} {unit}."));
            add(&mut da[2], &format!("The {attr} of {A} is {w} {unit}."));
            add(&mut db[0], &format!("The {attr} of {B} is {z} {unit}."));
            Detector::SeveralValues(attr.into())
        }
        CritiqueKind::UnhelpfulAttributeOrValue => {
            let attr = *pick(&mut rng, &["release date", "origin", "availability", "firmware"]);
            let val = *pick(&mut rng, &["unknown", "n/a", "various", "tbd"]);
            add(&mut da[0], &format!("The {attr} of {A} is {val}."));
            Detector::CellValue {
                attribute: attr.into(),
                value: val.into(),
            }
        }
        CritiqueKind::UnderOrOverMerged => {
            if n % 2 == 0 {
                let (x, y, unit) = *pick(
                    &mut rng,
                    &[("size", "dimensions", "cm tall"), ("amenities", "facilities", "USB ports"), ("audio quality", "sound", "dB peak output")],
                );
                let (vx, vy) = (rng.gen_range(2..30), rng.gen_range(31..60));
                add(&mut da[0], &format!("The {x} of {A} is {vx} {unit}."));
                add(&mut db[0], &format!("The {y} of {B} is {vy} {unit}."));
                fault = Some(MergeFault::Under(x.into(), y.into()));
                Detector::SeparateRows(x.into(), y.into())
            } else {
                let (x, ux, y, uy) = *pick(
                    &mut rng,
                    &[("height", "cm", "capacity", "liters"), ("depth", "mm", "range", "miles"), ("width", "cm", "storage", "GB")],
                );
                let (a1, b1, a2, b2) =
                    (rng.gen_range(2..30), rng.gen_range(31..60), rng.gen_range(2..30), rng.gen_range(31..60));
                add(&mut da[0], &format!("The {x} of {A} is {a1} {ux}."));
                add(&mut db[0], &format!("The {x} of {B} is {b1} {ux}."));
                add(&mut da[1], &format!("The {y} of {A} is {a2} {uy}."));
                add(&mut db[1], &format!("The {y} of {B} is {b2} {uy}."));
                fault = Some(MergeFault::Over(x.into(), y.into()));
                Detector::SharedRow(x.into(), y.into())
            }
        }
        CritiqueKind::LongComplexClaim => {
            let attr = *pick(&mut rng, &["design", "build", "interface", "setup"]);
            let parts = [
                ["the housing feels sturdy", "the shell resists scratches", "the frame stays rigid"],
                ["the buttons click firmly", "the dial turns evenly", "the ports sit flush"],
                ["the strap stays in place", "the stand folds flat", "the lid closes tightly"],
            ];
            let c: Vec<&str> = parts.iter().map(|p| *pick(&mut rng, p)).collect();
            let value = format!("{} and {} while {}", c[0], c[1], c[2]);
            add(&mut da[1], &format!("The {attr} of {A} is {value}."));
            Detector::CellValue {
                attribute: attr.into(),
                value,
            }
        }
    };
    Case {
        kind,
        corpus: corpus_of(&[(A, da.to_vec()), (B, db.to_vec())]),
        fault,
        detector,
    }
}

pub fn gateway_for(case: &Case) -> Gateway {
    match &case.fault {
        Some(f) => Gateway::new(Arc::new(FaultyMerge { fault: f.clone() }), GatewayConfig::default()),
        None => Gateway::deterministic(),
    }
}

pub fn harness_config(cr_enabled: bool) -> PipelineConfig {
    PipelineConfig {
        cr_enabled,
        top_k_rows: 50,
        ..PipelineConfig::default()
    }
}

pub fn run_case(case: &Case, cr_enabled: bool) -> RunOutput {
    contrast_core::run_pipeline(&case.corpus, A, B, &gateway_for(case), &harness_config(cr_enabled))
        .unwrap_or_else(|e| panic!("{} case failed with cr={cr_enabled}: {e}", case.kind))
}

/// Per-kind tallies for the injection suite.
#[derive(Debug, Clone, Default)]
pub struct KindTally {
    pub cases: usize,
    /// Defect visible with revision off.
    pub injected: usize,
    /// Of those, gone with revision on.
    pub removed: usize,
}

impl KindTally {
    pub fn removal_rate(&self) -> f64 {
        if self.injected == 0 {
            0.0
        } else {
            self.removed as f64 / self.injected as f64
        }
    }
}
