//! The individual LM stages. Each takes a [`StageRunner`] so every call is
//! traced; none of them mutate shared state.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::trace::StageRunner;
use super::RankWeights;
use crate::gateway::deterministic::cluster_center;
use crate::gateway::grammar::{AttributeGroup, StageOutput};
use crate::gateway::payload::{
    AttributeMergeInput, ContrastInput, ContrastRowInput, ExtractInput, RowInput, ValueEntry, ValueMergeInput,
};
use crate::gateway::{GatewayError, StageTag};
use crate::model::{
    row_order, AttributeCluster, CellValue, ComparisonRow, ContrastLevel, Evidence, Extraction, Side,
    SourceDocument, ValueGroup,
};
use crate::par::parallel_map;
use crate::text::{member_key, nfc};
use crate::tile::Tile;

fn mismatch(stage: StageTag) -> ! {
    unreachable!("{stage} call returned another stage's output")
}

/// Result of running EXTRACT over one entity's tiles.
#[derive(Debug, Default)]
pub struct ExtractOutcome {
    pub extractions: Vec<Extraction>,
    /// `(tile id, rendered payload)` for every tile that answered.
    pub payloads: Vec<(String, String)>,
    pub warnings: Vec<String>,
    /// First tile failure, kept so a wholly failed entity can be reported.
    pub first_error: Option<GatewayError>,
}

/// Run EXTRACT on every tile. A failed tile is skipped with a warning, and
/// records whose evidence is not verbatim in the entity's documents are
/// dropped.
pub fn lm_extract(
    runner: &StageRunner,
    entity_id: &str,
    entity_name: &str,
    tiles: &[Tile],
    docs: &[&SourceDocument],
) -> ExtractOutcome {
    let raw: HashMap<&str, String> = docs.iter().map(|d| (d.url.as_str(), nfc(&d.raw_text))).collect();
    let payloads: Vec<String> = tiles
        .iter()
        .map(|t| {
            ExtractInput {
                entity: entity_name.to_string(),
                sentences: t.sentences.iter().map(|s| s.text.clone()).collect(),
            }
            .render()
        })
        .collect();
    let results = parallel_map(&payloads, runner.gateway().max_parallel(), |i, p| {
        runner.run(StageTag::Extract, &format!("{entity_id}-t{i:04}"), p, &[])
    });
    let mut out = ExtractOutcome::default();
    for ((tile, payload), result) in tiles.iter().zip(payloads).zip(results) {
        let call = match result {
            Ok(call) => call,
            Err(e) => {
                out.warnings.push(format!("tile {} skipped: {e}", tile.id));
                out.first_error.get_or_insert(e);
                continue;
            }
        };
        out.payloads.push((tile.id.clone(), payload));
        let StageOutput::Extract(list) = call.output else {
            mismatch(StageTag::Extract)
        };
        let mut used = vec![false; tile.sentences.len()];
        for item in list.items {
            if item.attribute.trim().is_empty() || item.value.trim().is_empty() {
                out.warnings.push(format!("tile {}: empty attribute or value dropped", tile.id));
                continue;
            }
            let ev = nfc(&item.evidence);
            if !ev.contains(&nfc(&item.value)) {
                out.warnings.push(format!("tile {}: value {:?} not inside its evidence", tile.id, item.value));
                continue;
            }
            // A sentence repeated across documents yields one extraction per
            // copy; hand each copy's URL out once before reusing any.
            let holds = |s: &&crate::model::Sentence| raw.get(s.doc_url.as_str()).is_some_and(|t| t.contains(&ev));
            let pick = tile
                .sentences
                .iter()
                .enumerate()
                .find(|(k, s)| !used[*k] && nfc(&s.text).contains(&ev))
                .map(|(k, s)| {
                    used[k] = true;
                    s.doc_url.as_str()
                });
            let in_tile = pick.or_else(|| tile.sentences.iter().find(holds).map(|s| s.doc_url.as_str()));
            let url = in_tile.or_else(|| docs.iter().map(|d| d.url.as_str()).find(|u| raw[u].contains(&ev)));
            let Some(url) = url else {
                out.warnings.push(format!("tile {}: evidence {:?} not found in any source", tile.id, item.evidence));
                continue;
            };
            out.extractions.push(Extraction {
                attribute: item.attribute.trim().to_string(),
                value: item.value,
                evidence: item.evidence,
                source_url: url.to_string(),
                entity_id: entity_id.to_string(),
                tile_id: tile.id.clone(),
            });
        }
    }
    out
}

/// Distinct attributes by member key, first spelling wins, A before B.
pub fn attribute_payload(ex_a: &[Extraction], ex_b: &[Extraction]) -> AttributeMergeInput {
    let mut seen = HashSet::new();
    let attributes = ex_a
        .iter()
        .chain(ex_b)
        .filter(|e| seen.insert(member_key(&e.attribute)))
        .map(|e| e.attribute.clone())
        .collect();
    AttributeMergeInput { attributes }
}

/// Cluster the attributes of both sides. Every input attribute ends up in
/// exactly one cluster: unknown members are ignored, repeats keep their
/// first group, and attributes the model left out become singletons. The
/// center is always re-chosen here, whatever the model proposed.
pub fn lm_attribute_merge(
    runner: &StageRunner,
    ex_a: &[Extraction],
    ex_b: &[Extraction],
) -> Result<(Vec<AttributeCluster>, Vec<String>), GatewayError> {
    let input = attribute_payload(ex_a, ex_b);
    if input.attributes.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let call = runner.run(StageTag::AttributeMerge, "merge", &input.render(), &[])?;
    let StageOutput::AttributeMerge(groups) = call.output else {
        mismatch(StageTag::AttributeMerge)
    };
    let mut warnings = Vec::new();
    let known: HashMap<String, &String> = input.attributes.iter().map(|a| (member_key(a), a)).collect();
    let mut taken: HashSet<String> = HashSet::new();
    let mut clusters: Vec<Vec<String>> = Vec::new();
    for g in groups {
        let mut members = Vec::new();
        for m in g.members.iter().chain(std::iter::once(&g.center)) {
            let k = member_key(m);
            match known.get(&k) {
                Some(a) if taken.insert(k) => members.push((*a).clone()),
                Some(_) => {}
                None => warnings.push(format!("attribute merge named unknown attribute {m:?}")),
            }
        }
        if !members.is_empty() {
            clusters.push(members);
        }
    }
    for a in &input.attributes {
        if taken.insert(member_key(a)) {
            warnings.push(format!("attribute {a:?} left unclustered, kept on its own"));
            clusters.push(vec![a.clone()]);
        }
    }
    let out = clusters
        .into_iter()
        .map(|members| {
            let keys: HashSet<String> = members.iter().map(|m| member_key(m)).collect();
            let pick = |ex: &[Extraction]| -> Vec<Extraction> {
                ex.iter().filter(|e| keys.contains(&member_key(&e.attribute))).cloned().collect()
            };
            AttributeCluster {
                canonical_attribute: cluster_center(&members),
                member_attributes: members,
                values_a: pick(ex_a),
                values_b: pick(ex_b),
                groups_a: Vec::new(),
                groups_b: Vec::new(),
            }
        })
        .collect();
    Ok((out, warnings))
}

/// Group payload for a cluster: one entry per distinct value and side,
/// support = number of extractions stating it.
pub fn value_merge_payload(cluster: &AttributeCluster, threshold: f64) -> ValueMergeInput {
    let mut values = Vec::new();
    for side in [Side::A, Side::B] {
        let mut counts: Vec<(String, u32)> = Vec::new();
        for e in cluster.values(side) {
            match counts.iter_mut().find(|(v, _)| *v == e.value) {
                Some((_, n)) => *n += 1,
                None => counts.push((e.value.clone(), 1)),
            }
        }
        values.extend(counts.into_iter().map(|(value, support)| ValueEntry { side, value, support }));
    }
    ValueMergeInput {
        attribute: cluster.canonical_attribute.clone(),
        threshold,
        values,
    }
}

/// VALUE_MERGE for one cluster. Extractions outside every kept group are
/// dropped; a value claimed by two groups stays with the first.
pub fn value_merge_cluster(
    runner: &StageRunner,
    key: &str,
    cluster: &AttributeCluster,
    threshold: f64,
) -> Result<AttributeCluster, GatewayError> {
    let input = value_merge_payload(cluster, threshold);
    let call = runner.run(StageTag::ValueMerge, key, &input.render(), &[])?;
    let StageOutput::ValueMerge(kept) = call.output else {
        mismatch(StageTag::ValueMerge)
    };
    let mut out = AttributeCluster {
        canonical_attribute: cluster.canonical_attribute.clone(),
        member_attributes: cluster.member_attributes.clone(),
        values_a: Vec::new(),
        values_b: Vec::new(),
        groups_a: Vec::new(),
        groups_b: Vec::new(),
    };
    for side in [Side::A, Side::B] {
        let source = cluster.values(side);
        let mut used = vec![false; source.len()];
        for k in kept.iter().filter(|k| k.side == side) {
            let names: HashSet<&str> = k.members.iter().chain(std::iter::once(&k.center)).map(String::as_str).collect();
            let mut members = Vec::new();
            for (i, e) in source.iter().enumerate() {
                if !used[i] && names.contains(e.value.as_str()) {
                    used[i] = true;
                    out.values_mut(side).push(e.clone());
                    members.push(out.values(side).len() - 1);
                }
            }
            if members.is_empty() {
                continue;
            }
            let values = out.values(side);
            let center = if members.iter().any(|&m| values[m].value == k.center) {
                k.center.clone()
            } else {
                values[members[0]].value.clone()
            };
            out.groups_mut(side).push(ValueGroup { center, members });
        }
    }
    Ok(out)
}

/// CONTRAST rows for one cluster: group centers with group sizes.
pub fn contrast_row(cluster: &AttributeCluster) -> ContrastRowInput {
    let mut values = Vec::new();
    for side in [Side::A, Side::B] {
        for g in cluster.groups(side) {
            values.push(ValueEntry {
                side,
                value: g.center.clone(),
                support: g.members.len() as u32,
            });
        }
    }
    ContrastRowInput {
        attribute: cluster.canonical_attribute.clone(),
        values,
    }
}

/// Contrast level per cluster, batching as many rows per call as fit. A
/// row the model skipped is matched by name, then defaults to LOW.
pub fn contrast_levels(
    runner: &StageRunner,
    key: &str,
    clusters: &[&AttributeCluster],
) -> Result<Vec<ContrastLevel>, GatewayError> {
    let rows: Vec<ContrastRowInput> = clusters.iter().map(|c| contrast_row(c)).collect();
    let mut batches: Vec<std::ops::Range<usize>> = Vec::new();
    let mut start = 0;
    for end in 1..=rows.len() {
        let payload = ContrastInput {
            rows: rows[start..end].to_vec(),
        };
        if end - start > 1 && !runner.fits(StageTag::Contrast, &payload.render()) {
            batches.push(start..end - 1);
            start = end - 1;
        }
    }
    if start < rows.len() {
        batches.push(start..rows.len());
    }
    let results = parallel_map(&batches, runner.gateway().max_parallel(), |n, r| {
        let payload = ContrastInput {
            rows: rows[r.clone()].to_vec(),
        };
        runner.run(StageTag::Contrast, &format!("{key}-ct{n:04}"), &payload.render(), &[])
    });
    let mut levels = Vec::with_capacity(rows.len());
    for (range, result) in batches.iter().zip(results) {
        let StageOutput::Contrast(hints) = result?.output else {
            mismatch(StageTag::Contrast)
        };
        for (pos, i) in range.clone().enumerate() {
            let attr = &rows[i].attribute;
            let level = match hints.get(pos) {
                Some(h) if h.attribute == *attr => h.level,
                _ => hints
                    .iter()
                    .find(|h| h.attribute == *attr)
                    .map_or(ContrastLevel::Low, |h| h.level),
            };
            levels.push(level);
        }
    }
    Ok(levels)
}

fn cell(cluster: &AttributeCluster, side: Side) -> Vec<CellValue> {
    let values = cluster.values(side);
    cluster
        .groups(side)
        .iter()
        .filter(|g| !g.members.is_empty())
        .map(|g| {
            let mut source_urls: Vec<String> = Vec::new();
            let mut evidence: Vec<Evidence> = Vec::new();
            for &m in &g.members {
                let e = &values[m];
                if !source_urls.contains(&e.source_url) {
                    source_urls.push(e.source_url.clone());
                }
                let ev = Evidence {
                    url: e.source_url.clone(),
                    text: e.evidence.clone(),
                };
                if !evidence.contains(&ev) {
                    evidence.push(ev);
                }
            }
            CellValue {
                value: g.center.clone(),
                source_urls,
                support_count: g.members.len() as u32,
                evidence,
            }
        })
        .collect()
}

/// Popularity: Σ 1/search_rank over the distinct documents behind the
/// row's shown values.
pub fn importance(cluster: &AttributeCluster, rank_of: &HashMap<(String, String), u32>) -> f64 {
    let mut docs: BTreeMap<(String, String), u32> = BTreeMap::new();
    for side in [Side::A, Side::B] {
        let values = cluster.values(side);
        for g in cluster.groups(side) {
            for &m in &g.members {
                let e = &values[m];
                let key = (e.entity_id.clone(), e.source_url.clone());
                if let Some(r) = rank_of.get(&key) {
                    docs.insert(key, *r);
                }
            }
        }
    }
    docs.values().map(|r| 1.0 / f64::from(*r)).sum()
}

/// Score and order rows. Popularity is normalized by the largest importance
/// among the rows.
pub fn rank_rows(
    clusters: &[(&AttributeCluster, ContrastLevel)],
    rank_of: &HashMap<(String, String), u32>,
    weights: RankWeights,
) -> Vec<ComparisonRow> {
    let imp: Vec<f64> = clusters.iter().map(|(c, _)| importance(c, rank_of)).collect();
    let max = imp.iter().copied().fold(0.0, f64::max);
    let mut rows: Vec<ComparisonRow> = clusters
        .iter()
        .zip(&imp)
        .map(|((c, level), &importance)| {
            let popularity = if max > 0.0 { importance / max } else { 0.0 };
            ComparisonRow {
                attribute: c.canonical_attribute.clone(),
                member_attributes: c.member_attributes.clone(),
                cell_a: cell(c, Side::A),
                cell_b: cell(c, Side::B),
                contrast_level: *level,
                importance,
                rank_score: weights.contrast * level.score() + weights.popularity * popularity,
            }
        })
        .filter(|r| !r.cell_a.is_empty() || !r.cell_b.is_empty())
        .collect();
    rows.sort_by(row_order);
    rows
}

/// USEFULNESS / AUTORATE payload for a row.
pub fn row_payload(row: &ComparisonRow, names_a: &[String], names_b: &[String]) -> RowInput {
    let mut values = Vec::new();
    let mut evidence = Vec::new();
    for side in [Side::A, Side::B] {
        for c in row.cell(side) {
            values.push(ValueEntry {
                side,
                value: c.value.clone(),
                support: c.support_count,
            });
            for e in &c.evidence {
                evidence.push((side, e.text.clone()));
            }
        }
    }
    RowInput {
        names_a: names_a.to_vec(),
        names_b: names_b.to_vec(),
        attribute: row.attribute.clone(),
        contrast: row.contrast_level,
        importance: row.importance,
        values,
        evidence,
    }
}

/// A row taken out of the candidate list, and why.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RemovedRow {
    pub attribute: String,
    pub stage: String,
    pub reason: String,
}

/// Keep the rows the model calls useful, preserving order.
pub fn lm_usefulness(
    runner: &StageRunner,
    rows: Vec<ComparisonRow>,
    names_a: &[String],
    names_b: &[String],
) -> Result<(Vec<ComparisonRow>, Vec<RemovedRow>), GatewayError> {
    let payloads: Vec<String> = rows.iter().map(|r| row_payload(r, names_a, names_b).render()).collect();
    let results = parallel_map(&payloads, runner.gateway().max_parallel(), |i, p| {
        runner.run(StageTag::Usefulness, &format!("row{i:04}"), p, &[])
    });
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for (row, result) in rows.into_iter().zip(results) {
        let StageOutput::Usefulness(v) = result?.output else {
            mismatch(StageTag::Usefulness)
        };
        if v.useful {
            kept.push(row);
        } else {
            removed.push(RemovedRow {
                attribute: row.attribute,
                stage: StageTag::Usefulness.as_str().to_string(),
                reason: v.reason,
            });
        }
    }
    Ok((kept, removed))
}

/// The final clustering as ATTRIBUTE_MERGE output.
pub fn attribute_groups(clusters: &[&AttributeCluster]) -> Vec<AttributeGroup> {
    clusters
        .iter()
        .map(|c| AttributeGroup {
            center: c.canonical_attribute.clone(),
            members: c.member_attributes.clone(),
        })
        .collect()
}
