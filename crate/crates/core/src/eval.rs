//! Matching recognized glyphs to ground truth and reporting accuracy.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxfile::{BoxPage, BoxRect};
use crate::config::ProjectConfig;
use crate::recognize::PageResult;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("manifest parse error: {0}")]
    Manifest(String),
    #[error("page {page}: user `{user}` has no training page but is listed as a known-writer test page")]
    KnownWithoutTraining { page: usize, user: String },
    #[error("page {page}: user `{user}` has training pages but is listed as an unknown-writer test page")]
    UnknownWithTraining { page: usize, user: String },
    #[error("evaluation result refers to page {page}, which is not a test page")]
    NotATestPage { page: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Training,
    Td1,
    Td2,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Training => "training",
            Role::Td1 => "td1",
            Role::Td2 => "td2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestPage {
    pub image: PathBuf,
    pub boxes: PathBuf,
    pub user: String,
    pub role: Role,
}

/// Dataset manifest. A user counts as known when at least one of their
/// pages is a training page.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    #[serde(rename = "page", default)]
    pub pages: Vec<ManifestPage>,
}

impl DatasetManifest {
    pub fn from_toml(text: &str) -> Result<Self, EvalError> {
        let m: Self = toml::from_str(text).map_err(|e| EvalError::Manifest(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("manifest always serializes")
    }

    pub fn known_users(&self) -> BTreeSet<&str> {
        self.pages
            .iter()
            .filter(|p| p.role == Role::Training)
            .map(|p| p.user.as_str())
            .collect()
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let known = self.known_users();
        for (page, p) in self.pages.iter().enumerate() {
            match p.role {
                Role::Td1 if !known.contains(p.user.as_str()) => {
                    return Err(EvalError::KnownWithoutTraining { page, user: p.user.clone() })
                }
                Role::Td2 if known.contains(p.user.as_str()) => {
                    return Err(EvalError::UnknownWithTraining { page, user: p.user.clone() })
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn pages_with_role(&self, role: Role) -> impl Iterator<Item = (usize, &ManifestPage)> {
        self.pages.iter().enumerate().filter(move |(_, p)| p.role == role)
    }

    /// Resolves relative page paths against the directory holding the manifest.
    pub fn resolve(&self, base: &Path) -> Self {
        let fix = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        Self {
            pages: self
                .pages
                .iter()
                .map(|p| ManifestPage { image: fix(&p.image), boxes: fix(&p.boxes), ..p.clone() })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Correct { pred: usize },
    Misclassified { pred: usize, predicted: char },
    /// Matched a glyph the classifier refused to label.
    RejectedByClassifier { pred: usize },
    /// No prediction covers this box.
    RejectedBySegmentation,
    /// Swallowed by one prediction spanning several boxes.
    UnderSegmented { pred: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthOutcome {
    pub gt: usize,
    pub glyph: String,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    /// Ground-truth glyphs considered.
    pub total: u64,
    pub correct: u64,
    pub misclassified: u64,
    /// Merged predictions, each spanning two or more ground-truth glyphs.
    pub under_segmented: u64,
    /// Ground-truth glyphs swallowed by those merged predictions.
    pub absorbed: u64,
    pub rejected_classifier: u64,
    pub rejected_segmentation: u64,
}

impl EvalCounts {
    pub fn rejected(&self) -> u64 {
        self.rejected_classifier + self.rejected_segmentation
    }

    pub fn add(&mut self, other: &EvalCounts) {
        self.total += other.total;
        self.correct += other.correct;
        self.misclassified += other.misclassified;
        self.under_segmented += other.under_segmented;
        self.absorbed += other.absorbed;
        self.rejected_classifier += other.rejected_classifier;
        self.rejected_segmentation += other.rejected_segmentation;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PageEvaluation {
    pub outcomes: Vec<GroundTruthOutcome>,
    pub counts: EvalCounts,
    /// `(truth, predicted)` counts over matched glyphs; rejections use `None`.
    pub confusion: BTreeMap<(String, Option<char>), u64>,
}

/// Matches predicted glyph boxes to ground-truth boxes greedily by IoU and
/// classifies every ground-truth glyph into exactly one outcome.
pub fn match_boxes(gt: &BoxPage, pred: &PageResult, iou_threshold: f64) -> PageEvaluation {
    let preds: Vec<(BoxRect, Option<char>)> = pred
        .glyphs()
        .map(|g| (g.bbox, g.classification.label))
        .collect();
    let gts: Vec<BoxRect> = gt.records.iter().map(|r| r.rect()).collect();

    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (pi, (pb, _)) in preds.iter().enumerate() {
        for (gi, gb) in gts.iter().enumerate() {
            let iou = pb.iou(gb);
            if iou >= iou_threshold && iou > 0.0 {
                pairs.push((iou, pi, gi));
            }
        }
    }
    let geometry = |b: &BoxRect| (b.left, b.bottom, b.right, b.top);
    pairs.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| geometry(&preds[a.1].0).cmp(&geometry(&preds[b.1].0)))
            .then_with(|| geometry(&gts[a.2]).cmp(&geometry(&gts[b.2])))
            .then_with(|| (a.1, a.2).cmp(&(b.1, b.2)))
    });

    let mut outcome: Vec<Option<Outcome>> = vec![None; gts.len()];
    let mut pred_used = vec![false; preds.len()];
    for &(_, pi, gi) in &pairs {
        if pred_used[pi] || outcome[gi].is_some() {
            continue;
        }
        pred_used[pi] = true;
        let truth = gt.records[gi].glyph.as_str();
        outcome[gi] = Some(match preds[pi].1 {
            None => Outcome::RejectedByClassifier { pred: pi },
            Some(l) if l.to_string() == truth => Outcome::Correct { pred: pi },
            Some(l) => Outcome::Misclassified { pred: pi, predicted: l },
        });
    }

    let mut counts = EvalCounts { total: gts.len() as u64, ..EvalCounts::default() };
    let mut unmatched_preds: Vec<usize> = (0..preds.len()).filter(|&i| !pred_used[i]).collect();
    unmatched_preds.sort_by_key(|&i| (geometry(&preds[i].0), i));
    for pi in unmatched_preds {
        let pb = preds[pi].0;
        let covered: Vec<usize> = (0..gts.len())
            .filter(|&gi| outcome[gi].is_none())
            .filter(|&gi| {
                let g = gts[gi];
                g.area() > 0 && pb.intersection_area(&g) as f64 / g.area() as f64 >= 0.5
            })
            .collect();
        if covered.len() >= 2 {
            counts.under_segmented += 1;
            for gi in covered {
                outcome[gi] = Some(Outcome::UnderSegmented { pred: pi });
            }
        }
    }

    let mut confusion = BTreeMap::new();
    let outcomes: Vec<GroundTruthOutcome> = outcome
        .into_iter()
        .enumerate()
        .map(|(gi, o)| {
            let o = o.unwrap_or(Outcome::RejectedBySegmentation);
            let glyph = gt.records[gi].glyph.clone();
            match &o {
                Outcome::Correct { pred } | Outcome::Misclassified { pred, .. } => {
                    if let Outcome::Correct { .. } = o {
                        counts.correct += 1;
                    } else {
                        counts.misclassified += 1;
                    }
                    *confusion.entry((glyph.clone(), preds[*pred].1)).or_insert(0) += 1;
                }
                Outcome::RejectedByClassifier { .. } => {
                    counts.rejected_classifier += 1;
                    *confusion.entry((glyph.clone(), None)).or_insert(0) += 1;
                }
                Outcome::RejectedBySegmentation => counts.rejected_segmentation += 1,
                Outcome::UnderSegmented { .. } => counts.absorbed += 1,
            }
            GroundTruthOutcome { gt: gi, glyph, outcome: o }
        })
        .collect();
    PageEvaluation { outcomes, counts, confusion }
}

/// Success rate in percent over glyphs that received a label or were merged:
/// `C_t / (C_t + C_m + C_s) * 100`. Rejected glyphs are excluded.
pub fn compute_accuracy(c: &EvalCounts) -> Option<f64> {
    let denom = c.correct + c.misclassified + c.under_segmented;
    (denom > 0).then(|| c.correct as f64 / denom as f64 * 100.0)
}

/// The ratio `C_t / (C_m + C_s) * 100` exactly as it is sometimes printed.
/// Reported alongside the success rate for comparison only.
pub fn literal_ratio(c: &EvalCounts) -> Option<f64> {
    let denom = c.misclassified + c.under_segmented;
    (denom > 0).then(|| c.correct as f64 / denom as f64 * 100.0)
}

pub fn rejection_rate(c: &EvalCounts) -> Option<f64> {
    (c.total > 0).then(|| c.rejected() as f64 / c.total as f64 * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRow {
    pub split: String,
    pub total: u64,
    pub misclassified: u64,
    pub rejected: u64,
    pub under_segmented: u64,
    pub success_pct: Option<f64>,
    pub rejection_rate_pct: Option<f64>,
    pub counts: EvalCounts,
    pub literal_ratio_pct: Option<f64>,
    pub pages: usize,
}

impl SplitRow {
    pub fn from_counts(split: &str, counts: EvalCounts, pages: usize) -> Self {
        Self {
            split: split.to_string(),
            total: counts.total,
            misclassified: counts.misclassified,
            rejected: counts.rejected(),
            under_segmented: counts.under_segmented,
            success_pct: compute_accuracy(&counts),
            rejection_rate_pct: rejection_rate(&counts),
            counts,
            literal_ratio_pct: literal_ratio(&counts),
            pages,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionEntry {
    pub split: String,
    pub truth: String,
    /// `None` when the classifier rejected the glyph.
    pub predicted: Option<char>,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<SplitRow>,
    pub confusion: Vec<ConfusionEntry>,
    pub config: ProjectConfig,
}

/// Aggregates per-page evaluations into one row per test split.
/// `results` pairs a manifest page index with that page's evaluation.
pub fn build_report(
    manifest: &DatasetManifest,
    results: &[(usize, PageEvaluation)],
    config: &ProjectConfig,
) -> Result<EvalReport, EvalError> {
    let mut per_split: BTreeMap<Role, (EvalCounts, usize)> = BTreeMap::new();
    let mut confusion: BTreeMap<(Role, String, Option<char>), u64> = BTreeMap::new();
    per_split.insert(Role::Td1, Default::default());
    per_split.insert(Role::Td2, Default::default());
    let mut seen = HashSet::new();
    for (page, eval) in results {
        let role = manifest
            .pages
            .get(*page)
            .map(|p| p.role)
            .filter(|r| *r != Role::Training)
            .ok_or(EvalError::NotATestPage { page: *page })?;
        if !seen.insert(*page) {
            continue;
        }
        let entry = per_split.entry(role).or_default();
        entry.0.add(&eval.counts);
        entry.1 += 1;
        for ((truth, predicted), n) in &eval.confusion {
            *confusion.entry((role, truth.clone(), *predicted)).or_insert(0) += n;
        }
    }
    Ok(EvalReport {
        rows: per_split
            .into_iter()
            .map(|(role, (counts, pages))| SplitRow::from_counts(role.name(), counts, pages))
            .collect(),
        confusion: confusion
            .into_iter()
            .map(|((role, truth, predicted), count)| ConfusionEntry {
                split: role.name().to_string(),
                truth,
                predicted,
                count,
            })
            .collect(),
        config: config.clone(),
    })
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.2}"))
}

impl EvalReport {
    pub fn row(&self, split: &str) -> Option<&SplitRow> {
        self.rows.iter().find(|r| r.split == split)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report always serializes")
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<6} {:>6} {:>14} {:>9} {:>16} {:>10} {:>12}",
            "split", "total", "misclassified", "rejected", "under-segmented", "success%", "rejection%"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<6} {:>6} {:>14} {:>9} {:>16} {:>10} {:>12}",
                r.split,
                r.total,
                r.misclassified,
                r.rejected,
                r.under_segmented,
                pct(r.success_pct),
                pct(r.rejection_rate_pct)
            );
        }
        out.push('\n');
        out.push_str("success% = C_t / (C_t + C_m + C_s) * 100, where C_t is correct, C_m misclassified and\n");
        out.push_str("C_s under-segmented; rejected glyphs are excluded from the denominator.\n");
        out.push_str("For comparison, the ratio C_t / (C_m + C_s) * 100:");
        for r in &self.rows {
            let _ = write!(out, " {} {}", r.split, pct(r.literal_ratio_pct));
        }
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}: {} rejected by the classifier, {} not covered by any segment, {} absorbed into merged blobs",
                r.split, r.counts.rejected_classifier, r.counts.rejected_segmentation, r.counts.absorbed
            );
        }
        let c = &self.config;
        let _ = writeln!(
            out,
            "config: lang={} dpi={} reject_threshold={} pruner={} iou={} noise_floor={} gap={} oversized={} k_max={} seed={}",
            c.lang_code,
            c.dpi,
            c.reject_threshold,
            c.pruner_survivors,
            c.iou_threshold,
            c.noise_floor,
            c.gap_factor,
            c.oversized_factor,
            c.k_max,
            c.seed
        );
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub glyph: String,
    pub training: u64,
    pub td1: u64,
    pub td2: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub rows: Vec<FrequencyRow>,
}

/// Per-glyph sample counts per split. `boxes[i]` belongs to manifest page `i`.
pub fn frequency_report(manifest: &DatasetManifest, boxes: &[BoxPage]) -> FrequencyReport {
    let mut table: BTreeMap<String, [u64; 3]> = BTreeMap::new();
    for (page, bp) in manifest.pages.iter().zip(boxes) {
        let col = page.role as usize;
        for r in &bp.records {
            table.entry(r.glyph.clone()).or_default()[col] += 1;
        }
    }
    FrequencyReport {
        rows: table
            .into_iter()
            .map(|(glyph, [training, td1, td2])| FrequencyRow { glyph, training, td1, td2 })
            .collect(),
    }
}

impl FrequencyReport {
    pub fn totals(&self) -> [u64; 3] {
        self.rows.iter().fold([0; 3], |t, r| [t[0] + r.training, t[1] + r.td1, t[2] + r.td2])
    }

    pub fn render_text(&self) -> String {
        let mut out = format!("{:<6} {:>9} {:>6} {:>6}\n", "glyph", "training", "td1", "td2");
        for r in &self.rows {
            let _ = writeln!(out, "{:<6} {:>9} {:>6} {:>6}", r.glyph, r.training, r.td1, r.td2);
        }
        let [a, b, c] = self.totals();
        let _ = writeln!(out, "{:<6} {:>9} {:>6} {:>6}", "total", a, b, c);
        out
    }

    /// Renders `glyph,training,td1,td2` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("glyph,training,td1,td2\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.glyph, r.training, r.td1, r.td2);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxfile::BoxRecord;
    use crate::recognize::{Classification, RecognizedGlyph, RecognizedLine};
    use proptest::prelude::*;

    fn rect(l: u32, b: u32, r: u32, t: u32) -> BoxRect {
        BoxRect { left: l, bottom: b, right: r, top: t }
    }

    fn gt(items: &[(&str, BoxRect)]) -> BoxPage {
        BoxPage::new(items.iter().map(|(g, r)| BoxRecord::new(g.to_string(), *r, 0)).collect())
    }

    fn pred(items: &[(Option<char>, BoxRect)]) -> PageResult {
        let glyphs = items
            .iter()
            .map(|&(label, bbox)| RecognizedGlyph {
                bbox,
                classification: Classification { label, distance: 0.0, alternatives: vec![] },
                oversized: false,
            })
            .collect();
        PageResult {
            lines: vec![RecognizedLine { glyphs, raw: String::new(), dictionary: Default::default() }],
            text: String::new(),
        }
    }

    #[test]
    fn table_shaped_counts() {
        let c = EvalCounts {
            total: 249,
            correct: 203,
            misclassified: 20,
            rejected_classifier: 26,
            ..EvalCounts::default()
        };
        assert!((compute_accuracy(&c).unwrap() - 91.03).abs() < 0.01);
        assert!((rejection_rate(&c).unwrap() - 10.44).abs() < 0.01);
        let c2 = EvalCounts { total: 349, rejected_classifier: 38, ..EvalCounts::default() };
        assert!((rejection_rate(&c2).unwrap() - 10.89).abs() < 0.01);
    }

    #[test]
    fn empty_denominator_is_undefined() {
        let c = EvalCounts { total: 4, rejected_classifier: 4, ..EvalCounts::default() };
        assert_eq!(compute_accuracy(&c), None);
        assert_eq!(literal_ratio(&c), None);
        assert_eq!(rejection_rate(&EvalCounts::default()), None);
        assert!(pct(None).contains("undefined"));
    }

    #[test]
    fn outcome_kinds() {
        let g = gt(&[
            ("1", rect(0, 0, 10, 20)),
            ("2", rect(20, 0, 30, 20)),
            ("3", rect(40, 0, 50, 20)),
            ("4", rect(60, 0, 70, 20)),
            ("5", rect(80, 0, 90, 20)),
            ("6", rect(92, 0, 102, 20)),
        ]);
        let p = pred(&[
            (Some('1'), rect(0, 0, 10, 20)),
            (Some('7'), rect(20, 0, 30, 20)),
            (None, rect(40, 0, 50, 20)),
            (Some('8'), rect(80, 0, 102, 20)),
        ]);
        let e = match_boxes(&g, &p, 0.5);
        assert_eq!(e.counts.correct, 1);
        assert_eq!(e.counts.misclassified, 1);
        assert_eq!(e.counts.rejected_classifier, 1);
        assert_eq!(e.counts.rejected_segmentation, 1);
        assert_eq!(e.counts.under_segmented, 1);
        assert_eq!(e.counts.absorbed, 2);
        assert_eq!(e.outcomes[3].outcome, Outcome::RejectedBySegmentation);
        assert_eq!(e.confusion[&("2".to_string(), Some('7'))], 1);
        assert_eq!(e.confusion[&("3".to_string(), None)], 1);
    }

    #[test]
    fn merged_pair_is_one_under_segmentation() {
        let g = gt(&[("1", rect(0, 0, 10, 10)), ("2", rect(12, 0, 22, 10))]);
        let merged = rect(0, 0, 22, 10);
        assert!((merged.iou(&g.records[0].rect()) - 100.0 / 220.0).abs() < 1e-12);
        let e = match_boxes(&g, &pred(&[(Some('1'), merged)]), 0.5);
        assert_eq!(e.counts.under_segmented, 1);
        assert_eq!(e.counts.absorbed, 2);
        assert_eq!(e.counts.correct + e.counts.misclassified + e.counts.rejected(), 0);
    }

    #[test]
    fn one_prediction_matches_one_box() {
        let g = gt(&[("1", rect(0, 0, 10, 10)), ("1", rect(0, 0, 10, 10))]);
        let p = pred(&[(Some('1'), rect(0, 0, 10, 10))]);
        let e = match_boxes(&g, &p, 0.5);
        assert_eq!(e.counts.correct, 1);
        assert_eq!(e.counts.rejected_segmentation, 1);
    }

    #[test]
    fn greedy_prefers_higher_iou() {
        let g = gt(&[("a", rect(0, 0, 10, 10)), ("b", rect(2, 0, 12, 10))]);
        let p = pred(&[(Some('b'), rect(2, 0, 12, 10)), (Some('a'), rect(0, 0, 11, 10))]);
        let e = match_boxes(&g, &p, 0.5);
        assert_eq!(e.counts.correct, 2);
    }

    #[test]
    fn manifest_roles_are_checked() {
        let ok = "[[page]]\nimage='a.png'\nboxes='a.box'\nuser='u1'\nrole='training'\n\
                  [[page]]\nimage='b.png'\nboxes='b.box'\nuser='u1'\nrole='td1'\n\
                  [[page]]\nimage='c.png'\nboxes='c.box'\nuser='u2'\nrole='td2'\n";
        let m = DatasetManifest::from_toml(ok).unwrap();
        assert_eq!(m.known_users().into_iter().collect::<Vec<_>>(), vec!["u1"]);
        assert_eq!(DatasetManifest::from_toml(&m.to_toml()).unwrap(), m);
        let resolved = m.resolve(Path::new("/data"));
        assert_eq!(resolved.pages[0].image, PathBuf::from("/data/a.png"));

        let bad1 = ok.replace("user='u2'", "user='u1'");
        assert!(matches!(DatasetManifest::from_toml(&bad1), Err(EvalError::UnknownWithTraining { page: 2, .. })));
        let bad2 = ok.replace("user='u1'\nrole='td1'", "user='u3'\nrole='td1'");
        assert!(matches!(DatasetManifest::from_toml(&bad2), Err(EvalError::KnownWithoutTraining { page: 1, .. })));
        assert!(DatasetManifest::from_toml("[[page]]\nimage='a'\n").is_err());
    }

    #[test]
    fn report_rows_and_rendering() {
        let m = DatasetManifest::from_toml(
            "[[page]]\nimage='a'\nboxes='a'\nuser='u'\nrole='training'\n[[page]]\nimage='b'\nboxes='b'\nuser='u'\nrole='td1'\n",
        )
        .unwrap();
        let eval = PageEvaluation {
            counts: EvalCounts { total: 249, correct: 203, misclassified: 20, rejected_classifier: 26, ..Default::default() },
            ..Default::default()
        };
        let report = build_report(&m, &[(1, eval.clone())], &ProjectConfig::default()).unwrap();
        let td1 = report.row("td1").unwrap();
        assert_eq!((td1.total, td1.misclassified, td1.rejected), (249, 20, 26));
        assert_eq!(report.row("td2").unwrap().success_pct, None);
        let text = report.render_text();
        assert!(text.contains("91.03"));
        assert!(text.contains("C_t / (C_t + C_m + C_s)"));
        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        for key in ["split", "total", "misclassified", "rejected", "under_segmented", "success_pct", "rejection_rate_pct"] {
            assert!(json["rows"][0].get(key).is_some(), "{key}");
        }
        assert_eq!(build_report(&m, &[(0, eval)], &ProjectConfig::default()), Err(EvalError::NotATestPage { page: 0 }));
    }

    #[test]
    fn frequency_counts() {
        let m = DatasetManifest::from_toml(
            "[[page]]\nimage='a'\nboxes='a'\nuser='u'\nrole='training'\n[[page]]\nimage='b'\nboxes='b'\nuser='v'\nrole='td2'\n",
        )
        .unwrap();
        let pages = vec![
            gt(&[("1", rect(0, 0, 1, 1)), ("1", rect(0, 0, 1, 1)), ("2", rect(0, 0, 1, 1))]),
            gt(&[("2", rect(0, 0, 1, 1))]),
        ];
        let f = frequency_report(&m, &pages);
        assert_eq!(f.totals(), [3, 0, 1]);
        assert_eq!(f.rows[0], FrequencyRow { glyph: "1".into(), training: 2, td1: 0, td2: 0 });
        assert!(f.to_csv().starts_with("glyph,training,td1,td2\n1,2,0,0\n"));
    }

    type Layout = (Vec<(String, BoxRect)>, Vec<(Option<char>, BoxRect)>);

    fn arb_layout() -> impl Strategy<Value = Layout> {
        let cell = (0u32..12, 0u32..4, 4u32..14, 6u32..20);
        let gts = prop::collection::vec((prop::sample::select(vec!["0", "1", "2"]), cell.clone()), 0..14);
        let preds = prop::collection::vec((prop::option::of(prop::sample::select(vec!['0', '1', '2'])), cell), 0..14);
        (gts, preds).prop_map(|(g, p)| {
            let place = |i: usize, (x, y, w, h): (u32, u32, u32, u32)| rect(i as u32 * 15 / 2 + x, y, i as u32 * 15 / 2 + x + w, y + h);
            (
                g.into_iter().enumerate().map(|(i, (s, c))| (s.to_string(), place(i, c))).collect(),
                p.into_iter().enumerate().map(|(i, (l, c))| (l, place(i, c))).collect(),
            )
        })
    }

    proptest! {
        #[test]
        fn every_ground_truth_glyph_has_one_outcome((g, p) in arb_layout()) {
            let gtp = gt(&g.iter().map(|(s, r)| (s.as_str(), *r)).collect::<Vec<_>>());
            let e = match_boxes(&gtp, &pred(&p), 0.5);
            let c = e.counts;
            prop_assert_eq!(c.correct + c.misclassified + c.rejected() + c.absorbed, c.total);
            prop_assert_eq!(e.outcomes.len() as u64, c.total);
            prop_assert!(c.absorbed >= 2 * c.under_segmented);
            if let Some(acc) = compute_accuracy(&c) {
                prop_assert!((0.0..=100.0).contains(&acc));
            }
            if let Some(r) = rejection_rate(&c) {
                prop_assert!((0.0..=100.0).contains(&r));
            }
        }

        #[test]
        fn prediction_order_does_not_matter((g, p) in arb_layout(), seed in any::<u64>()) {
            let gtp = gt(&g.iter().map(|(s, r)| (s.as_str(), *r)).collect::<Vec<_>>());
            let mut shuffled = p.clone();
            let n = shuffled.len();
            if n > 1 {
                for i in 0..n {
                    let j = (seed.wrapping_mul(i as u64 + 1) % n as u64) as usize;
                    shuffled.swap(i, j);
                }
            }
            // Duplicate boxes with different labels would make the order visible.
            let distinct: HashSet<_> = p.iter().map(|(_, r)| (r.left, r.bottom, r.right, r.top)).collect();
            prop_assume!(distinct.len() == p.len());
            prop_assert_eq!(match_boxes(&gtp, &pred(&p), 0.5).counts, match_boxes(&gtp, &pred(&shuffled), 0.5).counts);
        }

        #[test]
        fn counts_are_conserved(ct in 0u64..500, cm in 0u64..500, rj in 0u64..500, cs in 0u64..100) {
            let c = EvalCounts {
                total: ct + cm + rj + 2 * cs,
                correct: ct,
                misclassified: cm,
                under_segmented: cs,
                absorbed: 2 * cs,
                rejected_classifier: rj,
                ..Default::default()
            };
            prop_assert_eq!(c.correct + c.misclassified + c.rejected() + c.absorbed, c.total);
            match compute_accuracy(&c) {
                Some(a) => prop_assert!((0.0..=100.0).contains(&a)),
                None => prop_assert_eq!(ct + cm + cs, 0),
            }
        }
    }
}
