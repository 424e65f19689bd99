//! Accuracy of predictions against known sites, modules and matrices.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::posterior::{register, PredictedModule, PredictedSite};
use crate::simulate::{TrueModule, TrueSite};

/// Largest start offset at which a prediction still counts as a hit.
pub const START_TOLERANCE: usize = 3;

pub fn site_match(predicted_start: usize, true_start: usize) -> bool {
    predicted_start.abs_diff(true_start) <= START_TOLERANCE
}

/// Location of a site for scoring; coordinates are 0-based inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SiteCall {
    pub gene: usize,
    pub species: usize,
    pub motif: usize,
    pub start: usize,
    pub end: usize,
}

impl From<&PredictedSite> for SiteCall {
    fn from(s: &PredictedSite) -> Self {
        SiteCall {
            gene: s.gene,
            species: s.species,
            motif: s.motif,
            start: s.start,
            end: s.end,
        }
    }
}

impl From<&TrueSite> for SiteCall {
    fn from(s: &TrueSite) -> Self {
        SiteCall {
            gene: s.gene,
            species: s.species,
            motif: s.motif,
            start: s.start,
            end: s.end,
        }
    }
}

/// A module or any other interval, 0-based inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Region {
    pub gene: usize,
    pub species: usize,
    pub start: usize,
    pub end: usize,
}

impl From<&PredictedModule> for Region {
    fn from(m: &PredictedModule) -> Self {
        Region {
            gene: m.gene,
            species: m.species,
            start: m.start,
            end: m.end,
        }
    }
}

impl From<&TrueModule> for Region {
    fn from(m: &TrueModule) -> Self {
        Region {
            gene: m.gene,
            species: m.species,
            start: m.start,
            end: m.end,
        }
    }
}

/// Hits among predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SiteCounts {
    /// Number of predictions.
    pub predicted: usize,
    /// Predictions matched to a true site.
    pub correct: usize,
    pub truth: usize,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl SiteCounts {
    pub fn sensitivity(&self) -> f64 {
        ratio(self.correct, self.truth)
    }

    pub fn specificity(&self) -> f64 {
        ratio(self.correct, self.predicted)
    }

    /// Geometric mean of sensitivity and specificity.
    pub fn overall(&self) -> f64 {
        (self.sensitivity() * self.specificity()).sqrt()
    }

    fn add(&mut self, o: &SiteCounts) {
        self.predicted += o.predicted;
        self.correct += o.correct;
        self.truth += o.truth;
    }
}

/// Site accuracy per motif and pooled over motifs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SiteReport {
    pub per_motif: Vec<SiteCounts>,
    pub pooled: SiteCounts,
}

/// One-to-one matching within each (gene, species, motif): closest starts
/// first, then leftmost.
pub fn eval_sites(predicted: &[SiteCall], truth: &[SiteCall]) -> SiteReport {
    type Key = (usize, usize, usize);
    let mut buckets: BTreeMap<Key, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    let n_motifs = predicted
        .iter()
        .chain(truth)
        .map(|s| s.motif + 1)
        .max()
        .unwrap_or(0);
    let mut per_motif = vec![SiteCounts::default(); n_motifs];
    for p in predicted {
        buckets.entry((p.gene, p.species, p.motif)).or_default().0.push(p.start);
        per_motif[p.motif].predicted += 1;
    }
    for t in truth {
        buckets.entry((t.gene, t.species, t.motif)).or_default().1.push(t.start);
        per_motif[t.motif].truth += 1;
    }
    for ((_, _, motif), (mut preds, mut trues)) in buckets {
        preds.sort_unstable();
        trues.sort_unstable();
        let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
        for (i, &p) in preds.iter().enumerate() {
            for (j, &t) in trues.iter().enumerate() {
                if site_match(p, t) {
                    pairs.push((p.abs_diff(t), i, j));
                }
            }
        }
        pairs.sort_unstable();
        let mut used_p = vec![false; preds.len()];
        let mut used_t = vec![false; trues.len()];
        for (_, i, j) in pairs {
            if !used_p[i] && !used_t[j] {
                used_p[i] = true;
                used_t[j] = true;
                per_motif[motif].correct += 1;
            }
        }
    }
    let mut pooled = SiteCounts::default();
    per_motif.iter().for_each(|c| pooled.add(c));
    SiteReport { per_motif, pooled }
}

/// Base-pair overlap between predicted and true regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BpOverlap {
    pub overlap: usize,
    pub predicted: usize,
    pub truth: usize,
}

impl BpOverlap {
    pub fn sensitivity(&self) -> f64 {
        ratio(self.overlap, self.truth)
    }

    pub fn specificity(&self) -> f64 {
        ratio(self.overlap, self.predicted)
    }
}

/// Union of inclusive intervals as sorted disjoint intervals.
fn union(mut v: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    v.sort_unstable();
    let mut out: Vec<(usize, usize)> = Vec::new();
    for (a, b) in v {
        match out.last_mut() {
            Some(last) if a <= last.1 + 1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

fn covered(v: &[(usize, usize)]) -> usize {
    v.iter().map(|(a, b)| b + 1 - a).sum()
}

/// Bases covered by both sets, per sequence, summed.
pub fn eval_modules_bp(predicted: &[Region], truth: &[Region]) -> BpOverlap {
    let mut seqs: BTreeMap<(usize, usize), (Vec<(usize, usize)>, Vec<(usize, usize)>)> = BTreeMap::new();
    for r in predicted {
        seqs.entry((r.gene, r.species)).or_default().0.push((r.start, r.end));
    }
    for r in truth {
        seqs.entry((r.gene, r.species)).or_default().1.push((r.start, r.end));
    }
    let mut out = BpOverlap::default();
    for (_, (p, t)) in seqs {
        let (p, t) = (union(p), union(t));
        out.predicted += covered(&p);
        out.truth += covered(&t);
        for &(a, b) in &p {
            for &(c, d) in &t {
                let (lo, hi) = (a.max(c), b.min(d));
                if lo <= hi {
                    out.overlap += hi + 1 - lo;
                }
            }
        }
    }
    out
}

/// Sum of squared differences between matrices. Different widths are
/// compared at the best offset and strand and rescaled to the width of the
/// reference.
pub fn pwm_ssd(estimated: &[[f64; 4]], reference: &[[f64; 4]]) -> f64 {
    if estimated.is_empty() || reference.is_empty() {
        return f64::NAN;
    }
    let (c, n) = register(estimated, reference, |x, y| {
        x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
    });
    c / n as f64 * reference.len() as f64
}

/// Map each predicted motif to a distinct true motif so that the number of
/// correct sites is largest; unmatched motifs map to `None`.
pub fn assign_motifs(predicted: &[SiteCall], truth: &[SiteCall], n_predicted: usize, n_true: usize) -> Vec<Option<usize>> {
    // Hits of predicted motif i scored as true motif j.
    let mut hits = vec![vec![0usize; n_true]; n_predicted];
    for (i, row) in hits.iter_mut().enumerate() {
        let mine: Vec<SiteCall> = predicted.iter().filter(|s| s.motif == i).copied().collect();
        for (j, h) in row.iter_mut().enumerate() {
            let relabeled: Vec<SiteCall> = mine.iter().map(|s| SiteCall { motif: 0, ..*s }).collect();
            let t: Vec<SiteCall> = truth
                .iter()
                .filter(|s| s.motif == j)
                .map(|s| SiteCall { motif: 0, ..*s })
                .collect();
            *h = eval_sites(&relabeled, &t).pooled.correct;
        }
    }
    let mut best = (-1isize, vec![None; n_predicted]);
    let mut current = vec![None; n_predicted];
    let mut taken = vec![false; n_true];
    fn search(
        i: usize,
        hits: &[Vec<usize>],
        current: &mut Vec<Option<usize>>,
        taken: &mut Vec<bool>,
        score: isize,
        best: &mut (isize, Vec<Option<usize>>),
    ) {
        // Ties keep the first assignment found, which pairs motifs in order.
        if i == hits.len() {
            if score > best.0 {
                *best = (score, current.clone());
            }
            return;
        }
        for j in 0..taken.len() {
            if !taken[j] {
                taken[j] = true;
                current[i] = Some(j);
                search(i + 1, hits, current, taken, score + hits[i][j] as isize, best);
                taken[j] = false;
            }
        }
        current[i] = None;
        search(i + 1, hits, current, taken, score, best);
    }
    search(0, &hits, &mut current, &mut taken, 0, &mut best);
    best.1
}

/// Apply a motif assignment; sites of unassigned motifs get label `unmatched`.
pub fn relabel(sites: &[SiteCall], assignment: &[Option<usize>], unmatched: usize) -> Vec<SiteCall> {
    sites
        .iter()
        .map(|s| SiteCall {
            motif: assignment.get(s.motif).copied().flatten().unwrap_or(unmatched),
            ..*s
        })
        .collect()
}

/// Site, module and matrix accuracy of one prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub motif_names: Vec<String>,
    pub sites: SiteReport,
    pub modules: BpOverlap,
    /// Per true motif, when a matrix was predicted for it.
    pub ssd: Vec<Option<f64>>,
}

impl EvalReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("motif\tpredicted\tcorrect\ttrue\tsensitivity\tspecificity\toverall\tssd\n");
        for (i, c) in self.sites.per_motif.iter().enumerate() {
            let name = self.motif_names.get(i).cloned().unwrap_or_else(|| "unmatched".into());
            let ssd = self.ssd.get(i).copied().flatten().map_or("NA".into(), |v| format!("{v:.4}"));
            let _ = writeln!(
                out,
                "{name}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{ssd}",
                c.predicted,
                c.correct,
                c.truth,
                c.sensitivity(),
                c.specificity(),
                c.overall()
            );
        }
        let c = &self.sites.pooled;
        let _ = writeln!(
            out,
            "all\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\tNA",
            c.predicted,
            c.correct,
            c.truth,
            c.sensitivity(),
            c.specificity(),
            c.overall()
        );
        let m = &self.modules;
        let _ = writeln!(
            out,
            "modules_bp\t{}\t{}\t{}\t{:.4}\t{:.4}\tNA\tNA",
            m.predicted,
            m.overlap,
            m.truth,
            m.sensitivity(),
            m.specificity()
        );
        out
    }

    /// One row: `N2/N1` per motif, then pooled sensitivity, specificity and overall.
    pub fn to_table(&self) -> String {
        let mut head = String::new();
        let mut row = String::new();
        for (i, c) in self.sites.per_motif.iter().enumerate() {
            let name = self.motif_names.get(i).cloned().unwrap_or_else(|| "unmatched".into());
            let _ = write!(head, "{:>14}", format!("{name} ({})", c.truth));
            let _ = write!(row, "{:>14}", format!("{}/{}", c.correct, c.predicted));
        }
        let c = &self.sites.pooled;
        let _ = write!(head, "{:>13}{:>13}{:>9}", "Sensitivity", "Specificity", "Overall");
        let _ = write!(
            row,
            "{:>12.0}%{:>12.0}%{:>8.0}%",
            100.0 * c.sensitivity(),
            100.0 * c.specificity(),
            100.0 * c.overall()
        );
        let m = &self.modules;
        format!(
            "{head}\n{row}\nModule bases: {}/{} predicted, {} true ({:.0}% / {:.0}%)\n",
            m.overlap,
            m.predicted,
            m.truth,
            100.0 * m.sensitivity(),
            100.0 * m.specificity()
        )
    }
}

/// Score predicted sites, modules and matrices against the truth, with
/// predicted motifs assigned to true motifs for the best site recovery.
pub fn evaluate(
    sites: &[PredictedSite],
    modules: &[PredictedModule],
    matrices: &[Vec<[f64; 4]>],
    truth: &crate::simulate::GroundTruth,
    true_matrices: &[(String, Vec<[f64; 4]>)],
) -> EvalReport {
    let pred: Vec<SiteCall> = sites.iter().map(SiteCall::from).collect();
    let tru: Vec<SiteCall> = truth.sites.iter().map(SiteCall::from).collect();
    let n_true = true_matrices.len();
    let assignment = assign_motifs(&pred, &tru, matrices.len(), n_true);
    let relabeled = relabel(&pred, &assignment, n_true);
    let mut report = eval_sites(&relabeled, &tru);
    report.per_motif.resize(report.per_motif.len().max(n_true), SiteCounts::default());
    // Unmatched predictions still count against specificity.
    let mut ssd = vec![None; n_true];
    for (i, a) in assignment.iter().enumerate() {
        if let Some(j) = *a {
            ssd[j] = Some(pwm_ssd(&matrices[i], &true_matrices[j].1));
        }
    }
    let modules = eval_modules_bp(
        &modules.iter().map(Region::from).collect::<Vec<_>>(),
        &truth.modules.iter().map(Region::from).collect::<Vec<_>>(),
    );
    EvalReport {
        motif_names: true_matrices.iter().map(|(n, _)| n.clone()).collect(),
        sites: report,
        modules,
        ssd,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn call(gene: usize, motif: usize, start: usize) -> SiteCall {
        SiteCall {
            gene,
            species: 0,
            motif,
            start,
            end: start + 7,
        }
    }

    #[test]
    fn start_tolerance() {
        assert!(site_match(100, 103));
        assert!(!site_match(100, 104));
        assert!(site_match(100, 100));
        assert!(site_match(103, 100));
    }

    #[test]
    fn rates_from_counts() {
        let c = SiteCounts {
            predicted: 97,
            correct: 45,
            truth: 76,
        };
        assert_eq!((c.sensitivity() * 100.0).round(), 59.0);
        assert_eq!((c.specificity() * 100.0).round(), 46.0);
        let same = SiteCounts {
            predicted: 10,
            correct: 4,
            truth: 10,
        };
        assert!((same.overall() - 0.4).abs() < 1e-15);
        let none = eval_sites(&[], &[call(0, 0, 5)]);
        assert_eq!(none.pooled.specificity(), 0.0);
        assert_eq!(none.pooled.overall(), 0.0);
    }

    #[test]
    fn matching_is_one_to_one() {
        let truth = vec![call(0, 0, 100)];
        let preds = vec![call(0, 0, 101), call(0, 0, 99), call(0, 0, 100)];
        let r = eval_sites(&preds, &truth);
        assert_eq!(r.pooled.correct, 1);
        assert_eq!(r.pooled.predicted, 3);
        // The closest prediction takes the true site, freeing the other for a neighbour.
        let truth = vec![call(0, 0, 100), call(0, 0, 104)];
        let preds = vec![call(0, 0, 101), call(0, 0, 103)];
        assert_eq!(eval_sites(&preds, &truth).pooled.correct, 2);
        // Other motif or gene never matches.
        assert_eq!(eval_sites(&[call(0, 1, 100)], &[call(0, 0, 100)]).pooled.correct, 0);
        assert_eq!(eval_sites(&[call(1, 0, 100)], &[call(0, 0, 100)]).pooled.correct, 0);
    }

    #[test]
    fn module_overlap() {
        let r = |s, e| Region {
            gene: 0,
            species: 0,
            start: s,
            end: e,
        };
        let same = eval_modules_bp(&[r(10, 99)], &[r(10, 99)]);
        assert_eq!((same.sensitivity(), same.specificity()), (1.0, 1.0));
        let apart = eval_modules_bp(&[r(10, 20)], &[r(30, 40)]);
        assert_eq!((apart.sensitivity(), apart.specificity()), (0.0, 0.0));
        let part = eval_modules_bp(&[r(10, 29), r(25, 39)], &[r(30, 49)]);
        assert_eq!((part.overlap, part.predicted, part.truth), (10, 30, 20));
    }

    #[test]
    fn ssd_values() {
        let a = vec![[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]];
        let b = vec![[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
        assert_eq!(pwm_ssd(&a, &a), 0.0);
        // Reverse complement of b is [A, C], the same as a.
        assert_eq!(pwm_ssd(&b, &a), 0.0);
        let c = vec![[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 1.0, 0.0]];
        // Forward differs in both columns; the reverse complement [C, C] differs in one.
        assert_eq!(pwm_ssd(&c, &a), 2.0);
    }

    #[test]
    fn assignment_finds_the_permutation() {
        let truth = vec![call(0, 0, 10), call(1, 0, 10), call(0, 1, 50), call(1, 1, 50)];
        let preds = vec![call(0, 1, 11), call(1, 1, 9), call(0, 0, 51)];
        let a = assign_motifs(&preds, &truth, 2, 2);
        assert_eq!(a, vec![Some(1), Some(0)]);
        let r = eval_sites(&relabel(&preds, &a, 2), &truth);
        assert_eq!(r.pooled.correct, 3);
    }

    fn column() -> impl Strategy<Value = [f64; 4]> {
        proptest::array::uniform4(0.01f64..1.0).prop_map(|c| {
            let s: f64 = c.iter().sum();
            c.map(|v| v / s)
        })
    }

    proptest! {
        #[test]
        fn overall_squared_is_the_product(p in 0usize..200, c in 0usize..200, t in 0usize..200) {
            let c = c.min(p).min(t);
            let s = SiteCounts { predicted: p, correct: c, truth: t };
            prop_assert!((s.overall().powi(2) - s.sensitivity() * s.specificity()).abs() < 1e-12);
            prop_assert!(s.overall() <= 1.0);
        }

        #[test]
        fn matching_ignores_input_order(starts in proptest::collection::vec(0usize..60, 0..12), truth in proptest::collection::vec(0usize..60, 0..12), seed in any::<u64>()) {
            let preds: Vec<SiteCall> = starts.iter().map(|&s| call(0, 0, s)).collect();
            let tr: Vec<SiteCall> = truth.iter().map(|&s| call(0, 0, s)).collect();
            let mut shuffled = preds.clone();
            use rand::{seq::SliceRandom, SeedableRng};
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = eval_sites(&preds, &tr);
            prop_assert_eq!(&a, &eval_sites(&shuffled, &tr));
            prop_assert!(a.pooled.correct <= a.pooled.predicted);
        }

        #[test]
        fn ssd_is_a_squared_distance(a in proptest::collection::vec(column(), 3), b in proptest::collection::vec(column(), 3)) {
            let d = pwm_ssd(&a, &b);
            prop_assert!(d >= 0.0);
            prop_assert!((d - pwm_ssd(&b, &a)).abs() < 1e-12);
            prop_assert_eq!(pwm_ssd(&a, &a), 0.0);
        }
    }
}
