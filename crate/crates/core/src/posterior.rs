//! Posterior marginals from sampled latent states, and the predictions
//! derived from them.

use crate::alignment::path::{mask_len, mask_members, AlignmentPath};
use crate::data::OrthologGroup;
use crate::dp::{Latent, SegmentKind, Strand};
use crate::error::{Error, Result};
use crate::model::{complement, Base, Pwm};

/// Default prior odds of a motif site, used by [`motif_score`].
pub const SITE_PRIOR_ODDS: f64 = 1.0 / 500.0;

/// Mean per-column total variation at or below which two motifs count as
/// the same motif.
pub const DUPLICATE_DISTANCE: f64 = 0.2;

/// Indicator sums for one sequence.
#[derive(Debug, Clone, PartialEq)]
struct SeqSums {
    module: Vec<f64>,
    aligned: Vec<f64>,
    /// `[motif][pos]`
    motif: Vec<Vec<f64>>,
    /// Forward-strand share of `motif`.
    forward: Vec<Vec<f64>>,
}

impl SeqSums {
    fn new(len: usize, k: usize) -> Self {
        SeqSums {
            module: vec![0.0; len],
            aligned: vec![0.0; len],
            motif: vec![vec![0.0; len]; k],
            forward: vec![vec![0.0; len]; k],
        }
    }

    fn add(&mut self, o: &SeqSums) {
        let add = |a: &mut Vec<f64>, b: &Vec<f64>| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.module, &o.module);
        add(&mut self.aligned, &o.aligned);
        for (a, b) in self.motif.iter_mut().zip(&o.motif) {
            add(a, b);
        }
        for (a, b) in self.forward.iter_mut().zip(&o.forward) {
            add(a, b);
        }
    }
}

/// Per-position marginals `P_k`, `P_m` and `P_a` for every sequence of a
/// dataset, kept as indicator sums over samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionPosterior {
    n_motifs: usize,
    samples: f64,
    /// `[group][species]`
    seqs: Vec<Vec<SeqSums>>,
}

impl PositionPosterior {
    pub fn new(groups: &[OrthologGroup], n_motifs: usize) -> Self {
        PositionPosterior {
            n_motifs,
            samples: 0.0,
            seqs: groups
                .iter()
                .map(|g| g.seqs.iter().map(|s| SeqSums::new(s.len(), n_motifs)).collect())
                .collect(),
        }
    }

    pub fn n_motifs(&self) -> usize {
        self.n_motifs
    }

    pub fn n_groups(&self) -> usize {
        self.seqs.len()
    }

    pub fn n_species(&self, g: usize) -> usize {
        self.seqs[g].len()
    }

    pub fn seq_len(&self, g: usize, m: usize) -> usize {
        self.seqs[g][m].module.len()
    }

    pub fn samples(&self) -> f64 {
        self.samples
    }

    /// Record one sample of group `g`'s latent state.
    pub fn accumulate(&mut self, g: usize, latent: &Latent, path: &AlignmentPath) {
        let seqs = &mut self.seqs[g];
        for seg in &latent.states.segments {
            for d in seg.first..=seg.last {
                let e = path.ec(d);
                let aligned = mask_len(e) >= 2;
                for m in mask_members(e) {
                    let pos = path.position(d, m).expect("species emits at step");
                    let s = &mut seqs[m];
                    if aligned {
                        s.aligned[pos] += 1.0;
                    }
                    match seg.kind {
                        SegmentKind::Background => {}
                        SegmentKind::ModuleBackground => s.module[pos] += 1.0,
                        SegmentKind::Motif { motif, strand } => {
                            s.module[pos] += 1.0;
                            s.motif[motif][pos] += 1.0;
                            if strand == Strand::Forward {
                                s.forward[motif][pos] += 1.0;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Count one sweep's worth of samples; call once after accumulating every group.
    pub fn finish_sample(&mut self) {
        self.samples += 1.0;
    }

    /// Pool with another accumulator over the same sequences.
    pub fn merge(&mut self, o: &PositionPosterior) -> Result<()> {
        if self.n_motifs != o.n_motifs
            || self.seqs.len() != o.seqs.len()
            || self
                .seqs
                .iter()
                .zip(&o.seqs)
                .any(|(a, b)| a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.module.len() != y.module.len()))
        {
            return Err(Error::InvalidParameter("posteriors cover different data".into()));
        }
        self.samples += o.samples;
        for (a, b) in self.seqs.iter_mut().zip(&o.seqs) {
            for (x, y) in a.iter_mut().zip(b) {
                x.add(y);
            }
        }
        Ok(())
    }

    fn norm(&self) -> f64 {
        if self.samples > 0.0 {
            1.0 / self.samples
        } else {
            0.0
        }
    }

    pub fn p_module(&self, g: usize, m: usize, pos: usize) -> f64 {
        self.seqs[g][m].module[pos] * self.norm()
    }

    pub fn p_aligned(&self, g: usize, m: usize, pos: usize) -> f64 {
        self.seqs[g][m].aligned[pos] * self.norm()
    }

    pub fn p_motif(&self, g: usize, m: usize, k: usize, pos: usize) -> f64 {
        self.seqs[g][m].motif[k][pos] * self.norm()
    }

    /// Build a posterior directly from marginal profiles `[group][species]`,
    /// each `(P_m, P_a, [P_k])`; strand votes are all forward.
    pub fn from_profiles(profiles: Vec<Vec<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)>>) -> Result<Self> {
        let n_motifs = profiles
            .iter()
            .flatten()
            .map(|p| p.2.len())
            .next()
            .unwrap_or(0);
        let mut seqs = Vec::with_capacity(profiles.len());
        for g in profiles {
            let mut row = Vec::with_capacity(g.len());
            for (module, aligned, motif) in g {
                let len = module.len();
                if aligned.len() != len || motif.len() != n_motifs || motif.iter().any(|v| v.len() != len) {
                    return Err(Error::InvalidParameter("profile lengths disagree".into()));
                }
                row.push(SeqSums {
                    forward: motif.clone(),
                    module,
                    aligned,
                    motif,
                });
            }
            seqs.push(row);
        }
        Ok(PositionPosterior {
            n_motifs,
            samples: 1.0,
            seqs,
        })
    }
}

/// Counts of sampled widths per motif.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WidthHistogram {
    /// `[motif][width]`
    pub counts: Vec<Vec<u64>>,
}

impl WidthHistogram {
    pub fn new(n_motifs: usize) -> Self {
        WidthHistogram {
            counts: vec![Vec::new(); n_motifs],
        }
    }

    pub fn record(&mut self, widths: &[usize]) {
        for (c, &w) in self.counts.iter_mut().zip(widths) {
            if c.len() <= w {
                c.resize(w + 1, 0);
            }
            c[w] += 1;
        }
    }

    pub fn merge(&mut self, o: &WidthHistogram) {
        for (a, b) in self.counts.iter_mut().zip(&o.counts) {
            if a.len() < b.len() {
                a.resize(b.len(), 0);
            }
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// Most frequent width of motif `k` (smallest on ties).
    pub fn mode(&self, k: usize) -> Option<usize> {
        let c = &self.counts[k];
        let best = *c.iter().max()?;
        (best > 0).then(|| c.iter().position(|&v| v == best).unwrap())
    }
}

/// Rounded posterior mean width (ties round up), clipped to `[lo, hi]`.
pub fn estimate_width(counts: &[u64], lo: usize, hi: usize) -> Result<usize> {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::InvalidParameter("no width samples".into()));
    }
    let sum: u64 = counts.iter().enumerate().map(|(w, &c)| w as u64 * c).sum();
    // floor(sum / n + 1/2) in exact arithmetic.
    let w = ((2 * sum + n) / (2 * n)) as usize;
    Ok(w.clamp(lo, hi))
}

/// A predicted binding site; coordinates are 0-based inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedSite {
    pub gene: usize,
    pub species: usize,
    pub motif: usize,
    pub start: usize,
    pub end: usize,
    pub strand: Strand,
    pub mean_aligned: f64,
}

/// A predicted module; coordinates are 0-based inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedModule {
    pub gene: usize,
    pub species: usize,
    pub start: usize,
    pub end: usize,
    /// Indices into the site list the module was built from.
    pub sites: Vec<usize>,
}

/// Maximal runs `[a, b]` where `above(i)` holds.
fn runs(len: usize, above: impl Fn(usize) -> bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for i in 0..len {
        match (above(i), start) {
            (true, None) => start = Some(i),
            (false, Some(a)) => {
                out.push((a, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(a) = start {
        out.push((a, len - 1));
    }
    out
}

/// One site of width `widths[k]` centred on every run with `P_k > threshold`.
pub fn predict_sites(post: &PositionPosterior, widths: &[usize], threshold: f64) -> Vec<PredictedSite> {
    let mut out = Vec::new();
    for g in 0..post.n_groups() {
        for m in 0..post.n_species(g) {
            let len = post.seq_len(g, m);
            let s = &post.seqs[g][m];
            for (k, &w) in widths.iter().enumerate().take(post.n_motifs) {
                for (a, b) in runs(len, |i| post.p_motif(g, m, k, i) > threshold) {
                    let w = w.min(len);
                    let start = ((a + b + 1) as isize - w as isize).div_euclid(2).clamp(0, (len - w) as isize)
                        as usize;
                    let end = start + w - 1;
                    let (fwd, all) = (a..=b).fold((0.0, 0.0), |(f, t), i| (f + s.forward[k][i], t + s.motif[k][i]));
                    let strand = if 2.0 * fwd >= all {
                        Strand::Forward
                    } else {
                        Strand::Reverse
                    };
                    let mean_aligned =
                        (start..=end).map(|i| post.p_aligned(g, m, i)).sum::<f64>() / w as f64;
                    out.push(PredictedSite {
                        gene: g,
                        species: m,
                        motif: k,
                        start,
                        end,
                        strand,
                        mean_aligned,
                    });
                }
            }
        }
    }
    out
}

/// Runs of `P_m > threshold` overlapping at least two sites, trimmed to the
/// outermost of those sites.
pub fn predict_modules(
    post: &PositionPosterior,
    sites: &[PredictedSite],
    threshold: f64,
) -> Vec<PredictedModule> {
    let mut out = Vec::new();
    for g in 0..post.n_groups() {
        for m in 0..post.n_species(g) {
            let mine: Vec<usize> = (0..sites.len())
                .filter(|&i| sites[i].gene == g && sites[i].species == m)
                .collect();
            if mine.len() < 2 {
                continue;
            }
            for (a, b) in runs(post.seq_len(g, m), |i| post.p_module(g, m, i) > threshold) {
                let inside: Vec<usize> = mine
                    .iter()
                    .copied()
                    .filter(|&i| sites[i].start <= b && sites[i].end >= a)
                    .collect();
                if inside.len() < 2 {
                    continue;
                }
                out.push(PredictedModule {
                    gene: g,
                    species: m,
                    start: inside.iter().map(|&i| sites[i].start).min().unwrap(),
                    end: inside.iter().map(|&i| sites[i].end).max().unwrap(),
                    sites: inside,
                });
            }
        }
    }
    out
}

/// Ranking score of a motif and the matrix it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct MotifScore {
    pub score: f64,
    pub n_sites: usize,
    pub width: usize,
    /// Base frequencies of the sites, uniform where a column has no bases.
    pub pwm: Vec<[f64; 4]>,
}

/// Base counts of a set of sites in their binding orientation.
pub fn site_counts(sites: &[&PredictedSite], groups: &[OrthologGroup], width: usize) -> Vec<[u64; 4]> {
    let mut counts = vec![[0u64; 4]; width];
    for s in sites {
        let seq = &groups[s.gene].seqs[s.species];
        for (i, c) in counts.iter_mut().enumerate().take(s.end + 1 - s.start) {
            let b: Base = match s.strand {
                Strand::Forward => seq[s.start + i],
                Strand::Reverse => complement(seq[s.end - i]),
            };
            if b < 4 {
                c[b as usize] += 1;
            }
        }
    }
    counts
}

/// `n [Σ_i Σ_j Θ̂_ij ln(Θ̂_ij / θ_j) + ln ρ] − 1.5 w ln(n + 3)`, with `0 ln 0 = 0`.
pub fn motif_score_from_counts(counts: &[[u64; 4]], n_sites: usize, background: &[f64; 4], rho: f64) -> MotifScore {
    let w = counts.len();
    let pwm: Vec<[f64; 4]> = counts
        .iter()
        .map(|c| {
            let t: u64 = c.iter().sum();
            if t == 0 {
                [0.25; 4]
            } else {
                c.map(|v| v as f64 / t as f64)
            }
        })
        .collect();
    let info: f64 = pwm
        .iter()
        .map(|col| {
            col.iter()
                .zip(background)
                .filter(|(&p, _)| p > 0.0)
                .map(|(&p, &b)| p * (p / b).ln())
                .sum::<f64>()
        })
        .sum();
    let n = n_sites as f64;
    MotifScore {
        score: n * (info + rho.ln()) - 1.5 * w as f64 * (n + 3.0).ln(),
        n_sites,
        width: w,
        pwm,
    }
}

/// Score motif `k` from its predicted sites.
pub fn motif_score(
    sites: &[PredictedSite],
    k: usize,
    width: usize,
    groups: &[OrthologGroup],
    background: &[f64; 4],
    rho: f64,
) -> MotifScore {
    let mine: Vec<&PredictedSite> = sites.iter().filter(|s| s.motif == k).collect();
    motif_score_from_counts(&site_counts(&mine, groups, width), mine.len(), background, rho)
}

fn reverse_complement(cols: &[[f64; 4]]) -> Vec<[f64; 4]> {
    cols.iter().rev().map(|c| [c[3], c[2], c[1], c[0]]).collect()
}

/// Minimum over strand and offset of a per-column cost summed over the
/// columns of the shorter matrix slid inside the longer one. Returns the
/// cost and the number of columns compared.
pub(crate) fn register(
    a: &[[f64; 4]],
    b: &[[f64; 4]],
    cost: impl Fn(&[f64; 4], &[f64; 4]) -> f64,
) -> (f64, usize) {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut best = f64::INFINITY;
    for cand in [short.to_vec(), reverse_complement(short)] {
        for off in 0..=(long.len() - short.len()) {
            let c: f64 = cand.iter().zip(&long[off..]).map(|(x, y)| cost(x, y)).sum();
            best = best.min(c);
        }
    }
    (best, short.len())
}

/// Mean per-column total variation after the best registration.
pub fn motif_distance(a: &[[f64; 4]], b: &[[f64; 4]]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 1.0;
    }
    let (c, n) = register(a, b, |x, y| x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum::<f64>() / 2.0);
    c / n as f64
}

/// Predictions of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub widths: Vec<usize>,
    pub sites: Vec<PredictedSite>,
    pub modules: Vec<PredictedModule>,
    pub motifs: Vec<MotifScore>,
}

/// Sites, modules and motif scores from a finished posterior.
pub fn predict(
    post: &PositionPosterior,
    widths: &[usize],
    groups: &[OrthologGroup],
    background: &[f64; 4],
    threshold: f64,
) -> Prediction {
    let sites = predict_sites(post, widths, threshold);
    let modules = predict_modules(post, &sites, threshold);
    let motifs = (0..widths.len())
        .map(|k| motif_score(&sites, k, widths[k], groups, background, SITE_PRIOR_ODDS))
        .collect();
    Prediction {
        widths: widths.to_vec(),
        sites,
        modules,
        motifs,
    }
}

/// A motif retained by the combined prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedMotif {
    pub run: usize,
    pub motif: usize,
    pub score: MotifScore,
}

/// Prediction pooled over independent runs.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedPrediction {
    pub posterior: PositionPosterior,
    /// Ranked by score; a site's `motif` indexes this list.
    pub motifs: Vec<CombinedMotif>,
    pub sites: Vec<PredictedSite>,
    pub modules: Vec<PredictedModule>,
}

/// Pool runs: average the marginals, keep the `k` best-scoring distinct
/// motifs with their sites, and call modules on the averaged `P_m`.
/// A single run is returned unchanged.
pub fn combined_prediction(
    runs: &[(&PositionPosterior, &Prediction)],
    k: usize,
    threshold: f64,
) -> Result<CombinedPrediction> {
    let Some(&(first, first_pred)) = runs.first() else {
        return Err(Error::InvalidParameter("no runs to combine".into()));
    };
    if runs.len() == 1 {
        return Ok(CombinedPrediction {
            posterior: first.clone(),
            motifs: first_pred
                .motifs
                .iter()
                .enumerate()
                .map(|(i, s)| CombinedMotif {
                    run: 0,
                    motif: i,
                    score: s.clone(),
                })
                .collect(),
            sites: first_pred.sites.clone(),
            modules: first_pred.modules.clone(),
        });
    }
    let mut posterior = first.clone();
    for (p, _) in &runs[1..] {
        posterior.merge(p)?;
    }
    let mut pool: Vec<CombinedMotif> = runs
        .iter()
        .enumerate()
        .flat_map(|(r, (_, pred))| {
            pred.motifs.iter().enumerate().map(move |(i, s)| CombinedMotif {
                run: r,
                motif: i,
                score: s.clone(),
            })
        })
        .filter(|c| c.score.n_sites > 0)
        .collect();
    pool.sort_by(|a, b| {
        b.score
            .score
            .total_cmp(&a.score.score)
            .then(a.run.cmp(&b.run))
            .then(a.motif.cmp(&b.motif))
    });
    let mut kept: Vec<CombinedMotif> = Vec::new();
    for c in pool {
        if kept.len() == k {
            break;
        }
        if kept
            .iter()
            .all(|o| motif_distance(&o.score.pwm, &c.score.pwm) > DUPLICATE_DISTANCE)
        {
            kept.push(c);
        }
    }
    let mut sites = Vec::new();
    for (rank, c) in kept.iter().enumerate() {
        sites.extend(
            runs[c.run]
                .1
                .sites
                .iter()
                .filter(|s| s.motif == c.motif)
                .map(|s| PredictedSite { motif: rank, ..s.clone() }),
        );
    }
    let modules = predict_modules(&posterior, &sites, threshold);
    Ok(CombinedPrediction {
        posterior,
        motifs: kept,
        sites,
        modules,
    })
}

/// Rescale a matrix of site frequencies into a [`Pwm`].
pub fn score_to_pwm(score: &MotifScore) -> Result<Pwm> {
    Pwm::from_weights(score.pwm.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::{AncestralSeq, BondSet, Segment, StatePath};
    use proptest::prelude::*;

    fn single(pm: Vec<f64>, pk: Vec<f64>) -> PositionPosterior {
        let n = pm.len();
        PositionPosterior::from_profiles(vec![vec![(pm, vec![0.0; n], vec![pk])]]).unwrap()
    }

    #[test]
    fn width_estimates() {
        // 0.053 / 0.891 / 0.056 at 7 / 8 / 9.
        let mut c = vec![0u64; 10];
        c[7] = 53;
        c[8] = 891;
        c[9] = 56;
        assert_eq!(estimate_width(&c, 6, 15).unwrap(), 8);
        assert_eq!(estimate_width(&[0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 4], 6, 15).unwrap(), 11);
        let mut half = vec![0u64; 9];
        half[7] = 5;
        half[8] = 5;
        assert_eq!(estimate_width(&half, 6, 15).unwrap(), 8);
        assert_eq!(estimate_width(&[0, 0, 9], 6, 15).unwrap(), 6);
        assert!(estimate_width(&[0; 4], 6, 15).is_err());
    }

    #[test]
    fn accumulate_counts_states() {
        let g = OrthologGroup::from_strs("g", &["ACGTAC", "ACGTAC"]);
        let path = AlignmentPath::from_rows(&["ACGTAC", "ACGTAC"]).unwrap();
        let mut post = PositionPosterior::new(std::slice::from_ref(&g), 1);
        let bg = Latent::all_background(&g, &path);
        post.accumulate(0, &bg, &path);
        post.finish_sample();
        assert!((0..6).all(|i| post.p_module(0, 0, i) == 0.0 && post.p_motif(0, 1, 0, i) == 0.0));
        assert!((0..6).all(|i| post.p_aligned(0, 0, i) == 1.0));
        let mut lat = bg.clone();
        let mut segs = vec![Segment {
            first: 1,
            last: 3,
            kind: SegmentKind::Motif {
                motif: 0,
                strand: Strand::Reverse,
            },
            before: 0,
            driver: 0,
        }];
        segs.extend((4..=6).map(|d| Segment {
            first: d,
            last: d,
            kind: SegmentKind::ModuleBackground,
            before: 3,
            driver: 0,
        }));
        lat.states = StatePath {
            initial: 0,
            segments: segs,
        };
        lat.ancestral = AncestralSeq(vec![Some(0); 6]);
        lat.bonds = BondSet(vec![0; 6]);
        post.accumulate(0, &lat, &path);
        post.finish_sample();
        assert_eq!(post.p_module(0, 1, 5), 0.5);
        assert_eq!(post.p_motif(0, 1, 0, 2), 0.5);
        assert_eq!(post.p_motif(0, 1, 0, 3), 0.0);
    }

    #[test]
    fn sites_from_runs() {
        let post = single(vec![0.0; 30], vec![0.0; 30]);
        assert!(predict_sites(&post, &[8], 0.5).is_empty());

        let mut pk = vec![0.0; 30];
        pk[10..18].iter_mut().for_each(|v| *v = 1.0);
        let post = single(vec![1.0; 30], pk);
        let s = predict_sites(&post, &[8], 0.5);
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].start, s[0].end), (10, 17));

        // Short run: window centred on it.
        let mut pk = vec![0.0; 30];
        pk[20..22].iter_mut().for_each(|v| *v = 0.9);
        let s = predict_sites(&single(vec![1.0; 30], pk), &[6], 0.5);
        assert_eq!((s[0].start, s[0].end), (18, 23));

        // Clipped at the sequence end.
        let mut pk = vec![0.0; 30];
        pk[28..30].iter_mut().for_each(|v| *v = 0.9);
        let s = predict_sites(&single(vec![1.0; 30], pk), &[6], 0.5);
        assert_eq!((s[0].start, s[0].end), (24, 29));
    }

    #[test]
    fn modules_need_two_sites() {
        let mut pk = vec![0.0; 60];
        pk[10..18].iter_mut().for_each(|v| *v = 1.0);
        let mut pm = vec![0.0; 60];
        pm[5..55].iter_mut().for_each(|v| *v = 1.0);
        let post = single(pm.clone(), pk.clone());
        let sites = predict_sites(&post, &[8], 0.5);
        assert!(predict_modules(&post, &sites, 0.5).is_empty());
        assert!(predict_modules(&post, &[], 0.5).is_empty());

        pk[40..50].iter_mut().for_each(|v| *v = 1.0);
        let post = single(pm, pk);
        let mut sites = predict_sites(&post, &[8], 0.5);
        sites[1].start = 40;
        sites[1].end = 49;
        let mods = predict_modules(&post, &sites, 0.5);
        assert_eq!(mods.len(), 1);
        assert_eq!((mods[0].start, mods[0].end), (10, 49));
        assert_eq!(mods[0].sites, vec![0, 1]);
    }

    #[test]
    fn score_examples() {
        let bg = [0.25; 4];
        let empty = motif_score_from_counts(&[[0; 4]; 8], 0, &bg, SITE_PRIOR_ODDS);
        assert!((empty.score - (-1.5 * 8.0 * 3f64.ln())).abs() < 1e-12);
        assert!((empty.score + 13.183347464017316).abs() < 1e-9);

        let conserved: Vec<[u64; 4]> = (0..8).map(|i| {
            let mut c = [0; 4];
            c[i % 4] = 10;
            c
        }).collect();
        let s = motif_score_from_counts(&conserved, 10, &bg, SITE_PRIOR_ODDS);
        let want = 10.0 * (8.0 * 4f64.ln() - 500f64.ln()) - 12.0 * 13f64.ln();
        assert!((s.score - want).abs() < 1e-9);
        assert!((s.score - 17.98).abs() < 0.01);

        let flat = motif_score_from_counts(&[[5, 5, 5, 5]; 8], 20, &bg, SITE_PRIOR_ODDS);
        assert!((flat.score - (20.0 * SITE_PRIOR_ODDS.ln() - 12.0 * 23f64.ln())).abs() < 1e-9);
        assert!(flat.score < 0.0);
    }

    #[test]
    fn score_counts_orient_reverse_sites() {
        let g = OrthologGroup::from_strs("g", &["AACGTT"]);
        let site = PredictedSite {
            gene: 0,
            species: 0,
            motif: 0,
            start: 0,
            end: 2,
            strand: Strand::Reverse,
            mean_aligned: 0.0,
        };
        // Reverse complement of AAC is GTT.
        let c = site_counts(&[&site], std::slice::from_ref(&g), 3);
        assert_eq!(c, vec![[0, 0, 1, 0], [0, 0, 0, 1], [0, 0, 0, 1]]);
    }

    #[test]
    fn motif_distance_registers() {
        let a = vec![[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]];
        assert_eq!(motif_distance(&a, &a), 0.0);
        assert_eq!(motif_distance(&a, &reverse_complement(&a)), 0.0);
        let mut longer = vec![[0.25; 4]];
        longer.extend(a.iter().copied());
        assert_eq!(motif_distance(&a, &longer), 0.0);
        let b = vec![[0.0, 0.0, 0.0, 1.0]; 3];
        assert!(motif_distance(&a, &b) > DUPLICATE_DISTANCE);
    }

    fn run_with(pk_start: usize, score: f64) -> (PositionPosterior, Prediction) {
        let mut pk = vec![0.0; 40];
        pk[pk_start..pk_start + 4].iter_mut().for_each(|v| *v = 1.0);
        let post = single(vec![1.0; 40], pk);
        let mut pred = predict(&post, &[4], &[OrthologGroup::from_strs("g", &[&"ACGT".repeat(10)])], &[0.25; 4], 0.5);
        pred.motifs[0].score = score;
        (post, pred)
    }

    #[test]
    fn single_run_combines_to_itself() {
        let (post, pred) = run_with(4, 1.0);
        let c = combined_prediction(&[(&post, &pred)], 3, 0.5).unwrap();
        assert_eq!(c.sites, pred.sites);
        assert_eq!(c.modules, pred.modules);
        assert_eq!(c.motifs.len(), pred.motifs.len());
    }

    #[test]
    fn duplicate_motifs_collapse_to_the_best() {
        let (p1, r1) = run_with(4, 1.0);
        let (p2, r2) = run_with(8, 2.0);
        let c = combined_prediction(&[(&p1, &r1), (&p2, &r2)], 3, 0.5).unwrap();
        assert_eq!(c.motifs.len(), 1);
        assert_eq!(c.motifs[0].run, 1);
        assert!(c.sites.iter().all(|s| s.start == 8));
        for i in 0..40 {
            let p = c.posterior.p_module(0, 0, i);
            assert!((0.0..=1.0).contains(&p));
        }
    }

    /// A single symmetric bump of height `h` centred at `c` with half-width `r`.
    fn bump(len: usize, c: usize, r: usize, h: f64) -> Vec<f64> {
        (0..len)
            .map(|i| {
                let d = i.abs_diff(c);
                if d > r {
                    0.0
                } else {
                    h * (1.0 - d as f64 / (r + 1) as f64)
                }
            })
            .collect()
    }

    proptest! {
        #[test]
        fn marginals_stay_ordered(steps in proptest::collection::vec(0usize..4, 1..40)) {
            // Random tilings of a single sequence.
            let seq: String = steps.iter().map(|&s| ['A', 'C', 'G', 'T'][s]).collect();
            let g = OrthologGroup::from_strs("g", &[&seq]);
            let path = AlignmentPath::from_rows(&[&seq]).unwrap();
            let mut post = PositionPosterior::new(std::slice::from_ref(&g), 2);
            let mut d = 1;
            let mut segs = Vec::new();
            for (i, &s) in steps.iter().enumerate() {
                if d > path.len() { break; }
                let kind = match s {
                    0 => SegmentKind::Background,
                    1 => SegmentKind::ModuleBackground,
                    _ => SegmentKind::Motif { motif: s - 2, strand: if i % 2 == 0 { Strand::Forward } else { Strand::Reverse } },
                };
                let w = if matches!(kind, SegmentKind::Motif { .. }) { 2.min(path.len() + 1 - d) } else { 1 };
                segs.push(Segment { first: d, last: d + w - 1, kind, before: 0, driver: 0 });
                d += w;
            }
            while d <= path.len() {
                segs.push(Segment { first: d, last: d, kind: SegmentKind::Background, before: 0, driver: 0 });
                d += 1;
            }
            let mut lat = Latent::all_background(&g, &path);
            lat.states.segments = segs;
            post.accumulate(0, &lat, &path);
            post.finish_sample();
            post.accumulate(0, &Latent::all_background(&g, &path), &path);
            post.finish_sample();
            for i in 0..seq.len() {
                let pm = post.p_module(0, 0, i);
                let sum = post.p_motif(0, 0, 0, i) + post.p_motif(0, 0, 1, i);
                prop_assert!((0.0..=1.0).contains(&pm));
                prop_assert!(sum <= pm + 1e-12);
            }
        }

        #[test]
        fn higher_thresholds_never_add_predictions(
            bumps in proptest::collection::vec((5usize..95, 1usize..8, 0.3f64..1.0), 0..6),
            module in (20usize..80, 5usize..40, 0.3f64..1.0),
            lo in 0.3f64..0.6,
            step in 0.0f64..0.3,
        ) {
            // Separate symmetric peaks, so each run above any cutoff is centred on its peak.
            let separated = bumps.iter().enumerate().all(|(i, a)| {
                bumps[..i].iter().all(|b| a.0.abs_diff(b.0) > a.1 + b.1 + 1)
            });
            prop_assume!(separated);
            let len = 100;
            let mut pk = vec![0.0; len];
            for &(c, r, h) in &bumps {
                for (x, y) in pk.iter_mut().zip(bump(len, c, r, h)) {
                    *x += y;
                }
            }
            let post = single(bump(len, module.0, module.1, module.2), pk);
            let hi = lo + step;
            let s_lo = predict_sites(&post, &[6], lo);
            let s_hi = predict_sites(&post, &[6], hi);
            prop_assert!(s_hi.len() <= s_lo.len());
            let bases = |s: &[PredictedSite], t: f64| -> usize {
                predict_modules(&post, s, t).iter().map(|m| m.end + 1 - m.start).sum()
            };
            prop_assert!(bases(&s_hi, hi) <= bases(&s_lo, lo));
        }
    }
}
