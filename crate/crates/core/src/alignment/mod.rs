//! Multiple alignments as lattice paths, and the pair-HMM machinery used to
//! build and resample them.
//!
//! Every sequence is aligned to a template: the first non-empty sequence of
//! the group. Pairwise alignments are merged through template coordinates,
//! so a multiple alignment is determined by its N - 1 template relations.

pub mod pair;
pub mod path;

use rand::Rng;

use crate::data::OrthologGroup;
use crate::dp::{emission_background_aligned, forward, likelihood, ForwardTable};
use crate::error::Result;
use crate::math::ln;
use crate::model::{BackgroundModels, BackgroundSubstitution, ModelParams};

pub use pair::{AlignerConfig, Band, PairOp};
pub use path::{mask_len, mask_members, AlignmentPath, SpeciesMask, MAX_SPECIES};

use pair::{
    ops_from_matches, pair_forward, pair_path_log_prob, pair_sample, pair_viterbi, PairScorer,
};

/// Species whose sequence serves as the alignment template.
pub fn template_species(group: &OrthologGroup) -> Option<usize> {
    group.seqs.iter().position(|s| !s.is_empty())
}

/// Merge per-species template relations into one path. `ops[m]` is ignored
/// for the template itself and for empty sequences.
fn star_merge(group: &OrthologGroup, template: usize, ops: &[Vec<PairOp>]) -> Result<AlignmentPath> {
    let n = group.n_species();
    let lt = group.seqs[template].len();
    // partner[m][i]: whether species m is aligned to template position i + 1.
    // inserts[m][i]: number of species-m bases between template positions i and i + 1.
    let mut partner = vec![vec![false; lt]; n];
    let mut inserts = vec![vec![0usize; lt + 1]; n];
    for m in 0..n {
        if m == template {
            continue;
        }
        let mut i = 0;
        for &op in &ops[m] {
            match op {
                PairOp::Aligned => {
                    partner[m][i] = true;
                    i += 1;
                }
                PairOp::Deletion => i += 1,
                PairOp::Insertion => inserts[m][i] += 1,
            }
        }
    }
    let mut columns = Vec::with_capacity(group.lengths().iter().sum());
    for i in 0..=lt {
        for (m, ins) in inserts.iter().enumerate() {
            columns.extend(std::iter::repeat_n(1 << m, ins[i]));
        }
        if i < lt {
            let mut mask: SpeciesMask = 1 << template;
            for (m, p) in partner.iter().enumerate() {
                if m != template && p[i] {
                    mask |= 1 << m;
                }
            }
            columns.push(mask);
        }
    }
    AlignmentPath::build(&group.lengths(), &columns)
}

/// Canonical template relation of species `m` in a path.
fn relation_ops(path: &AlignmentPath, template: usize, m: usize) -> Vec<PairOp> {
    let matches: Vec<(usize, usize)> = (1..=path.len())
        .filter_map(|d| {
            let e = path.ec(d);
            (e & (1 << template) != 0 && e & (1 << m) != 0).then(|| {
                let c = path.coords(d);
                (c[template], c[m])
            })
        })
        .collect();
    let l = path.lengths();
    ops_from_matches(&matches, l[template], l[m])
}

fn scorer(
    cfg: &AlignerConfig,
    backgrounds: &BackgroundModels,
    subst: &BackgroundSubstitution,
    template: usize,
    m: usize,
) -> PairScorer {
    PairScorer::new(cfg, backgrounds, subst, template, m)
}

/// Deterministic starting alignment: each sequence Viterbi-aligned to the
/// template over the full lattice, then merged.
pub fn initial_alignment(
    group: &OrthologGroup,
    cfg: &AlignerConfig,
    backgrounds: &BackgroundModels,
    subst: &BackgroundSubstitution,
) -> Result<AlignmentPath> {
    let Some(t) = template_species(group) else {
        return AlignmentPath::build(&group.lengths(), &[]);
    };
    let ops: Vec<Vec<PairOp>> = (0..group.n_species())
        .map(|m| {
            if m == t {
                Vec::new()
            } else {
                let sc = scorer(cfg, backgrounds, subst, t, m);
                pair_viterbi(&group.seqs[t], &group.seqs[m], &sc)
            }
        })
        .collect();
    star_merge(group, t, &ops)
}

/// Log-probability of the sequences given the alignment, with each aligned
/// column's ancestor summed out and unaligned bases scored by their species
/// background.
pub fn proposal_log_prob(
    path: &AlignmentPath,
    group: &OrthologGroup,
    backgrounds: &BackgroundModels,
    subst: &BackgroundSubstitution,
) -> f64 {
    let mut total = 0.0;
    let mut bases = Vec::with_capacity(group.n_species());
    for d in 1..=path.len() {
        bases.clear();
        bases.extend(mask_members(path.ec(d)).map(|m| group.seqs[m][path.position(d, m).unwrap()]));
        total += if bases.len() >= 2 {
            ln(emission_background_aligned(&bases, backgrounds, subst))
        } else {
            let m = path.ec(d).trailing_zeros() as usize;
            ln(backgrounds.species_prob(m, bases[0]))
        };
    }
    total
}

/// Log prior of an alignment: the product of the pair-HMM transition
/// probabilities of every template relation.
pub fn alignment_prior_log_prob(path: &AlignmentPath, group: &OrthologGroup, cfg: &AlignerConfig) -> f64 {
    let Some(t) = template_species(group) else {
        return 0.0;
    };
    let lt = cfg.transitions.map(|row| row.map(ln));
    (0..group.n_species())
        .filter(|&m| m != t)
        .map(|m| {
            let mut prev = PairOp::Aligned;
            relation_ops(path, t, m)
                .into_iter()
                .map(|op| {
                    let v = lt[prev as usize][op as usize];
                    prev = op;
                    v
                })
                .sum::<f64>()
        })
        .sum()
}

/// Template choice and per-species bands of one group, fixed for the run so
/// that forward and reverse proposal densities refer to the same kernel.
#[derive(Debug, Clone)]
pub struct ProposalFrame {
    template: Option<usize>,
    bands: Vec<Option<Band>>,
}

impl ProposalFrame {
    pub fn new(group: &OrthologGroup, reference: &AlignmentPath, cfg: &AlignerConfig) -> Self {
        let template = template_species(group);
        let bands = (0..group.n_species())
            .map(|m| match (template, cfg.band) {
                (Some(t), Some(width)) if t != m => {
                    let ops = relation_ops(reference, t, m);
                    Some(Band::around(&ops, group.seqs[t].len(), group.seqs[m].len(), width))
                }
                _ => None,
            })
            .collect();
        ProposalFrame { template, bands }
    }

    /// Whether more than one alignment is possible at all.
    fn is_trivial(&self, group: &OrthologGroup) -> bool {
        match self.template {
            None => true,
            Some(t) => (0..group.n_species()).all(|m| m == t || group.seqs[m].is_empty()),
        }
    }
}

/// A proposed alignment with the proposal log-densities of it and of the
/// alignment it would replace.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub path: AlignmentPath,
    pub log_forward: f64,
    pub log_reverse: f64,
}

/// Sample a new alignment by stochastic traceback of every template pair.
pub fn propose_alignment<R: Rng + ?Sized>(
    current: &AlignmentPath,
    group: &OrthologGroup,
    frame: &ProposalFrame,
    cfg: &AlignerConfig,
    backgrounds: &BackgroundModels,
    subst: &BackgroundSubstitution,
    rng: &mut R,
) -> Result<Proposal> {
    if frame.is_trivial(group) {
        return Ok(Proposal {
            path: current.clone(),
            log_forward: 0.0,
            log_reverse: 0.0,
        });
    }
    let t = frame.template.expect("nontrivial frame has a template");
    let n = group.n_species();
    let mut ops = vec![Vec::new(); n];
    let (mut log_forward, mut log_reverse) = (0.0, 0.0);
    for m in 0..n {
        if m == t {
            continue;
        }
        let (tseq, mseq) = (&group.seqs[t], &group.seqs[m]);
        let sc = scorer(cfg, backgrounds, subst, t, m);
        let full;
        let band = match &frame.bands[m] {
            Some(b) => b,
            None => {
                full = Band::full(tseq.len(), mseq.len());
                &full
            }
        };
        let fw = pair_forward(tseq, mseq, &sc, band);
        let new_ops = pair_sample(&fw, &sc, rng);
        let (a, b) = pair_path_log_prob(&new_ops, tseq, mseq, &sc, Some(band));
        log_forward += a + b - fw.log_total;
        let cur_ops = relation_ops(current, t, m);
        let (a, b) = pair_path_log_prob(&cur_ops, tseq, mseq, &sc, Some(band));
        log_reverse += a + b - fw.log_total;
        ops[m] = new_ops;
    }
    Ok(Proposal {
        path: star_merge(group, t, &ops)?,
        log_forward,
        log_reverse,
    })
}

/// Outcome of one alignment update, with the forward table of the kept path.
#[derive(Debug, Clone)]
pub struct AlignmentStep {
    pub path: AlignmentPath,
    pub table: ForwardTable,
    pub accepted: bool,
}

/// Metropolis–Hastings update of the alignment, targeting
/// `P(S | A, Ψ) P_D(A)`.
#[allow(clippy::too_many_arguments)]
pub fn mh_alignment_step<R: Rng + ?Sized>(
    current: &AlignmentPath,
    current_table: Option<ForwardTable>,
    params: &ModelParams,
    group: &OrthologGroup,
    frame: &ProposalFrame,
    cfg: &AlignerConfig,
    rng: &mut R,
) -> Result<AlignmentStep> {
    let cur_table = match current_table {
        Some(t) => t,
        None => forward(group, current, params)?,
    };
    let prop = propose_alignment(
        current,
        group,
        frame,
        cfg,
        &params.backgrounds,
        &params.subst,
        rng,
    )?;
    if prop.path == *current {
        return Ok(AlignmentStep {
            path: prop.path,
            table: cur_table,
            accepted: true,
        });
    }
    let new_table = forward(group, &prop.path, params)?;
    let log_ratio = likelihood(&new_table) - likelihood(&cur_table)
        + alignment_prior_log_prob(&prop.path, group, cfg)
        - alignment_prior_log_prob(current, group, cfg)
        + prop.log_reverse
        - prop.log_forward;
    let accept = log_ratio >= 0.0 || rng.random::<f64>() < log_ratio.exp();
    Ok(if accept {
        AlignmentStep {
            path: prop.path,
            table: new_table,
            accepted: true,
        }
    } else {
        AlignmentStep {
            path: current.clone(),
            table: cur_table,
            accepted: false,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EmissionMix, MotifEvolution, Pwm, StrandMode, TransitionMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn subst() -> BackgroundSubstitution {
        BackgroundSubstitution::new(0.06, 0.02).unwrap()
    }

    #[test]
    fn single_species_alignment_is_trivial() {
        let g = OrthologGroup::from_strs("g", &["ACGTA"]);
        let p = initial_alignment(&g, &AlignerConfig::default(), &BackgroundModels::uniform(1), &subst())
            .unwrap();
        assert_eq!(p.len(), 5);
        assert!((1..=5).all(|d| !p.is_aligned(d)));
    }

    #[test]
    fn identical_sequences_align_fully() {
        let g = OrthologGroup::from_strs("g", &["ACGTAC", "ACGTAC", "ACGTAC"]);
        let p = initial_alignment(&g, &AlignerConfig::default(), &BackgroundModels::uniform(3), &subst())
            .unwrap();
        assert_eq!(p.len(), 6);
        assert!((1..=6).all(|d| mask_len(p.ec(d)) == 3));
    }

    #[test]
    fn missing_ortholog_never_advances() {
        let g = OrthologGroup::from_strs("g", &["", "ACGT", "ACT"]);
        let p = initial_alignment(&g, &AlignerConfig::default(), &BackgroundModels::uniform(3), &subst())
            .unwrap();
        assert!((0..=p.len()).all(|d| p.coords(d)[0] == 0));
        assert_eq!(p.coords(p.len()), &[0, 4, 3]);
    }

    #[test]
    fn proposal_log_prob_examples() {
        let bg = BackgroundModels::uniform(2);
        let g = OrthologGroup::from_strs("g", &["AC", "G"]);
        let un = AlignmentPath::unaligned(&[2, 1]).unwrap();
        assert!((proposal_log_prob(&un, &g, &bg, &subst()) - 3.0 * 0.25f64.ln()).abs() < 1e-12);

        let g = OrthologGroup::from_strs("g", &["A", "A"]);
        let al = AlignmentPath::from_rows(&["A", "A"]).unwrap();
        assert!((proposal_log_prob(&al, &g, &bg, &subst()) - 0.2036f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn relations_round_trip_through_the_merge() {
        let g = OrthologGroup::from_strs("g", &["ACGTAC", "AGTTAC", "ACC"]);
        let p = AlignmentPath::from_rows(&["ACGT--AC", "A-GTTA-C", "AC----C-"]).unwrap();
        let rel = |p: &AlignmentPath| -> Vec<Vec<PairOp>> { (0..3).map(|m| relation_ops(p, 0, m)).collect() };
        let merged = star_merge(&g, 0, &rel(&p)).unwrap();
        // Same template relations, and merging is idempotent.
        assert_eq!(rel(&merged), rel(&p));
        assert_eq!(star_merge(&g, 0, &rel(&merged)).unwrap(), merged);
    }

    #[test]
    fn degenerate_aligner_proposes_full_alignment() {
        let mut cfg = AlignerConfig::unbanded();
        cfg.transitions[2] = [0.0, 0.0, 1.0];
        let g = OrthologGroup::from_strs("g", &["ACGTA", "ACGTA"]);
        let bg = BackgroundModels::uniform(2);
        let cur = AlignmentPath::unaligned(&[5, 5]).unwrap();
        let frame = ProposalFrame::new(&g, &cur, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let prop = propose_alignment(&cur, &g, &frame, &cfg, &bg, &subst(), &mut rng).unwrap();
            assert!((1..=prop.path.len()).all(|d| prop.path.is_aligned(d)));
        }
    }

    #[test]
    fn proposal_densities_are_normalized() {
        // Every alignment of 2 x length-3 sequences, weighted by its proposal density.
        let g = OrthologGroup::from_strs("g", &["ACG", "AGG"]);
        let bg = BackgroundModels::uniform(2);
        let cfg = AlignerConfig::unbanded();
        let cur = AlignmentPath::unaligned(&[3, 3]).unwrap();
        let frame = ProposalFrame::new(&g, &cur, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut seen: HashMap<Vec<SpeciesMask>, f64> = HashMap::new();
        for _ in 0..5000 {
            let prop = propose_alignment(&cur, &g, &frame, &cfg, &bg, &subst(), &mut rng).unwrap();
            seen.insert(prop.path.columns().to_vec(), prop.log_forward.exp());
        }
        let total: f64 = seen.values().sum();
        assert!(total <= 1.0 + 1e-9 && total > 0.99, "total = {total}");
    }

    #[test]
    fn identical_proposal_is_always_accepted() {
        let mut cfg = AlignerConfig::unbanded();
        cfg.transitions[2] = [0.0, 0.0, 1.0];
        let g = OrthologGroup::from_strs("g", &["ACGTA", "ACGTA"]);
        let params = ModelParams {
            transition: TransitionMatrix::new(0.1, 0.1).unwrap(),
            mix: EmissionMix::uniform(1),
            pwms: vec![Pwm::uniform(2)],
            backgrounds: BackgroundModels::uniform(2),
            subst: subst(),
            motif_evo: MotifEvolution::new(0.5).unwrap(),
            strands: StrandMode::Both,
        };
        let cur = AlignmentPath::from_rows(&["ACGTA", "ACGTA"]).unwrap();
        let frame = ProposalFrame::new(&g, &cur, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let step = mh_alignment_step(&cur, None, &params, &g, &frame, &cfg, &mut rng).unwrap();
            assert!(step.accepted);
            assert_eq!(step.path, cur);
        }
    }
}
