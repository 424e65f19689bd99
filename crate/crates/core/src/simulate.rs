//! Synthetic ortholog groups with planted modules and known answers.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Geometric};

use crate::data::{Dataset, OrthologGroup};
use crate::dp::Strand;
use crate::error::{Error, Result};
use crate::math::sample_categorical;
use crate::model::{complement, BackgroundSubstitution, Base, Pwm};

/// Simulation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_genes: usize,
    pub ancestor_length: usize,
    pub n_modules: usize,
    pub module_length: usize,
    /// Each module holds one site of every matrix.
    pub pwms: Vec<Pwm>,
    pub n_species: usize,
    pub mu_b: f64,
    pub mu_f: f64,
    pub indel_rate: f64,
}

impl SimConfig {
    /// Twenty 1 kb ancestors, one 100 bp module each, three descendants,
    /// `μ_f = μ_b / 5` and indel rate `μ_b / 10`, with the stand-in matrices.
    pub fn with_rate(mu_b: f64) -> Self {
        SimConfig {
            n_genes: 20,
            ancestor_length: 1000,
            n_modules: 20,
            module_length: 100,
            pwms: standin_pwms().into_iter().map(|(_, p)| p).collect(),
            n_species: 3,
            mu_b,
            mu_f: 0.2 * mu_b,
            indel_rate: 0.1 * mu_b,
        }
    }

    /// `α = 3β` with `α + 2β = μ_b`.
    pub fn substitution(&self) -> Result<BackgroundSubstitution> {
        BackgroundSubstitution::from_rate(self.mu_b)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [("mu_b", self.mu_b), ("mu_f", self.mu_f), ("indel rate", self.indel_rate)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        if self.n_genes == 0 || self.n_species == 0 {
            return bad("need at least one gene and one species".into());
        }
        if self.n_species > crate::alignment::MAX_SPECIES {
            return bad(format!("at most {} species are supported", crate::alignment::MAX_SPECIES));
        }
        let total: usize = self.pwms.iter().map(Pwm::width).sum();
        if total > self.module_length {
            return bad(format!("sites need {total} bp but modules are {} bp", self.module_length));
        }
        if self.module_length > self.ancestor_length {
            return bad("modules are longer than the ancestors".into());
        }
        Ok(())
    }
}

/// Matrices of widths 8, 7 and 10 in the spirit of Oct4, Sox2 and Nanog.
/// They are illustrative stand-ins, not the canonical matrices of those factors.
pub fn standin_pwms() -> Vec<(String, Pwm)> {
    // Upper case: strong column; lower case: weaker preference.
    let build = |s: &str| {
        Pwm::new(
            s.bytes()
                .map(|c| {
                    let (main, other) = if c.is_ascii_uppercase() { (0.85, 0.05) } else { (0.55, 0.15) };
                    let b = crate::model::encode_base(c).expect("consensus letter") as usize;
                    let mut col = [other; 4];
                    col[b] = main;
                    col
                })
                .collect(),
        )
        .expect("valid columns")
    };
    vec![
        ("oct4_like".to_string(), build("ATGCAAAT")),
        ("sox2_like".to_string(), build("CATTGTt")),
        ("nanog_like".to_string(), build("TAATGGgcCA")),
    ]
}

/// A planted site; coordinates are 0-based inclusive in the descendant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrueSite {
    pub gene: usize,
    pub species: usize,
    pub motif: usize,
    pub start: usize,
    pub end: usize,
    pub strand: Strand,
}

/// A planted module, spanning its first to last site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrueModule {
    pub gene: usize,
    pub species: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroundTruth {
    pub sites: Vec<TrueSite>,
    pub modules: Vec<TrueModule>,
}

struct AncestralSite {
    motif: usize,
    start: usize,
    strand: Strand,
    module: usize,
}

/// Random non-overlapping start positions for `n` intervals of `len` in `0..space`.
fn place_modules<R: Rng + ?Sized>(space: usize, len: usize, n: usize, rng: &mut R) -> Option<Vec<usize>> {
    // Choose the gaps: n + 1 non-negative parts summing to the free space.
    let free = space.checked_sub(n * len)?;
    Some(spread(free, n, rng).into_iter().enumerate().map(|(i, g)| g + i * len).collect())
}

/// `n` sorted cut points in `0..=free`, as offsets of the items.
fn spread<R: Rng + ?Sized>(free: usize, n: usize, rng: &mut R) -> Vec<usize> {
    let mut cuts: Vec<usize> = (0..n).map(|_| rng.random_range(0..=free)).collect();
    cuts.sort_unstable();
    cuts
}

fn draw_base<R: Rng + ?Sized>(col: &[f64; 4], rng: &mut R) -> Base {
    sample_categorical(col, rng) as Base
}

/// Distribution of the base at offset `i` of a site, read on the forward strand.
fn oriented_column(pwm: &Pwm, strand: Strand, i: usize) -> [f64; 4] {
    match strand {
        Strand::Forward => *pwm.column(i),
        Strand::Reverse => {
            let c = pwm.column(pwm.width() - 1 - i);
            [c[3], c[2], c[1], c[0]]
        }
    }
}

/// Generate the descendants of every ancestor and the planted answers.
pub fn simulate_dataset<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<(Dataset, GroundTruth)> {
    cfg.validate()?;
    let subst = cfg.substitution()?;
    let phi = crate::model::substitution_matrix(&subst)?;
    let widths: Vec<usize> = cfg.pwms.iter().map(Pwm::width).collect();
    let species: Vec<String> = (1..=cfg.n_species).map(|m| format!("sp{m}")).collect();

    // Modules per gene, round robin.
    let mut per_gene = vec![0usize; cfg.n_genes];
    for i in 0..cfg.n_modules {
        per_gene[i % cfg.n_genes] += 1;
    }
    let geometric = Geometric::new(0.5).expect("valid probability");
    let mut groups = Vec::with_capacity(cfg.n_genes);
    let mut truth = GroundTruth::default();
    let mut module_id = 0;
    for (gene, &n_mod) in per_gene.iter().enumerate() {
        let mut ancestor: Vec<Base> = (0..cfg.ancestor_length).map(|_| rng.random_range(0..4u8)).collect();
        let starts = place_modules(cfg.ancestor_length, cfg.module_length, n_mod, rng)
            .ok_or(Error::Placement(module_id))?;
        // Which ancestral positions are motif bases, and the column behind them.
        let mut column_at: Vec<Option<[f64; 4]>> = vec![None; cfg.ancestor_length];
        let mut sites = Vec::new();
        for (mi, &ms) in starts.iter().enumerate() {
            let mut order: Vec<usize> = (0..cfg.pwms.len()).collect();
            order.shuffle(rng);
            let free = cfg.module_length - widths.iter().sum::<usize>();
            let gaps = spread(free, order.len(), rng);
            let mut offset = ms;
            let mut prev_gap = 0;
            for (&k, &g) in order.iter().zip(&gaps) {
                offset += g - prev_gap;
                prev_gap = g;
                let strand = if rng.random::<bool>() { Strand::Forward } else { Strand::Reverse };
                for i in 0..widths[k] {
                    let col = oriented_column(&cfg.pwms[k], strand, i);
                    ancestor[offset + i] = draw_base(&col, rng);
                    column_at[offset + i] = Some(col);
                }
                sites.push(AncestralSite {
                    motif: k,
                    start: offset,
                    strand,
                    module: mi,
                });
                offset += widths[k];
            }
        }
        let mut in_site = vec![false; cfg.ancestor_length];
        for s in &sites {
            in_site[s.start..s.start + widths[s.motif]].iter_mut().for_each(|v| *v = true);
        }

        let mut seqs = Vec::with_capacity(cfg.n_species);
        for m in 0..cfg.n_species {
            let mut out = Vec::with_capacity(cfg.ancestor_length + 32);
            let mut map: Vec<Option<usize>> = vec![None; cfg.ancestor_length];
            let mut deleting = 0usize;
            for p in 0..cfg.ancestor_length {
                if deleting == 0 && rng.random::<f64>() < cfg.indel_rate {
                    let len = 1 + geometric.sample(rng) as usize;
                    if rng.random::<bool>() {
                        let end = (p + len).min(cfg.ancestor_length);
                        if !in_site[p..end].iter().any(|&v| v) {
                            deleting = end - p;
                        }
                    } else if !(p > 0 && in_site[p - 1] && in_site[p]) {
                        // Insertion before p, never between two site bases.
                        out.extend((0..len).map(|_| rng.random_range(0..4u8)));
                    }
                }
                if deleting > 0 {
                    deleting -= 1;
                    continue;
                }
                let z = ancestor[p];
                let x = match column_at[p] {
                    Some(col) => {
                        if rng.random::<f64>() < cfg.mu_f {
                            draw_base(&col, rng)
                        } else {
                            z
                        }
                    }
                    None => draw_base(&phi[z as usize], rng),
                };
                map[p] = Some(out.len());
                out.push(x);
            }
            let first_site = truth.sites.len();
            for s in &sites {
                let w = widths[s.motif];
                let (Some(a), Some(b)) = (map[s.start], map[s.start + w - 1]) else {
                    unreachable!("sites are never deleted");
                };
                debug_assert_eq!(b + 1 - a, w);
                truth.sites.push(TrueSite {
                    gene,
                    species: m,
                    motif: s.motif,
                    start: a,
                    end: b,
                    strand: s.strand,
                });
            }
            for mi in 0..starts.len() {
                let mine: Vec<&TrueSite> = sites
                    .iter()
                    .zip(&truth.sites[first_site..])
                    .filter(|(s, _)| s.module == mi)
                    .map(|(_, t)| t)
                    .collect();
                truth.modules.push(TrueModule {
                    gene,
                    species: m,
                    start: mine.iter().map(|t| t.start).min().unwrap_or(0),
                    end: mine.iter().map(|t| t.end).max().unwrap_or(0),
                });
            }
            seqs.push(out);
        }
        module_id += n_mod;
        groups.push(OrthologGroup::new(format!("gene{:02}", gene + 1), seqs)?);
    }
    Ok((Dataset::new(species, groups)?, truth))
}

/// Bases of a site in the orientation of its matrix.
pub fn site_bases(seq: &[Base], site: &TrueSite) -> Vec<Base> {
    let raw = &seq[site.start..=site.end];
    match site.strand {
        Strand::Forward => raw.to_vec(),
        Strand::Reverse => raw.iter().rev().map(|&b| complement(b)).collect(),
    }
}
