//! Exhaustive enumeration of hidden configurations, for testing the
//! dynamic programme on tiny instances.
//!
//! Everything here is computed directly from the model definition: hidden
//! states are enumerated unit by unit, transitions use the parent average,
//! and ancestral bases and bonds are summed or listed explicitly. Reverse
//! strand sites read the PWM backwards on complemented bases.

use crate::alignment::path::{mask_members, AlignmentPath, SpeciesMask};
use crate::data::OrthologGroup;
use crate::error::{Error, Result};
use crate::model::{
    complement, multi_parent_transition, Base, Coarse, ModelParams, StrandMode,
};

use super::{Latent, SegmentKind, Strand};

/// Default cap on the number of enumerated configurations.
pub const MAX_CONFIGS: u64 = 10_000_000;

/// One complete hidden configuration.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OracleConfig {
    pub initial: SpeciesMask,
    pub units: Vec<(usize, usize, SegmentKind)>,
    pub ancestral: Vec<Option<Base>>,
    pub bonds: Vec<SpeciesMask>,
}

impl From<&Latent> for OracleConfig {
    fn from(l: &Latent) -> Self {
        OracleConfig {
            initial: l.states.initial,
            units: l
                .states
                .segments
                .iter()
                .map(|s| (s.first, s.last, s.kind))
                .collect(),
            ancestral: l.ancestral.0.clone(),
            bonds: l.bonds.0.clone(),
        }
    }
}

/// Ancestral bases and bonds of one unit with their joint probability.
struct UnitDraw {
    ancestral: Vec<Option<Base>>,
    bonds: Vec<SpeciesMask>,
    prob: f64,
}

struct Unit {
    last: usize,
    kind: SegmentKind,
    weight: f64,
    draws: Vec<UnitDraw>,
    total: f64,
}

struct Enumerator<'a> {
    path: &'a AlignmentPath,
    params: &'a ModelParams,
    units: Vec<Vec<Unit>>,
    n: usize,
}

fn bases_at(group: &OrthologGroup, path: &AlignmentPath, d: usize) -> Vec<(usize, Base)> {
    mask_members(path.ec(d))
        .map(|m| (m, group.seqs[m][path.position(d, m).unwrap()]))
        .collect()
}

/// Background unit at step `d`: explicit sum over the ancestral base.
fn background_draws(group: &OrthologGroup, path: &AlignmentPath, params: &ModelParams, d: usize) -> Vec<UnitDraw> {
    let xs = bases_at(group, path, d);
    if xs.len() == 1 {
        let (m, x) = xs[0];
        let p = if x < 4 { params.backgrounds.per_species[m][x as usize] } else { 1.0 };
        return vec![UnitDraw {
            ancestral: vec![None],
            bonds: vec![0],
            prob: p,
        }];
    }
    (0..4u8)
        .map(|z| {
            let mut p = params.backgrounds.ancestral[z as usize];
            for &(_, x) in &xs {
                if x < 4 {
                    p *= params.subst.prob(z, x);
                }
            }
            UnitDraw {
                ancestral: vec![Some(z)],
                bonds: vec![0],
                prob: p,
            }
        })
        .collect()
}

/// All (ancestral, bond) draws of one motif column, in site orientation.
fn motif_column_draws(
    xs: &[(usize, Base)],
    col: &[f64; 4],
    reverse: bool,
    mu_f: f64,
) -> Vec<(Option<Base>, SpeciesMask, f64)> {
    let orient = |b: Base| if reverse { complement(b) } else { b };
    if xs.len() == 1 {
        let x = orient(xs[0].1);
        let p = if x < 4 { col[x as usize] } else { 1.0 };
        return vec![(None, 0, p)];
    }
    let mut out = Vec::new();
    for zs in 0..4u8 {
        // Partial products over descendants, branching on each bond.
        let mut partial: Vec<(SpeciesMask, f64)> = vec![(0, col[zs as usize])];
        for &(m, x) in xs {
            let x = orient(x);
            if x >= 4 {
                continue;
            }
            let mut next = Vec::with_capacity(partial.len() * 2);
            for &(mask, p) in &partial {
                if x == zs {
                    next.push((mask | (1 << m), p * (1.0 - mu_f)));
                }
                next.push((mask, p * mu_f * col[x as usize]));
            }
            partial = next;
        }
        let z = if reverse { complement(zs) } else { zs };
        out.extend(partial.into_iter().map(|(mask, p)| (Some(z), mask, p)));
    }
    out
}

fn motif_draws(
    group: &OrthologGroup,
    path: &AlignmentPath,
    params: &ModelParams,
    first: usize,
    motif: usize,
    strand: Strand,
) -> Vec<UnitDraw> {
    let pwm = &params.pwms[motif];
    let w = pwm.width();
    let reverse = strand == Strand::Reverse;
    let mut draws = vec![UnitDraw {
        ancestral: Vec::new(),
        bonds: Vec::new(),
        prob: 1.0,
    }];
    for i in 0..w {
        let xs = bases_at(group, path, first + i);
        let col = if reverse { pwm.column(w - 1 - i) } else { pwm.column(i) };
        let options = motif_column_draws(&xs, col, reverse, params.motif_evo.mu_f);
        let mut next = Vec::with_capacity(draws.len() * options.len());
        for dr in &draws {
            for &(z, mask, p) in &options {
                let mut a = dr.ancestral.clone();
                a.push(z);
                let mut b = dr.bonds.clone();
                b.push(mask);
                next.push(UnitDraw {
                    ancestral: a,
                    bonds: b,
                    prob: dr.prob * p,
                });
            }
        }
        draws = next;
    }
    draws
}

impl<'a> Enumerator<'a> {
    fn new(group: &OrthologGroup, path: &'a AlignmentPath, params: &'a ModelParams) -> Result<Self> {
        if path.lengths() != group.lengths().as_slice() {
            return Err(Error::InvalidAlignment("path does not match the group".into()));
        }
        let q = params.mix.as_slice();
        let strands: Vec<(Strand, f64)> = match params.strands {
            StrandMode::Both => vec![(Strand::Forward, 0.5), (Strand::Reverse, 0.5)],
            StrandMode::ForwardOnly => vec![(Strand::Forward, 1.0)],
        };
        let mut units = vec![Vec::new()];
        for d in 1..=path.len() {
            let mut here = Vec::new();
            let bg = background_draws(group, path, params, d);
            let total: f64 = bg.iter().map(|u| u.prob).sum();
            for (kind, weight) in [
                (SegmentKind::Background, 1.0),
                (SegmentKind::ModuleBackground, q[0]),
            ] {
                let draws = background_draws(group, path, params, d);
                here.push(Unit {
                    last: d,
                    kind,
                    weight,
                    draws,
                    total,
                });
            }
            for (k, pwm) in params.pwms.iter().enumerate() {
                let last = d + pwm.width() - 1;
                if last > path.len() || !path.same_sub_path(d, last) {
                    continue;
                }
                for &(strand, sw) in &strands {
                    let draws = motif_draws(group, path, params, d, k, strand);
                    let total = draws.iter().map(|u| u.prob).sum();
                    here.push(Unit {
                        last,
                        kind: SegmentKind::Motif { motif: k, strand },
                        weight: q[k + 1] * sw,
                        draws,
                        total,
                    });
                }
            }
            units.push(here);
        }
        Ok(Enumerator {
            path,
            params,
            units,
            n: group.n_species(),
        })
    }

    fn initial_prob(&self, y: SpeciesMask) -> f64 {
        let tm = &self.params.transition;
        let (pb, pm) = if tm.r + tm.t > 0.0 {
            (tm.t / (tm.r + tm.t), tm.r / (tm.r + tm.t))
        } else {
            (1.0, 0.0)
        };
        (0..self.n)
            .map(|m| if y & (1 << m) != 0 { pm } else { pb })
            .product()
    }

    fn transition(&self, y: SpeciesMask, d: usize, to: Coarse) -> f64 {
        let parents: Vec<Coarse> = mask_members(self.path.ec(d))
            .map(|m| {
                if y & (1 << m) != 0 {
                    Coarse::Module
                } else {
                    Coarse::Background
                }
            })
            .collect();
        multi_parent_transition(&parents, to, &self.params.transition).expect("nonempty")
    }

    fn next_state(&self, y: SpeciesMask, d: usize, to: Coarse) -> SpeciesMask {
        let e = self.path.ec(d);
        match to {
            Coarse::Background => y & !e,
            Coarse::Module => y | e,
        }
    }

    fn sum_from(&self, d: usize, y: SpeciesMask, count: &mut u64, cap: u64) -> Result<f64> {
        if d > self.path.len() {
            *count += 1;
            if *count > cap {
                return Err(Error::StateSpaceTooLarge(*count as u128));
            }
            return Ok(1.0);
        }
        let mut acc = 0.0;
        for u in &self.units[d] {
            let to = u.kind.coarse();
            let f = self.transition(y, d, to) * u.weight * u.total;
            if f == 0.0 {
                continue;
            }
            acc += f * self.sum_from(u.last + 1, self.next_state(y, d, to), count, cap)?;
        }
        Ok(acc)
    }

    #[allow(clippy::too_many_arguments)]
    fn visit_from<F: FnMut(&OracleConfig, f64)>(
        &self,
        d: usize,
        y: SpeciesMask,
        prob: f64,
        cfg: &mut OracleConfig,
        count: &mut u64,
        cap: u64,
        f: &mut F,
    ) -> Result<()> {
        if d > self.path.len() {
            *count += 1;
            if *count > cap {
                return Err(Error::StateSpaceTooLarge(*count as u128));
            }
            f(cfg, prob);
            return Ok(());
        }
        for u in &self.units[d] {
            let to = u.kind.coarse();
            let base = prob * self.transition(y, d, to) * u.weight;
            let y2 = self.next_state(y, d, to);
            cfg.units.push((d, u.last, u.kind));
            for dr in &u.draws {
                cfg.ancestral[d - 1..u.last].copy_from_slice(&dr.ancestral);
                cfg.bonds[d - 1..u.last].copy_from_slice(&dr.bonds);
                self.visit_from(u.last + 1, y2, base * dr.prob, cfg, count, cap, f)?;
            }
            cfg.units.pop();
        }
        Ok(())
    }
}

/// `P(S | Ψ, A)` by summing over every hidden-state configuration, with
/// ancestral bases and bonds summed per unit. At most `cap` state paths.
pub fn brute_force_total(
    group: &OrthologGroup,
    path: &AlignmentPath,
    params: &ModelParams,
    cap: u64,
) -> Result<f64> {
    let en = Enumerator::new(group, path, params)?;
    let mut count = 0;
    let mut total = 0.0;
    for y0 in 0..(1u32 << en.n) {
        let p0 = en.initial_prob(y0);
        if p0 == 0.0 {
            continue;
        }
        total += p0 * en.sum_from(1, y0, &mut count, cap)?;
    }
    Ok(total)
}

/// Call `f` with every configuration `(Y, Z, V)` and its joint probability
/// with the data. Returns the number of configurations visited, or an error
/// as soon as more than `cap` would be needed.
pub fn brute_force_visit<F: FnMut(&OracleConfig, f64)>(
    group: &OrthologGroup,
    path: &AlignmentPath,
    params: &ModelParams,
    cap: u64,
    mut f: F,
) -> Result<u64> {
    let en = Enumerator::new(group, path, params)?;
    let mut count = 0;
    for y0 in 0..(1u32 << en.n) {
        let p0 = en.initial_prob(y0);
        if p0 == 0.0 {
            continue;
        }
        let mut cfg = OracleConfig {
            initial: y0,
            units: Vec::new(),
            ancestral: vec![None; path.len()],
            bonds: vec![0; path.len()],
        };
        en.visit_from(1, y0, p0, &mut cfg, &mut count, cap, &mut f)?;
    }
    Ok(count)
}

/// Full table of configurations with nonzero probability, capped at
/// [`MAX_CONFIGS`].
pub fn brute_force_joint(
    group: &OrthologGroup,
    path: &AlignmentPath,
    params: &ModelParams,
) -> Result<Vec<(OracleConfig, f64)>> {
    let mut out = Vec::new();
    brute_force_visit(group, path, params, MAX_CONFIGS, |c, p| {
        if p > 0.0 {
            out.push((c.clone(), p));
        }
    })?;
    Ok(out)
}
