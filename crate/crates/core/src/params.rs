//! Sufficient statistics, conjugate parameter draws, conditional posterior
//! means, and the motif-width Metropolis–Hastings move.

use rand::Rng;

use crate::alignment::path::{mask_members, AlignmentPath};
use crate::data::OrthologGroup;
use crate::dp::{stationary, Latent, Segment, SegmentKind, StatePath, Strand};
use crate::error::{Error, Result};
use crate::math::{ln, ln_dirichlet_multinomial, sample_beta, sample_dirichlet, sample_dirichlet4};
use crate::model::{
    complement, is_transition, BackgroundModels, BackgroundSubstitution, Base, Coarse,
    EmissionMix, ModelParams, MotifEvolution, Priors, Pwm, StrandMode, TransitionMatrix,
};

/// Counts attached to one motif column.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ColumnCounts {
    /// Bases of unaligned sites.
    pub unaligned: [u64; 4],
    /// Ancestral bases of aligned sites.
    pub ancestral: [u64; 4],
    /// Descendant bases whose bond is broken.
    pub broken: [u64; 4],
}

impl ColumnCounts {
    pub fn total(&self) -> [u64; 4] {
        let mut c = [0; 4];
        for (j, v) in c.iter_mut().enumerate() {
            *v = self.unaligned[j] + self.ancestral[j] + self.broken[j];
        }
        c
    }

    fn add(&mut self, o: &ColumnCounts) {
        for j in 0..4 {
            self.unaligned[j] += o.unaligned[j];
            self.ancestral[j] += o.ancestral[j];
            self.broken[j] += o.broken[j];
        }
    }

    fn sub(&mut self, o: &ColumnCounts) -> Result<()> {
        for j in 0..4 {
            self.unaligned[j] = checked(self.unaligned[j], o.unaligned[j])?;
            self.ancestral[j] = checked(self.ancestral[j], o.ancestral[j])?;
            self.broken[j] = checked(self.broken[j], o.broken[j])?;
        }
        Ok(())
    }
}

fn checked(a: u64, b: u64) -> Result<u64> {
    a.checked_sub(b)
        .ok_or_else(|| Error::InconsistentLatent("subtracting more counts than present".into()))
}

/// Sufficient statistics of the missing data for every parameter.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SuffStats {
    pub bb: u64,
    pub bm: u64,
    pub mb: u64,
    pub mm: u64,
    /// Initial coarse states, background and module.
    pub initial: [u64; 2],
    /// Segment counts `|M_0|, .., |M_K|`.
    pub states: Vec<u64>,
    pub ancestral_background: [u64; 4],
    pub identities: u64,
    pub transitions: u64,
    pub transversions: u64,
    pub bonds_broken: u64,
    pub bonds_connected: u64,
    /// Per motif, per PWM column.
    pub columns: Vec<Vec<ColumnCounts>>,
}

impl SuffStats {
    pub fn empty(widths: &[usize]) -> Self {
        SuffStats {
            states: vec![0; widths.len() + 1],
            columns: widths.iter().map(|&w| vec![ColumnCounts::default(); w]).collect(),
            ..Default::default()
        }
    }

    pub fn widths(&self) -> Vec<usize> {
        self.columns.iter().map(Vec::len).collect()
    }

    fn check_shape(&self, o: &SuffStats) -> Result<()> {
        if self.widths() != o.widths() {
            return Err(Error::InconsistentLatent(format!(
                "statistics for widths {:?} and {:?} cannot be combined",
                self.widths(),
                o.widths()
            )));
        }
        Ok(())
    }

    pub fn merge(&mut self, o: &SuffStats) -> Result<()> {
        self.check_shape(o)?;
        self.bb += o.bb;
        self.bm += o.bm;
        self.mb += o.mb;
        self.mm += o.mm;
        self.initial[0] += o.initial[0];
        self.initial[1] += o.initial[1];
        for (a, b) in self.states.iter_mut().zip(&o.states) {
            *a += b;
        }
        for j in 0..4 {
            self.ancestral_background[j] += o.ancestral_background[j];
        }
        self.identities += o.identities;
        self.transitions += o.transitions;
        self.transversions += o.transversions;
        self.bonds_broken += o.bonds_broken;
        self.bonds_connected += o.bonds_connected;
        for (a, b) in self.columns.iter_mut().zip(&o.columns) {
            for (x, y) in a.iter_mut().zip(b) {
                x.add(y);
            }
        }
        Ok(())
    }

    pub fn subtract(&mut self, o: &SuffStats) -> Result<()> {
        self.check_shape(o)?;
        self.bb = checked(self.bb, o.bb)?;
        self.bm = checked(self.bm, o.bm)?;
        self.mb = checked(self.mb, o.mb)?;
        self.mm = checked(self.mm, o.mm)?;
        self.initial[0] = checked(self.initial[0], o.initial[0])?;
        self.initial[1] = checked(self.initial[1], o.initial[1])?;
        for (a, b) in self.states.iter_mut().zip(&o.states) {
            *a = checked(*a, *b)?;
        }
        for j in 0..4 {
            self.ancestral_background[j] =
                checked(self.ancestral_background[j], o.ancestral_background[j])?;
        }
        self.identities = checked(self.identities, o.identities)?;
        self.transitions = checked(self.transitions, o.transitions)?;
        self.transversions = checked(self.transversions, o.transversions)?;
        self.bonds_broken = checked(self.bonds_broken, o.bonds_broken)?;
        self.bonds_connected = checked(self.bonds_connected, o.bonds_connected)?;
        for (a, b) in self.columns.iter_mut().zip(&o.columns) {
            for (x, y) in a.iter_mut().zip(b) {
                x.sub(y)?;
            }
        }
        Ok(())
    }
}

#[inline]
fn base_at(group: &OrthologGroup, path: &AlignmentPath, d: usize, m: usize) -> Base {
    group.seqs[m][path.position(d, m).expect("species emits at step")]
}

/// Step of PWM column `i` for a site, and whether bases must be complemented.
#[inline]
fn column_step(seg: &Segment, i: usize) -> (usize, bool) {
    match seg.kind {
        SegmentKind::Motif {
            strand: Strand::Reverse,
            ..
        } => (seg.last - i, true),
        _ => (seg.first + i, false),
    }
}

#[inline]
fn orient(b: Base, reverse: bool) -> Base {
    if reverse {
        complement(b)
    } else {
        b
    }
}

/// Count everything the parameter updates need from one group's latent state.
pub fn collect_stats(
    latent: &Latent,
    path: &AlignmentPath,
    group: &OrthologGroup,
    widths: &[usize],
) -> Result<SuffStats> {
    latent.states.validate(path, widths)?;
    if latent.ancestral.0.len() != path.len() || latent.bonds.0.len() != path.len() {
        return Err(Error::InconsistentLatent("latent length differs from the path".into()));
    }
    let mut st = SuffStats::empty(widths);
    for m in 0..group.n_species() {
        st.initial[usize::from(latent.states.initial & (1 << m) != 0)] += 1;
    }
    for seg in &latent.states.segments {
        let from = latent.states.driver_before(seg);
        let to = seg.kind.coarse();
        match (from, to) {
            (Coarse::Background, Coarse::Background) => st.bb += 1,
            (Coarse::Background, Coarse::Module) => st.bm += 1,
            (Coarse::Module, Coarse::Background) => st.mb += 1,
            (Coarse::Module, Coarse::Module) => st.mm += 1,
        }
        let e = path.ec(seg.first);
        let aligned = path.is_aligned(seg.first);
        match seg.kind {
            SegmentKind::Background | SegmentKind::ModuleBackground => {
                if seg.kind == SegmentKind::ModuleBackground {
                    st.states[0] += 1;
                }
                let d = seg.first;
                if latent.bonds.0[d - 1] != 0 {
                    return Err(Error::InconsistentLatent(format!("bond outside a site at step {d}")));
                }
                match (aligned, latent.ancestral.0[d - 1]) {
                    (true, Some(z)) => {
                        st.ancestral_background[z as usize] += 1;
                        for m in mask_members(e) {
                            let x = base_at(group, path, d, m);
                            if x >= 4 {
                                continue;
                            }
                            if x == z {
                                st.identities += 1;
                            } else if is_transition(z, x) {
                                st.transitions += 1;
                            } else {
                                st.transversions += 1;
                            }
                        }
                    }
                    (false, None) => {}
                    _ => {
                        return Err(Error::InconsistentLatent(format!(
                            "ancestral base does not match alignment at step {d}"
                        )))
                    }
                }
            }
            SegmentKind::Motif { motif, .. } => {
                st.states[motif + 1] += 1;
                for i in 0..widths[motif] {
                    let (d, rev) = column_step(seg, i);
                    let cc = &mut st.columns[motif][i];
                    match (aligned, latent.ancestral.0[d - 1]) {
                        (true, Some(z)) => {
                            cc.ancestral[orient(z, rev) as usize] += 1;
                            let bonds = latent.bonds.0[d - 1];
                            for m in mask_members(e) {
                                let x = base_at(group, path, d, m);
                                let connected = bonds & (1 << m) != 0;
                                if x >= 4 {
                                    if connected {
                                        return Err(Error::InconsistentLatent(format!(
                                            "bond on a masked base at step {d}"
                                        )));
                                    }
                                    continue;
                                }
                                if connected {
                                    if x != z {
                                        return Err(Error::InconsistentLatent(format!(
                                            "connected bond with differing bases at step {d}"
                                        )));
                                    }
                                    st.bonds_connected += 1;
                                } else {
                                    st.bonds_broken += 1;
                                    cc.broken[orient(x, rev) as usize] += 1;
                                }
                            }
                        }
                        (false, None) => {
                            let m = e.trailing_zeros() as usize;
                            let x = base_at(group, path, d, m);
                            if x < 4 {
                                cc.unaligned[orient(x, rev) as usize] += 1;
                            }
                        }
                        _ => {
                            return Err(Error::InconsistentLatent(format!(
                                "ancestral base does not match alignment at step {d}"
                            )))
                        }
                    }
                }
            }
        }
    }
    Ok(st)
}

impl StatePath {
    /// Coarse state the driving parent was in before a segment.
    pub(crate) fn driver_before(&self, seg: &Segment) -> Coarse {
        if seg.before & (1 << seg.driver) != 0 {
            Coarse::Module
        } else {
            Coarse::Background
        }
    }

    /// Recompute every segment's previous-state vector from the initial
    /// state, after segments have been edited in place.
    pub fn refresh_before(&mut self, path: &AlignmentPath) {
        let mut y = self.initial;
        for s in &mut self.segments {
            s.before = y;
            let e = path.ec(s.first);
            y = match s.kind.coarse() {
                Coarse::Background => y & !e,
                Coarse::Module => y | e,
            };
        }
    }
}

/// Parameters that are fixed for a whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedParams {
    /// Module-to-background transition probability, `1 / L`.
    pub t: f64,
    pub motif_mode: bool,
    pub species_backgrounds: Vec<[f64; 4]>,
    pub strands: StrandMode,
}

/// Draw every parameter from its conditional posterior given the statistics.
///
/// `r` is drawn from its Beta conditional over the transition counts and then
/// passed through an independence Metropolis–Hastings correction for the
/// stationary initial states; `current_r` is the chain's value before the step.
pub fn sample_parameters<R: Rng + ?Sized>(
    stats: &SuffStats,
    current_r: f64,
    fixed: &FixedParams,
    rng: &mut R,
) -> Result<ModelParams> {
    let transition = if fixed.motif_mode {
        TransitionMatrix::motif_mode()
    } else {
        let proposed = sample_beta(stats.bm as f64 + 1.0, stats.bb as f64 + 1.0, rng);
        let init_ll = |r: f64| {
            let pi = stationary(&TransitionMatrix { r, t: fixed.t });
            stats.initial[0] as f64 * ln(pi[0]) + stats.initial[1] as f64 * ln(pi[1])
        };
        let log_ratio = init_ll(proposed) - init_ll(current_r);
        let r = if log_ratio >= 0.0 || rng.random::<f64>() < log_ratio.exp() {
            proposed
        } else {
            current_r
        };
        TransitionMatrix::new(r, fixed.t)?
    };
    let q_alpha: Vec<f64> = stats.states.iter().map(|&c| c as f64 + 1.0).collect();
    let mix = EmissionMix::new(renormalized(sample_dirichlet(&q_alpha, rng)))?;
    let anc = add_one(&stats.ancestral_background);
    let ancestral = renormalized4(sample_dirichlet4(anc, rng));
    let phi = sample_dirichlet(
        &[
            stats.identities as f64 + 1.0,
            stats.transitions as f64 + 1.0,
            stats.transversions as f64 + 1.0,
        ],
        rng,
    );
    let subst = substitution_from_simplex(&phi)?;
    let mu_f = sample_beta(
        stats.bonds_broken as f64 + 1.0,
        stats.bonds_connected as f64 + 1.0,
        rng,
    );
    let pwms = stats
        .columns
        .iter()
        .map(|cols| {
            Pwm::new(
                cols.iter()
                    .map(|c| renormalized4(sample_dirichlet4(add_one(&c.total()), rng)))
                    .collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelParams {
        transition,
        mix,
        pwms,
        backgrounds: BackgroundModels::new(ancestral, fixed.species_backgrounds.clone())?,
        subst,
        motif_evo: MotifEvolution::new(mu_f)?,
        strands: fixed.strands,
    })
}

/// Conditional posterior means of every parameter.
pub fn posterior_mean_parameters(stats: &SuffStats, fixed: &FixedParams) -> Result<ModelParams> {
    let transition = if fixed.motif_mode {
        TransitionMatrix::motif_mode()
    } else {
        TransitionMatrix::new(
            (stats.bm as f64 + 1.0) / ((stats.bm + stats.bb) as f64 + 2.0),
            fixed.t,
        )?
    };
    let mean = |c: &[u64]| -> Vec<f64> {
        let total: f64 = c.iter().map(|&v| v as f64 + 1.0).sum();
        c.iter().map(|&v| (v as f64 + 1.0) / total).collect()
    };
    let mix = EmissionMix::new(renormalized(mean(&stats.states)))?;
    let ancestral = to4(&mean(&stats.ancestral_background));
    let subst =
        substitution_from_simplex(&mean(&[stats.identities, stats.transitions, stats.transversions]))?;
    let mu_f = (stats.bonds_broken as f64 + 1.0)
        / ((stats.bonds_broken + stats.bonds_connected) as f64 + 2.0);
    let pwms = stats
        .columns
        .iter()
        .map(|cols| Pwm::new(cols.iter().map(|c| to4(&mean(&c.total()))).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelParams {
        transition,
        mix,
        pwms,
        backgrounds: BackgroundModels::new(ancestral, fixed.species_backgrounds.clone())?,
        subst,
        motif_evo: MotifEvolution::new(mu_f)?,
        strands: fixed.strands,
    })
}

fn add_one(c: &[u64; 4]) -> [f64; 4] {
    c.map(|v| v as f64 + 1.0)
}

fn to4(v: &[f64]) -> [f64; 4] {
    renormalized4([v[0], v[1], v[2], v[3]])
}

/// Exact renormalization so stochastic checks at 1e-12 always pass.
fn renormalized(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

fn renormalized4(v: [f64; 4]) -> [f64; 4] {
    let s: f64 = v.iter().sum();
    v.map(|x| x / s)
}

/// `[1 - μ_b, α, 2β]` to substitution rates.
fn substitution_from_simplex(phi: &[f64]) -> Result<BackgroundSubstitution> {
    let alpha = phi[1];
    let beta = phi[2] / 2.0;
    // Guard against rounding pushing α + 2β to exactly one.
    let excess = (alpha + 2.0 * beta) - (1.0 - 1e-15);
    if excess > 0.0 {
        let scale = (1.0 - 1e-15) / (alpha + 2.0 * beta);
        return BackgroundSubstitution::new(alpha * scale, beta * scale);
    }
    BackgroundSubstitution::new(alpha, beta)
}

/// One of the four width proposals, in PWM coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WidthMove {
    GrowRight,
    GrowLeft,
    ShrinkRight,
    ShrinkLeft,
}

impl WidthMove {
    fn is_grow(self) -> bool {
        matches!(self, WidthMove::GrowRight | WidthMove::GrowLeft)
    }

    /// Step touched by the move for a site: the step to absorb when growing,
    /// the step to release when shrinking.
    fn step(self, seg: &Segment) -> Option<usize> {
        let rev = matches!(
            seg.kind,
            SegmentKind::Motif {
                strand: Strand::Reverse,
                ..
            }
        );
        let at_end = matches!(self, WidthMove::GrowRight | WidthMove::ShrinkRight) != rev;
        match (self.is_grow(), at_end) {
            (true, true) => Some(seg.last + 1),
            (true, false) => seg.first.checked_sub(1).filter(|&d| d >= 1),
            (false, true) => Some(seg.last),
            (false, false) => Some(seg.first),
        }
    }
}

/// How the width move weighs the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WidthLikelihood {
    Full,
    /// Emission terms set to one: the move samples the width prior.
    Flat,
}

/// Result of one width update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WidthOutcome {
    pub proposal: WidthMove,
    pub accepted: bool,
}

/// Data-dependent part of the log acceptance ratio of adding one column,
/// given the column's counts, the number of aligned descendants that differ
/// from their ancestor, and the log-probability of the same bases as
/// background.
fn column_log_odds(counts: &ColumnCounts, n_diff: u64, background: f64, mu_f: f64) -> f64 {
    let diff = if n_diff == 0 { 0.0 } else { n_diff as f64 * ln(mu_f) };
    diff + ln_dirichlet_multinomial(&counts.total()) - background
}

/// Background log-probability of the bases at step `d`.
fn background_log_prob(
    group: &OrthologGroup,
    path: &AlignmentPath,
    d: usize,
    z: Option<Base>,
    backgrounds: &BackgroundModels,
    subst: &BackgroundSubstitution,
) -> f64 {
    let e = path.ec(d);
    match z {
        Some(z) => {
            let mut v = ln(backgrounds.ancestral[z as usize]);
            for m in mask_members(e) {
                v += ln(subst.prob(z, base_at(group, path, d, m)));
            }
            v
        }
        None => {
            let m = e.trailing_zeros() as usize;
            ln(backgrounds.species_prob(m, base_at(group, path, d, m)))
        }
    }
}

/// A site of one motif, located by group and segment index.
struct SiteRef {
    group: usize,
    seg: usize,
    step: usize,
}

/// Metropolis–Hastings update of the width of motif `k`.
///
/// Grows or shrinks every site of the motif by one column at one end of the
/// PWM. Growing absorbs the neighbouring in-module background unit, which
/// must lie in the same sub-path; shrinking releases one as such a unit. On acceptance the latent states are edited
/// in place and the PWM gets a new column (posterior mean of its counts) or
/// loses one.
#[allow(clippy::too_many_arguments)]
pub fn width_mh_step<R: Rng + ?Sized>(
    k: usize,
    groups: &[OrthologGroup],
    paths: &[AlignmentPath],
    latents: &mut [Latent],
    params: &mut ModelParams,
    priors: &Priors,
    mode: WidthLikelihood,
    rng: &mut R,
) -> Result<WidthOutcome> {
    let proposal = match rng.random_range(0..4) {
        0 => WidthMove::GrowRight,
        1 => WidthMove::GrowLeft,
        2 => WidthMove::ShrinkRight,
        _ => WidthMove::ShrinkLeft,
    };
    let reject = Ok(WidthOutcome {
        proposal,
        accepted: false,
    });
    let w = params.pwms[k].width();
    if (proposal.is_grow() && w + 1 > priors.width_max)
        || (!proposal.is_grow() && (w <= priors.width_min || w <= 1))
    {
        return reject;
    }

    // Locate every site and the step the move touches.
    let mut sites = Vec::new();
    for (g, lat) in latents.iter().enumerate() {
        let path = &paths[g];
        let mut claimed = Vec::new();
        for (si, seg) in lat.states.segments.iter().enumerate() {
            if !matches!(seg.kind, SegmentKind::Motif { motif, .. } if motif == k) {
                continue;
            }
            let Some(step) = proposal.step(seg) else {
                return reject;
            };
            if proposal.is_grow() {
                if step > path.len()
                    || !path.same_sub_path(step.min(seg.first), step.max(seg.last))
                    || claimed.contains(&step)
                {
                    return reject;
                }
                let unit = lat
                    .states
                    .segments
                    .iter()
                    .find(|s| s.first <= step && step <= s.last)
                    .expect("tiling covers every step");
                if unit.kind != SegmentKind::ModuleBackground {
                    return reject;
                }
                claimed.push(step);
            }
            sites.push(SiteRef {
                group: g,
                seg: si,
                step,
            });
        }
    }

    let mu_f = params.motif_evo.mu_f;
    let mut counts = ColumnCounts::default();
    let mut n_diff = 0u64;
    let mut background = 0.0;
    // Bonds proposed for grown columns, per site.
    let mut new_bonds = Vec::with_capacity(sites.len());
    for s in &sites {
        let (group, path, lat) = (&groups[s.group], &paths[s.group], &latents[s.group]);
        let seg = &lat.states.segments[s.seg];
        let rev = matches!(
            seg.kind,
            SegmentKind::Motif {
                strand: Strand::Reverse,
                ..
            }
        );
        let d = s.step;
        let z = lat.ancestral.0[d - 1];
        background += background_log_prob(group, path, d, z, &params.backgrounds, &params.subst);
        let e = path.ec(d);
        let mut bonds = 0;
        match z {
            Some(z) => {
                counts.ancestral[orient(z, rev) as usize] += 1;
                let current = lat.bonds.0[d - 1];
                for m in mask_members(e) {
                    let x = base_at(group, path, d, m);
                    if x >= 4 {
                        continue;
                    }
                    let connected = if x != z {
                        n_diff += 1;
                        false
                    } else if proposal.is_grow() {
                        rng.random::<f64>() >= mu_f
                    } else {
                        current & (1 << m) != 0
                    };
                    if connected {
                        bonds |= 1 << m;
                    } else {
                        counts.broken[orient(x, rev) as usize] += 1;
                    }
                }
            }
            None => {
                let m = e.trailing_zeros() as usize;
                let x = base_at(group, path, d, m);
                if x < 4 {
                    counts.unaligned[orient(x, rev) as usize] += 1;
                }
            }
        }
        new_bonds.push(bonds);
    }

    let log_ratio = match (mode, proposal.is_grow()) {
        (WidthLikelihood::Flat, true) => priors.ln_width_ratio_up(w),
        (WidthLikelihood::Flat, false) => -priors.ln_width_ratio_up(w - 1),
        (WidthLikelihood::Full, true) => {
            priors.ln_width_ratio_up(w) + column_log_odds(&counts, n_diff, background, mu_f)
        }
        (WidthLikelihood::Full, false) => {
            -(priors.ln_width_ratio_up(w - 1) + column_log_odds(&counts, n_diff, background, mu_f))
        }
    };
    if !(log_ratio >= 0.0 || rng.random::<f64>() < log_ratio.exp()) {
        return reject;
    }

    // Apply to the latent states, group by group.
    for (g, lat) in latents.iter_mut().enumerate() {
        let mine: Vec<(usize, usize, u32)> = sites
            .iter()
            .zip(&new_bonds)
            .filter(|(s, _)| s.group == g)
            .map(|(s, &b)| (s.seg, s.step, b))
            .collect();
        if mine.is_empty() {
            continue;
        }
        let path = &paths[g];
        let mut segs = std::mem::take(&mut lat.states.segments);
        let mut drop = vec![false; segs.len()];
        let mut released = Vec::new();
        for &(si, step, bonds) in &mine {
            let seg = &mut segs[si];
            if proposal.is_grow() {
                if step < seg.first {
                    seg.first = step;
                } else {
                    seg.last = step;
                }
                lat.bonds.0[step - 1] = bonds;
            } else {
                if step == seg.first {
                    seg.first += 1;
                } else {
                    seg.last -= 1;
                }
                lat.bonds.0[step - 1] = 0;
                released.push(Segment {
                    first: step,
                    last: step,
                    kind: SegmentKind::ModuleBackground,
                    before: 0,
                    driver: path.ec(step).trailing_zeros() as usize,
                });
            }
        }
        if proposal.is_grow() {
            let absorbed: Vec<usize> = mine.iter().map(|m| m.1).collect();
            for (i, s) in segs.iter().enumerate() {
                if s.kind == SegmentKind::ModuleBackground && absorbed.contains(&s.first) {
                    drop[i] = true;
                }
            }
        }
        let mut out: Vec<Segment> = segs
            .into_iter()
            .zip(drop)
            .filter_map(|(s, d)| (!d).then_some(s))
            .collect();
        out.extend(released);
        out.sort_by_key(|s| s.first);
        lat.states.segments = out;
        lat.states.refresh_before(path);
    }

    // Keep the PWM shape in step with the sites.
    let mut cols = params.pwms[k].columns().to_vec();
    let at_end = matches!(proposal, WidthMove::GrowRight | WidthMove::ShrinkRight);
    if proposal.is_grow() {
        let c = counts.total();
        let total: f64 = c.iter().map(|&v| v as f64 + 1.0).sum();
        let col = c.map(|v| (v as f64 + 1.0) / total);
        if at_end {
            cols.push(col);
        } else {
            cols.insert(0, col);
        }
    } else if at_end {
        cols.pop();
    } else {
        cols.remove(0);
    }
    params.pwms[k] = Pwm::new(cols)?;
    Ok(WidthOutcome {
        proposal,
        accepted: true,
    })
}
