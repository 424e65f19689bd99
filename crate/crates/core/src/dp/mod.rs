//! Forward summation over an alignment path and stochastic traceback of
//! hidden states, ancestral bases and evolutionary bonds.
//!
//! The forward state at a path point is the coarse `{B, M}` state of every
//! species, packed as a bit vector (bit `m` set means species `m` is inside a
//! module). Motif sites are handled as semi-Markov segments that look back
//! `w_k` points inside the current sub-path.

pub mod oracle;

use rand::Rng;

use crate::alignment::path::{mask_len, mask_members, AlignmentPath, SpeciesMask};
use crate::data::OrthologGroup;
use crate::error::{Error, Result};
use crate::math::{ln, log_sum_exp, sample_categorical, sample_log_categorical};
use crate::model::{
    motif_descendant_prob, BackgroundModels, BackgroundSubstitution, Base, Coarse,
    ModelParams, MotifEvolution, Pwm, StrandMode, TransitionMatrix,
};

/// Base code used for species that do not emit at a step.
const SILENT: Base = u8::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strand {
    Forward,
    Reverse,
}

impl Strand {
    pub fn index(self) -> usize {
        match self {
            Strand::Forward => 0,
            Strand::Reverse => 1,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Strand::Forward => '+',
            Strand::Reverse => '-',
        }
    }
}

/// Decomposed hidden state of one segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SegmentKind {
    Background,
    /// Within-module background (`M_0`).
    ModuleBackground,
    Motif { motif: usize, strand: Strand },
}

impl SegmentKind {
    pub fn coarse(self) -> Coarse {
        match self {
            SegmentKind::Background => Coarse::Background,
            _ => Coarse::Module,
        }
    }
}

/// One emitted unit: steps `first..=last` of a single sub-path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub first: usize,
    pub last: usize,
    pub kind: SegmentKind,
    /// Coarse state vector at point `first - 1`.
    pub before: SpeciesMask,
    /// Emitting species whose previous state drove the transition into this
    /// segment. Resampled with the segment; it makes the multi-parent
    /// transition a mixture so that `r` keeps a conjugate update.
    pub driver: usize,
}

/// Hidden states along a path: the initial coarse vector plus a tiling of
/// steps `1..=L` by segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatePath {
    pub initial: SpeciesMask,
    pub segments: Vec<Segment>,
}

/// Imputed ancestral base per step (index `d - 1`); set exactly at aligned steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AncestralSeq(pub Vec<Option<Base>>);

/// Connected evolutionary bonds per step (index `d - 1`), as species masks.
/// Only meaningful at aligned motif steps for descendants with a called base.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BondSet(pub Vec<SpeciesMask>);

/// The missing data of one ortholog group, given its alignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Latent {
    pub states: StatePath,
    pub ancestral: AncestralSeq,
    pub bonds: BondSet,
}

#[inline]
fn coarse_bit(c: Coarse) -> SpeciesMask {
    match c {
        Coarse::Background => 0,
        Coarse::Module => 1,
    }
}

#[inline]
fn coarse_of(bit: bool) -> Coarse {
    if bit {
        Coarse::Module
    } else {
        Coarse::Background
    }
}

impl Latent {
    /// Everything background; aligned steps get the first called base (or `A`)
    /// as their ancestor.
    pub fn all_background(group: &OrthologGroup, path: &AlignmentPath) -> Self {
        let segments = (1..=path.len())
            .map(|d| Segment {
                first: d,
                last: d,
                kind: SegmentKind::Background,
                before: 0,
                driver: path.ec(d).trailing_zeros() as usize,
            })
            .collect();
        let ancestral = (1..=path.len())
            .map(|d| {
                path.is_aligned(d).then(|| {
                    mask_members(path.ec(d))
                        .map(|m| group.seqs[m][path.position(d, m).unwrap()])
                        .find(|&b| b < 4)
                        .unwrap_or(0)
                })
            })
            .collect();
        Latent {
            states: StatePath {
                initial: 0,
                segments,
            },
            ancestral: AncestralSeq(ancestral),
            bonds: BondSet(vec![0; path.len()]),
        }
    }

    /// Decomposed state per step.
    pub fn kinds(&self, len: usize) -> Vec<SegmentKind> {
        let mut out = vec![SegmentKind::Background; len];
        for s in &self.states.segments {
            for k in &mut out[s.first - 1..s.last] {
                *k = s.kind;
            }
        }
        out
    }

    /// Sites of every motif as segments.
    pub fn sites(&self) -> impl Iterator<Item = &Segment> {
        self.states
            .segments
            .iter()
            .filter(|s| matches!(s.kind, SegmentKind::Motif { .. }))
    }
}

impl StatePath {
    /// Check the segment tiling and coupling constraints against a path.
    pub fn validate(&self, path: &AlignmentPath, widths: &[usize]) -> Result<()> {
        let mut next = 1;
        let mut state = self.initial;
        for s in &self.segments {
            if s.first != next || s.last < s.first || s.last > path.len() {
                return Err(Error::InconsistentLatent(format!(
                    "segment {}..{} does not continue the tiling at {next}",
                    s.first, s.last
                )));
            }
            if s.before != state {
                return Err(Error::InconsistentLatent(format!(
                    "segment at {} records a stale previous state",
                    s.first
                )));
            }
            let e = path.ec(s.first);
            if e & (1 << s.driver) == 0 {
                return Err(Error::InconsistentLatent(format!(
                    "driver of segment at {} does not emit there",
                    s.first
                )));
            }
            let width = match s.kind {
                SegmentKind::Motif { motif, .. } => {
                    *widths.get(motif).ok_or_else(|| {
                        Error::InconsistentLatent(format!("unknown motif {motif}"))
                    })?
                }
                _ => 1,
            };
            if s.last + 1 - s.first != width {
                return Err(Error::InconsistentLatent(format!(
                    "segment at {} has width {} but its state needs {width}",
                    s.first,
                    s.last + 1 - s.first
                )));
            }
            if !path.same_sub_path(s.first, s.last) {
                return Err(Error::SiteCrossesChangePoint);
            }
            state = (state & !e) | if coarse_bit(s.kind.coarse()) == 1 { e } else { 0 };
            next = s.last + 1;
        }
        if next != path.len() + 1 {
            return Err(Error::InconsistentLatent("segments do not cover the path".into()));
        }
        Ok(())
    }
}

/// `Σ_z θ_0(z) Π_m Φ(z, x_m)` for the bases of one aligned column.
pub fn emission_background_aligned(
    bases: &[Base],
    backgrounds: &BackgroundModels,
    subst: &BackgroundSubstitution,
) -> f64 {
    (0..4u8)
        .map(|z| {
            backgrounds.ancestral[z as usize]
                * bases.iter().map(|&x| subst.prob(z, x)).product::<f64>()
        })
        .sum()
}

/// Likelihood of one motif column emitted by the bases of one path step.
#[inline]
fn column_emission(col: &[f64; 4], bases: &[Base], evo: &MotifEvolution) -> f64 {
    if let [x] = bases {
        return if *x < 4 { col[*x as usize] } else { 1.0 };
    }
    (0..4u8)
        .map(|z| {
            col[z as usize]
                * bases
                    .iter()
                    .map(|&x| motif_descendant_prob(x, z, evo, col))
                    .product::<f64>()
        })
        .sum()
}

/// Likelihood of a motif site occupying steps `first..first + w` of `path`,
/// read on the forward strand of the PWM.
pub fn emission_motif(
    group: &OrthologGroup,
    path: &AlignmentPath,
    first: usize,
    pwm: &Pwm,
    evo: &MotifEvolution,
) -> Result<f64> {
    let last = first + pwm.width() - 1;
    if first == 0 || last > path.len() {
        return Err(Error::InvalidParameter(format!(
            "site {first}..{last} outside the path"
        )));
    }
    if !path.same_sub_path(first, last) {
        return Err(Error::SiteCrossesChangePoint);
    }
    let mut p = 1.0;
    for (i, d) in (first..=last).enumerate() {
        let bases: Vec<Base> = mask_members(path.ec(d))
            .map(|m| group.seqs[m][path.position(d, m).unwrap()])
            .collect();
        p *= column_emission(pwm.column(i), &bases, evo);
    }
    Ok(p)
}

/// Stationary distribution of the two-state chain as `[π(B), π(M)]`.
pub fn stationary(tm: &TransitionMatrix) -> [f64; 2] {
    let s = tm.r + tm.t;
    if s <= 0.0 {
        [1.0, 0.0]
    } else {
        [tm.t / s, tm.r / s]
    }
}

/// Parameter-derived constants shared by the forward pass and the sampler.
struct Kernel {
    n_states: usize,
    full: SpeciesMask,
    /// `T[from][to]` with index 0 = B, 1 = M.
    trans: [[f64; 2]; 2],
    log_q: Vec<f64>,
    /// Log weight of each strand.
    log_strand: [f64; 2],
    /// PWM per motif and strand.
    pwms: Vec<[Pwm; 2]>,
    widths: Vec<usize>,
}

impl Kernel {
    fn new(params: &ModelParams, n_species: usize) -> Self {
        let tm = &params.transition;
        let trans = [[1.0 - tm.r, tm.r], [tm.t, 1.0 - tm.t]];
        let log_strand = match params.strands {
            StrandMode::Both => [0.5f64.ln(); 2],
            StrandMode::ForwardOnly => [0.0, f64::NEG_INFINITY],
        };
        Kernel {
            n_states: 1 << n_species,
            full: ((1u64 << n_species) - 1) as SpeciesMask,
            trans,
            log_q: params.mix.as_slice().iter().map(|&q| ln(q)).collect(),
            log_strand,
            pwms: params
                .pwms
                .iter()
                .map(|p| [p.clone(), p.reverse_complement()])
                .collect(),
            widths: params.widths(),
        }
    }

    /// [`Kernel::parent_transitions`] for every possible number of parents.
    fn all_parent_transitions(&self, n_species: usize) -> Vec<[Vec<f64>; 2]> {
        (0..=n_species)
            .map(|n| {
                if n == 0 {
                    [Vec::new(), Vec::new()]
                } else {
                    self.parent_transitions(n)
                }
            })
            .collect()
    }

    /// Averaged transition into `h` indexed by the number of module parents.
    fn parent_transitions(&self, n_parents: usize) -> [Vec<f64>; 2] {
        let nf = n_parents as f64;
        let row = |h: usize| {
            (0..=n_parents)
                .map(|j| {
                    let j = j as f64;
                    ((nf - j) * self.trans[0][h] + j * self.trans[1][h]) / nf
                })
                .collect()
        };
        [row(0), row(1)]
    }
}

/// Bases emitted at each step, `SILENT` for species outside the step's mask.
struct StepBases {
    n: usize,
    bases: Vec<Base>,
}

impl StepBases {
    fn new(group: &OrthologGroup, path: &AlignmentPath) -> Self {
        let n = group.n_species();
        let mut bases = vec![SILENT; path.len() * n];
        for d in 1..=path.len() {
            for m in mask_members(path.ec(d)) {
                bases[(d - 1) * n + m] = group.seqs[m][path.position(d, m).unwrap()];
            }
        }
        StepBases { n, bases }
    }

    /// Emitted bases of step `d` in species order.
    #[inline]
    fn at(&self, d: usize, out: &mut Vec<Base>) {
        out.clear();
        out.extend(
            self.bases[(d - 1) * self.n..d * self.n]
                .iter()
                .copied()
                .filter(|&b| b != SILENT),
        );
    }

    #[inline]
    fn get(&self, d: usize, m: usize) -> Base {
        self.bases[(d - 1) * self.n + m]
    }
}

/// Motif column emissions, tabulated over base patterns when there are few
/// species and computed on demand otherwise.
enum ColumnEmissions<'a> {
    Table {
        /// Pattern code per step (index `d - 1`); silent species and `N` share code 4.
        codes: Vec<usize>,
        n_codes: usize,
        /// Offset of each `(motif, strand)` block, column-major inside.
        offsets: Vec<usize>,
        values: Vec<f64>,
    },
    Direct {
        kern: &'a Kernel,
        steps: &'a StepBases,
        evo: MotifEvolution,
    },
}

impl<'a> ColumnEmissions<'a> {
    const MAX_TABLE_SPECIES: usize = 4;

    fn new(kern: &'a Kernel, steps: &'a StepBases, params: &ModelParams) -> Self {
        let n = steps.n;
        let evo = params.motif_evo;
        if n > Self::MAX_TABLE_SPECIES {
            return ColumnEmissions::Direct { kern, steps, evo };
        }
        let n_codes = 5usize.pow(n as u32);
        let codes = steps
            .bases
            .chunks(n)
            .map(|c| {
                c.iter()
                    .rev()
                    .fold(0, |acc, &b| acc * 5 + if b < 4 { b as usize } else { 4 })
            })
            .collect();
        let patterns: Vec<Vec<Base>> = (0..n_codes)
            .map(|mut c| {
                let mut v = Vec::with_capacity(n);
                for _ in 0..n {
                    let b = (c % 5) as Base;
                    if b < 4 {
                        v.push(b);
                    }
                    c /= 5;
                }
                v
            })
            .collect();
        let mut offsets = Vec::with_capacity(kern.pwms.len() * 2);
        let mut values = Vec::new();
        for (k, pair) in kern.pwms.iter().enumerate() {
            for pwm in pair {
                offsets.push(values.len());
                for i in 0..kern.widths[k] {
                    let col = pwm.column(i);
                    values.extend(patterns.iter().map(|bases| {
                        if bases.is_empty() {
                            1.0
                        } else {
                            column_emission(col, bases, &evo)
                        }
                    }));
                }
            }
        }
        ColumnEmissions::Table {
            codes,
            n_codes,
            offsets,
            values,
        }
    }

    /// Emission of column `i` of motif `k` on strand `s` at step `d`.
    #[inline]
    fn get(&self, k: usize, s: usize, i: usize, d: usize) -> f64 {
        match self {
            ColumnEmissions::Table {
                codes,
                n_codes,
                offsets,
                values,
            } => values[offsets[k * 2 + s] + i * n_codes + codes[d - 1]],
            ColumnEmissions::Direct { kern, steps, evo } => {
                let mut bases = Vec::with_capacity(steps.n);
                steps.at(d, &mut bases);
                column_emission(kern.pwms[k][s].column(i), &bases, evo)
            }
        }
    }
}

/// Forward values `f_d(y)` for every point, stored as a per-point log scale
/// and linear values normalized to a maximum of one.
#[derive(Debug, Clone)]
pub struct ForwardTable {
    n_species: usize,
    n_motifs: usize,
    len: usize,
    scale: Vec<f64>,
    vals: Vec<f64>,
    /// Log background emission per step.
    background: Vec<f64>,
    /// Log window emission of a site ending at each step, `[motif][strand]`;
    /// `-inf` where the site would not fit in the sub-path.
    windows: Vec<f64>,
    log_likelihood: f64,
}

impl ForwardTable {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `log f_d(y)` for point `d` and coarse state vector `y`.
    pub fn log_value(&self, d: usize, y: SpeciesMask) -> f64 {
        let v = self.vals[(d << self.n_species) + y as usize];
        ln(v) + self.scale[d]
    }

    #[inline]
    fn window(&self, d: usize, k: usize, s: usize) -> f64 {
        self.windows[((d - 1) * self.n_motifs + k) * 2 + s]
    }

    #[inline]
    fn row(&self, d: usize) -> &[f64] {
        let n = 1 << self.n_species;
        &self.vals[d * n..(d + 1) * n]
    }

    /// Σ over the parents' states `u ⊆ e` of `f_p(rest | u) Tr(h | u)`, linear.
    #[inline]
    fn parent_sum(&self, p: usize, rest: SpeciesMask, e: SpeciesMask, tr: &[f64]) -> f64 {
        let row = self.row(p);
        let mut sub = e;
        let mut acc = 0.0;
        loop {
            acc += row[(rest | sub) as usize] * tr[mask_len(sub)];
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & e;
        }
        acc
    }
}

/// Log of the total probability of the data in a forward table.
pub fn likelihood(table: &ForwardTable) -> f64 {
    table.log_likelihood
}

fn validate_inputs(group: &OrthologGroup, path: &AlignmentPath, params: &ModelParams) -> Result<()> {
    if path.lengths() != group.lengths().as_slice() {
        return Err(Error::InvalidAlignment(format!(
            "path covers lengths {:?} but the group has {:?}",
            path.lengths(),
            group.lengths()
        )));
    }
    if params.n_species() != group.n_species() {
        return Err(Error::InvalidParameter(format!(
            "parameters describe {} species, group has {}",
            params.n_species(),
            group.n_species()
        )));
    }
    Ok(())
}

/// Run the forward recursion.
pub fn forward(group: &OrthologGroup, path: &AlignmentPath, params: &ModelParams) -> Result<ForwardTable> {
    validate_inputs(group, path, params)?;
    let n = group.n_species();
    let kern = Kernel::new(params, n);
    let len = path.len();
    let n_motifs = params.n_motifs();
    let steps = StepBases::new(group, path);

    let mut background = Vec::with_capacity(len);
    let mut windows = vec![f64::NEG_INFINITY; len * n_motifs * 2];
    let mut buf = Vec::with_capacity(n);
    for d in 1..=len {
        steps.at(d, &mut buf);
        let e = if buf.len() >= 2 {
            emission_background_aligned(&buf, &params.backgrounds, &params.subst)
        } else {
            let m = path.ec(d).trailing_zeros() as usize;
            params.backgrounds.species_prob(m, buf[0])
        };
        background.push(ln(e));
    }
    let emit = ColumnEmissions::new(&kern, &steps, params);
    for d in 1..=len {
        let start = path.run_start(d);
        for (k, &w) in kern.widths.iter().enumerate() {
            if d < w || d + 1 - w < start {
                continue;
            }
            let first = d + 1 - w;
            for s in 0..2 {
                if kern.log_strand[s] == f64::NEG_INFINITY {
                    continue;
                }
                let p: f64 = (0..w).map(|i| emit.get(k, s, i, first + i)).product();
                windows[((d - 1) * n_motifs + k) * 2 + s] = ln(p);
            }
        }
    }

    let n_states = kern.n_states;
    let mut table = ForwardTable {
        n_species: n,
        n_motifs,
        len,
        scale: Vec::with_capacity(len + 1),
        vals: vec![0.0; (len + 1) * n_states],
        background,
        windows,
        log_likelihood: 0.0,
    };

    let pi = stationary(&params.transition);
    for y in 0..n_states {
        table.vals[y] = (0..n)
            .map(|m| if y & (1 << m) != 0 { pi[1] } else { pi[0] })
            .product();
    }
    let max0 = table.vals[..n_states].iter().copied().fold(0.0, f64::max);
    for v in &mut table.vals[..n_states] {
        *v /= max0;
    }
    table.scale.push(max0.ln());

    let trs = kern.all_parent_transitions(n);
    let mut logs = vec![f64::NEG_INFINITY; n_states];
    let mut terms = Vec::with_capacity(1 + 2 * n_motifs);
    for d in 1..=len {
        let e = path.ec(d);
        let others = kern.full & !e;
        let tr = &trs[mask_len(e)];
        let start = path.run_start(d);
        logs.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
        let bg = table.background[d - 1];
        let prev_scale = table.scale[d - 1];
        let mut rest = others;
        loop {
            let gb = table.parent_sum(d - 1, rest, e, &tr[0]);
            logs[rest as usize] = ln(gb) + prev_scale + bg;

            terms.clear();
            let gm = table.parent_sum(d - 1, rest, e, &tr[1]);
            terms.push(kern.log_q[0] + ln(gm) + prev_scale + bg);
            for (k, &w) in kern.widths.iter().enumerate() {
                if d < w || d + 1 - w < start {
                    continue;
                }
                let p = d - w;
                let g = ln(table.parent_sum(p, rest, e, &tr[1])) + table.scale[p];
                for s in 0..2 {
                    terms.push(kern.log_q[k + 1] + kern.log_strand[s] + table.window(d, k, s) + g);
                }
            }
            logs[(rest | e) as usize] = log_sum_exp(&terms);

            if rest == 0 {
                break;
            }
            rest = (rest - 1) & others;
        }
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let row = &mut table.vals[d * n_states..(d + 1) * n_states];
        if max == f64::NEG_INFINITY {
            row.iter_mut().for_each(|v| *v = 0.0);
        } else {
            for (v, &l) in row.iter_mut().zip(&logs) {
                *v = (l - max).exp();
            }
        }
        table.scale.push(max);
    }
    let total: f64 = table.row(len).iter().sum();
    table.log_likelihood = ln(total) + table.scale[len];
    Ok(table)
}

/// Draw `(Y, Z, V)` from their joint conditional given the data and `Ψ`.
pub fn backward_sample<R: Rng + ?Sized>(
    table: &ForwardTable,
    group: &OrthologGroup,
    path: &AlignmentPath,
    params: &ModelParams,
    rng: &mut R,
) -> Result<Latent> {
    validate_inputs(group, path, params)?;
    if table.len != path.len() || table.n_species != group.n_species() {
        return Err(Error::InvalidParameter("forward table does not match the path".into()));
    }
    if table.log_likelihood == f64::NEG_INFINITY {
        return Err(Error::InvalidParameter("data have zero probability under the parameters".into()));
    }
    let n = group.n_species();
    let kern = Kernel::new(params, n);
    let steps = StepBases::new(group, path);
    let len = path.len();
    let trs = kern.all_parent_transitions(n);

    let mut ancestral = vec![None; len];
    let mut bonds = vec![0; len];
    let mut segments = Vec::new();

    let mut y = sample_categorical(table.row(len), rng) as SpeciesMask;
    let mut d = len;
    let mut options: Vec<(f64, SegmentKind, usize)> = Vec::new();
    let mut weights = Vec::new();
    let mut buf = Vec::with_capacity(n);
    while d > 0 {
        let e = path.ec(d);
        let h = usize::from(y & e != 0);
        let rest = y & !e;
        let tr = &trs[mask_len(e)];
        let bg = table.background[d - 1];
        options.clear();
        if h == 0 {
            options.push((0.0, SegmentKind::Background, 1));
        } else {
            let g = ln(table.parent_sum(d - 1, rest, e, &tr[1])) + table.scale[d - 1];
            options.push((kern.log_q[0] + bg + g, SegmentKind::ModuleBackground, 1));
            let start = path.run_start(d);
            for (k, &w) in kern.widths.iter().enumerate() {
                if d < w || d + 1 - w < start {
                    continue;
                }
                let g = ln(table.parent_sum(d - w, rest, e, &tr[1])) + table.scale[d - w];
                for (s, strand) in [Strand::Forward, Strand::Reverse].into_iter().enumerate() {
                    options.push((
                        kern.log_q[k + 1] + kern.log_strand[s] + table.window(d, k, s) + g,
                        SegmentKind::Motif { motif: k, strand },
                        w,
                    ));
                }
            }
        }
        let pick = if options.len() == 1 {
            0
        } else {
            weights.clear();
            weights.extend(options.iter().map(|o| o.0));
            sample_log_categorical(&weights, rng)
        };
        let (_, kind, w) = options[pick];
        let p = d - w;

        // Parents' states at point p.
        let row = table.row(p);
        let subs: Vec<SpeciesMask> = {
            let mut v = Vec::with_capacity(1 << mask_len(e));
            let mut sub = e;
            loop {
                v.push(sub);
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & e;
            }
            v
        };
        weights.clear();
        weights.extend(subs.iter().map(|&u| row[(rest | u) as usize] * tr[h][mask_len(u)]));
        let u = subs[sample_categorical(&weights, rng)];
        let before = rest | u;

        let members: Vec<usize> = mask_members(e).collect();
        weights.clear();
        weights.extend(
            members
                .iter()
                .map(|&m| kern.trans[usize::from(before & (1 << m) != 0)][h]),
        );
        let driver = members[sample_categorical(&weights, rng)];

        let first = p + 1;
        if mask_len(e) >= 2 {
            match kind {
                SegmentKind::Motif { motif, strand } => {
                    let pwm = &kern.pwms[motif][strand.index()];
                    for (i, step) in (first..=d).enumerate() {
                        steps.at(step, &mut buf);
                        let col = pwm.column(i);
                        weights.clear();
                        weights.extend((0..4u8).map(|z| {
                            col[z as usize]
                                * buf
                                    .iter()
                                    .map(|&x| motif_descendant_prob(x, z, &params.motif_evo, col))
                                    .product::<f64>()
                        }));
                        let z = sample_categorical(&weights, rng) as Base;
                        ancestral[step - 1] = Some(z);
                        let keep = 1.0 - params.motif_evo.mu_f;
                        let mut mask = 0;
                        for m in mask_members(e) {
                            let x = steps.get(step, m);
                            if x == z {
                                let redraw = params.motif_evo.mu_f * col[x as usize];
                                if rng.random::<f64>() * (keep + redraw) < keep {
                                    mask |= 1 << m;
                                }
                            }
                        }
                        bonds[step - 1] = mask;
                    }
                }
                _ => {
                    steps.at(d, &mut buf);
                    weights.clear();
                    weights.extend((0..4u8).map(|z| {
                        params.backgrounds.ancestral[z as usize]
                            * buf.iter().map(|&x| params.subst.prob(z, x)).product::<f64>()
                    }));
                    ancestral[d - 1] = Some(sample_categorical(&weights, rng) as Base);
                }
            }
        }
        segments.push(Segment {
            first,
            last: d,
            kind,
            before,
            driver,
        });
        y = before;
        d = p;
    }
    segments.reverse();
    Ok(Latent {
        states: StatePath {
            initial: y,
            segments,
        },
        ancestral: AncestralSeq(ancestral),
        bonds: BondSet(bonds),
    })
}

/// Coarse state of species `m` after the segments, per its bit in `mask`.
pub fn coarse_in(mask: SpeciesMask, m: usize) -> Coarse {
    coarse_of(mask & (1 << m) != 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EmissionMix, MotifEvolution};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(n: usize, r: f64, t: f64, pwm: Pwm) -> ModelParams {
        ModelParams {
            transition: TransitionMatrix::new(r, t).unwrap(),
            mix: EmissionMix::new(vec![0.6, 0.4]).unwrap(),
            pwms: vec![pwm],
            backgrounds: BackgroundModels::new(
                [0.3, 0.2, 0.2, 0.3],
                vec![[0.25, 0.25, 0.25, 0.25]; n],
            )
            .unwrap(),
            subst: BackgroundSubstitution::new(0.06, 0.02).unwrap(),
            motif_evo: MotifEvolution::new(0.2).unwrap(),
            strands: StrandMode::Both,
        }
    }

    fn sharp_pwm() -> Pwm {
        Pwm::new(vec![[0.7, 0.1, 0.1, 0.1], [0.1, 0.1, 0.7, 0.1]]).unwrap()
    }

    #[test]
    fn aligned_background_examples() {
        let bg = BackgroundModels::uniform(2);
        let s = BackgroundSubstitution::new(0.06, 0.02).unwrap();
        let v = emission_background_aligned(&[0, 0], &bg, &s);
        assert!((v - 0.2036).abs() < 1e-12);
        let mut total = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                total += emission_background_aligned(&[a, b], &bg, &s);
            }
        }
        assert!((total - 1.0).abs() < 1e-12);
        let id = BackgroundSubstitution::new(0.0, 0.0).unwrap();
        let skew = BackgroundModels::new([0.1, 0.2, 0.3, 0.4], vec![[0.25; 4]; 2]).unwrap();
        assert!((emission_background_aligned(&[2, 2], &skew, &id) - 0.3).abs() < 1e-15);
        assert_eq!(emission_background_aligned(&[2, 1], &skew, &id), 0.0);
    }

    #[test]
    fn motif_emission_examples() {
        let pwm = Pwm::new(vec![[0.7, 0.1, 0.1, 0.1]]).unwrap();
        let evo = MotifEvolution::new(0.2).unwrap();
        let g = OrthologGroup::from_strs("g", &["A", "A"]);
        let path = AlignmentPath::from_rows(&["A", "A"]).unwrap();
        let v = emission_motif(&g, &path, 1, &pwm, &evo).unwrap();
        assert!((v - 0.6244).abs() < 1e-12);

        let single = OrthologGroup::from_strs("g", &["AG"]);
        let p1 = AlignmentPath::unaligned(&[2]).unwrap();
        let v = emission_motif(&single, &p1, 1, &sharp_pwm(), &evo).unwrap();
        assert!((v - 0.49).abs() < 1e-12);

        let g2 = OrthologGroup::from_strs("g", &["AG", "CG"]);
        let p2 = AlignmentPath::from_rows(&["AG", "CG"]).unwrap();
        let indep = MotifEvolution::new(1.0).unwrap();
        let v = emission_motif(&g2, &p2, 1, &sharp_pwm(), &indep).unwrap();
        assert!((v - 0.7 * 0.7 * 0.1 * 0.7).abs() < 1e-12);
    }

    #[test]
    fn motif_across_change_point_is_an_error() {
        let g = OrthologGroup::from_strs("g", &["AG", "CG"]);
        let p = AlignmentPath::from_rows(&["AG-", "C-G"]).unwrap();
        let evo = MotifEvolution::new(0.2).unwrap();
        assert!(matches!(
            emission_motif(&g, &p, 1, &sharp_pwm(), &evo),
            Err(Error::SiteCrossesChangePoint)
        ));
    }

    /// Textbook forward for one sequence with states {B, M0} and no motifs.
    fn two_state_forward(seq: &[Base], r: f64, t: f64, q0: f64, bg: &[f64; 4]) -> f64 {
        let pi = [t / (r + t), r / (r + t)];
        let tr = [[1.0 - r, r], [t, 1.0 - t]];
        let mut alpha = pi;
        for &x in seq {
            let e = bg[x as usize];
            let b = (alpha[0] * tr[0][0] + alpha[1] * tr[1][0]) * e;
            let m = (alpha[0] * tr[0][1] + alpha[1] * tr[1][1]) * e * q0;
            alpha = [b, m];
        }
        (alpha[0] + alpha[1]).ln()
    }

    #[test]
    fn single_species_matches_textbook_forward() {
        let g = OrthologGroup::from_strs("g", &["ACGTTGCAAC"]);
        let path = AlignmentPath::unaligned(&[10]).unwrap();
        let mut p = params(1, 0.1, 0.2, sharp_pwm());
        p.backgrounds.per_species = vec![[0.1, 0.2, 0.3, 0.4]];
        // A zero-weight motif leaves only the two-state chain.
        p.mix = EmissionMix::new(vec![1.0, 0.0]).unwrap();
        let table = forward(&g, &path, &p).unwrap();
        let want = two_state_forward(&g.seqs[0], 0.1, 0.2, 1.0, &[0.1, 0.2, 0.3, 0.4]);
        assert!((likelihood(&table) - want).abs() < 1e-12);
    }

    #[test]
    fn short_sequences_ignore_motifs() {
        let g = OrthologGroup::from_strs("g", &["A"]);
        let path = AlignmentPath::unaligned(&[1]).unwrap();
        let p = params(1, 0.1, 0.2, sharp_pwm());
        let table = forward(&g, &path, &p).unwrap();
        let want = two_state_forward(&g.seqs[0], 0.1, 0.2, 0.6, &[0.25; 4]);
        assert!((likelihood(&table) - want).abs() < 1e-12);
    }

    #[test]
    fn relabeling_motifs_keeps_likelihood() {
        let g = OrthologGroup::from_strs("g", &["ACGTAGG", "ACGAGG"]);
        let path = AlignmentPath::from_rows(&["ACGTAGG", "ACG-AGG"]).unwrap();
        let other = Pwm::new(vec![[0.1, 0.6, 0.2, 0.1]; 3]).unwrap();
        let mut a = params(2, 0.1, 0.2, sharp_pwm());
        a.pwms = vec![sharp_pwm(), other.clone()];
        a.mix = EmissionMix::new(vec![0.5, 0.3, 0.2]).unwrap();
        let mut b = a.clone();
        b.pwms = vec![other, sharp_pwm()];
        b.mix = EmissionMix::new(vec![0.5, 0.2, 0.3]).unwrap();
        let la = likelihood(&forward(&g, &path, &a).unwrap());
        let lb = likelihood(&forward(&g, &path, &b).unwrap());
        assert!((la - lb).abs() < 1e-12);
        assert!(la <= 0.0);
    }

    #[test]
    fn long_sequences_stay_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let seq: String = (0..10_000).map(|_| b"ACGT"[rng.random_range(0..4)] as char).collect();
        let g = OrthologGroup::from_strs("g", &[&seq]);
        let path = AlignmentPath::unaligned(&[seq.len()]).unwrap();
        let table = forward(&g, &path, &params(1, 0.01, 0.01, sharp_pwm())).unwrap();
        assert!(likelihood(&table).is_finite());
    }

    #[test]
    fn degenerate_transitions_force_states() {
        let g = OrthologGroup::from_strs("g", &["ACGTAGGA", "ACGAGGTT"]);
        let path = AlignmentPath::from_rows(&["ACGTAGGA--", "ACG-AGG-TT"]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);

        let p = params(2, 0.0, 0.2, sharp_pwm());
        let table = forward(&g, &path, &p).unwrap();
        for _ in 0..50 {
            let lat = backward_sample(&table, &g, &path, &p, &mut rng).unwrap();
            assert!(lat.states.segments.iter().all(|s| s.kind == SegmentKind::Background));
        }

        let mut p = params(2, 1.0, 0.0, sharp_pwm());
        p.transition = TransitionMatrix::motif_mode();
        let table = forward(&g, &path, &p).unwrap();
        for _ in 0..50 {
            let lat = backward_sample(&table, &g, &path, &p, &mut rng).unwrap();
            assert!(lat.states.segments.iter().all(|s| s.kind != SegmentKind::Background));
            lat.states.validate(&path, &p.widths()).unwrap();
        }
    }

    #[test]
    fn samples_respect_path_constraints() {
        let g = OrthologGroup::from_strs("g", &["ACGTAGGATC", "ACGAGGTTCA", "AGGTTA"]);
        let path = AlignmentPath::from_rows(&[
            "ACGTAGGA--TC",
            "ACG-AGG-TTCA",
            "----AGGTT-A-",
        ])
        .unwrap();
        let p = params(3, 0.3, 0.2, sharp_pwm());
        let table = forward(&g, &path, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let lat = backward_sample(&table, &g, &path, &p, &mut rng).unwrap();
            lat.states.validate(&path, &p.widths()).unwrap();
            for d in 1..=path.len() {
                assert_eq!(lat.ancestral.0[d - 1].is_some(), path.is_aligned(d));
                for m in mask_members(lat.bonds.0[d - 1]) {
                    let x = g.seqs[m][path.position(d, m).unwrap()];
                    assert_eq!(Some(x), lat.ancestral.0[d - 1]);
                }
            }
        }
    }
}
