//! Model parameters and the elementary probability kernels.
//!
//! Bases are stored as small integer codes: `A=0, C=1, G=2, T=3` and `N=4`.
//! An `N` is treated as missing data: it has probability one under every
//! background distribution and motif column and contributes no counts.

use crate::error::{Error, Result};

pub type Base = u8;

pub const A: Base = 0;
pub const C: Base = 1;
pub const G: Base = 2;
pub const T: Base = 3;
pub const N: Base = 4;

const STOCHASTIC_TOL: f64 = 1e-12;

/// Encode an ASCII nucleotide (either case). Returns `None` for anything
/// outside `ACGTN`.
pub fn encode_base(ch: u8) -> Option<Base> {
    match ch {
        b'A' | b'a' => Some(A),
        b'C' | b'c' => Some(C),
        b'G' | b'g' => Some(G),
        b'T' | b't' => Some(T),
        b'N' | b'n' => Some(N),
        _ => None,
    }
}

pub fn decode_base(b: Base) -> char {
    match b {
        A => 'A',
        C => 'C',
        G => 'G',
        T => 'T',
        _ => 'N',
    }
}

#[inline]
pub fn complement(b: Base) -> Base {
    if b < 4 {
        3 - b
    } else {
        N
    }
}

/// Purine/purine or pyrimidine/pyrimidine change (A<->G, C<->T).
#[inline]
pub fn is_transition(a: Base, b: Base) -> bool {
    a != b && (a ^ b) == 2
}

fn check_stochastic(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|&p| !(0.0..=1.0).contains(&p) || p.is_nan()) {
        return Err(Error::InvalidParameter(format!(
            "{what} has entries outside [0, 1]"
        )));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidParameter(format!("{what} sums to {s}")));
    }
    Ok(())
}

/// Rescale a nonnegative vector to sum to one.
pub fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        for x in v.iter_mut() {
            *x /= s;
        }
    }
}

/// Coarse hidden state of one sequence position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Coarse {
    Background,
    Module,
}

/// Two-state module chain: `T(B,M) = r`, `T(M,B) = t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionMatrix {
    pub r: f64,
    pub t: f64,
}

impl TransitionMatrix {
    pub fn new(r: f64, t: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&r) || !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidParameter(format!(
                "transition probabilities out of range: r={r}, t={t}"
            )));
        }
        Ok(TransitionMatrix { r, t })
    }

    /// Motif mode: every position is inside a module (`r = 1 - t = 1`).
    pub fn motif_mode() -> Self {
        TransitionMatrix { r: 1.0, t: 0.0 }
    }

    pub fn prob(&self, from: Coarse, to: Coarse) -> f64 {
        transition_prob(from, to, self)
    }
}

pub fn transition_prob(from: Coarse, to: Coarse, tm: &TransitionMatrix) -> f64 {
    match (from, to) {
        (Coarse::Background, Coarse::Background) => 1.0 - tm.r,
        (Coarse::Background, Coarse::Module) => tm.r,
        (Coarse::Module, Coarse::Background) => tm.t,
        (Coarse::Module, Coarse::Module) => 1.0 - tm.t,
    }
}

/// Transition into a node with several parents: the plain average of the
/// single-parent transitions.
pub fn multi_parent_transition(
    parents: &[Coarse],
    to: Coarse,
    tm: &TransitionMatrix,
) -> Result<f64> {
    if parents.is_empty() {
        return Err(Error::EmptyParents);
    }
    let n_module = parents.iter().filter(|&&p| p == Coarse::Module).count() as f64;
    let n_background = parents.len() as f64 - n_module;
    Ok((n_background * transition_prob(Coarse::Background, to, tm)
        + n_module * transition_prob(Coarse::Module, to, tm))
        / parents.len() as f64)
}

/// Mixture weights `q_0..q_K` over within-module background and the K motifs.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionMix(Vec<f64>);

impl EmissionMix {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if q.len() < 2 {
            return Err(Error::InvalidParameter(
                "emission mix needs at least one motif".into(),
            ));
        }
        check_stochastic(&q, "emission mix")?;
        Ok(EmissionMix(q))
    }

    pub fn uniform(n_motifs: usize) -> Self {
        EmissionMix(vec![1.0 / (n_motifs + 1) as f64; n_motifs + 1])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn n_motifs(&self) -> usize {
        self.0.len() - 1
    }
}

/// Position-specific weight matrix; one probability vector over `ACGT` per column.
#[derive(Debug, Clone, PartialEq)]
pub struct Pwm {
    columns: Vec<[f64; 4]>,
}

impl Pwm {
    pub fn new(columns: Vec<[f64; 4]>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidParameter("PWM has zero width".into()));
        }
        for (i, c) in columns.iter().enumerate() {
            check_stochastic(c, &format!("PWM column {}", i + 1))?;
        }
        Ok(Pwm { columns })
    }

    /// Build from arbitrary nonnegative weights, normalizing each column.
    pub fn from_weights(mut columns: Vec<[f64; 4]>) -> Result<Self> {
        for c in &mut columns {
            normalize(c);
        }
        Pwm::new(columns)
    }

    pub fn uniform(width: usize) -> Self {
        Pwm {
            columns: vec![[0.25; 4]; width],
        }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[[f64; 4]] {
        &self.columns
    }

    pub fn column(&self, i: usize) -> &[f64; 4] {
        &self.columns[i]
    }

    /// Matrix of the opposite strand.
    pub fn reverse_complement(&self) -> Pwm {
        let columns = self
            .columns
            .iter()
            .rev()
            .map(|c| [c[3], c[2], c[1], c[0]])
            .collect();
        Pwm { columns }
    }
}

/// Ancestral and per-species background base distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundModels {
    pub ancestral: [f64; 4],
    pub per_species: Vec<[f64; 4]>,
}

impl BackgroundModels {
    pub fn new(ancestral: [f64; 4], per_species: Vec<[f64; 4]>) -> Result<Self> {
        check_stochastic(&ancestral, "ancestral background")?;
        for (m, p) in per_species.iter().enumerate() {
            check_stochastic(p, &format!("background of species {}", m + 1))?;
        }
        Ok(BackgroundModels {
            ancestral,
            per_species,
        })
    }

    pub fn uniform(n_species: usize) -> Self {
        BackgroundModels {
            ancestral: [0.25; 4],
            per_species: vec![[0.25; 4]; n_species],
        }
    }

    /// Probability of base `x` under species `m`'s background (1 for `N`).
    #[inline]
    pub fn species_prob(&self, m: usize, x: Base) -> f64 {
        if x < 4 {
            self.per_species[m][x as usize]
        } else {
            1.0
        }
    }
}

/// Neutral substitution kernel with transition rate `alpha` and transversion
/// rate `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundSubstitution {
    pub alpha: f64,
    pub beta: f64,
}

impl BackgroundSubstitution {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let s = BackgroundSubstitution { alpha, beta };
        s.validate()?;
        Ok(s)
    }

    /// `alpha = 3 beta` split of a total background mutation rate.
    pub fn from_rate(mu_b: f64) -> Result<Self> {
        BackgroundSubstitution::new(0.6 * mu_b, 0.2 * mu_b)
    }

    fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 || self.mu_b() >= 1.0 || self.mu_b().is_nan() {
            return Err(Error::InvalidParameter(format!(
                "substitution rates need alpha, beta >= 0 and alpha + 2 beta < 1 (alpha={}, beta={})",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    pub fn mu_b(&self) -> f64 {
        self.alpha + 2.0 * self.beta
    }

    /// `Φ(z, x)`; an `N` descendant has probability one.
    #[inline]
    pub fn prob(&self, z: Base, x: Base) -> f64 {
        if x >= 4 {
            1.0
        } else if z == x {
            1.0 - self.mu_b()
        } else if is_transition(z, x) {
            self.alpha
        } else {
            self.beta
        }
    }
}

/// The 4×4 substitution matrix, rows and columns ordered `A, C, G, T`.
pub fn substitution_matrix(subst: &BackgroundSubstitution) -> Result<[[f64; 4]; 4]> {
    subst.validate()?;
    let mut m = [[0.0; 4]; 4];
    for (z, row) in m.iter_mut().enumerate() {
        for (x, v) in row.iter_mut().enumerate() {
            *v = subst.prob(z as Base, x as Base);
        }
    }
    Ok(m)
}

/// Probability that a descendant motif base is an independent redraw from
/// its column rather than a copy of the ancestor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotifEvolution {
    pub mu_f: f64,
}

impl MotifEvolution {
    pub fn new(mu_f: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&mu_f) {
            return Err(Error::InvalidParameter(format!("mu_f={mu_f} outside [0, 1]")));
        }
        Ok(MotifEvolution { mu_f })
    }
}

/// `P(x | z) = (1 - mu_f) 1(x = z) + mu_f column(x)`.
#[inline]
pub fn motif_descendant_prob(x: Base, z: Base, evo: &MotifEvolution, column: &[f64; 4]) -> f64 {
    if x >= 4 {
        return 1.0;
    }
    let keep = if x == z { 1.0 - evo.mu_f } else { 0.0 };
    keep + evo.mu_f * column[x as usize]
}

/// Which strands motif sites may occupy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrandMode {
    Both,
    ForwardOnly,
}

/// The full parameter set of the coupled model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub transition: TransitionMatrix,
    pub mix: EmissionMix,
    pub pwms: Vec<Pwm>,
    pub backgrounds: BackgroundModels,
    pub subst: BackgroundSubstitution,
    pub motif_evo: MotifEvolution,
    pub strands: StrandMode,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.pwms.is_empty() {
            return Err(Error::InvalidParameter("at least one motif is required".into()));
        }
        if self.mix.n_motifs() != self.pwms.len() {
            return Err(Error::InvalidParameter(format!(
                "emission mix has {} motif weights but {} PWMs were given",
                self.mix.n_motifs(),
                self.pwms.len()
            )));
        }
        TransitionMatrix::new(self.transition.r, self.transition.t)?;
        self.subst.validate()?;
        MotifEvolution::new(self.motif_evo.mu_f)?;
        Ok(())
    }

    pub fn n_motifs(&self) -> usize {
        self.pwms.len()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.pwms.iter().map(Pwm::width).collect()
    }

    pub fn n_species(&self) -> usize {
        self.backgrounds.per_species.len()
    }
}

/// Prior settings. All Dirichlet and Beta priors are flat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Priors {
    pub width_lambda: f64,
    pub width_min: usize,
    pub width_max: usize,
}

impl Default for Priors {
    fn default() -> Self {
        Priors {
            width_lambda: 10.0,
            width_min: 6,
            width_max: 15,
        }
    }
}

impl Priors {
    pub fn new(width_lambda: f64, width_min: usize, width_max: usize) -> Result<Self> {
        if width_min < 1 || width_min > width_max {
            return Err(Error::InvalidParameter(format!(
                "width range [{width_min}, {width_max}] is empty"
            )));
        }
        if width_lambda <= 0.0 {
            return Err(Error::InvalidParameter("width prior mean must be positive".into()));
        }
        Ok(Priors {
            width_lambda,
            width_min,
            width_max,
        })
    }

    /// Initial width: the prior mean rounded and clipped to range.
    pub fn initial_width(&self) -> usize {
        (self.width_lambda.round() as usize).clamp(self.width_min, self.width_max)
    }

    /// `ln π(w + 1) - ln π(w)` under the Poisson prior.
    pub fn ln_width_ratio_up(&self, w: usize) -> f64 {
        (self.width_lambda / (w as f64 + 1.0)).ln()
    }
}

/// Laplace-smoothed base frequencies (pseudo-count 1) of a set of sequences.
pub fn estimate_background<'a, I>(seqs: I) -> [f64; 4]
where
    I: IntoIterator<Item = &'a [Base]>,
{
    let mut counts = [1.0f64; 4];
    for s in seqs {
        for &b in s {
            if b < 4 {
                counts[b as usize] += 1.0;
            }
        }
    }
    normalize(&mut counts);
    counts
}
