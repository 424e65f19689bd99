//! Three-state pair HMM aligning one sequence to a template.

use rand::Rng;

use crate::math::{ln, log_sum_exp, sample_log_categorical};
use crate::model::{Base, BackgroundModels, BackgroundSubstitution};

/// Pair-HMM states, in the row order of the transition matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairOp {
    /// Template base with no partner.
    Deletion = 0,
    /// Sequence base with no partner.
    Insertion = 1,
    Aligned = 2,
}

const OPS: [PairOp; 3] = [PairOp::Deletion, PairOp::Insertion, PairOp::Aligned];

/// Transition matrix over (deletion, insertion, aligned).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignerConfig {
    pub transitions: [[f64; 3]; 3],
    /// Half-width of the band around the reference alignment used by the
    /// proposal; `None` searches the full lattice.
    pub band: Option<usize>,
}

impl Default for AlignerConfig {
    fn default() -> Self {
        AlignerConfig {
            transitions: [
                [0.998, 0.001, 0.001],
                [0.0, 0.998, 0.002],
                [0.025, 0.025, 0.95],
            ],
            band: Some(32),
        }
    }
}

impl AlignerConfig {
    pub fn unbanded() -> Self {
        AlignerConfig {
            band: None,
            ..AlignerConfig::default()
        }
    }

    fn log_transitions(&self) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in self.transitions.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                out[i][j] = ln(p);
            }
        }
        out
    }
}

/// Emission log-probabilities for one (template, sequence) pair.
pub(crate) struct PairScorer {
    aligned: [[f64; 5]; 5],
    template_bg: [f64; 5],
    seq_bg: [f64; 5],
    trans: [[f64; 3]; 3],
}

impl PairScorer {
    pub(crate) fn new(
        cfg: &AlignerConfig,
        backgrounds: &BackgroundModels,
        subst: &BackgroundSubstitution,
        template_species: usize,
        species: usize,
    ) -> Self {
        let mut aligned = [[0.0; 5]; 5];
        for a in 0..5u8 {
            for b in 0..5u8 {
                let p: f64 = (0..4u8)
                    .map(|z| backgrounds.ancestral[z as usize] * subst.prob(z, a) * subst.prob(z, b))
                    .sum();
                aligned[a as usize][b as usize] = ln(p);
            }
        }
        let bg = |m: usize| {
            let mut v = [0.0; 5];
            for x in 0..5u8 {
                v[x as usize] = ln(backgrounds.species_prob(m, x));
            }
            v
        };
        PairScorer {
            aligned,
            template_bg: bg(template_species),
            seq_bg: bg(species),
            trans: cfg.log_transitions(),
        }
    }

    #[inline]
    fn emit(&self, op: PairOp, t: &[Base], s: &[Base], i: usize, j: usize) -> f64 {
        match op {
            PairOp::Aligned => self.aligned[t[i - 1] as usize][s[j - 1] as usize],
            PairOp::Deletion => self.template_bg[t[i - 1] as usize],
            PairOp::Insertion => self.seq_bg[s[j - 1] as usize],
        }
    }
}

/// Allowed sequence-coordinate interval `[lo, hi]` per template row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Band {
    lo: Vec<usize>,
    hi: Vec<usize>,
}

impl Band {
    pub fn full(n: usize, m: usize) -> Self {
        Band {
            lo: vec![0; n + 1],
            hi: vec![m; n + 1],
        }
    }

    /// Band of half-width `width` around the lattice cells visited by `ops`.
    pub fn around(ops: &[PairOp], n: usize, m: usize, width: usize) -> Self {
        let mut lo = vec![usize::MAX; n + 1];
        let mut hi = vec![0; n + 1];
        let (mut i, mut j) = (0, 0);
        lo[0] = 0;
        for &op in ops {
            match op {
                PairOp::Aligned => {
                    i += 1;
                    j += 1;
                }
                PairOp::Deletion => i += 1,
                PairOp::Insertion => j += 1,
            }
            lo[i] = lo[i].min(j);
            hi[i] = hi[i].max(j);
        }
        for r in 0..=n {
            lo[r] = lo[r].saturating_sub(width);
            hi[r] = (hi[r] + width).min(m);
        }
        Band { lo, hi }
    }

    #[inline]
    fn contains(&self, i: usize, j: usize) -> bool {
        j >= self.lo[i] && j <= self.hi[i]
    }
}

/// Forward matrix of the pair HMM restricted to a band. Rows hold linear
/// values relative to a per-row log scale.
pub(crate) struct PairForward {
    rows: Vec<Vec<[f64; 3]>>,
    scale: Vec<f64>,
    lo: Vec<usize>,
    n: usize,
    m: usize,
    pub(crate) log_total: f64,
}

impl PairForward {
    /// Log forward values of cell `(i, j)`.
    #[inline]
    fn get(&self, i: usize, j: usize) -> Option<[f64; 3]> {
        let lo = self.lo[i];
        if j < lo {
            return None;
        }
        let c = self.rows[i].get(j - lo)?;
        Some([0, 1, 2].map(|s| ln(c[s]) + self.scale[i]))
    }
}

pub(crate) fn pair_forward(t: &[Base], s: &[Base], scorer: &PairScorer, band: &Band) -> PairForward {
    let (n, m) = (t.len(), s.len());
    let tr = scorer.trans.map(|row| row.map(f64::exp));
    let aligned = scorer.aligned.map(|row| row.map(f64::exp));
    let del = scorer.template_bg.map(f64::exp);
    let ins = scorer.seq_bg.map(f64::exp);
    let into = |prev: &[f64; 3], op: usize| prev[0] * tr[0][op] + prev[1] * tr[1][op] + prev[2] * tr[2][op];

    let mut rows: Vec<Vec<[f64; 3]>> = Vec::with_capacity(n + 1);
    let mut scale = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let (lo, hi) = (band.lo[i], band.hi[i]);
        let mut row = vec![[0.0; 3]; hi + 1 - lo];
        for j in lo..=hi {
            if i == 0 && j == 0 {
                row[0][PairOp::Aligned as usize] = 1.0;
                continue;
            }
            let mut cell = [0.0; 3];
            if i > 0 && j > 0 && band.contains(i - 1, j - 1) {
                let prev = &rows[i - 1][j - 1 - band.lo[i - 1]];
                cell[2] = into(prev, 2) * aligned[t[i - 1] as usize][s[j - 1] as usize];
            }
            if i > 0 && band.contains(i - 1, j) {
                let prev = &rows[i - 1][j - band.lo[i - 1]];
                cell[0] = into(prev, 0) * del[t[i - 1] as usize];
            }
            if j > lo {
                cell[1] = into(&row[j - 1 - lo], 1) * ins[s[j - 1] as usize];
            }
            row[j - lo] = cell;
        }
        let prev_scale = if i == 0 { 0.0 } else { scale[i - 1] };
        let max = row.iter().flatten().copied().fold(0.0, f64::max);
        if max > 0.0 {
            row.iter_mut().flatten().for_each(|v| *v /= max);
            scale.push(prev_scale + max.ln());
        } else {
            scale.push(prev_scale);
        }
        rows.push(row);
    }
    let mut fw = PairForward {
        rows,
        scale,
        lo: band.lo.clone(),
        n,
        m,
        log_total: 0.0,
    };
    if n > 0 || m > 0 {
        fw.log_total = fw
            .get(n, m)
            .map(|end| log_sum_exp(&end))
            .unwrap_or(f64::NEG_INFINITY);
    }
    fw
}

/// Stochastic traceback. Returns the operations in alignment order.
pub(crate) fn pair_sample<R: Rng + ?Sized>(fw: &PairForward, scorer: &PairScorer, rng: &mut R) -> Vec<PairOp> {
    let (mut i, mut j) = (fw.n, fw.m);
    let mut ops = Vec::with_capacity(fw.n + fw.m);
    if i == 0 && j == 0 {
        return ops;
    }
    let end = fw.get(i, j).expect("end cell inside band");
    let mut state = OPS[sample_log_categorical(&end, rng)];
    loop {
        ops.push(state);
        let (pi, pj) = match state {
            PairOp::Aligned => (i - 1, j - 1),
            PairOp::Deletion => (i - 1, j),
            PairOp::Insertion => (i, j - 1),
        };
        if pi == 0 && pj == 0 {
            break;
        }
        let prev = fw.get(pi, pj).expect("predecessor inside band");
        let weights: Vec<f64> = (0..3)
            .map(|s| prev[s] + scorer.trans[s][state as usize])
            .collect();
        state = OPS[sample_log_categorical(&weights, rng)];
        i = pi;
        j = pj;
    }
    ops.reverse();
    ops
}

/// Joint log-probability of an operation sequence and both sequences, split
/// into (transition part, emission part). `-inf` if it leaves the band.
pub(crate) fn pair_path_log_prob(
    ops: &[PairOp],
    t: &[Base],
    s: &[Base],
    scorer: &PairScorer,
    band: Option<&Band>,
) -> (f64, f64) {
    let (mut i, mut j) = (0, 0);
    let mut prev = PairOp::Aligned;
    let (mut trans, mut emit) = (0.0, 0.0);
    for &op in ops {
        match op {
            PairOp::Aligned => {
                i += 1;
                j += 1;
            }
            PairOp::Deletion => i += 1,
            PairOp::Insertion => j += 1,
        }
        if let Some(b) = band {
            if !b.contains(i, j) {
                return (f64::NEG_INFINITY, f64::NEG_INFINITY);
            }
        }
        trans += scorer.trans[prev as usize][op as usize];
        emit += scorer.emit(op, t, s, i, j);
        prev = op;
    }
    (trans, emit)
}

/// Most probable operation sequence over the full lattice. Keeps only
/// two score rows plus one byte of traceback per state and cell.
pub(crate) fn pair_viterbi(t: &[Base], s: &[Base], scorer: &PairScorer) -> Vec<PairOp> {
    let (n, m) = (t.len(), s.len());
    let neg = f64::NEG_INFINITY;
    let tr = &scorer.trans;
    let mut back = vec![[0u8; 3]; (n + 1) * (m + 1)];
    let mut prev_row = vec![[neg; 3]; m + 1];
    let mut row = vec![[neg; 3]; m + 1];
    let best = |cell: &[f64; 3], to: usize| -> (f64, u8) {
        // Ties go to aligned, then deletion, then insertion.
        let mut arg = 2u8;
        let mut v = cell[2] + tr[2][to];
        for s in [0usize, 1] {
            let c = cell[s] + tr[s][to];
            if c > v {
                v = c;
                arg = s as u8;
            }
        }
        (v, arg)
    };
    for i in 0..=n {
        for j in 0..=m {
            let mut cell = [neg; 3];
            if i == 0 && j == 0 {
                cell[2] = 0.0;
                row[j] = cell;
                continue;
            }
            let idx = i * (m + 1) + j;
            if i > 0 && j > 0 {
                let (v, a) = best(&prev_row[j - 1], 2);
                cell[2] = v + scorer.emit(PairOp::Aligned, t, s, i, j);
                back[idx][2] = a;
            }
            if i > 0 {
                let (v, a) = best(&prev_row[j], 0);
                cell[0] = v + scorer.emit(PairOp::Deletion, t, s, i, j);
                back[idx][0] = a;
            }
            if j > 0 {
                let (v, a) = best(&row[j - 1], 1);
                cell[1] = v + scorer.emit(PairOp::Insertion, t, s, i, j);
                back[idx][1] = a;
            }
            row[j] = cell;
        }
        std::mem::swap(&mut prev_row, &mut row);
    }
    let mut ops = Vec::with_capacity(n + m);
    if n == 0 && m == 0 {
        return ops;
    }
    let end = &prev_row[m];
    let mut state = 2usize;
    for s in [0usize, 1] {
        if end[s] > end[state] {
            state = s;
        }
    }
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        ops.push(OPS[state]);
        let from = back[i * (m + 1) + j][state] as usize;
        match OPS[state] {
            PairOp::Aligned => {
                i -= 1;
                j -= 1;
            }
            PairOp::Deletion => i -= 1,
            PairOp::Insertion => j -= 1,
        }
        state = from;
    }
    ops.reverse();
    ops
}

/// Canonical operations for a set of matched `(template, sequence)` position
/// pairs (1-based): deletions before insertions inside every gap.
pub(crate) fn ops_from_matches(matches: &[(usize, usize)], n: usize, m: usize) -> Vec<PairOp> {
    let mut ops = Vec::with_capacity(n + m);
    let (mut pi, mut pj) = (0, 0);
    for &(i, j) in matches.iter().chain(std::iter::once(&(n + 1, m + 1))) {
        ops.extend(std::iter::repeat_n(PairOp::Deletion, i - pi - 1));
        ops.extend(std::iter::repeat_n(PairOp::Insertion, j - pj - 1));
        if i <= n {
            ops.push(PairOp::Aligned);
        }
        pi = i;
        pj = j;
    }
    ops
}
