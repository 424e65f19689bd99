//! The sampler: chain state, plain and collapsed sweeps, independent runs,
//! and fixed-parameter scanning.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::alignment::{initial_alignment, mh_alignment_step, AlignerConfig, AlignmentPath, ProposalFrame};
use crate::data::Dataset;
use crate::dp::{backward_sample, forward, likelihood, Latent, SegmentKind};
use crate::error::{Error, Result};
use crate::model::{
    BackgroundModels, BackgroundSubstitution, EmissionMix, ModelParams, MotifEvolution, Priors, StrandMode,
    TransitionMatrix,
};
use crate::params::{
    collect_stats, posterior_mean_parameters, sample_parameters, width_mh_step, FixedParams, SuffStats,
    WidthLikelihood,
};
use crate::posterior::{
    combined_prediction, estimate_width, predict, CombinedPrediction, PositionPosterior, Prediction,
    WidthHistogram,
};

/// Run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub n_motifs: usize,
    /// Expected module length in bp; the module exit probability is its inverse.
    pub module_length: f64,
    pub iterations: usize,
    pub burn_in_fraction: f64,
    /// Leading fraction of the iterations run in motif mode before module
    /// structure is switched on. Must not exceed the burn-in fraction.
    pub warm_start_fraction: f64,
    /// Per-group probability of an alignment update in each sweep.
    pub update_align_prob: f64,
    pub motif_mode: bool,
    pub collapsed: bool,
    pub priors: Priors,
    pub strands: StrandMode,
    pub seed: u64,
    pub runs: usize,
    pub threshold: f64,
    pub aligner: AlignerConfig,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_motifs: 3,
            module_length: 100.0,
            iterations: 2000,
            burn_in_fraction: 0.5,
            warm_start_fraction: 0.25,
            update_align_prob: 0.2,
            motif_mode: false,
            collapsed: true,
            priors: Priors::default(),
            strands: StrandMode::Both,
            seed: 1,
            runs: 1,
            threshold: 0.5,
            aligner: AlignerConfig::default(),
        }
    }
}

impl SamplerConfig {
    pub fn burn_in(&self) -> usize {
        (self.iterations as f64 * self.burn_in_fraction).floor() as usize
    }

    /// Sweeps run in motif mode; zero when motif mode is already on.
    pub fn warm_start(&self) -> usize {
        if self.motif_mode {
            0
        } else {
            (self.iterations as f64 * self.warm_start_fraction).floor() as usize
        }
    }

    /// Leading sweeps, in either mode, that keep the mixture weights at
    /// their starting values so sparse motifs are not emptied before their
    /// matrices take shape.
    pub fn mix_hold(&self) -> usize {
        (self.iterations as f64 * self.warm_start_fraction).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.n_motifs == 0 {
            return bad("at least one motif is required");
        }
        if !self.motif_mode && !(self.module_length >= 1.0) {
            return bad("module length must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.update_align_prob) {
            return bad("alignment update probability must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return bad("burn-in fraction must lie in [0, 1)");
        }
        if !(0.0..=self.burn_in_fraction).contains(&self.warm_start_fraction) {
            return bad("warm-start fraction must lie in [0, burn-in fraction]");
        }
        if self.iterations <= self.burn_in() {
            return bad("no samples remain after burn-in");
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return bad("threshold must lie in [0, 1)");
        }
        if self.runs == 0 {
            return bad("at least one run is required");
        }
        Priors::new(self.priors.width_lambda, self.priors.width_min, self.priors.width_max)
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn fixed(&self, dataset: &Dataset) -> FixedParams {
        self.fixed_in_mode(dataset, self.motif_mode)
    }

    fn fixed_in_mode(&self, dataset: &Dataset, motif_mode: bool) -> FixedParams {
        FixedParams {
            t: if motif_mode { 0.0 } else { 1.0 / self.module_length },
            motif_mode,
            species_backgrounds: dataset.species_backgrounds(),
            strands: self.strands,
        }
    }
}

/// Values reported after each sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceLine {
    pub iteration: usize,
    pub log_likelihood: f64,
    pub widths: Vec<usize>,
    pub r: f64,
    pub mu_f: f64,
    pub mu_b: f64,
}

impl fmt::Display for TraceLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let widths: Vec<String> = self.widths.iter().map(|w| w.to_string()).collect();
        write!(
            f,
            "{}\t{:.4}\t{}\t{:.6}\t{:.6}\t{:.6}",
            self.iteration,
            self.log_likelihood,
            widths.join(","),
            self.r,
            self.mu_f,
            self.mu_b
        )
    }
}

/// Everything the sampler carries between sweeps.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub paths: Vec<AlignmentPath>,
    pub latents: Vec<Latent>,
    pub frames: Vec<ProposalFrame>,
    pub stats: Vec<SuffStats>,
    pub total: SuffStats,
    pub params: ModelParams,
    /// Fixed values in effect for the current sweep.
    pub fixed: FixedParams,
    /// Fixed values once any warm start is over.
    target: FixedParams,
    start_mix: EmissionMix,
    hold_mix: bool,
    pub iteration: usize,
    rng: ChaCha8Rng,
}

/// Fixed rates used to build the starting alignments.
pub fn alignment_substitution() -> BackgroundSubstitution {
    BackgroundSubstitution::new(0.06, 0.02).expect("valid rates")
}

fn starting_paths(dataset: &Dataset, aligner: &AlignerConfig) -> Result<Vec<AlignmentPath>> {
    let bg = BackgroundModels::new(dataset.pooled_background(), dataset.species_backgrounds())?;
    let subst = alignment_substitution();
    dataset
        .groups
        .iter()
        .map(|g| initial_alignment(g, aligner, &bg, &subst))
        .collect()
}

/// Background mutation rate matching the pairwise mismatch fraction of the
/// aligned columns, clamped to a usable range.
fn aligned_divergence(dataset: &Dataset, paths: &[AlignmentPath]) -> f64 {
    let (mut pairs, mut diff) = (0u64, 0u64);
    for (g, path) in dataset.groups.iter().zip(paths) {
        for d in 1..=path.len() {
            let bases: Vec<u8> = (0..g.n_species())
                .filter_map(|m| path.position(d, m).map(|p| g.seqs[m][p]))
                .filter(|&b| b < 4)
                .collect();
            for (i, a) in bases.iter().enumerate() {
                for b in &bases[i + 1..] {
                    pairs += 1;
                    diff += u64::from(a != b);
                }
            }
        }
    }
    if pairs == 0 {
        return 0.1;
    }
    // With alpha = 3 beta, two descendants of one ancestor differ with
    // probability 2 mu - 1.44 mu^2.
    let p = (diff as f64 / pairs as f64).min(0.69);
    let mu = (2.0 - (4.0 - 5.76 * p).sqrt()) / 2.88;
    mu.clamp(0.005, 0.5)
}

/// Weight matrices and the module transition drawn from their priors; the
/// substitution rates estimated from the starting alignments, motif columns
/// evolving at the background rate, and a sparse site mixture.
fn starting_parameters<R: Rng + ?Sized>(
    dataset: &Dataset,
    paths: &[AlignmentPath],
    widths: &[usize],
    fixed: &FixedParams,
    rng: &mut R,
) -> Result<ModelParams> {
    let mut params = sample_parameters(&SuffStats::empty(widths), 0.5, fixed, rng)?;
    let mu_b = aligned_divergence(dataset, paths);
    params.subst = BackgroundSubstitution::from_rate(mu_b)?;
    params.motif_evo = MotifEvolution::new(mu_b)?;
    params.backgrounds.ancestral = dataset.pooled_background();
    let k = widths.len();
    let mut q = vec![STARTING_SITE_WEIGHT / k as f64; k + 1];
    q[0] = 1.0 - STARTING_SITE_WEIGHT;
    params.mix = EmissionMix::new(q)?;
    Ok(params)
}

/// Total mixture weight of the motifs in the starting parameters.
const STARTING_SITE_WEIGHT: f64 = 0.01;

impl ChainState {
    /// Build the starting alignments, set starting parameters and draw the
    /// latent states from their conditional given those parameters.
    pub fn new(dataset: &Dataset, cfg: &SamplerConfig, seed: u64) -> Result<Self> {
        let paths = starting_paths(dataset, &cfg.aligner)?;
        Self::with_paths(dataset, cfg, seed, paths)
    }

    /// As [`ChainState::new`] with given starting alignments.
    pub fn with_paths(dataset: &Dataset, cfg: &SamplerConfig, seed: u64, paths: Vec<AlignmentPath>) -> Result<Self> {
        cfg.validate()?;
        if dataset.groups.is_empty() {
            return Err(Error::Config("dataset has no ortholog groups".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = cfg.fixed(dataset);
        let fixed = if cfg.warm_start() > 0 {
            cfg.fixed_in_mode(dataset, true)
        } else {
            target.clone()
        };
        let widths = vec![cfg.priors.initial_width(); cfg.n_motifs];
        let params = starting_parameters(dataset, &paths, &widths, &fixed, &mut rng)?;
        let start_mix = params.mix.clone();
        let frames = dataset
            .groups
            .iter()
            .zip(&paths)
            .map(|(g, p)| ProposalFrame::new(g, p, &cfg.aligner))
            .collect();
        let mut latents = Vec::with_capacity(paths.len());
        let mut stats = Vec::with_capacity(paths.len());
        let mut total = SuffStats::empty(&widths);
        for (g, path) in dataset.groups.iter().zip(&paths) {
            let table = forward(g, path, &params)?;
            let lat = backward_sample(&table, g, path, &params, &mut rng)?;
            let st = collect_stats(&lat, path, g, &widths)?;
            total.merge(&st)?;
            latents.push(lat);
            stats.push(st);
        }
        Ok(ChainState {
            paths,
            latents,
            frames,
            stats,
            total,
            params,
            start_mix,
            hold_mix: false,
            fixed,
            target,
            iteration: 0,
            rng,
        })
    }

    pub fn widths(&self) -> Vec<usize> {
        self.params.widths()
    }

    fn recollect(&mut self, dataset: &Dataset) -> Result<()> {
        let widths = self.params.widths();
        let mut total = SuffStats::empty(&widths);
        for (i, g) in dataset.groups.iter().enumerate() {
            self.stats[i] = collect_stats(&self.latents[i], &self.paths[i], g, &widths)?;
            total.merge(&self.stats[i])?;
        }
        self.total = total;
        Ok(())
    }

    fn width_moves(&mut self, dataset: &Dataset, cfg: &SamplerConfig, params: &mut ModelParams) -> Result<()> {
        let mut changed = false;
        for k in 0..cfg.n_motifs {
            let out = width_mh_step(
                k,
                &dataset.groups,
                &self.paths,
                &mut self.latents,
                params,
                &cfg.priors,
                WidthLikelihood::Full,
                &mut self.rng,
            )?;
            changed |= out.accepted;
        }
        if changed {
            self.params.pwms = params.pwms.clone();
            self.recollect(dataset)?;
        }
        Ok(())
    }

    /// Alignment update with probability `u`, then a fresh latent draw, for group `i`.
    fn update_group(&mut self, dataset: &Dataset, cfg: &SamplerConfig, i: usize, params: &ModelParams) -> Result<f64> {
        let g = &dataset.groups[i];
        let table = if self.rng.random::<f64>() < cfg.update_align_prob {
            let step = mh_alignment_step(
                &self.paths[i],
                None,
                params,
                g,
                &self.frames[i],
                &cfg.aligner,
                &mut self.rng,
            )?;
            self.paths[i] = step.path;
            step.table
        } else {
            forward(g, &self.paths[i], params)?
        };
        self.latents[i] = backward_sample(&table, g, &self.paths[i], params, &mut self.rng)?;
        Ok(likelihood(&table))
    }

    fn trace(&self, log_likelihood: f64) -> TraceLine {
        TraceLine {
            iteration: self.iteration,
            log_likelihood,
            widths: self.params.widths(),
            r: self.params.transition.r,
            mu_f: self.params.motif_evo.mu_f,
            mu_b: self.params.subst.mu_b(),
        }
    }

    /// Parameters and widths, then alignments, then latent states.
    pub fn sweep(&mut self, dataset: &Dataset, cfg: &SamplerConfig) -> Result<TraceLine> {
        let mut params = self.params.clone();
        self.width_moves(dataset, cfg, &mut params)?;
        self.params = sample_parameters(&self.total, self.params.transition.r, &self.fixed, &mut self.rng)?;
        if self.hold_mix {
            self.params.mix = self.start_mix.clone();
        }
        let params = self.params.clone();
        let widths = params.widths();
        let mut ll = 0.0;
        let mut total = SuffStats::empty(&widths);
        for i in 0..dataset.groups.len() {
            ll += self.update_group(dataset, cfg, i, &params)?;
            self.stats[i] = collect_stats(&self.latents[i], &self.paths[i], &dataset.groups[i], &widths)?;
            total.merge(&self.stats[i])?;
        }
        self.total = total;
        self.iteration += 1;
        Ok(self.trace(ll))
    }

    /// Gene by gene, with parameters replaced by their posterior means given
    /// every other gene.
    pub fn collapsed_sweep(&mut self, dataset: &Dataset, cfg: &SamplerConfig) -> Result<TraceLine> {
        let mut pooled = posterior_mean_parameters(&self.total, &self.fixed)?;
        self.width_moves(dataset, cfg, &mut pooled)?;
        let widths = self.params.widths();
        let mut ll = 0.0;
        for i in 0..dataset.groups.len() {
            let mut rest = self.total.clone();
            rest.subtract(&self.stats[i])?;
            let mut psi = posterior_mean_parameters(&rest, &self.fixed)?;
            if self.hold_mix {
                psi.mix = self.start_mix.clone();
            }
            ll += self.update_group(dataset, cfg, i, &psi)?;
            self.stats[i] = collect_stats(&self.latents[i], &self.paths[i], &dataset.groups[i], &widths)?;
            rest.merge(&self.stats[i])?;
            self.total = rest;
        }
        debug_assert!({
            let mut t = SuffStats::empty(&widths);
            self.stats.iter().for_each(|s| t.merge(s).unwrap());
            t == self.total
        });
        self.params = posterior_mean_parameters(&self.total, &self.fixed)?;
        if self.hold_mix {
            self.params.mix = self.start_mix.clone();
        }
        self.iteration += 1;
        Ok(self.trace(ll))
    }

    /// Leave the warm start: wrap every sampled site in module background
    /// of radius `L / 2` and turn everything else into background.
    fn enter_module_mode(&mut self, dataset: &Dataset, cfg: &SamplerConfig) -> Result<()> {
        self.fixed = self.target.clone();
        let radius = (cfg.module_length / 2.0).round() as usize;
        for (lat, path) in self.latents.iter_mut().zip(&self.paths) {
            enclose_sites(lat, path, radius);
        }
        self.recollect(dataset)?;
        self.params.transition = self.fixed_transition()?;
        Ok(())
    }

    fn fixed_transition(&self) -> Result<TransitionMatrix> {
        let t = &self.total;
        let r = (t.bm as f64 + 1.0) / ((t.bm + t.bb) as f64 + 2.0);
        TransitionMatrix::new(r, self.fixed.t)
    }

    pub fn step(&mut self, dataset: &Dataset, cfg: &SamplerConfig) -> Result<TraceLine> {
        if self.fixed != self.target && self.iteration >= cfg.warm_start() {
            self.enter_module_mode(dataset, cfg)?;
        }
        self.hold_mix = self.iteration < cfg.mix_hold();
        if cfg.collapsed {
            self.collapsed_sweep(dataset, cfg)
        } else {
            self.sweep(dataset, cfg)
        }
    }
}

fn enclose_sites(latent: &mut Latent, path: &AlignmentPath, radius: usize) {
    let len = path.len();
    let mut near = vec![false; len + 1];
    for site in latent.sites() {
        let lo = site.first.saturating_sub(radius).max(1);
        let hi = (site.last + radius).min(len);
        near[lo..=hi].iter_mut().for_each(|v| *v = true);
    }
    let states = &mut latent.states;
    states.initial = 0;
    for seg in &mut states.segments {
        if !matches!(seg.kind, SegmentKind::Motif { .. }) {
            seg.kind = if near[seg.first] {
                SegmentKind::ModuleBackground
            } else {
                SegmentKind::Background
            };
        }
    }
    states.refresh_before(path);
}

/// Output of one chain.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    pub posterior: PositionPosterior,
    pub widths: WidthHistogram,
    pub params: ModelParams,
    pub trace: Vec<TraceLine>,
    pub prediction: Prediction,
}

/// Run one chain and summarize the samples after burn-in.
pub fn run_chain(dataset: &Dataset, cfg: &SamplerConfig, seed: u64) -> Result<RunResult> {
    run_chain_from(dataset, cfg, ChainState::new(dataset, cfg, seed)?, seed)
}

/// As [`run_chain`] from a prepared state.
pub fn run_chain_from(dataset: &Dataset, cfg: &SamplerConfig, mut state: ChainState, seed: u64) -> Result<RunResult> {
    cfg.validate()?;
    let burn = cfg.burn_in();
    let mut posterior = PositionPosterior::new(&dataset.groups, cfg.n_motifs);
    let mut widths = WidthHistogram::new(cfg.n_motifs);
    let mut trace = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        trace.push(state.step(dataset, cfg)?);
        if it >= burn {
            for (g, lat) in state.latents.iter().enumerate() {
                posterior.accumulate(g, lat, &state.paths[g]);
            }
            posterior.finish_sample();
            widths.record(&state.widths());
        }
    }
    let est = widths
        .counts
        .iter()
        .map(|c| estimate_width(c, cfg.priors.width_min, cfg.priors.width_max))
        .collect::<Result<Vec<_>>>()?;
    let prediction = predict(&posterior, &est, &dataset.groups, &dataset.pooled_background(), cfg.threshold);
    Ok(RunResult {
        seed,
        posterior,
        widths,
        params: state.params,
        trace,
        prediction,
    })
}

/// Independent runs and their combined prediction.
#[derive(Debug, Clone)]
pub struct MultiRunResult {
    pub runs: Vec<RunResult>,
    pub combined: CombinedPrediction,
}

/// Seed of run `i`.
pub fn run_seed(base: u64, i: usize) -> u64 {
    base.wrapping_add(i as u64)
}

/// `cfg.runs` chains in parallel, then pooled.
pub fn run_multi(dataset: &Dataset, cfg: &SamplerConfig) -> Result<MultiRunResult> {
    cfg.validate()?;
    let runs = (0..cfg.runs)
        .into_par_iter()
        .map(|i| run_chain(dataset, cfg, run_seed(cfg.seed, i)))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(&PositionPosterior, &Prediction)> =
        runs.iter().map(|r| (&r.posterior, &r.prediction)).collect();
    let combined = combined_prediction(&pairs, cfg.n_motifs, cfg.threshold)?;
    Ok(MultiRunResult { runs, combined })
}

/// Posterior marginals under fixed parameters, from `samples` latent draws
/// per group on the starting alignments.
pub fn scan(
    dataset: &Dataset,
    params: &ModelParams,
    aligner: &AlignerConfig,
    samples: usize,
    threshold: f64,
    seed: u64,
) -> Result<(PositionPosterior, Prediction)> {
    if samples == 0 {
        return Err(Error::Config("scan needs at least one sample".into()));
    }
    params.validate()?;
    let paths = starting_paths(dataset, aligner)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut post = PositionPosterior::new(&dataset.groups, params.n_motifs());
    let mut tables = Vec::with_capacity(paths.len());
    for (g, path) in dataset.groups.iter().zip(&paths) {
        tables.push(forward(g, path, params)?);
    }
    for _ in 0..samples {
        for (i, g) in dataset.groups.iter().enumerate() {
            let lat = backward_sample(&tables[i], g, &paths[i], params, &mut rng)?;
            post.accumulate(i, &lat, &paths[i]);
        }
        post.finish_sample();
    }
    let pred = predict(&post, &params.widths(), &dataset.groups, &dataset.pooled_background(), threshold);
    Ok((post, pred))
}
