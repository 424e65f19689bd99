use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use chmm::error::{Error, Result};
use chmm::evaluate::evaluate;
use chmm::gibbs::{run_multi, scan, MultiRunResult, SamplerConfig};
use chmm::io::{self, ConfigFile, Names, ParamsFile};
use chmm::model::{EmissionMix, Pwm};
use chmm::posterior::{MotifScore, PredictedModule, WidthHistogram};
use chmm::simulate::{simulate_dataset, standin_pwms, SimConfig};

#[derive(Parser)]
#[command(name = "chmm", version, about = "Module and motif discovery in ortholog groups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample modules, motifs and parameters from the posterior.
    Discover(DiscoverArgs),
    /// Decode modules and sites with fixed matrices and parameters.
    Scan(ScanArgs),
    /// Simulate ortholog groups with planted modules.
    Simulate(SimulateArgs),
    /// Score predictions against planted truth.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Sequences of one species as NAME=PATH; repeat per species.
    #[arg(long = "fasta", value_name = "NAME=PATH", required = true, value_parser = parse_species_file)]
    fastas: Vec<(String, PathBuf)>,
    /// Tab-separated gene_id, species, record_id table.
    #[arg(long)]
    manifest: PathBuf,
}

fn parse_species_file(raw: &str) -> std::result::Result<(String, PathBuf), String> {
    match raw.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected NAME=PATH, got `{raw}`")),
    }
}

#[derive(Args)]
struct DiscoverArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// TOML file with sampler settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    num_motifs: Option<usize>,
    /// Expected module length in bp.
    #[arg(long, conflicts_with = "motif_mode")]
    module_length: Option<f64>,
    /// Search for motifs without module structure.
    #[arg(long)]
    motif_mode: bool,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in_fraction: Option<f64>,
    /// Leading fraction of iterations run in motif mode.
    #[arg(long)]
    warm_start_fraction: Option<f64>,
    /// Per-group probability of an alignment update each iteration.
    #[arg(long)]
    update_align_prob: Option<f64>,
    /// Sample parameters instead of integrating them out.
    #[arg(long)]
    plain: bool,
    /// Independent chains.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Posterior cutoff for calling sites and modules.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    width_min: Option<usize>,
    #[arg(long)]
    width_max: Option<usize>,
    /// Mean of the width prior.
    #[arg(long)]
    width_lambda: Option<f64>,
    /// Search the forward strand only.
    #[arg(long)]
    forward_only: bool,
    /// Half-width of the alignment band.
    #[arg(long)]
    band: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
}

impl DiscoverArgs {
    fn flags(&self) -> ConfigFile {
        ConfigFile {
            num_motifs: self.num_motifs,
            module_length: self.module_length,
            motif_mode: self.motif_mode.then_some(true),
            iterations: self.iterations,
            burn_in_fraction: self.burn_in_fraction,
            warm_start_fraction: self.warm_start_fraction,
            update_align_prob: self.update_align_prob,
            collapsed: self.plain.then_some(false),
            runs: self.runs,
            seed: self.seed,
            threshold: self.threshold,
            width_min: self.width_min,
            width_max: self.width_max,
            width_lambda: self.width_lambda,
            forward_only: self.forward_only.then_some(true),
            band: self.band,
            threads: self.threads,
        }
    }
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Weight matrices in PWM text format.
    #[arg(long)]
    motifs: PathBuf,
    /// Parameter file written by `discover`.
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Backward samples drawn per group.
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    band: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    out: PathBuf,
    /// Background mutation rate.
    #[arg(long, default_value_t = 0.1)]
    mu_b: f64,
    /// Motif mutation rate; defaults to a fifth of the background rate.
    #[arg(long)]
    mu_f: Option<f64>,
    /// Indel rate; defaults to a tenth of the background rate.
    #[arg(long)]
    indel_rate: Option<f64>,
    #[arg(long, default_value_t = 20)]
    genes: usize,
    /// Ancestral sequence length.
    #[arg(long, default_value_t = 1000)]
    length: usize,
    #[arg(long, default_value_t = 3)]
    species: usize,
    /// Number of genes carrying a module.
    #[arg(long)]
    modules: Option<usize>,
    #[arg(long, default_value_t = 100)]
    module_length: usize,
    /// Matrices to plant instead of the built-in ones.
    #[arg(long)]
    motifs: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    sites: PathBuf,
    #[arg(long)]
    modules: PathBuf,
    #[arg(long)]
    truth_sites: PathBuf,
    #[arg(long)]
    truth_modules: PathBuf,
    /// Planted matrices; their order names the true motifs.
    #[arg(long)]
    true_motifs: PathBuf,
    /// Predicted matrices, for matrix distances.
    #[arg(long)]
    motifs: Option<PathBuf>,
    /// Write the report as TSV here as well.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Discover(a) => discover(a),
        Command::Scan(a) => cmd_scan(a),
        Command::Simulate(a) => simulate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn set_threads(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(Error::Io)
}

/// Render every file first so that a failure leaves nothing half-written.
fn write_all(dir: &Path, files: Vec<(String, String)>) -> Result<()> {
    create_dir(dir)?;
    for (name, contents) in files {
        io::write_atomic(&dir.join(name), &contents)?;
    }
    Ok(())
}

fn discover(a: DiscoverArgs) -> Result<()> {
    let file = match &a.config {
        Some(p) => ConfigFile::read(p)?,
        None => ConfigFile::default(),
    };
    let merged = file.overlay(a.flags());
    let mut cfg = SamplerConfig::default();
    merged.apply(&mut cfg)?;
    cfg.validate()?;
    set_threads(merged.threads)?;
    let dataset = io::load_dataset(&a.input.fastas, &a.input.manifest)?;
    let result = run_multi(&dataset, &cfg)?;
    let echo = ConfigFile::from_sampler(&cfg, merged.threads).to_toml();
    let header = io::comment_header("discover", &echo);
    let names = Names::from_dataset(&dataset);
    write_all(&a.out, discover_files(&result, &names, &header)?)
}

/// Posterior mean of a column under a flat prior, from site frequencies.
fn smoothed(score: &MotifScore) -> Result<Pwm> {
    let n = score.n_sites as f64;
    Pwm::new(
        score
            .pwm
            .iter()
            .map(|c| {
                let mut out = [0.0; 4];
                for b in 0..4 {
                    out[b] = (n * c[b] + 1.0) / (n + 4.0);
                }
                out
            })
            .collect(),
    )
}

fn discover_files(result: &MultiRunResult, names: &Names, header: &str) -> Result<Vec<(String, String)>> {
    let combined = &result.combined;
    let with_header = |body: String| format!("{header}{body}");
    let mut widths = WidthHistogram::default();
    let mut pwms = Vec::new();
    let mut scores = String::from("motif\trun\tscore\tn_sites\twidth\n");
    for (i, m) in combined.motifs.iter().enumerate() {
        widths.counts.push(result.runs[m.run].widths.counts[m.motif].clone());
        pwms.push((format!("motif{}", i + 1), smoothed(&m.score)?));
        scores.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            i + 1,
            m.run + 1,
            m.score.score,
            m.score.n_sites,
            m.score.width
        ));
    }
    let lead = combined.motifs.first().map_or(0, |m| m.run);
    let mut params = ParamsFile::from_params(&result.runs[lead].params);
    if combined.motifs.is_empty() {
        // No predicted sites anywhere: keep the lead run's own matrices so
        // the parameter file stays usable with `scan`.
        let run = &result.runs[lead];
        for (k, pwm) in run.params.pwms.iter().enumerate() {
            widths.counts.push(run.widths.counts[k].clone());
            pwms.push((format!("motif{}", k + 1), pwm.clone()));
        }
    } else {
        let mut mix = vec![params.mix[0]];
        mix.extend(
            combined
                .motifs
                .iter()
                .map(|m| result.runs[m.run].params.mix.as_slice()[m.motif + 1]),
        );
        params.mix = EmissionMix::new(mix.iter().map(|q| q / mix.iter().sum::<f64>()).collect())?
            .as_slice()
            .to_vec();
    }
    let mut trace = String::from("run\titeration\tlog_likelihood\twidths\tr\tmu_f\tmu_b\n");
    for (i, run) in result.runs.iter().enumerate() {
        for line in &run.trace {
            trace.push_str(&format!("{}\t{line}\n", i + 1));
        }
    }
    Ok(vec![
        ("sites.tsv".into(), with_header(io::format_sites(&combined.sites, names))),
        ("modules.tsv".into(), with_header(io::format_modules(&combined.modules, names))),
        ("posterior.tsv".into(), with_header(io::format_posterior(&combined.posterior, names))),
        ("widths.tsv".into(), with_header(io::format_widths(&widths))),
        ("motifs.pwm".into(), with_header(io::format_pwms(&pwms))),
        ("motifs.tsv".into(), with_header(scores)),
        ("params.toml".into(), with_header(params.to_toml())),
        ("trace.tsv".into(), with_header(trace)),
    ])
}

fn cmd_scan(a: ScanArgs) -> Result<()> {
    set_threads(a.threads)?;
    let dataset = io::load_dataset(&a.input.fastas, &a.input.manifest)?;
    let pwms: Vec<Pwm> = io::read_pwms(&a.motifs)?.into_iter().map(|(_, p)| p).collect();
    let params_text = io::read_text(&a.params)?;
    let params = ParamsFile::parse(&params_text, &a.params.display().to_string())?.into_params(pwms)?;
    let mut aligner = SamplerConfig::default().aligner;
    if let Some(b) = a.band {
        aligner.band = Some(b);
    }
    let (post, pred) = scan(&dataset, &params, &aligner, a.samples, a.threshold, a.seed)?;
    let echo = format!(
        "motifs = {:?}\nparams = {:?}\nsamples = {}\nthreshold = {}\nseed = {}\n",
        a.motifs.display().to_string(),
        a.params.display().to_string(),
        a.samples,
        a.threshold,
        a.seed
    );
    let header = io::comment_header("scan", &echo);
    let names = Names::from_dataset(&dataset);
    write_all(
        &a.out,
        vec![
            ("sites.tsv".into(), format!("{header}{}", io::format_sites(&pred.sites, &names))),
            ("modules.tsv".into(), format!("{header}{}", io::format_modules(&pred.modules, &names))),
            ("posterior.tsv".into(), format!("{header}{}", io::format_posterior(&post, &names))),
        ],
    )
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let planted = match &a.motifs {
        Some(p) => io::read_pwms(p)?,
        None => standin_pwms(),
    };
    let mut cfg = SimConfig::with_rate(a.mu_b);
    cfg.n_genes = a.genes;
    cfg.ancestor_length = a.length;
    cfg.n_species = a.species;
    cfg.n_modules = a.modules.unwrap_or(a.genes);
    cfg.module_length = a.module_length;
    cfg.pwms = planted.iter().map(|(_, p)| p.clone()).collect();
    if let Some(f) = a.mu_f {
        cfg.mu_f = f;
    }
    if let Some(r) = a.indel_rate {
        cfg.indel_rate = r;
    }
    cfg.validate()?;
    let (dataset, truth) = simulate_dataset(&cfg, &mut ChaCha8Rng::seed_from_u64(a.seed))?;
    let echo = format!(
        "mu_b = {}\nmu_f = {}\nindel_rate = {}\ngenes = {}\nlength = {}\nspecies = {}\nmodules = {}\nmodule_length = {}\nseed = {}\n",
        cfg.mu_b,
        cfg.mu_f,
        cfg.indel_rate,
        cfg.n_genes,
        cfg.ancestor_length,
        cfg.n_species,
        cfg.n_modules,
        cfg.module_length,
        a.seed
    );
    let header = io::comment_header("simulate", &echo);
    let mut names = Names::from_dataset(&dataset);
    names.motifs = planted.iter().map(|(n, _)| n.clone()).collect();
    let (records, manifest) = io::dataset_records(&dataset);
    let mut files: Vec<(String, String)> = records
        .iter()
        .map(|(s, recs)| (format!("{s}.fa"), io::format_fasta(recs)))
        .collect();
    files.push(("manifest.tsv".into(), format!("{header}{}", manifest.to_tsv())));
    files.push(("truth_sites.tsv".into(), format!("{header}{}", io::format_truth_sites(&truth, &names))));
    files.push(("truth_modules.tsv".into(), format!("{header}{}", io::format_truth_modules(&truth, &names))));
    files.push(("motifs.pwm".into(), format!("{header}{}", io::format_pwms(&planted))));
    write_all(&a.out, files)
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let true_pwms = io::read_pwms(&a.true_motifs)?;
    let mut names = Names {
        motifs: true_pwms.iter().map(|(n, _)| n.clone()).collect(),
        ..Default::default()
    };
    let truth = io::parse_truth(
        &io::read_text(&a.truth_sites)?,
        &io::read_text(&a.truth_modules)?,
        &a.truth_sites.display().to_string(),
        &mut names,
    )?;
    let sites = io::parse_sites(&io::read_text(&a.sites)?, &a.sites.display().to_string(), &mut names)?;
    let modules: Vec<PredictedModule> = io::parse_modules(&io::read_text(&a.modules)?, &a.modules.display().to_string(), &mut names)?
        .iter()
        .map(Into::into)
        .collect();
    let n_predicted = sites.iter().map(|s| s.motif + 1).max().unwrap_or(0);
    let (matrices, have_matrices) = match &a.motifs {
        Some(p) => {
            let m: Vec<Vec<[f64; 4]>> = io::read_pwms(p)?.into_iter().map(|(_, p)| p.columns().to_vec()).collect();
            if m.len() < n_predicted {
                return Err(Error::Config(format!(
                    "sites name {n_predicted} motifs but only {} matrices were given",
                    m.len()
                )));
            }
            (m, true)
        }
        None => (vec![vec![[0.25; 4]]; n_predicted], false),
    };
    let true_matrices: Vec<(String, Vec<[f64; 4]>)> =
        true_pwms.into_iter().map(|(n, p)| (n, p.columns().to_vec())).collect();
    let mut report = evaluate(&sites, &modules, &matrices, &truth, &true_matrices);
    if !have_matrices {
        report.ssd.iter_mut().for_each(|s| *s = None);
    }
    print!("{}", report.to_table());
    if let Some(p) = &a.report {
        io::write_atomic(p, &report.to_tsv())?;
    }
    Ok(())
}
