//! Input parsing and result files.
//!
//! Every table is tab-separated with 1-based inclusive coordinates. Lines
//! starting with `#` are comments; writers put the run configuration there.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, OrthologGroup};
use crate::dp::Strand;
use crate::error::{Error, Result};
use crate::gibbs::SamplerConfig;
use crate::model::{
    decode_base, encode_base, BackgroundModels, BackgroundSubstitution, Base, EmissionMix, ModelParams,
    MotifEvolution, Pwm, StrandMode, TransitionMatrix,
};
use crate::posterior::{PositionPosterior, PredictedModule, PredictedSite, WidthHistogram};
use crate::simulate::{GroundTruth, TrueModule, TrueSite};

/// Write `contents` to a temporary file next to `path`, then rename it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })
}

/// Comment block naming the program and echoing `echo` line by line.
pub fn comment_header(title: &str, echo: &str) -> String {
    let mut out = format!("# {} {} {title}\n", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
    for line in echo.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out
}

fn parse_err(source: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: source.to_string(),
        line,
        msg: msg.into(),
    }
}

/// Non-comment, non-blank lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

/// Data lines with the column-name line (first field `name`) removed.
fn table_rows<'a>(text: &'a str, name: &'a str) -> impl Iterator<Item = (usize, Vec<&'a str>)> + 'a {
    data_lines(text)
        .map(|(n, l)| (n, l.split('\t').collect::<Vec<_>>()))
        .filter(move |(_, f)| f[0] != name)
}

fn field<T: std::str::FromStr>(fields: &[&str], i: usize, source: &str, line: usize) -> Result<T> {
    let raw = fields
        .get(i)
        .ok_or_else(|| parse_err(source, line, format!("expected at least {} fields", i + 1)))?;
    raw.trim()
        .parse()
        .map_err(|_| parse_err(source, line, format!("cannot parse field {} (`{raw}`)", i + 1)))
}

fn expect_fields(fields: &[&str], n: usize, source: &str, line: usize) -> Result<()> {
    if fields.len() != n {
        return Err(parse_err(source, line, format!("expected {n} fields, found {}", fields.len())));
    }
    Ok(())
}

/// 1-based inclusive coordinates to 0-based.
fn from_one_based(start: usize, end: usize, source: &str, line: usize) -> Result<(usize, usize)> {
    if start == 0 || end < start {
        return Err(parse_err(source, line, format!("bad interval {start}..{end}")));
    }
    Ok((start - 1, end - 1))
}

fn strand_symbol(s: Strand) -> char {
    s.symbol()
}

fn parse_strand(raw: &str, source: &str, line: usize) -> Result<Strand> {
    match raw.trim() {
        "+" => Ok(Strand::Forward),
        "-" => Ok(Strand::Reverse),
        other => Err(parse_err(source, line, format!("strand must be + or -, found `{other}`"))),
    }
}

// ---------------------------------------------------------------------------
// FASTA and manifest

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FastaRecord {
    pub id: String,
    pub seq: Vec<Base>,
}

/// Parse FASTA text. The record id is the header up to the first whitespace;
/// bases are uppercased and anything outside `ACGTN` is rejected.
pub fn parse_fasta(text: &str, source: &str) -> Result<Vec<FastaRecord>> {
    let mut records: Vec<FastaRecord> = Vec::new();
    let mut seen = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if let Some(header) = line.strip_prefix('>') {
            let id = header.split_whitespace().next().unwrap_or("").to_string();
            if id.is_empty() {
                return Err(parse_err(source, i + 1, "empty record id"));
            }
            if seen.insert(id.clone(), ()).is_some() {
                return Err(Error::DuplicateId(id));
            }
            records.push(FastaRecord { id, seq: Vec::new() });
            continue;
        }
        if line.trim().is_empty() || line.starts_with(';') {
            continue;
        }
        let rec = records
            .last_mut()
            .ok_or_else(|| parse_err(source, i + 1, "sequence data before the first header"))?;
        for ch in line.bytes().filter(|b| !b.is_ascii_whitespace()) {
            let b = encode_base(ch).ok_or_else(|| Error::InvalidBase {
                record: rec.id.clone(),
                ch: ch as char,
            })?;
            rec.seq.push(b);
        }
    }
    Ok(records)
}

pub fn read_fasta(path: &Path) -> Result<Vec<FastaRecord>> {
    parse_fasta(&read_text(path)?, &path.display().to_string())
}

/// FASTA text with 60 bases per line.
pub fn format_fasta(records: &[FastaRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(out, ">{}", r.id);
        for chunk in r.seq.chunks(60) {
            out.extend(chunk.iter().map(|&b| decode_base(b)));
            out.push('\n');
        }
    }
    out
}

/// One manifest row: which record holds a gene's sequence in a species.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub gene: String,
    pub species: String,
    pub record: String,
}

/// Gene-to-record map of a dataset. Rows are `gene_id, species, record_id`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunManifest {
    pub entries: Vec<ManifestEntry>,
}

impl RunManifest {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = HashMap::new();
        for (line, fields) in table_rows(text, "gene_id") {
            expect_fields(&fields, 3, source, line)?;
            let e = ManifestEntry {
                gene: fields[0].trim().to_string(),
                species: fields[1].trim().to_string(),
                record: fields[2].trim().to_string(),
            };
            if seen.insert((e.gene.clone(), e.species.clone()), ()).is_some() {
                return Err(Error::DuplicateId(format!("{}/{}", e.gene, e.species)));
            }
            entries.push(e);
        }
        Ok(RunManifest { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, &path.display().to_string())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("gene_id\tspecies\trecord_id\n");
        for e in &self.entries {
            let _ = writeln!(out, "{}\t{}\t{}", e.gene, e.species, e.record);
        }
        out
    }

    /// Gene ids in order of first appearance.
    pub fn genes(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.gene.as_str()) {
                out.push(&e.gene);
            }
        }
        out
    }
}

/// Build a dataset from per-species records. Species keep the given order,
/// genes follow the manifest, and a gene without a row for some species gets
/// a zero-length sequence there.
pub fn assemble_dataset(species: &[(String, Vec<FastaRecord>)], manifest: &RunManifest) -> Result<Dataset> {
    let lookup: Vec<HashMap<&str, &FastaRecord>> = species
        .iter()
        .map(|(_, recs)| recs.iter().map(|r| (r.id.as_str(), r)).collect())
        .collect();
    let index: HashMap<&str, usize> = species.iter().enumerate().map(|(i, (s, _))| (s.as_str(), i)).collect();
    let genes = manifest.genes();
    let mut seqs = vec![vec![Vec::new(); species.len()]; genes.len()];
    for e in &manifest.entries {
        let m = *index
            .get(e.species.as_str())
            .ok_or_else(|| Error::UnknownSpecies(e.species.clone()))?;
        let rec = lookup[m]
            .get(e.record.as_str())
            .ok_or_else(|| Error::MissingRecord(format!("{} ({})", e.record, e.species)))?;
        let g = genes.iter().position(|&x| x == e.gene).expect("gene listed");
        seqs[g][m] = rec.seq.clone();
    }
    let groups = genes
        .iter()
        .zip(seqs)
        .map(|(g, s)| OrthologGroup::new(*g, s))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(species.iter().map(|(s, _)| s.clone()).collect(), groups)
}

/// Read one FASTA file per species and assemble them through the manifest.
pub fn load_dataset(fastas: &[(String, PathBuf)], manifest: &Path) -> Result<Dataset> {
    let mut species = Vec::with_capacity(fastas.len());
    for (name, path) in fastas {
        if species.iter().any(|(s, _): &(String, _)| s == name) {
            return Err(Error::DuplicateId(name.clone()));
        }
        species.push((name.clone(), read_fasta(path)?));
    }
    assemble_dataset(&species, &RunManifest::read(manifest)?)
}

/// Per-species records and a manifest for a dataset; record ids are gene ids
/// and empty sequences are left out.
pub fn dataset_records(dataset: &Dataset) -> (Vec<(String, Vec<FastaRecord>)>, RunManifest) {
    let mut manifest = RunManifest::default();
    let mut per_species: Vec<(String, Vec<FastaRecord>)> =
        dataset.species.iter().map(|s| (s.clone(), Vec::new())).collect();
    for g in &dataset.groups {
        for (m, seq) in g.seqs.iter().enumerate() {
            if seq.is_empty() {
                continue;
            }
            per_species[m].1.push(FastaRecord {
                id: g.gene.clone(),
                seq: seq.clone(),
            });
            manifest.entries.push(ManifestEntry {
                gene: g.gene.clone(),
                species: dataset.species[m].clone(),
                record: g.gene.clone(),
            });
        }
    }
    (per_species, manifest)
}

// ---------------------------------------------------------------------------
// Weight matrices

/// `>name width=w` followed by the A, C, G and T rows.
pub fn format_pwms(motifs: &[(String, Pwm)]) -> String {
    let mut out = String::new();
    for (name, pwm) in motifs {
        let _ = writeln!(out, ">{name} width={}", pwm.width());
        for b in 0..4 {
            let row: Vec<String> = pwm.columns().iter().map(|c| c[b].to_string()).collect();
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
    }
    out
}

pub fn parse_pwms(text: &str, source: &str) -> Result<Vec<(String, Pwm)>> {
    let lines: Vec<(usize, &str)> = data_lines(text).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let (ln, header) = lines[i];
        let header = header
            .strip_prefix('>')
            .ok_or_else(|| parse_err(source, ln, "expected `>name width=w`"))?;
        let mut parts = header.split_whitespace();
        let name = parts.next().ok_or_else(|| parse_err(source, ln, "missing motif name"))?;
        let width: usize = parts
            .next()
            .and_then(|p| p.strip_prefix("width="))
            .and_then(|w| w.parse().ok())
            .ok_or_else(|| parse_err(source, ln, "missing or bad `width=`"))?;
        if i + 4 >= lines.len() {
            return Err(parse_err(source, ln, "motif needs four rows"));
        }
        let mut cols = vec![[0.0; 4]; width];
        for b in 0..4 {
            let (rl, row) = lines[i + 1 + b];
            let vals: Vec<&str> = row.split('\t').collect();
            if vals.len() != width {
                return Err(parse_err(source, rl, format!("row has {} values, width is {width}", vals.len())));
            }
            for (c, v) in cols.iter_mut().zip(&vals) {
                c[b] = v
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(source, rl, format!("bad probability `{v}`")))?;
            }
        }
        let pwm = Pwm::new(cols).map_err(|e| parse_err(source, ln, e.to_string()))?;
        out.push((name.to_string(), pwm));
        i += 5;
    }
    Ok(out)
}

pub fn read_pwms(path: &Path) -> Result<Vec<(String, Pwm)>> {
    parse_pwms(&read_text(path)?, &path.display().to_string())
}

// ---------------------------------------------------------------------------
// Result tables

/// Name tables that map the string columns of result files to indices.
/// Parsers add names they have not seen.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Names {
    pub species: Vec<String>,
    pub genes: Vec<String>,
    pub motifs: Vec<String>,
}

impl Names {
    pub fn from_dataset(d: &Dataset) -> Self {
        Names {
            species: d.species.clone(),
            genes: d.groups.iter().map(|g| g.gene.clone()).collect(),
            motifs: Vec::new(),
        }
    }

    fn intern(list: &mut Vec<String>, name: &str) -> usize {
        match list.iter().position(|s| s == name) {
            Some(i) => i,
            None => {
                list.push(name.to_string());
                list.len() - 1
            }
        }
    }

    fn name(list: &[String], i: usize) -> &str {
        list.get(i).map(String::as_str).unwrap_or("?")
    }
}

pub const SITES_COLUMNS: &str = "species\tgene\tmotif\tstart\tend\tstrand\tmeanPa";

/// Motifs are numbered from 1.
pub fn format_sites(sites: &[PredictedSite], names: &Names) -> String {
    let mut out = format!("{SITES_COLUMNS}\n");
    for s in sites {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            Names::name(&names.species, s.species),
            Names::name(&names.genes, s.gene),
            s.motif + 1,
            s.start + 1,
            s.end + 1,
            strand_symbol(s.strand),
            s.mean_aligned
        );
    }
    out
}

pub fn parse_sites(text: &str, source: &str, names: &mut Names) -> Result<Vec<PredictedSite>> {
    let mut out = Vec::new();
    for (line, f) in table_rows(text, "species") {
        expect_fields(&f, 7, source, line)?;
        let motif: usize = field(&f, 2, source, line)?;
        if motif == 0 {
            return Err(parse_err(source, line, "motifs are numbered from 1"));
        }
        let (start, end) = from_one_based(field(&f, 3, source, line)?, field(&f, 4, source, line)?, source, line)?;
        out.push(PredictedSite {
            species: Names::intern(&mut names.species, f[0].trim()),
            gene: Names::intern(&mut names.genes, f[1].trim()),
            motif: motif - 1,
            start,
            end,
            strand: parse_strand(f[5], source, line)?,
            mean_aligned: field(&f, 6, source, line)?,
        });
    }
    Ok(out)
}

pub const MODULES_COLUMNS: &str = "species\tgene\tstart\tend\tn_sites";

pub fn format_modules(modules: &[PredictedModule], names: &Names) -> String {
    let mut out = format!("{MODULES_COLUMNS}\n");
    for m in modules {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            Names::name(&names.species, m.species),
            Names::name(&names.genes, m.gene),
            m.start + 1,
            m.end + 1,
            m.sites.len()
        );
    }
    out
}

/// Modules read back from a table; member site indices are not stored, only
/// their number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleRow {
    pub gene: usize,
    pub species: usize,
    pub start: usize,
    pub end: usize,
    pub n_sites: usize,
}

impl From<&PredictedModule> for ModuleRow {
    fn from(m: &PredictedModule) -> Self {
        ModuleRow {
            gene: m.gene,
            species: m.species,
            start: m.start,
            end: m.end,
            n_sites: m.sites.len(),
        }
    }
}

impl From<&ModuleRow> for PredictedModule {
    fn from(m: &ModuleRow) -> Self {
        PredictedModule {
            gene: m.gene,
            species: m.species,
            start: m.start,
            end: m.end,
            sites: Vec::new(),
        }
    }
}

pub fn parse_modules(text: &str, source: &str, names: &mut Names) -> Result<Vec<ModuleRow>> {
    let mut out = Vec::new();
    for (line, f) in table_rows(text, "species") {
        expect_fields(&f, 5, source, line)?;
        let (start, end) = from_one_based(field(&f, 2, source, line)?, field(&f, 3, source, line)?, source, line)?;
        out.push(ModuleRow {
            species: Names::intern(&mut names.species, f[0].trim()),
            gene: Names::intern(&mut names.genes, f[1].trim()),
            start,
            end,
            n_sites: field(&f, 4, source, line)?,
        });
    }
    Ok(out)
}

/// One row per sequence position: `gene, species, pos, P_m, P_a, P_1..P_K`.
pub fn format_posterior(post: &PositionPosterior, names: &Names) -> String {
    let mut out = String::from("gene\tspecies\tpos\tP_m\tP_a");
    for k in 1..=post.n_motifs() {
        let _ = write!(out, "\tP_{k}");
    }
    out.push('\n');
    for g in 0..post.n_groups() {
        for m in 0..post.n_species(g) {
            for pos in 0..post.seq_len(g, m) {
                let _ = write!(
                    out,
                    "{}\t{}\t{}\t{}\t{}",
                    Names::name(&names.genes, g),
                    Names::name(&names.species, m),
                    pos + 1,
                    post.p_module(g, m, pos),
                    post.p_aligned(g, m, pos)
                );
                for k in 0..post.n_motifs() {
                    let _ = write!(out, "\t{}", post.p_motif(g, m, k, pos));
                }
                out.push('\n');
            }
        }
    }
    out
}

/// Read a posterior dump. Every gene and species in `names` gets a profile;
/// positions must be listed in order from 1.
pub fn parse_posterior(text: &str, source: &str, names: &mut Names) -> Result<PositionPosterior> {
    type Profile = (Vec<f64>, Vec<f64>, Vec<Vec<f64>>);
    let mut n_motifs = None;
    let mut rows: Vec<(usize, usize, usize, Vec<f64>)> = Vec::new();
    for (line, f) in table_rows(text, "gene") {
        if f.len() < 5 {
            return Err(parse_err(source, line, "expected at least 5 fields"));
        }
        let k = f.len() - 5;
        if *n_motifs.get_or_insert(k) != k {
            return Err(parse_err(source, line, "rows disagree on the number of motifs"));
        }
        let g = Names::intern(&mut names.genes, f[0].trim());
        let m = Names::intern(&mut names.species, f[1].trim());
        let pos: usize = field(&f, 2, source, line)?;
        let vals = (3..f.len()).map(|i| field(&f, i, source, line)).collect::<Result<Vec<f64>>>()?;
        rows.push((g, m, pos, vals));
    }
    let k = n_motifs.unwrap_or(0);
    let mut profiles: Vec<Vec<Profile>> =
        vec![vec![(Vec::new(), Vec::new(), vec![Vec::new(); k]); names.species.len()]; names.genes.len()];
    for (i, (g, m, pos, vals)) in rows.into_iter().enumerate() {
        let p = &mut profiles[g][m];
        if pos != p.0.len() + 1 {
            return Err(parse_err(source, i + 1, format!("position {pos} out of order")));
        }
        p.0.push(vals[0]);
        p.1.push(vals[1]);
        for (j, v) in vals[2..].iter().enumerate() {
            p.2[j].push(*v);
        }
    }
    PositionPosterior::from_profiles(profiles)
}

/// `motif, width, count, probability` for every recorded width.
pub fn format_widths(hist: &WidthHistogram) -> String {
    let mut out = String::from("motif\twidth\tcount\tprobability\n");
    for (k, counts) in hist.counts.iter().enumerate() {
        let n: u64 = counts.iter().sum();
        for (w, &c) in counts.iter().enumerate().filter(|(_, &c)| c > 0) {
            let _ = writeln!(out, "{}\t{w}\t{c}\t{}", k + 1, c as f64 / n as f64);
        }
    }
    out
}

pub fn parse_widths(text: &str, source: &str) -> Result<WidthHistogram> {
    let mut hist = WidthHistogram::default();
    for (line, f) in table_rows(text, "motif") {
        expect_fields(&f, 4, source, line)?;
        let k: usize = field(&f, 0, source, line)?;
        let w: usize = field(&f, 1, source, line)?;
        let c: u64 = field(&f, 2, source, line)?;
        if k == 0 {
            return Err(parse_err(source, line, "motifs are numbered from 1"));
        }
        if hist.counts.len() < k {
            hist.counts.resize(k, Vec::new());
        }
        let row = &mut hist.counts[k - 1];
        if row.len() <= w {
            row.resize(w + 1, 0);
        }
        row[w] += c;
    }
    Ok(hist)
}

pub const TRUTH_SITES_COLUMNS: &str = "gene\tspecies\tmotif\tstart\tend\tstrand";
pub const TRUTH_MODULES_COLUMNS: &str = "gene\tspecies\tstart\tend";

/// Planted sites, motifs by name.
pub fn format_truth_sites(truth: &GroundTruth, names: &Names) -> String {
    let mut out = format!("{TRUTH_SITES_COLUMNS}\n");
    for s in &truth.sites {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            Names::name(&names.genes, s.gene),
            Names::name(&names.species, s.species),
            Names::name(&names.motifs, s.motif),
            s.start + 1,
            s.end + 1,
            strand_symbol(s.strand)
        );
    }
    out
}

pub fn format_truth_modules(truth: &GroundTruth, names: &Names) -> String {
    let mut out = format!("{TRUTH_MODULES_COLUMNS}\n");
    for m in &truth.modules {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            Names::name(&names.genes, m.gene),
            Names::name(&names.species, m.species),
            m.start + 1,
            m.end + 1
        );
    }
    out
}

/// Read planted sites and modules back into a [`GroundTruth`].
pub fn parse_truth(sites: &str, modules: &str, source: &str, names: &mut Names) -> Result<GroundTruth> {
    let mut truth = GroundTruth::default();
    for (line, f) in table_rows(sites, "gene") {
        expect_fields(&f, 6, source, line)?;
        let (start, end) = from_one_based(field(&f, 3, source, line)?, field(&f, 4, source, line)?, source, line)?;
        truth.sites.push(TrueSite {
            gene: Names::intern(&mut names.genes, f[0].trim()),
            species: Names::intern(&mut names.species, f[1].trim()),
            motif: Names::intern(&mut names.motifs, f[2].trim()),
            start,
            end,
            strand: parse_strand(f[5], source, line)?,
        });
    }
    for (line, f) in table_rows(modules, "gene") {
        expect_fields(&f, 4, source, line)?;
        let (start, end) = from_one_based(field(&f, 2, source, line)?, field(&f, 3, source, line)?, source, line)?;
        truth.modules.push(TrueModule {
            gene: Names::intern(&mut names.genes, f[0].trim()),
            species: Names::intern(&mut names.species, f[1].trim()),
            start,
            end,
        });
    }
    Ok(truth)
}

// ---------------------------------------------------------------------------
// Parameter and configuration files

/// Every fitted parameter except the weight matrices, which live in a PWM file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    /// Background-to-module transition probability.
    pub r: f64,
    /// Module-to-background transition probability.
    pub t: f64,
    /// Within-module mixture `[q_0, q_1, .., q_K]`.
    pub mix: Vec<f64>,
    pub mu_f: f64,
    pub alpha: f64,
    pub beta: f64,
    pub ancestral_background: [f64; 4],
    pub species_backgrounds: Vec<[f64; 4]>,
    pub both_strands: bool,
}

impl ParamsFile {
    pub fn from_params(p: &ModelParams) -> Self {
        ParamsFile {
            r: p.transition.r,
            t: p.transition.t,
            mix: p.mix.as_slice().to_vec(),
            mu_f: p.motif_evo.mu_f,
            alpha: p.subst.alpha,
            beta: p.subst.beta,
            ancestral_background: p.backgrounds.ancestral,
            species_backgrounds: p.backgrounds.per_species.clone(),
            both_strands: p.strands == StrandMode::Both,
        }
    }

    pub fn into_params(self, pwms: Vec<Pwm>) -> Result<ModelParams> {
        let params = ModelParams {
            transition: TransitionMatrix::new(self.r, self.t)?,
            mix: EmissionMix::new(self.mix)?,
            pwms,
            backgrounds: BackgroundModels::new(self.ancestral_background, self.species_backgrounds)?,
            subst: BackgroundSubstitution::new(self.alpha, self.beta)?,
            motif_evo: MotifEvolution::new(self.mu_f)?,
            strands: if self.both_strands {
                StrandMode::Both
            } else {
                StrandMode::ForwardOnly
            },
        };
        params.validate()?;
        Ok(params)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("parameters serialize")
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| parse_err(source, 0, e.to_string()))
    }
}

/// Sampler settings as they appear in a configuration file; absent keys keep
/// their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub num_motifs: Option<usize>,
    pub module_length: Option<f64>,
    pub motif_mode: Option<bool>,
    pub iterations: Option<usize>,
    pub burn_in_fraction: Option<f64>,
    pub warm_start_fraction: Option<f64>,
    pub update_align_prob: Option<f64>,
    pub collapsed: Option<bool>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    pub width_min: Option<usize>,
    pub width_max: Option<usize>,
    pub width_lambda: Option<f64>,
    pub forward_only: Option<bool>,
    pub band: Option<usize>,
    pub threads: Option<usize>,
}

impl ConfigFile {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| parse_err(source, 0, e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, &path.display().to_string())
    }

    /// Keys set in `over` replace those in `self`.
    pub fn overlay(self, over: ConfigFile) -> ConfigFile {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigFile { $($f: over.$f.or(self.$f)),* } };
        }
        pick!(
            num_motifs,
            module_length,
            motif_mode,
            iterations,
            burn_in_fraction,
            warm_start_fraction,
            update_align_prob,
            collapsed,
            runs,
            seed,
            threshold,
            width_min,
            width_max,
            width_lambda,
            forward_only,
            band,
            threads
        )
    }

    /// Apply the keys that are set to `cfg`.
    pub fn apply(&self, cfg: &mut SamplerConfig) -> Result<()> {
        if self.motif_mode == Some(true) && self.module_length.is_some() {
            return Err(Error::Config("a module length cannot be combined with motif mode".into()));
        }
        macro_rules! set {
            ($($src:ident => $dst:ident),*) => { $(if let Some(v) = self.$src { cfg.$dst = v; })* };
        }
        set!(
            num_motifs => n_motifs,
            module_length => module_length,
            motif_mode => motif_mode,
            iterations => iterations,
            burn_in_fraction => burn_in_fraction,
            warm_start_fraction => warm_start_fraction,
            update_align_prob => update_align_prob,
            collapsed => collapsed,
            runs => runs,
            seed => seed,
            threshold => threshold
        );
        if self.width_min.is_some() || self.width_max.is_some() || self.width_lambda.is_some() {
            cfg.priors = crate::model::Priors::new(
                self.width_lambda.unwrap_or(cfg.priors.width_lambda),
                self.width_min.unwrap_or(cfg.priors.width_min),
                self.width_max.unwrap_or(cfg.priors.width_max),
            )
            .map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Some(f) = self.forward_only {
            cfg.strands = if f { StrandMode::ForwardOnly } else { StrandMode::Both };
        }
        if let Some(b) = self.band {
            cfg.aligner.band = Some(b);
        }
        Ok(())
    }

    /// Every setting of `cfg`, for echoing into output headers.
    pub fn from_sampler(cfg: &SamplerConfig, threads: Option<usize>) -> Self {
        ConfigFile {
            num_motifs: Some(cfg.n_motifs),
            module_length: (!cfg.motif_mode).then_some(cfg.module_length),
            motif_mode: Some(cfg.motif_mode),
            iterations: Some(cfg.iterations),
            burn_in_fraction: Some(cfg.burn_in_fraction),
            warm_start_fraction: Some(cfg.warm_start_fraction),
            update_align_prob: Some(cfg.update_align_prob),
            collapsed: Some(cfg.collapsed),
            runs: Some(cfg.runs),
            seed: Some(cfg.seed),
            threshold: Some(cfg.threshold),
            width_min: Some(cfg.priors.width_min),
            width_max: Some(cfg.priors.width_max),
            width_lambda: Some(cfg.priors.width_lambda),
            forward_only: Some(cfg.strands == StrandMode::ForwardOnly),
            band: cfg.aligner.band,
            threads,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}
