use std::fmt::Write as _;

use crate::data::OrthologGroup;
use crate::error::{Error, Result};
use crate::model::decode_base;

/// Bitmask over species indices.
pub type SpeciesMask = u32;

pub const MAX_SPECIES: usize = 16;

/// A multiple alignment as a monotone path through the N-dimensional lattice.
///
/// Points are indexed `0..=len()`. Point 0 is the origin; every later point
/// advances the coordinates in its emission-component mask by exactly one.
/// Steps (points `1..=len()`) are the alignment columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentPath {
    lengths: Vec<usize>,
    masks: Vec<SpeciesMask>,
    coords: Vec<usize>,
    run_start: Vec<usize>,
}

#[inline]
pub fn mask_len(mask: SpeciesMask) -> usize {
    mask.count_ones() as usize
}

pub fn mask_members(mask: SpeciesMask) -> impl Iterator<Item = usize> {
    (0..MAX_SPECIES).filter(move |m| mask & (1 << m) != 0)
}

impl AlignmentPath {
    /// Build the path for an alignment given as column masks.
    ///
    /// Runs of single-species columns are reordered so lower species indices
    /// come first; that is the canonical visiting order of unaligned stretches.
    pub fn build(lengths: &[usize], columns: &[SpeciesMask]) -> Result<Self> {
        let n = lengths.len();
        if n == 0 || n > MAX_SPECIES {
            return Err(Error::InvalidAlignment(format!(
                "need between 1 and {MAX_SPECIES} species, got {n}"
            )));
        }
        let full: SpeciesMask = if n == 32 { !0 } else { (1 << n) - 1 };
        let mut masks = Vec::with_capacity(columns.len());
        let mut i = 0;
        while i < columns.len() {
            let c = columns[i];
            if c == 0 || c & !full != 0 {
                return Err(Error::InvalidAlignment(format!(
                    "column {} has an invalid species mask {c:#b}",
                    i + 1
                )));
            }
            if mask_len(c) == 1 {
                let mut j = i;
                while j < columns.len() && mask_len(columns[j]) == 1 {
                    j += 1;
                }
                let mut run = columns[i..j].to_vec();
                run.sort_by_key(|m| m.trailing_zeros());
                masks.extend(run);
                i = j;
            } else {
                masks.push(c);
                i += 1;
            }
        }

        let mut counts = vec![0usize; n];
        let mut coords = Vec::with_capacity((masks.len() + 1) * n);
        coords.extend(std::iter::repeat_n(0, n));
        for &mask in &masks {
            for m in mask_members(mask) {
                counts[m] += 1;
            }
            coords.extend_from_slice(&counts);
        }
        if counts != lengths {
            return Err(Error::InvalidAlignment(format!(
                "columns cover {counts:?} bases but sequence lengths are {lengths:?}"
            )));
        }

        let mut run_start = Vec::with_capacity(masks.len() + 1);
        run_start.push(0);
        for d in 1..=masks.len() {
            if d > 1 && masks[d - 1] == masks[d - 2] {
                let prev = run_start[d - 1];
                run_start.push(prev);
            } else {
                run_start.push(d);
            }
        }

        Ok(AlignmentPath {
            lengths: lengths.to_vec(),
            masks,
            coords,
            run_start,
        })
    }

    /// Parse gapped rows (`-` or `.` for gaps), one per species.
    pub fn from_rows(rows: &[&str]) -> Result<Self> {
        let width = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidAlignment("rows have different widths".into()));
        }
        let lengths: Vec<usize> = rows
            .iter()
            .map(|r| r.bytes().filter(|&c| c != b'-' && c != b'.').count())
            .collect();
        let mut columns = Vec::with_capacity(width);
        for i in 0..width {
            let mut mask = 0;
            for (m, r) in rows.iter().enumerate() {
                let c = r.as_bytes()[i];
                if c != b'-' && c != b'.' {
                    mask |= 1 << m;
                }
            }
            if mask != 0 {
                columns.push(mask);
            }
        }
        AlignmentPath::build(&lengths, &columns)
    }

    /// Path with no aligned columns: each sequence walked in turn.
    pub fn unaligned(lengths: &[usize]) -> Result<Self> {
        let cols: Vec<SpeciesMask> = lengths
            .iter()
            .enumerate()
            .flat_map(|(m, &l)| std::iter::repeat_n(1 << m, l))
            .collect();
        AlignmentPath::build(lengths, &cols)
    }

    pub fn n_species(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    /// Number of steps (points after the origin).
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Emission-component mask of step `d` (`1..=len()`).
    #[inline]
    pub fn ec(&self, d: usize) -> SpeciesMask {
        self.masks[d - 1]
    }

    #[inline]
    pub fn is_aligned(&self, d: usize) -> bool {
        mask_len(self.masks[d - 1]) >= 2
    }

    pub fn columns(&self) -> &[SpeciesMask] {
        &self.masks
    }

    /// Coordinates of point `d` (`0..=len()`).
    #[inline]
    pub fn coords(&self, d: usize) -> &[usize] {
        let n = self.lengths.len();
        &self.coords[d * n..(d + 1) * n]
    }

    /// 0-based sequence position emitted by species `m` at step `d`.
    #[inline]
    pub fn position(&self, d: usize, m: usize) -> Option<usize> {
        if self.masks[d - 1] & (1 << m) != 0 {
            Some(self.coords(d)[m] - 1)
        } else {
            None
        }
    }

    /// First step of the sub-path containing step `d`.
    #[inline]
    pub fn run_start(&self, d: usize) -> usize {
        self.run_start[d]
    }

    /// Whether steps `first..=last` lie inside one sub-path.
    pub fn same_sub_path(&self, first: usize, last: usize) -> bool {
        first >= 1 && last <= self.len() && first <= last && self.run_start[last] <= first
    }

    /// Points where the path changes direction.
    pub fn change_points(&self) -> Vec<usize> {
        (1..self.len())
            .filter(|&d| self.masks[d] != self.masks[d - 1])
            .collect()
    }

    /// Maximal runs of equal direction as `(first step, last step, mask)`.
    pub fn sub_paths(&self) -> Vec<(usize, usize, SpeciesMask)> {
        let mut out = Vec::new();
        let mut d = 1;
        while d <= self.len() {
            let start = d;
            while d < self.len() && self.masks[d] == self.masks[start - 1] {
                d += 1;
            }
            out.push((start, d, self.masks[start - 1]));
            d += 1;
        }
        out
    }

    /// Render as gapped text rows.
    pub fn render_rows(&self, group: &OrthologGroup) -> Vec<String> {
        let n = self.n_species();
        let mut rows = vec![String::with_capacity(self.len()); n];
        for d in 1..=self.len() {
            for (m, row) in rows.iter_mut().enumerate() {
                match self.position(d, m) {
                    Some(p) => row.push(decode_base(group.seqs[m][p])),
                    None => row.push('-'),
                }
            }
        }
        rows
    }

    /// One line per point: tab-separated coordinates, then the mask in binary
    /// with species 1 as the leftmost digit (all zeros at the origin).
    pub fn dump(&self) -> String {
        let n = self.n_species();
        let mut out = String::new();
        for d in 0..=self.len() {
            for c in self.coords(d) {
                write!(out, "{c}\t").unwrap();
            }
            let mask = if d == 0 { 0 } else { self.ec(d) };
            for m in 0..n {
                out.push(if mask & (1 << m) != 0 { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    /// Inverse of [`AlignmentPath::dump`].
    pub fn parse_dump(text: &str) -> Result<Self> {
        let mut lengths: Option<Vec<usize>> = None;
        let mut columns = Vec::new();
        for (i, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
            let fields: Vec<&str> = line.split('\t').collect();
            let bits = fields.last().copied().unwrap_or_default();
            let coords: Vec<usize> = fields[..fields.len() - 1]
                .iter()
                .map(|f| f.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidAlignment(format!("line {}: {e}", i + 1)))?;
            if i > 0 {
                let mut mask = 0;
                for (m, ch) in bits.chars().enumerate() {
                    if ch == '1' {
                        mask |= 1 << m;
                    }
                }
                columns.push(mask);
            }
            lengths = Some(coords);
        }
        let lengths =
            lengths.ok_or_else(|| Error::InvalidAlignment("empty alignment dump".into()))?;
        AlignmentPath::build(&lengths, &columns)
    }
}
