//! Design-space sampling, dispersion labeling, normalization, and persistence.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::bands::{
    compute_dispersion, extract_bandgaps, ibz_path, primary_bandgap_or, Bandgap,
    DispersionSettings, FREQ_RANGE_HZ, GAP_MIN_WIDTH_HZ, SENTINEL_GAP,
};
use crate::cell::{mass_g, DesignBounds, UnitCellDesign};
use crate::{Error, Result};

/// One labeled design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub design: UnitCellDesign,
    /// Primary bandgap, possibly the sentinel.
    pub gap: Bandgap,
    pub mass_g: f64,
}

/// Fixed min-max normalization ranges for the four design variables and the
/// four (duplicated) gap frequencies. Fixed bounds rather than data-driven
/// statistics keep query-time denormalization independent of the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub input_lo: [f64; 4],
    pub input_hi: [f64; 4],
    pub output_lo: [f64; 4],
    pub output_hi: [f64; 4],
}

impl NormStats {
    /// Table-2 input bounds and a [0, 2200] Hz output range that covers the
    /// sentinel encoding.
    pub fn from_bounds(bounds: &DesignBounds, output_max_hz: f64) -> Self {
        Self {
            input_lo: bounds.lo,
            input_hi: bounds.hi,
            output_lo: [0.0; 4],
            output_hi: [output_max_hz; 4],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..4 {
            if self.input_hi[i] <= self.input_lo[i] || self.output_hi[i] <= self.output_lo[i] {
                return Err(Error::Data(format!("zero-range normalization dimension {i}")));
            }
        }
        Ok(())
    }

    pub fn normalize_input(&self, v: [f64; 4]) -> [f64; 4] {
        std::array::from_fn(|i| (v[i] - self.input_lo[i]) / (self.input_hi[i] - self.input_lo[i]))
    }

    pub fn denormalize_input(&self, v: [f64; 4]) -> [f64; 4] {
        std::array::from_fn(|i| self.input_lo[i] + v[i] * (self.input_hi[i] - self.input_lo[i]))
    }

    /// Duplicate the gap bounds to `[w1, w2, w1, w2]` and scale.
    pub fn normalize_gap(&self, gap: &Bandgap) -> [f64; 4] {
        let raw = [gap.start_hz, gap.end_hz, gap.start_hz, gap.end_hz];
        std::array::from_fn(|i| {
            (raw[i] - self.output_lo[i]) / (self.output_hi[i] - self.output_lo[i])
        })
    }

    pub fn denormalize_output(&self, y: [f64; 4]) -> [f64; 4] {
        std::array::from_fn(|i| self.output_lo[i] + y[i] * (self.output_hi[i] - self.output_lo[i]))
    }
}

/// Latin-hypercube sample of the design box: every 1/n stratum of every
/// variable is hit exactly once. Deterministic for a given seed.
pub fn sample_designs(n: usize, seed: u64, bounds: &DesignBounds) -> Result<Vec<UnitCellDesign>> {
    if n < 1 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns = Vec::with_capacity(4);
    for dim in 0..4 {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        let lo = bounds.lo[dim];
        let span = bounds.hi[dim] - bounds.lo[dim];
        let col: Vec<f64> = strata
            .iter()
            .map(|&s| lo + span * ((s as f64 + rng.gen::<f64>()) / n as f64))
            .collect();
        columns.push(col);
    }
    Ok((0..n)
        .map(|i| UnitCellDesign::new(columns[0][i], columns[1][i], columns[2][i], columns[3][i]))
        .collect())
}

/// Everything needed to label a design with its primary bandgap.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelSettings {
    pub dispersion: DispersionSettings,
    pub kpath_per_segment: usize,
    pub gap_min_width_hz: f64,
    pub freq_range_hz: (f64, f64),
    pub sentinel: Bandgap,
}

impl Default for LabelSettings {
    fn default() -> Self {
        Self {
            dispersion: DispersionSettings::default(),
            kpath_per_segment: 6,
            gap_min_width_hz: GAP_MIN_WIDTH_HZ,
            freq_range_hz: FREQ_RANGE_HZ,
            sentinel: SENTINEL_GAP,
        }
    }
}

impl LabelSettings {
    /// Dispersion -> gap filter -> primary gap for one design.
    pub fn primary_gap(&self, design: &UnitCellDesign) -> Result<Bandgap> {
        Ok(primary_bandgap_or(&self.gaps(design)?, self.sentinel))
    }

    /// All filtered gaps of one design (used by the optimizer's constraint).
    pub fn gaps(&self, design: &UnitCellDesign) -> Result<Vec<Bandgap>> {
        let path = ibz_path(self.kpath_per_segment)?;
        let bs = compute_dispersion(design, &path, &self.dispersion)?;
        Ok(extract_bandgaps(&bs, self.gap_min_width_hz, self.freq_range_hz))
    }
}

/// Label designs in parallel. Per-sample failures do not abort the batch;
/// they are returned alongside the successful samples.
pub fn label(
    designs: &[UnitCellDesign],
    settings: &LabelSettings,
) -> (Vec<Sample>, Vec<(usize, String)>) {
    let results: Vec<std::result::Result<Sample, (usize, String)>> = designs
        .par_iter()
        .enumerate()
        .map(|(i, design)| {
            let gap = settings.primary_gap(design).map_err(|e| (i, e.to_string()))?;
            let mass =
                mass_g(design, &settings.dispersion.materials, settings.dispersion.cell_side_mm)
                    .map_err(|e| (i, e.to_string()))?;
            Ok(Sample { design: *design, gap, mass_g: mass })
        })
        .collect();
    let mut samples = Vec::with_capacity(designs.len());
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(s) => samples.push(s),
            Err(f) => failures.push(f),
        }
    }
    (samples, failures)
}

/// Min-max normalize inputs and duplicated outputs to [0, 1].
/// Returns per-sample 4-vectors `(x, y)` plus the stats used.
pub fn normalize(
    samples: &[Sample],
    stats: NormStats,
) -> Result<(Vec<[f64; 4]>, Vec<[f64; 4]>, NormStats)> {
    if samples.len() < 2 {
        return Err(Error::Data("need at least two samples to normalize".into()));
    }
    stats.validate()?;
    let x = samples.iter().map(|s| stats.normalize_input(s.design.as_array())).collect();
    let y = samples.iter().map(|s| stats.normalize_gap(&s.gap)).collect();
    Ok((x, y, stats))
}

/// Seed-deterministic disjoint split into (train, test).
pub fn split(samples: &[Sample], n_test: usize, seed: u64) -> Result<(Vec<Sample>, Vec<Sample>)> {
    if n_test >= samples.len() {
        return Err(Error::Data(format!(
            "test size {n_test} must be smaller than the dataset ({})",
            samples.len()
        )));
    }
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (test_idx, train_idx) = idx.split_at(n_test);
    let pick = |ids: &[usize]| ids.iter().map(|&i| samples[i]).collect::<Vec<_>>();
    Ok((pick(train_idx), pick(test_idx)))
}

/// Write samples as CSV (`x_m,y_m,x_f,y_f,w1,w2,mass`), full precision.
pub fn write_csv(path: &Path, samples: &[Sample]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "x_m,y_m,x_f,y_f,w1,w2,mass")?;
    for s in samples {
        let d = s.design;
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            d.x_m, d.y_m, d.x_f, d.y_f, s.gap.start_hz, s.gap.end_hz, s.mass_g
        )?;
    }
    Ok(())
}

/// Read a dataset CSV written by [`write_csv`]. Lines starting with `#` are
/// treated as comments.
pub fn read_csv(path: &Path) -> Result<Vec<Sample>> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    let mut saw_header = false;
    for (lineno, line) in f.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !saw_header {
            saw_header = true;
            if trimmed.starts_with("x_m") {
                continue;
            }
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Data(format!(
                "line {}: expected 7 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let mut v = [0.0f64; 7];
        for (i, field) in fields.iter().enumerate() {
            v[i] = field.trim().parse::<f64>().map_err(|e| {
                Error::Data(format!("line {}: bad number {field:?}: {e}", lineno + 1))
            })?;
        }
        out.push(Sample {
            design: UnitCellDesign::new(v[0], v[1], v[2], v[3]),
            gap: Bandgap::new(v[4], v[5]),
            mass_g: v[6],
        });
    }
    Ok(out)
}

/// Sidecar metadata written next to each dataset CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    pub sampler: String,
    pub n_samples: usize,
    pub n_failures: usize,
    pub gapless_fraction: f64,
    pub label_settings: LabelSettings,
    pub config_hash: String,
    pub created_unix: u64,
}

impl DatasetMeta {
    pub fn gather(
        seed: u64,
        samples: &[Sample],
        failures: usize,
        settings: &LabelSettings,
        config_hash: &str,
    ) -> Self {
        let gapless = samples.iter().filter(|s| s.gap.is_sentinel()).count();
        Self {
            seed,
            sampler: "latin-hypercube".into(),
            n_samples: samples.len(),
            n_failures: failures,
            gapless_fraction: gapless as f64 / samples.len().max(1) as f64,
            label_settings: settings.clone(),
            config_hash: config_hash.into(),
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Data(format!("metadata serialization: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Data(format!("metadata parse: {e}")))
    }
}
