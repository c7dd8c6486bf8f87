//! Irreducible-Brillouin-zone sweeps, band structures, and bandgap extraction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

use crate::cell::{mesh_cell, MaterialSet, UnitCellDesign, DEFAULT_CELL_SIDE_MM};
use crate::fem::{assemble, reduce, solve_bands, BlochTransform};
use crate::{Error, Result};

/// Width filter: only gaps wider than this many Hz count.
pub const GAP_MIN_WIDTH_HZ: f64 = 20.0;
/// Frequency range of interest.
pub const FREQ_RANGE_HZ: (f64, f64) = (0.0, 2000.0);
/// Gap label assigned to designs without a bandgap in range, placed above the
/// range so normalization stays well-posed.
pub const SENTINEL_GAP: Bandgap = Bandgap { start_hz: 2100.0, end_hz: 2200.0 };

/// A full (omnidirectional) bandgap `[start, end]` in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandgap {
    pub start_hz: f64,
    pub end_hz: f64,
}

impl Bandgap {
    pub fn new(start_hz: f64, end_hz: f64) -> Self {
        Self { start_hz, end_hz }
    }

    pub fn width(&self) -> f64 {
        self.end_hz - self.start_hz
    }

    /// True for the out-of-range sentinel encoding.
    pub fn is_sentinel(&self) -> bool {
        self.start_hz > FREQ_RANGE_HZ.1 && self.end_hz > FREQ_RANGE_HZ.1
    }
}

/// Sampled wavevector loop through the IBZ.
#[derive(Debug, Clone, PartialEq)]
pub struct KPath {
    pub points: Vec<(f64, f64)>,
}

/// The IBZ loop (pi,pi) -> (0,0) -> (pi,0) -> (pi,pi) with `n_per_segment`
/// steps per leg; junction points appear once, so the path has `3n + 1` points.
pub fn ibz_path(n_per_segment: usize) -> Result<KPath> {
    if n_per_segment < 1 {
        return Err(Error::Domain("k-path needs at least one sample per segment".into()));
    }
    let vertices = [(PI, PI), (0.0, 0.0), (PI, 0.0), (PI, PI)];
    let n = n_per_segment as f64;
    let mut points = Vec::with_capacity(3 * n_per_segment + 1);
    for seg in 0..3 {
        let (ax, ay) = vertices[seg];
        let (bx, by) = vertices[seg + 1];
        for t in 0..n_per_segment {
            let f = t as f64 / n;
            points.push((ax + (bx - ax) * f, ay + (by - ay) * f));
        }
    }
    points.push(vertices[3]);
    Ok(KPath { points })
}

/// Settings for one dispersion run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DispersionSettings {
    pub materials: MaterialSet,
    pub cell_side_mm: f64,
    pub divisions_per_strip: usize,
    pub n_bands: usize,
}

impl Default for DispersionSettings {
    fn default() -> Self {
        Self {
            materials: MaterialSet::default(),
            cell_side_mm: DEFAULT_CELL_SIDE_MM,
            divisions_per_strip: 2,
            n_bands: 15,
        }
    }
}

/// Band frequencies over a k-path, ascending within each row.
#[derive(Debug, Clone)]
pub struct BandStructure {
    pub k_points: Vec<(f64, f64)>,
    /// `freqs_hz[k_index][band_index]` in Hz.
    pub freqs_hz: Vec<Vec<f64>>,
    pub design: Option<UnitCellDesign>,
}

impl BandStructure {
    pub fn n_bands(&self) -> usize {
        self.freqs_hz.first().map_or(0, Vec::len)
    }

    /// Envelope of band `j`: (min over k, max over k).
    pub fn band_envelope(&self, j: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in &self.freqs_hz {
            lo = lo.min(row[j]);
            hi = hi.max(row[j]);
        }
        (lo, hi)
    }

    /// CSV export: `k_index, kx, ky, band_1..band_n`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let n = self.n_bands();
        write!(w, "k_index,kx,ky")?;
        for b in 1..=n {
            write!(w, ",band_{b}")?;
        }
        writeln!(w)?;
        for (i, ((kx, ky), row)) in self.k_points.iter().zip(&self.freqs_hz).enumerate() {
            write!(w, "{i},{kx},{ky}")?;
            for f in row {
                write!(w, ",{f}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Sweep the k-path: mesh and assemble once, then solve the reduced pencil at
/// every k-point (in parallel).
pub fn compute_dispersion(
    design: &UnitCellDesign,
    path: &KPath,
    settings: &DispersionSettings,
) -> Result<BandStructure> {
    let mesh = mesh_cell(design, settings.divisions_per_strip, settings.cell_side_mm)?;
    let sys = assemble(&mesh, &settings.materials)?;
    let freqs_hz: Result<Vec<Vec<f64>>> = path
        .points
        .par_iter()
        .enumerate()
        .map(|(i, &(kx, ky))| {
            let annotate = |e: Error| {
                Error::Numeric(format!("at k-point #{i} ({kx:.4}, {ky:.4}): {e}"))
            };
            let t = BlochTransform::for_mesh(&mesh, kx, ky).map_err(annotate)?;
            let red = reduce(&sys, &t);
            let omegas = solve_bands(&red, settings.n_bands).map_err(annotate)?;
            Ok(omegas.into_iter().map(|w| w / (2.0 * PI)).collect())
        })
        .collect();
    Ok(BandStructure { k_points: path.points.clone(), freqs_hz: freqs_hz?, design: Some(*design) })
}

/// Extract full bandgaps: between consecutive bands `j` and `j+1` a gap exists
/// when the minimum of the upper band exceeds the maximum of the lower band by
/// more than `min_width_hz`. Gaps are clipped to `range_hz` and sorted.
pub fn extract_bandgaps(
    bs: &BandStructure,
    min_width_hz: f64,
    range_hz: (f64, f64),
) -> Vec<Bandgap> {
    let n = bs.n_bands();
    let mut gaps = Vec::new();
    for j in 0..n.saturating_sub(1) {
        let (_, lower_max) = bs.band_envelope(j);
        let (upper_min, _) = bs.band_envelope(j + 1);
        if upper_min - lower_max > min_width_hz && upper_min > range_hz.0 && lower_max < range_hz.1
        {
            gaps.push(Bandgap::new(lower_max.max(range_hz.0), upper_min.min(range_hz.1)));
        }
    }
    gaps.sort_by(|a, b| a.start_hz.total_cmp(&b.start_hz));
    gaps
}

/// The widest gap (ties broken by the lower start frequency), or the sentinel
/// when no gap exists.
pub fn primary_bandgap(gaps: &[Bandgap]) -> Bandgap {
    primary_bandgap_or(gaps, SENTINEL_GAP)
}

/// As [`primary_bandgap`] with a caller-provided sentinel.
pub fn primary_bandgap_or(gaps: &[Bandgap], sentinel: Bandgap) -> Bandgap {
    gaps.iter()
        .cloned()
        .max_by(|a, b| {
            a.width()
                .total_cmp(&b.width())
                .then(b.start_hz.total_cmp(&a.start_hz))
        })
        .unwrap_or(sentinel)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(rows: Vec<Vec<f64>>) -> BandStructure {
        BandStructure {
            k_points: (0..rows.len()).map(|i| (i as f64, 0.0)).collect(),
            freqs_hz: rows,
            design: None,
        }
    }

    #[test]
    fn path_examples() {
        let p1 = ibz_path(1).unwrap();
        assert_eq!(p1.points, vec![(PI, PI), (0.0, 0.0), (PI, 0.0), (PI, PI)]);

        let p2 = ibz_path(2).unwrap();
        assert_eq!(p2.points.len(), 7);
        let mid = |a: (f64, f64), b: (f64, f64)| ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0);
        assert_eq!(p2.points[1], mid((PI, PI), (0.0, 0.0)));
        assert_eq!(p2.points[3], mid((0.0, 0.0), (PI, 0.0)));
        assert_eq!(p2.points[5], mid((PI, 0.0), (PI, PI)));
        assert_eq!(p2.points.first(), p2.points.last());

        assert!(ibz_path(0).is_err());
    }

    #[test]
    fn gap_between_separated_bands() {
        let bs = synthetic(vec![vec![700.0, 1150.0], vec![800.0, 1100.0]]);
        let gaps = extract_bandgaps(&bs, GAP_MIN_WIDTH_HZ, FREQ_RANGE_HZ);
        assert_eq!(gaps, vec![Bandgap::new(800.0, 1100.0)]);
    }

    #[test]
    fn overlapping_bands_yield_no_gap() {
        let bs = synthetic(vec![vec![700.0, 900.0], vec![950.0, 1100.0]]);
        assert!(extract_bandgaps(&bs, GAP_MIN_WIDTH_HZ, FREQ_RANGE_HZ).is_empty());
    }

    #[test]
    fn narrow_gaps_are_rejected() {
        for width in [15.0, 20.0] {
            let bs = synthetic(vec![vec![800.0, 800.0 + width]]);
            assert!(
                extract_bandgaps(&bs, GAP_MIN_WIDTH_HZ, FREQ_RANGE_HZ).is_empty(),
                "width {width} must be rejected"
            );
        }
        let bs = synthetic(vec![vec![800.0, 820.5]]);
        assert_eq!(extract_bandgaps(&bs, GAP_MIN_WIDTH_HZ, FREQ_RANGE_HZ).len(), 1);
    }

    #[test]
    fn gaps_clip_to_range() {
        let bs = synthetic(vec![vec![1900.0, 2500.0]]);
        let gaps = extract_bandgaps(&bs, GAP_MIN_WIDTH_HZ, FREQ_RANGE_HZ);
        assert_eq!(gaps, vec![Bandgap::new(1900.0, 2000.0)]);

        let above = synthetic(vec![vec![2100.0, 2600.0]]);
        assert!(extract_bandgaps(&above, GAP_MIN_WIDTH_HZ, FREQ_RANGE_HZ).is_empty());
    }

    #[test]
    fn primary_gap_selection() {
        let a = Bandgap::new(800.0, 1100.0);
        let b = Bandgap::new(1500.0, 1540.0);
        assert_eq!(primary_bandgap(&[a, b]), a);
        assert_eq!(primary_bandgap(&[b, a]), a);
        assert_eq!(primary_bandgap(&[]), SENTINEL_GAP);

        // equal widths: lowest start wins, in any order
        let c = Bandgap::new(100.0, 400.0);
        let d = Bandgap::new(1000.0, 1300.0);
        assert_eq!(primary_bandgap(&[c, d]), c);
        assert_eq!(primary_bandgap(&[d, c]), c);
    }

    #[test]
    fn extraction_agrees_with_coverage_oracle() {
        // oracle: merge band envelope intervals, complement over the range,
        // then cross-check every integer frequency for coverage
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let n_k = rng.gen_range(2..6);
            let n_bands = rng.gen_range(2..8);
            let mut rows = vec![Vec::with_capacity(n_bands); n_k];
            let mut base = 0.0f64;
            for b in 0..n_bands {
                base += rng.gen_range(0.0..400.0);
                let spread = rng.gen_range(1.0..300.0);
                for row in rows.iter_mut() {
                    row.push(base + rng.gen_range(0.0..spread));
                }
                let _ = b;
            }
            for row in rows.iter_mut() {
                row.sort_by(f64::total_cmp);
            }
            let bs = synthetic(rows);
            let gaps = extract_bandgaps(&bs, GAP_MIN_WIDTH_HZ, FREQ_RANGE_HZ);

            // independent route: interval union sweep
            let mut envs: Vec<(f64, f64)> =
                (0..bs.n_bands()).map(|j| bs.band_envelope(j)).collect();
            envs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut merged: Vec<(f64, f64)> = Vec::new();
            for (lo, hi) in envs {
                match merged.last_mut() {
                    Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                    _ => merged.push((lo, hi)),
                }
            }
            let mut oracle = Vec::new();
            for w in merged.windows(2) {
                let (start, end) = (w[0].1, w[1].0);
                if end - start > GAP_MIN_WIDTH_HZ && end > FREQ_RANGE_HZ.0 && start < FREQ_RANGE_HZ.1
                {
                    oracle.push(Bandgap::new(start.max(FREQ_RANGE_HZ.0), end.min(FREQ_RANGE_HZ.1)));
                }
            }
            assert_eq!(gaps, oracle);

            // integer coverage: f uncovered iff strictly inside a merged-complement gap
            let covered = |f: f64| merged.iter().any(|&(lo, hi)| lo <= f && f <= hi);
            for f in (0..=2000).map(f64::from) {
                let in_gap = gaps.iter().any(|g| g.start_hz < f && f < g.end_hz);
                if in_gap {
                    assert!(!covered(f), "f = {f} inside an extracted gap but covered");
                }
            }
        }
    }

    #[test]
    fn extracted_gaps_are_disjoint_and_sorted() {
        let bs = synthetic(vec![
            vec![100.0, 300.0, 900.0, 1800.0],
            vec![150.0, 500.0, 950.0, 1700.0],
        ]);
        let gaps = extract_bandgaps(&bs, GAP_MIN_WIDTH_HZ, FREQ_RANGE_HZ);
        for pair in gaps.windows(2) {
            assert!(pair[0].end_hz <= pair[1].start_hz);
        }
    }
}
