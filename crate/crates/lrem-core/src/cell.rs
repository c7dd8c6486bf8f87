//! Unit-cell geometry: design parameterization, mass, and structured meshing.
//!
//! The square cell of side `a` is layered hard-soft-hard and concentric: a
//! matrix frame whose total wall width is `x_m` across the cell (half on each
//! side, so the frame interior is `(a - x_m) x (a - y_m)`), a soft filler
//! frame of total widths (`x_f`, `y_f`) inside it, and the remaining central
//! rectangle acting as the resonator. The filler fully separates the
//! resonator from the hard frame, which is what creates the local resonance.
//! Under periodic tiling the half-walls of adjacent cells join into a
//! continuous grid of walls of widths (`x_m`, `y_m`).

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default cell side length in mm.
pub const DEFAULT_CELL_SIDE_MM: f64 = 20.0;

/// The four geometric design variables, all in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitCellDesign {
    /// Matrix wall width in x.
    pub x_m: f64,
    /// Matrix wall width in y.
    pub y_m: f64,
    /// Filler band width in x.
    pub x_f: f64,
    /// Filler band width in y.
    pub y_f: f64,
}

impl UnitCellDesign {
    pub fn new(x_m: f64, y_m: f64, x_f: f64, y_f: f64) -> Self {
        Self { x_m, y_m, x_f, y_f }
    }

    /// Variables in the order `[x_m, y_m, x_f, y_f]`.
    pub fn as_array(&self) -> [f64; 4] {
        [self.x_m, self.y_m, self.x_f, self.y_f]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    /// Check the variable bounds and the positive-interior condition.
    pub fn validate(&self, bounds: &DesignBounds, a_mm: f64) -> Result<()> {
        let names = ["x_m", "y_m", "x_f", "y_f"];
        let vals = self.as_array();
        for i in 0..4 {
            if !(vals[i] >= bounds.lo[i] && vals[i] <= bounds.hi[i]) || !vals[i].is_finite() {
                return Err(Error::Domain(format!(
                    "design variable {} = {} outside bounds [{}, {}]",
                    names[i], vals[i], bounds.lo[i], bounds.hi[i]
                )));
            }
        }
        if a_mm - self.x_m - self.x_f <= 0.0 {
            return Err(Error::Domain(format!(
                "a - x_m - x_f = {} must be positive",
                a_mm - self.x_m - self.x_f
            )));
        }
        if a_mm - self.y_m - self.y_f <= 0.0 {
            return Err(Error::Domain(format!(
                "a - y_m - y_f = {} must be positive",
                a_mm - self.y_m - self.y_f
            )));
        }
        Ok(())
    }
}

/// Box bounds on the design variables, ordered `[x_m, y_m, x_f, y_f]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignBounds {
    pub lo: [f64; 4],
    pub hi: [f64; 4],
}

impl Default for DesignBounds {
    fn default() -> Self {
        Self { lo: [1.0; 4], hi: [3.0, 5.0, 3.0, 5.0] }
    }
}

impl DesignBounds {
    /// Clip a raw variable vector into the bounds box.
    pub fn clip(&self, v: [f64; 4]) -> [f64; 4] {
        let mut out = v;
        for i in 0..4 {
            out[i] = out[i].clamp(self.lo[i], self.hi[i]);
        }
        out
    }
}

/// Isotropic plate material for one region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialSpec {
    /// Young's modulus in Pa.
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    /// Density in kg/m^3.
    pub density: f64,
    /// Plate thickness in m.
    pub thickness: f64,
}

impl MaterialSpec {
    pub fn validate(&self) -> Result<()> {
        if self.youngs_modulus <= 0.0
            || self.density <= 0.0
            || self.thickness <= 0.0
            || self.poisson_ratio <= 0.0
            || self.poisson_ratio >= 0.5
        {
            return Err(Error::Domain(format!("invalid material: {self:?}")));
        }
        Ok(())
    }

    /// Areal mass density rho * t in kg/m^2.
    pub fn areal_density(&self) -> f64 {
        self.density * self.thickness
    }
}

/// The three cell regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Matrix,
    Filler,
    Resonator,
}

/// Materials for the three regions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialSet {
    pub matrix: MaterialSpec,
    pub filler: MaterialSpec,
    pub resonator: MaterialSpec,
}

impl Default for MaterialSet {
    /// Aluminum matrix, rubber-soft filler, heavy (brass-like) resonator.
    ///
    /// The filler modulus is the one constant on the MPa scale: a GPa-stiff
    /// filler would push every cell resonance to tens of kHz, while the
    /// soft-suspension value below places the local-resonance bandgaps in the
    /// 0-2000 Hz range these cells are designed for.
    fn default() -> Self {
        Self {
            matrix: MaterialSpec {
                youngs_modulus: 68.9e9,
                poisson_ratio: 0.33,
                density: 2700.0,
                thickness: 2.0e-3,
            },
            filler: MaterialSpec {
                youngs_modulus: 4.5e6,
                poisson_ratio: 0.43,
                density: 1565.0,
                thickness: 2.0e-3,
            },
            resonator: MaterialSpec {
                youngs_modulus: 106.0e9,
                poisson_ratio: 0.32,
                density: 8500.0,
                thickness: 3.0e-3,
            },
        }
    }
}

impl MaterialSet {
    pub fn get(&self, region: Region) -> &MaterialSpec {
        match region {
            Region::Matrix => &self.matrix,
            Region::Filler => &self.filler,
            Region::Resonator => &self.resonator,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.matrix.validate()?;
        self.filler.validate()?;
        self.resonator.validate()
    }
}

/// Which thickness-density pairing the mass formula uses.
///
/// `Corrected` pairs every region with its own thickness and density.
/// `AsPrinted` keeps the transposed filler/resonator pairing (matrix thickness
/// with resonator density on the inner area and vice versa) for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassFormula {
    Corrected,
    AsPrinted,
}

impl Default for MassFormula {
    fn default() -> Self {
        MassFormula::Corrected
    }
}

/// Areas of the three regions in mm^2, ordered (matrix, filler, resonator).
pub fn region_areas_mm2(design: &UnitCellDesign, a_mm: f64) -> (f64, f64, f64) {
    let inner1 = (a_mm - design.x_m) * (a_mm - design.y_m);
    let inner2 = (a_mm - design.x_m - design.x_f) * (a_mm - design.y_m - design.y_f);
    (a_mm * a_mm - inner1, inner1 - inner2, inner2)
}

/// Cell mass in grams with the corrected thickness-density pairing.
pub fn mass_g(design: &UnitCellDesign, mats: &MaterialSet, a_mm: f64) -> Result<f64> {
    mass_g_with(design, mats, a_mm, MassFormula::Corrected)
}

/// Cell mass in grams under the chosen pairing.
pub fn mass_g_with(
    design: &UnitCellDesign,
    mats: &MaterialSet,
    a_mm: f64,
    formula: MassFormula,
) -> Result<f64> {
    design.validate(&DesignBounds::default(), a_mm)?;
    let (area_m, area_f, area_r) = region_areas_mm2(design, a_mm);
    let (sigma_f, sigma_r) = match formula {
        MassFormula::Corrected => (mats.filler.areal_density(), mats.resonator.areal_density()),
        MassFormula::AsPrinted => (
            mats.resonator.thickness * mats.filler.density,
            mats.filler.thickness * mats.resonator.density,
        ),
    };
    // kg/m^2 * mm^2 = 1e-6 kg = 1e-3 g
    let grams_per = 1e-3;
    Ok(grams_per
        * (mats.matrix.areal_density() * area_m + sigma_f * area_f + sigma_r * area_r))
}

/// Analytic gradient of `mass_g` w.r.t. `[x_m, y_m, x_f, y_f]` in g/mm.
pub fn mass_gradient(design: &UnitCellDesign, mats: &MaterialSet, a_mm: f64) -> [f64; 4] {
    let sm = mats.matrix.areal_density();
    let sf = mats.filler.areal_density();
    let sr = mats.resonator.areal_density();
    let rx = a_mm - design.x_m - design.x_f; // resonator extent in x
    let ry = a_mm - design.y_m - design.y_f;
    let mx = a_mm - design.x_m; // inner extent past the matrix band
    let my = a_mm - design.y_m;
    let g = |d_inner1: f64, d_inner2: f64| {
        // d(mass)/dv from d(inner1)/dv and d(inner2)/dv
        sm * (-d_inner1) + sf * (d_inner1 - d_inner2) + sr * d_inner2
    };
    [
        1e-3 * g(-my, -ry),
        1e-3 * g(-mx, -rx),
        1e-3 * g(0.0, -ry),
        1e-3 * g(0.0, -rx),
    ]
}

/// Region containing a point of the cell; interface points belong to the inner region.
pub fn region_of(point: (f64, f64), design: &UnitCellDesign, a_mm: f64) -> Result<Region> {
    let (x, y) = point;
    if !(0.0..=a_mm).contains(&x) || !(0.0..=a_mm).contains(&y) {
        return Err(Error::Domain(format!(
            "point ({x}, {y}) outside the cell [0, {a_mm}]^2"
        )));
    }
    // distance to the nearest cell edge, per axis
    let ex = x.min(a_mm - x);
    let ey = y.min(a_mm - y);
    if ex < 0.5 * design.x_m || ey < 0.5 * design.y_m {
        Ok(Region::Matrix)
    } else if ex < 0.5 * (design.x_m + design.x_f) || ey < 0.5 * (design.y_m + design.y_f) {
        Ok(Region::Filler)
    } else {
        Ok(Region::Resonator)
    }
}

/// Structured conforming quadrilateral mesh of one unit cell.
///
/// Nodes form a tensor grid `x_lines` x `y_lines`; node `(i, j)` has index
/// `j * (nx + 1) + i` and element `(i, j)` the counter-clockwise connectivity
/// `[(i,j), (i+1,j), (i+1,j+1), (i,j+1)]`.
#[derive(Debug, Clone)]
pub struct CellMesh {
    /// Grid line coordinates in mm, strictly increasing.
    pub x_lines: Vec<f64>,
    pub y_lines: Vec<f64>,
    /// Node coordinates in mm, row-major over (i, j).
    pub nodes: Vec<[f64; 2]>,
    /// Quad connectivity, counter-clockwise.
    pub elements: Vec<[usize; 4]>,
    /// Material region per element.
    pub regions: Vec<Region>,
}

impl CellMesh {
    /// Elements along x.
    pub fn nx(&self) -> usize {
        self.x_lines.len() - 1
    }

    /// Elements along y.
    pub fn ny(&self) -> usize {
        self.y_lines.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.nx() + 1) + i
    }

    /// Build a tensor-product mesh with a caller-supplied region rule.
    ///
    /// `region_at` is evaluated at element centroids. This is also the entry
    /// point for tests that need small non-conforming meshes.
    pub fn structured(
        x_lines: Vec<f64>,
        y_lines: Vec<f64>,
        mut region_at: impl FnMut(f64, f64) -> Region,
    ) -> Result<Self> {
        if x_lines.len() < 2 || y_lines.len() < 2 {
            return Err(Error::Mesh("need at least one element per direction".into()));
        }
        for lines in [&x_lines, &y_lines] {
            for w in lines.windows(2) {
                if w[1] - w[0] <= 0.0 {
                    return Err(Error::Mesh(format!(
                        "grid lines must be strictly increasing, got {} then {}",
                        w[0], w[1]
                    )));
                }
            }
        }
        let nx = x_lines.len() - 1;
        let ny = y_lines.len() - 1;
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for &y in &y_lines {
            for &x in &x_lines {
                nodes.push([x, y]);
            }
        }
        let mut elements = Vec::with_capacity(nx * ny);
        let mut regions = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let n0 = j * (nx + 1) + i;
                elements.push([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1]);
                let cx = 0.5 * (x_lines[i] + x_lines[i + 1]);
                let cy = 0.5 * (y_lines[j] + y_lines[j + 1]);
                regions.push(region_at(cx, cy));
            }
        }
        Ok(Self { x_lines, y_lines, nodes, elements, regions })
    }
}

/// Grid line positions for one direction: half matrix band, half filler band,
/// resonator interior, then their mirror images. Five strips.
fn strip_lines(m: f64, f: f64, a: f64) -> Result<Vec<f64>> {
    if m <= 0.0 || f <= 0.0 {
        return Err(Error::Domain(format!(
            "degenerate region strip: widths ({m}, {f}) must be positive"
        )));
    }
    if a - m - f <= 0.0 {
        return Err(Error::Domain(format!(
            "degenerate interior strip: a - {m} - {f} = {}",
            a - m - f
        )));
    }
    Ok(vec![0.0, 0.5 * m, 0.5 * (m + f), a - 0.5 * (m + f), a - 0.5 * m, a])
}

/// Subdivide strips so the largest element edge stays within 20x the smallest.
fn subdivide(strips: &[f64], n_base: usize, cap: f64) -> Vec<usize> {
    strips
        .iter()
        .map(|w| n_base.max((w / cap - 1e-12).ceil() as usize))
        .collect()
}

/// Mesh one unit cell with at least `divisions_per_strip` element divisions per
/// material strip per direction. Grid lines are snapped to the material
/// interfaces, so no element straddles two regions.
pub fn mesh_cell(
    design: &UnitCellDesign,
    divisions_per_strip: usize,
    a_mm: f64,
) -> Result<CellMesh> {
    if divisions_per_strip < 1 {
        return Err(Error::Domain("divisions per strip must be >= 1".into()));
    }
    let xb = strip_lines(design.x_m, design.x_f, a_mm)?;
    let yb = strip_lines(design.y_m, design.y_f, a_mm)?;
    let widths = |b: &[f64]| b.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>();
    let wx = widths(&xb);
    let wy = widths(&yb);
    let min_w = wx.iter().chain(wy.iter()).cloned().fold(f64::INFINITY, f64::min);
    let cap = 20.0 * min_w / divisions_per_strip as f64;
    let expand = |breaks: &[f64], divs: &[usize]| {
        let mut lines = vec![breaks[0]];
        for (s, &n) in divs.iter().enumerate() {
            let (lo, hi) = (breaks[s], breaks[s + 1]);
            for t in 1..=n {
                lines.push(lo + (hi - lo) * t as f64 / n as f64);
            }
        }
        lines
    };
    let x_lines = expand(&xb, &subdivide(&wx, divisions_per_strip, cap));
    let y_lines = expand(&yb, &subdivide(&wy, divisions_per_strip, cap));
    CellMesh::structured(x_lines, y_lines, |cx, cy| {
        region_of((cx, cy), design, a_mm).expect("centroid inside cell")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const A: f64 = DEFAULT_CELL_SIDE_MM;

    fn mats() -> MaterialSet {
        MaterialSet::default()
    }

    #[test]
    fn mass_reference_designs() {
        // Region areas 76/68/256 mm^2 at (2,2,2,2) with the default densities
        // and thicknesses give these hand-computed values.
        let cases = [
            (UnitCellDesign::new(2.0, 2.0, 2.0, 2.0), 7.15124),
            (UnitCellDesign::new(3.0, 5.0, 3.0, 5.0), 4.71295),
            (UnitCellDesign::new(1.0, 1.0, 1.0, 1.0), 8.58841),
        ];
        for (d, expect) in cases {
            let m = mass_g(&d, &mats(), A).unwrap();
            assert!((m - expect).abs() < 1e-9, "mass {m} != {expect}");
        }
    }

    #[test]
    fn mass_printed_formula_swaps_pairing() {
        let d = UnitCellDesign::new(2.0, 2.0, 2.0, 2.0);
        let printed = mass_g_with(&d, &mats(), A, MassFormula::AsPrinted).unwrap();
        // t_f*rho_R on the 256 mm^2 resonator area, t_r*rho_F on the 68 mm^2 filler.
        let expect = 1e-3 * (5.4 * 76.0 + 0.003 * 1565.0 * 68.0 + 0.002 * 8500.0 * 256.0);
        assert!((printed - expect).abs() < 1e-9);
        assert!((printed - mass_g(&d, &mats(), A).unwrap()).abs() > 0.1);
    }

    #[test]
    fn mass_rejects_out_of_bounds() {
        let d = UnitCellDesign::new(0.5, 2.0, 2.0, 2.0);
        let err = mass_g(&d, &mats(), A).unwrap_err();
        assert!(err.to_string().contains("x_m"), "unexpected: {err}");
    }

    #[test]
    fn mass_matches_mesh_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = DesignBounds::default();
        for _ in 0..10 {
            let d = UnitCellDesign::new(
                rng.gen_range(b.lo[0]..b.hi[0]),
                rng.gen_range(b.lo[1]..b.hi[1]),
                rng.gen_range(b.lo[2]..b.hi[2]),
                rng.gen_range(b.lo[3]..b.hi[3]),
            );
            let mesh = mesh_cell(&d, 2, A).unwrap();
            let mut sum = 0.0;
            for (e, &r) in mesh.elements.iter().zip(&mesh.regions) {
                let [x0, y0] = mesh.nodes[e[0]];
                let [x1, y1] = mesh.nodes[e[2]];
                sum += (x1 - x0) * (y1 - y0) * mats().get(r).areal_density() * 1e-3;
            }
            let m = mass_g(&d, &mats(), A).unwrap();
            assert!((sum - m).abs() <= 1e-9 * m, "mesh sum {sum} vs mass {m}");
        }
    }

    #[test]
    fn mass_decreases_in_every_variable() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = DesignBounds::default();
        let h = 1e-4;
        for _ in 0..20 {
            let mut v = [0.0; 4];
            for i in 0..4 {
                v[i] = rng.gen_range(b.lo[i] + h..b.hi[i] - h);
            }
            for i in 0..4 {
                let mut up = v;
                up[i] += h;
                let mut dn = v;
                dn[i] -= h;
                let slope = (mass_g(&UnitCellDesign::from_array(up), &mats(), A).unwrap()
                    - mass_g(&UnitCellDesign::from_array(dn), &mats(), A).unwrap())
                    / (2.0 * h);
                assert!(slope < 0.0, "mass slope {slope} in var {i} at {v:?}");
                let grad = mass_gradient(&UnitCellDesign::from_array(v), &mats(), A);
                assert!(
                    (grad[i] - slope).abs() < 1e-6,
                    "analytic {} vs fd {}",
                    grad[i],
                    slope
                );
            }
        }
    }

    #[test]
    fn region_lookup_examples() {
        // (2,2,2,2): matrix within 1 mm of an edge, filler within 2 mm, resonator inside
        let d = UnitCellDesign::new(2.0, 2.0, 2.0, 2.0);
        assert_eq!(region_of((0.5, 10.0), &d, A).unwrap(), Region::Matrix);
        assert_eq!(region_of((10.0, 10.0), &d, A).unwrap(), Region::Resonator);
        assert_eq!(region_of((1.5, 10.0), &d, A).unwrap(), Region::Filler);
        assert_eq!(region_of((18.5, 10.0), &d, A).unwrap(), Region::Filler);
        assert_eq!(region_of((10.0, 19.5), &d, A).unwrap(), Region::Matrix);
        // interface points belong to the inner region
        assert_eq!(region_of((1.0, 10.0), &d, A).unwrap(), Region::Filler);
        assert_eq!(region_of((2.0, 10.0), &d, A).unwrap(), Region::Resonator);
        assert_eq!(region_of((18.0, 10.0), &d, A).unwrap(), Region::Resonator);
        assert!(region_of((-0.1, 0.0), &d, A).is_err());
        assert!(region_of((0.0, 20.1), &d, A).is_err());
    }

    #[test]
    fn mesh_examples() {
        let d = UnitCellDesign::new(2.0, 2.0, 2.0, 2.0);
        let mesh = mesh_cell(&d, 1, A).unwrap();
        assert_eq!(mesh.x_lines, vec![0.0, 1.0, 2.0, 18.0, 19.0, 20.0]);
        assert_eq!((mesh.nx(), mesh.ny()), (5, 5));
        assert_eq!(mesh.n_nodes(), 36);

        let d2 = UnitCellDesign::new(3.0, 5.0, 3.0, 5.0);
        let mesh2 = mesh_cell(&d2, 2, A).unwrap();
        assert_eq!((mesh2.nx(), mesh2.ny()), (10, 10));
    }

    #[test]
    fn mesh_rejects_degenerate_and_bad_divisions() {
        let d = UnitCellDesign::new(10.0, 2.0, 10.0, 2.0);
        assert!(mesh_cell(&d, 1, A).is_err());
        let ok = UnitCellDesign::new(2.0, 2.0, 2.0, 2.0);
        assert!(mesh_cell(&ok, 0, A).is_err());
    }

    #[test]
    fn mesh_conforms_to_interfaces_and_caps_aspect() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = DesignBounds::default();
        for _ in 0..10 {
            let d = UnitCellDesign::new(
                rng.gen_range(b.lo[0]..b.hi[0]),
                rng.gen_range(b.lo[1]..b.hi[1]),
                rng.gen_range(b.lo[2]..b.hi[2]),
                rng.gen_range(b.lo[3]..b.hi[3]),
            );
            let mesh = mesh_cell(&d, 1, A).unwrap();
            // no element straddles a material interface line
            let hx = 0.5 * d.x_m;
            let fx = 0.5 * (d.x_m + d.x_f);
            for cut in [hx, fx, A - fx, A - hx] {
                for w in mesh.x_lines.windows(2) {
                    assert!(!(w[0] < cut && cut < w[1]), "x interface {cut} inside {w:?}");
                }
            }
            let hy = 0.5 * d.y_m;
            let fy = 0.5 * (d.y_m + d.y_f);
            for cut in [hy, fy, A - fy, A - hy] {
                for w in mesh.y_lines.windows(2) {
                    assert!(!(w[0] < cut && cut < w[1]), "y interface {cut} inside {w:?}");
                }
            }
            let sizes: Vec<f64> = mesh
                .x_lines
                .windows(2)
                .chain(mesh.y_lines.windows(2))
                .map(|w| w[1] - w[0])
                .collect();
            let max = sizes.iter().cloned().fold(0.0, f64::max);
            let min = sizes.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(max / min <= 20.0 + 1e-9, "aspect {} for {d:?}", max / min);
            // opposite edges share the tensor grid, so their spacing matches
            assert_eq!(mesh.x_lines.len(), mesh.nx() + 1);
        }
    }
}
