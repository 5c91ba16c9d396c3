//! Grids on the periodic box `[-L, L)^N`, masked sub-domains, grid functions,
//! discrete norms and the `FVF1` field dump format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Smallest admissible resolution per axis.
pub const MIN_RESOLUTION: usize = 8;

/// Default lower bound on the masked-out border, as a fraction of the box width.
pub const DEFAULT_MIN_PADDING: f64 = 0.25;

/// Isotropic periodic box `[-L, L)^N` sampled with `n` points per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    extent: f64,
    n: usize,
}

impl Grid {
    pub fn new(dim: usize, extent: f64, resolution: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::InvalidGrid(format!("extent {extent} must be positive")));
        }
        if !resolution.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("resolution {resolution} is not a power of two")));
        }
        if resolution < MIN_RESOLUTION {
            return Err(Error::InvalidGrid(format!("resolution {resolution} below minimum {MIN_RESOLUTION}")));
        }
        resolution.checked_pow(dim as u32).ok_or_else(|| Error::InvalidGrid("node count overflows".into()))?;
        Ok(Self { dim, extent, n: resolution })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Half-width `L` of the box.
    pub fn extent(&self) -> f64 {
        self.extent
    }

    /// Points per axis.
    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.extent / self.n as f64
    }

    /// `h^N`, the weight of the rectangle rule.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of index `i` along any axis.
    pub fn coordinate(&self, i: usize) -> f64 {
        -self.extent + i as f64 * self.spacing()
    }

    /// Per-axis indices of a flat (row-major) node index.
    pub fn unravel(&self, flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        let mut rem = flat;
        for d in (0..self.dim).rev() {
            idx[d] = rem % self.n;
            rem /= self.n;
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx[..self.dim].iter().fold(0, |acc, &i| acc * self.n + i)
    }

    /// Physical coordinates of a node; unused trailing entries are zero.
    pub fn node(&self, flat: usize) -> [f64; 3] {
        let idx = self.unravel(flat);
        let mut x = [0.0; 3];
        for d in 0..self.dim {
            x[d] = self.coordinate(idx[d]);
        }
        x
    }

    /// Index of the node at `a - b` (periodic), used for translation-invariant kernels.
    pub fn wrap_difference(&self, a: usize, b: usize) -> usize {
        let ia = self.unravel(a);
        let ib = self.unravel(b);
        let mut out = [0usize; 3];
        for d in 0..self.dim {
            out[d] = (ia[d] + self.n - ib[d]) % self.n;
        }
        self.ravel(&out)
    }
}

/// Boolean indicator of the sub-domain Ω on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainMask {
    grid: Grid,
    inside: Vec<bool>,
    indices: Vec<usize>,
    padding_fraction: f64,
    box_halfwidth: Option<f64>,
}

impl DomainMask {
    /// Box Ω = (-ω, ω)^N with the default padding requirement.
    pub fn boxed(grid: Grid, omega_halfwidth: f64) -> Result<Self> {
        Self::boxed_with_padding(grid, omega_halfwidth, DEFAULT_MIN_PADDING)
    }

    pub fn boxed_with_padding(grid: Grid, omega_halfwidth: f64, min_padding: f64) -> Result<Self> {
        let l = grid.extent();
        if !(omega_halfwidth > 0.0 && omega_halfwidth < l) {
            return Err(Error::InvalidMask(format!("half-width {omega_halfwidth} must lie in (0, {l})")));
        }
        let padding_fraction = (l - omega_halfwidth) / (2.0 * l);
        if padding_fraction < min_padding {
            return Err(Error::InvalidMask(format!("padding {padding_fraction:.4} below configured minimum {min_padding}")));
        }
        let inside: Vec<bool> = (0..grid.len())
            .map(|i| {
                let x = grid.node(i);
                x[..grid.dim()].iter().all(|c| c.abs() < omega_halfwidth)
            })
            .collect();
        let mut mask = Self::assemble(grid, inside, padding_fraction)?;
        mask.box_halfwidth = Some(omega_halfwidth);
        Ok(mask)
    }

    /// Arbitrary indicator; the padding is measured from the inside nodes.
    pub fn from_indicator(grid: Grid, inside: Vec<bool>, min_padding: f64) -> Result<Self> {
        if inside.len() != grid.len() {
            return Err(Error::InvalidMask("indicator length does not match grid".into()));
        }
        let l = grid.extent();
        let mut dist = f64::INFINITY;
        for (i, _) in inside.iter().enumerate().filter(|(_, &b)| b) {
            let x = grid.node(i);
            for c in &x[..grid.dim()] {
                dist = dist.min(l - c.abs());
            }
        }
        let padding_fraction = dist / (2.0 * l);
        if padding_fraction < min_padding {
            return Err(Error::InvalidMask(format!("padding {padding_fraction:.4} below configured minimum {min_padding}")));
        }
        Self::assemble(grid, inside, padding_fraction)
    }

    /// Test mode: Ω is the whole torus, no padding. Constants are then in the
    /// kernel of every multiplier and solvers work modulo the mean.
    pub fn full_torus(grid: Grid) -> Self {
        let inside = vec![true; grid.len()];
        Self::assemble(grid, inside, 0.0).expect("full torus is non-empty")
    }

    fn assemble(grid: Grid, inside: Vec<bool>, padding_fraction: f64) -> Result<Self> {
        let indices: Vec<usize> = inside.iter().enumerate().filter_map(|(i, &b)| b.then_some(i)).collect();
        if indices.is_empty() {
            return Err(Error::InvalidMask("no node lies inside the domain".into()));
        }
        Ok(Self { grid, inside, indices, padding_fraction, box_halfwidth: None })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn padding_fraction(&self) -> f64 {
        self.padding_fraction
    }

    pub fn box_halfwidth(&self) -> Option<f64> {
        self.box_halfwidth
    }

    pub fn is_full_torus(&self) -> bool {
        self.indices.len() == self.grid.len()
    }

    pub fn contains(&self, flat: usize) -> bool {
        self.inside[flat]
    }

    pub fn indicator(&self) -> &[bool] {
        &self.inside
    }

    /// Flat indices of the inside nodes, ascending.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn count(&self) -> usize {
        self.indices.len()
    }

    /// Discrete measure |Ω|.
    pub fn measure(&self) -> f64 {
        self.count() as f64 * self.grid.cell_volume()
    }
}

/// Where a norm is taken.
#[derive(Debug, Clone, Copy)]
pub enum Region<'a> {
    Whole,
    Mask(&'a DomainMask),
}

/// Real grid function stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!("expected {} values, got {}", grid.len(), values.len())));
        }
        let bad = values.iter().filter(|v| !v.is_finite()).count();
        if bad > 0 {
            return Err(Error::NonFinite { count: bad });
        }
        Ok(Self { grid, values })
    }

    /// Internal constructor for values already known to be finite.
    pub(crate) fn from_vec(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    /// Samples `f` at every node; `f` receives the first `dim` coordinates.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let x = grid.node(i);
                f(&x[..grid.dim()])
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| v * c)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { grid: self.grid, values })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    /// `self + c * other`
    pub fn axpy(&self, c: f64, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + c * b)
    }

    /// Zero every node outside the mask.
    pub fn restrict(&self, mask: &DomainMask) -> Result<Self> {
        if self.grid != *mask.grid() {
            return Err(Error::GridMismatch);
        }
        let values = self.values.iter().zip(mask.indicator()).map(|(&v, &inside)| if inside { v } else { 0.0 }).collect();
        Ok(Self { grid: self.grid, values })
    }

    pub fn max_abs_outside(&self, mask: &DomainMask) -> f64 {
        self.values.iter().zip(mask.indicator()).filter(|(_, &inside)| !inside).fold(0.0, |m, (v, _)| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Values at the inside nodes, in mask order.
    pub fn gather(&self, mask: &DomainMask) -> Vec<f64> {
        mask.indices().iter().map(|&i| self.values[i]).collect()
    }

    /// Inverse of [`gather`](Self::gather): zero outside Ω.
    pub fn scatter(mask: &DomainMask, inside_values: &[f64]) -> Self {
        let grid = *mask.grid();
        let mut values = vec![0.0; grid.len()];
        for (&i, &v) in mask.indices().iter().zip(inside_values) {
            values[i] = v;
        }
        Self { grid, values }
    }

    pub fn save_fvf(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write_fvf(&mut w, &self.grid, &[&self.values])?;
        w.flush()?;
        Ok(())
    }

    pub fn load_fvf(path: impl AsRef<Path>) -> Result<Self> {
        let (grid, mut comps) = read_fvf(&mut BufReader::new(File::open(path)?))?;
        if comps.len() != 1 {
            return Err(Error::Format(format!("expected 1 component, found {}", comps.len())));
        }
        Self::new(grid, comps.pop().unwrap())
    }
}

/// `N`-component grid function, one [`ScalarField`] per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(components: Vec<ScalarField>) -> Result<Self> {
        let grid = *components.first().ok_or_else(|| Error::InvalidParameter("vector field needs components".into()))?.grid();
        if components.iter().any(|c| *c.grid() != grid) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid, components })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, components: (0..grid.dim()).map(|_| ScalarField::zeros(grid)).collect() }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn component(&self, j: usize) -> &ScalarField {
        &self.components[j]
    }

    pub fn into_components(self) -> Vec<ScalarField> {
        self.components
    }

    /// Pointwise Euclidean length `|w(x)|`.
    pub fn magnitude(&self) -> ScalarField {
        let mut values = vec![0.0; self.grid.len()];
        for c in &self.components {
            for (acc, v) in values.iter_mut().zip(c.values()) {
                *acc += v * v;
            }
        }
        values.iter_mut().for_each(|v| *v = v.sqrt());
        ScalarField { grid: self.grid, values }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { grid: self.grid, components: self.components.iter().map(|s| s.scale(c)).collect() }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let components = self.components.iter().zip(&other.components).map(|(a, b)| a.sub(b)).collect::<Result<_>>()?;
        Ok(Self { grid: self.grid, components })
    }

    /// `‖w‖_{L²}` of the pointwise magnitude over the whole grid.
    pub fn l2_norm(&self) -> f64 {
        inner(self, self).map(f64::sqrt).unwrap_or(0.0)
    }

    pub fn save_fvf(&self, path: impl AsRef<Path>) -> Result<()> {
        let comps: Vec<&[f64]> = self.components.iter().map(|c| c.values()).collect();
        let mut w = BufWriter::new(File::create(path)?);
        write_fvf(&mut w, &self.grid, &comps)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_fvf(path: impl AsRef<Path>) -> Result<Self> {
        let (grid, comps) = read_fvf(&mut BufReader::new(File::open(path)?))?;
        Self::new(comps.into_iter().map(|c| ScalarField::new(grid, c)).collect::<Result<_>>()?)
    }
}

/// Discrete `L^p` norm; `p = f64::INFINITY` gives the max norm.
pub fn lp_norm(field: &ScalarField, p: f64, region: Region<'_>) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidParameter(format!("norm exponent {p} < 1")));
    }
    let values: Box<dyn Iterator<Item = f64>> = match region {
        Region::Whole => Box::new(field.values.iter().copied()),
        Region::Mask(mask) => {
            if mask.grid() != field.grid() {
                return Err(Error::GridMismatch);
            }
            Box::new(mask.indices().iter().map(|&i| field.values[i]))
        }
    };
    if p.is_infinite() {
        return Ok(values.fold(0.0, |m, v| m.max(v.abs())));
    }
    let h = field.grid.cell_volume();
    if p == 1.0 {
        return Ok(h * values.map(f64::abs).sum::<f64>());
    }
    if p == 2.0 {
        return Ok((h * values.map(|v| v * v).sum::<f64>()).sqrt());
    }
    // Normalise by the max to keep |v|^p representable.
    let vals: Vec<f64> = values.collect();
    let m = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m == 0.0 {
        return Ok(0.0);
    }
    let s: f64 = vals.iter().map(|v| (v.abs() / m).powf(p)).sum();
    Ok(m * (h * s).powf(1.0 / p))
}

/// Discrete `L²` pairing `Σ h^N a_i b_i`.
pub trait Pairing {
    fn pairing(&self, other: &Self) -> Result<f64>;
}

impl Pairing for ScalarField {
    fn pairing(&self, other: &Self) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        Ok(self.grid.cell_volume() * s)
    }
}

impl Pairing for VectorField {
    fn pairing(&self, other: &Self) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let mut s = 0.0;
        for (a, b) in self.components.iter().zip(&other.components) {
            s += a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum::<f64>();
        }
        Ok(self.grid.cell_volume() * s)
    }
}

pub fn inner<T: Pairing>(a: &T, b: &T) -> Result<f64> {
    a.pairing(b)
}

pub const FVF_MAGIC: &[u8; 4] = b"FVF1";
/// magic, dim, n, L, component count, reserved.
pub const FVF_HEADER_LEN: usize = 4 + 4 + 4 + 8 + 4 + 4;

pub fn write_fvf<W: Write>(w: &mut W, grid: &Grid, components: &[&[f64]]) -> Result<()> {
    w.write_all(FVF_MAGIC)?;
    w.write_all(&(grid.dim() as u32).to_le_bytes())?;
    w.write_all(&(grid.resolution() as u32).to_le_bytes())?;
    w.write_all(&grid.extent().to_le_bytes())?;
    w.write_all(&(components.len() as u32).to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    for comp in components {
        if comp.len() != grid.len() {
            return Err(Error::Format("component length does not match grid".into()));
        }
        for v in comp.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_fvf<R: Read>(r: &mut R) -> Result<(Grid, Vec<Vec<f64>>)> {
    let mut header = [0u8; FVF_HEADER_LEN];
    r.read_exact(&mut header).map_err(|e| Error::Format(format!("short header: {e}")))?;
    if &header[0..4] != FVF_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
    let dim = u32_at(4) as usize;
    let n = u32_at(8) as usize;
    let extent = f64::from_le_bytes(header[12..20].try_into().unwrap());
    let count = u32_at(20) as usize;
    let grid = Grid::new(dim, extent, n).map_err(|e| Error::Format(e.to_string()))?;
    let mut comps = Vec::with_capacity(count);
    let mut buf = vec![0u8; grid.len() * 8];
    for _ in 0..count {
        r.read_exact(&mut buf).map_err(|e| Error::Format(format!("truncated data: {e}")))?;
        comps.push(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect());
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after last component".into()));
    }
    Ok((grid, comps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_spacing_and_size() {
        let g = Grid::new(1, PI, 64).unwrap();
        assert_eq!(g.spacing(), 2.0 * PI / 64.0);
        let g2 = Grid::new(2, 1.0, 16).unwrap();
        assert_eq!(g2.len(), 256);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(matches!(Grid::new(1, 1.0, 6), Err(Error::InvalidGrid(_))));
        assert!(Grid::new(4, 1.0, 8).is_err());
        assert!(Grid::new(0, 1.0, 8).is_err());
        assert!(Grid::new(1, 1.0, 4).is_err());
        assert!(Grid::new(1, -1.0, 8).is_err());
    }

    #[test]
    fn ravel_roundtrip() {
        let g = Grid::new(3, 1.0, 8).unwrap();
        for flat in [0, 1, 17, 300, 511] {
            assert_eq!(g.ravel(&g.unravel(flat)), flat);
        }
    }

    #[test]
    fn mask_box_padding() {
        let g = Grid::new(1, 2.0, 16).unwrap();
        let m = DomainMask::boxed(g, 1.0).unwrap();
        assert_eq!(m.padding_fraction(), 0.25);
        let g = Grid::new(1, 1.0, 16).unwrap();
        assert!(matches!(DomainMask::boxed(g, 0.999), Err(Error::InvalidMask(_))));
        assert!(DomainMask::boxed(g, 1.0).is_err());
    }

    #[test]
    fn mask_box_counts_nodes() {
        let g = Grid::new(1, PI, 64).unwrap();
        let m = DomainMask::boxed(g, PI / 2.0).unwrap();
        // Nodes are x_i = -π + iπ/32; |x| < π/2 keeps i = 17..=47.
        let brute = (0..64).filter(|&i| g.coordinate(i).abs() < PI / 2.0).count();
        assert_eq!(m.count(), brute);
        assert!((m.count() as i64 - 32).abs() <= 1);
    }

    #[test]
    fn norms_on_simple_fields() {
        let g = Grid::new(1, 1.0, 64).unwrap();
        let one = ScalarField::constant(g, 1.0);
        assert!((lp_norm(&one, 1.0, Region::Whole).unwrap() - 2.0).abs() < 1e-14);
        let zero = ScalarField::zeros(g);
        for p in [1.0, 1.5, 2.0, 7.0, f64::INFINITY] {
            assert_eq!(lp_norm(&zero, p, Region::Whole).unwrap(), 0.0);
        }
        let x = ScalarField::from_fn(g, |x| x[0]);
        let l2 = lp_norm(&x, 2.0, Region::Whole).unwrap();
        // rectangle rule on [-1,1): h Σ x_i² = 2/3 + h²/3 - h ... within O(h)
        assert!((l2 - (2.0f64 / 3.0).sqrt()).abs() < 2.0 * g.spacing());
        assert!(lp_norm(&x, 0.5, Region::Whole).is_err());
    }

    #[test]
    fn sin_cos_orthogonal() {
        let g = Grid::new(1, PI, 64).unwrap();
        let s = ScalarField::from_fn(g, |x| (3.0 * x[0]).sin());
        let c = ScalarField::from_fn(g, |x| (3.0 * x[0]).cos());
        assert!(inner(&s, &c).unwrap().abs() < 1e-12);
        let z = ScalarField::zeros(g);
        assert_eq!(inner(&s, &z).unwrap(), 0.0);
        let n2 = lp_norm(&s, 2.0, Region::Whole).unwrap();
        assert!((inner(&s, &s).unwrap() - n2 * n2).abs() < 1e-12);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let a = ScalarField::zeros(Grid::new(1, 1.0, 8).unwrap());
        let b = ScalarField::zeros(Grid::new(1, 1.0, 16).unwrap());
        assert!(matches!(inner(&a, &b), Err(Error::GridMismatch)));
    }

    #[test]
    fn fvf_header_layout() {
        let g = Grid::new(2, 1.5, 8).unwrap();
        let f = ScalarField::from_fn(g, |x| x[0] - 2.0 * x[1]);
        let mut buf = Vec::new();
        write_fvf(&mut buf, &g, &[f.values()]).unwrap();
        assert_eq!(buf.len(), FVF_HEADER_LEN + 64 * 8);
        assert_eq!(&buf[0..4], b"FVF1");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 8);
        assert_eq!(f64::from_le_bytes(buf[12..20].try_into().unwrap()), 1.5);
        assert_eq!(u32::from_le_bytes(buf[20..24].try_into().unwrap()), 1);
        let (g2, comps) = read_fvf(&mut buf.as_slice()).unwrap();
        assert_eq!(g2, g);
        assert_eq!(comps[0], f.values());
    }

    #[test]
    fn fvf_rejects_garbage() {
        assert!(read_fvf(&mut &b"FVF0aaaaaaaaaaaaaaaaaaaaaaaaaaaa"[..]).is_err());
        let g = Grid::new(1, 1.0, 8).unwrap();
        let mut buf = Vec::new();
        write_fvf(&mut buf, &g, &[&[0.0; 8]]).unwrap();
        buf.pop();
        assert!(read_fvf(&mut buf.as_slice()).is_err());
    }
}
