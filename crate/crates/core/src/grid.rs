//! Uniform cell-centered grids on intervals and rectangles.
//!
//! Cell `i` along an axis of length `L` split into `n` cells has its center at
//! `(i + 1/2) h` with `h = L / n`. Homogeneous Neumann conditions are imposed by
//! mirror ghost cells: the ghost value equals the adjacent interior value, so
//! the boundary face carries zero flux. With midpoint quadrature this makes the
//! discrete divergence theorem hold exactly.
//!
//! Two-dimensional fields are stored row-major with `x` varying fastest:
//! the value of cell `(i, j)` sits at index `i + nx * j`.

use std::fmt::Write as _;

use thiserror::Error;

/// Smallest admissible number of cells per axis.
pub const MIN_CELLS: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("dimension must be 1 or 2, got {0}")]
    Dimension(usize),
    #[error("expected {expected} entries per axis, got {got}")]
    AxisCount { expected: usize, got: usize },
    #[error("axis {axis}: need at least {MIN_CELLS} cells, got {n}")]
    TooFewCells { axis: usize, n: usize },
    #[error("axis {axis}: extent must be positive and finite, got {len}")]
    Extent { axis: usize, len: f64 },
    #[error("field has {got} values but the grid has {expected} cells")]
    ValueCount { expected: usize, got: usize },
    #[error("field value at cell {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("norm exponent must satisfy p >= 1, got {0}")]
    Exponent(f64),
    #[error("snapshot: {0}")]
    Snapshot(String),
}

/// A uniform cell-centered mesh on `[0, Lx]` or `[0, Lx] x [0, Ly]`.
///
/// For one-dimensional grids the unused `y` axis is stored as a single cell of
/// unit width so that cell volumes and index arithmetic stay uniform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    n: [usize; 2],
    len: [f64; 2],
    h: [f64; 2],
}

impl Grid {
    /// Builds a grid from per-axis cell counts and extents.
    pub fn new(dim: usize, n: &[usize], len: &[f64]) -> Result<Self, GridError> {
        if dim != 1 && dim != 2 {
            return Err(GridError::Dimension(dim));
        }
        for got in [n.len(), len.len()] {
            if got != dim {
                return Err(GridError::AxisCount { expected: dim, got });
            }
        }
        let mut cells = [1usize; 2];
        let mut extent = [1.0f64; 2];
        for axis in 0..dim {
            if n[axis] < MIN_CELLS {
                return Err(GridError::TooFewCells { axis, n: n[axis] });
            }
            if !(len[axis] > 0.0 && len[axis].is_finite()) {
                return Err(GridError::Extent {
                    axis,
                    len: len[axis],
                });
            }
            cells[axis] = n[axis];
            extent[axis] = len[axis];
        }
        let h = [extent[0] / cells[0] as f64, extent[1] / cells[1] as f64];
        Ok(Self {
            dim,
            n: cells,
            len: extent,
            h,
        })
    }

    pub fn new_1d(n: usize, len: f64) -> Result<Self, GridError> {
        Self::new(1, &[n], &[len])
    }

    pub fn new_2d(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self, GridError> {
        Self::new(2, &[nx, ny], &[lx, ly])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nx(&self) -> usize {
        self.n[0]
    }

    /// Cells along `y`; 1 for one-dimensional grids.
    pub fn ny(&self) -> usize {
        self.n[1]
    }

    pub fn cells(&self, axis: usize) -> usize {
        self.n[axis]
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.len[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.h[axis]
    }

    /// Smallest spacing over the active axes.
    pub fn min_spacing(&self) -> f64 {
        (0..self.dim)
            .map(|a| self.h[a])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn cell_count(&self) -> usize {
        self.n[0] * self.n[1]
    }

    /// Length (1D) or area (2D) of one cell.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.h[a]).product()
    }

    /// `|Ω|`.
    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|a| self.len[a]).product()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.n[0] * j
    }

    /// Center of cell `(i, j)`; the `y` coordinate is 0 on one-dimensional grids.
    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        let x = (i as f64 + 0.5) * self.h[0];
        let y = if self.dim == 2 {
            (j as f64 + 0.5) * self.h[1]
        } else {
            0.0
        };
        [x, y]
    }

    /// Cell centers in storage order.
    pub fn centers(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        (0..self.n[1]).flat_map(move |j| (0..self.n[0]).map(move |i| self.center(i, j)))
    }

    /// Discrete Neumann eigenvalue `-(4/h^2) sin^2(k pi h / (2L))` of mode `k` on `axis`.
    pub fn eigenvalue(&self, axis: usize, k: usize) -> f64 {
        let h = self.h[axis];
        let s = (k as f64 * std::f64::consts::PI * h / (2.0 * self.len[axis])).sin();
        -4.0 / (h * h) * s * s
    }

    /// Writes the five-point (three-point in 1D) Neumann Laplacian of `f` into `out`.
    ///
    /// Each interior face contributes its flux to both neighbours with opposite
    /// signs; boundary faces contribute nothing.
    pub fn laplacian_into(&self, f: &[f64], out: &mut [f64]) {
        assert_eq!(f.len(), self.cell_count());
        assert_eq!(out.len(), self.cell_count());
        let nx = self.n[0];
        let ix2 = 1.0 / (self.h[0] * self.h[0]);
        for (row, dst) in f.chunks_exact(nx).zip(out.chunks_exact_mut(nx)) {
            dst[0] = (row[1] - row[0]) * ix2;
            for (d, c) in dst[1..nx - 1].iter_mut().zip(row.windows(3)) {
                *d = (c[2] - c[1]) * ix2 - (c[1] - c[0]) * ix2;
            }
            dst[nx - 1] = -((row[nx - 1] - row[nx - 2]) * ix2);
        }
        if self.dim == 2 {
            let iy2 = 1.0 / (self.h[1] * self.h[1]);
            for j in 0..self.n[1] - 1 {
                let (lo, hi) = f[j * nx..(j + 2) * nx].split_at(nx);
                let (out_lo, out_hi) = out[j * nx..(j + 2) * nx].split_at_mut(nx);
                for (((a, b), lo), hi) in out_lo.iter_mut().zip(out_hi.iter_mut()).zip(lo).zip(hi) {
                    let flux = (hi - lo) * iy2;
                    *a += flux;
                    *b -= flux;
                }
            }
        }
    }

    /// Diagonal entry of the Neumann Laplacian at cell `index`.
    pub fn laplacian_diagonal(&self, index: usize) -> f64 {
        let i = index % self.n[0];
        let j = index / self.n[0];
        let mut diag = 0.0;
        for (axis, pos) in [(0, i), (1, j)].into_iter().take(self.dim) {
            let faces = if pos == 0 || pos + 1 == self.n[axis] {
                1.0
            } else {
                2.0
            };
            diag -= faces / (self.h[axis] * self.h[axis]);
        }
        diag
    }
}

const LANES: usize = 8;

/// Folds `values` with `op` over eight interleaved accumulators, then combines
/// them. The fixed association order keeps results deterministic while letting
/// the compiler vectorize.
fn reduce(values: &[f64], init: f64, op: impl Fn(f64, f64) -> f64) -> f64 {
    let mut acc = [init; LANES];
    let chunks = values.chunks_exact(LANES);
    let tail = chunks.remainder();
    for c in chunks {
        for k in 0..LANES {
            acc[k] = op(acc[k], c[k]);
        }
    }
    let mut out = tail.iter().fold(init, |a, &x| op(a, x));
    for a in acc {
        out = op(out, a);
    }
    out
}

/// One scalar value per grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    /// Wraps `values`, checking the count and that every entry is finite.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.cell_count() {
            return Err(GridError::ValueCount {
                expected: grid.cell_count(),
                got: values.len(),
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(GridError::NonFinite { index, value });
        }
        Ok(Self { grid, values })
    }

    /// Wraps `values` without the finiteness scan. Length is still checked in debug builds.
    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.cell_count());
        Self { grid, values }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self::from_raw(grid, vec![c; grid.cell_count()])
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f` at cell centers.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        Self::from_raw(grid, grid.centers().map(f).collect())
    }

    /// The discrete Neumann cosine mode `cos(k pi x / Lx)` (times `cos(l pi y / Ly)` in 2D).
    pub fn cosine_mode(grid: Grid, k: usize, l: usize) -> Self {
        let (lx, ly) = (grid.extent(0), grid.extent(1));
        Self::from_fn(grid, |[x, y]| {
            let cx = (k as f64 * std::f64::consts::PI * x / lx).cos();
            if grid.dim() == 2 {
                cx * (l as f64 * std::f64::consts::PI * y / ly).cos()
            } else {
                cx
            }
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[allow(clippy::eq_op)]
    pub fn is_finite(&self) -> bool {
        // x - x is 0 for finite x and NaN otherwise
        reduce(&self.values, 0.0, |a, x| a + (x - x)) == 0.0
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Combines two fields cellwise. Panics if the grids differ.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        assert_eq!(self.grid, other.grid, "{}", GridError::GridMismatch);
        Field::from_raw(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn scale(&self, a: f64) -> Field {
        self.map(|v| a * v)
    }

    pub fn laplacian(&self) -> Field {
        let mut out = vec![0.0; self.values.len()];
        self.grid.laplacian_into(&self.values, &mut out);
        Field::from_raw(self.grid, out)
    }

    /// Midpoint rule: cell sum times cell volume.
    pub fn integrate(&self) -> f64 {
        reduce(&self.values, 0.0, |a, x| a + x) * self.grid.cell_volume()
    }

    /// `∫ f g` by the midpoint rule.
    pub fn inner(&self, other: &Field) -> f64 {
        assert_eq!(self.grid, other.grid, "{}", GridError::GridMismatch);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    /// `∫ |∇f|^2` as a sum over interior faces of squared difference quotients
    /// times the face's dual volume.
    pub fn grad_sq_integral(&self) -> f64 {
        let g = &self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let f = &self.values;
        let hx = g.spacing(0);
        let mut sx = 0.0;
        for j in 0..ny {
            for i in 0..nx - 1 {
                let d = f[i + 1 + nx * j] - f[i + nx * j];
                sx += d * d;
            }
        }
        let mut total = sx / (hx * hx);
        if g.dim() == 2 {
            let hy = g.spacing(1);
            let mut sy = 0.0;
            for j in 0..ny - 1 {
                for i in 0..nx {
                    let d = f[i + nx * (j + 1)] - f[i + nx * j];
                    sy += d * d;
                }
            }
            total += sy / (hy * hy);
        }
        total * g.cell_volume()
    }

    /// `(∫ |f|^p)^(1/p)`, with `p = ∞` giving the largest magnitude.
    pub fn norm_lp(&self, p: f64) -> Result<f64, GridError> {
        if p.is_nan() || p < 1.0 {
            return Err(GridError::Exponent(p));
        }
        if p.is_infinite() {
            return Ok(self.max_abs());
        }
        let vol = self.grid.cell_volume();
        let s: f64 = if p == 1.0 {
            self.values.iter().map(|v| v.abs()).sum()
        } else if p == 2.0 {
            self.values.iter().map(|v| v * v).sum()
        } else {
            self.values.iter().map(|v| v.abs().powf(p)).sum()
        };
        Ok((s * vol).powf(1.0 / p))
    }

    pub fn min_val(&self) -> f64 {
        reduce(
            &self.values,
            f64::INFINITY,
            |a, x| if x < a { x } else { a },
        )
    }

    pub fn max_val(&self) -> f64 {
        reduce(
            &self.values,
            f64::NEG_INFINITY,
            |a, x| if x > a { x } else { a },
        )
    }

    pub fn max_abs(&self) -> f64 {
        reduce(
            &self.values,
            0.0,
            |a, x| if x.abs() > a { x.abs() } else { a },
        )
    }

    /// Largest pointwise difference to `other`.
    pub fn max_diff(&self, other: &Field) -> f64 {
        assert_eq!(self.grid, other.grid, "{}", GridError::GridMismatch);
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// A field together with the time and name recorded in its snapshot file.
///
/// The text format is a comment header
/// `# t=<time> dim=<d> nx=<n> [ny=<n>] Lx=<L> [Ly=<L>] name=<name>`
/// followed by one value per line in storage order, printed with 17
/// significant digits.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub name: String,
    pub field: Field,
}

impl Snapshot {
    pub fn new(t: f64, name: impl Into<String>, field: Field) -> Self {
        Self {
            t,
            name: name.into(),
            field,
        }
    }

    pub fn to_text(&self) -> String {
        let g = self.field.grid();
        let mut out = String::with_capacity(24 * (g.cell_count() + 4));
        write!(out, "# t={:.16e} dim={} nx={}", self.t, g.dim(), g.nx()).unwrap();
        if g.dim() == 2 {
            write!(out, " ny={}", g.ny()).unwrap();
        }
        write!(out, " Lx={:.16e}", g.extent(0)).unwrap();
        if g.dim() == 2 {
            write!(out, " Ly={:.16e}", g.extent(1)).unwrap();
        }
        writeln!(out, " name={}", self.name).unwrap();
        for v in self.field.values() {
            writeln!(out, "{v:.16e}").unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, GridError> {
        let bad = |msg: String| GridError::Snapshot(msg);
        let mut lines = text.lines();
        let header = lines
            .next()
            .and_then(|l| l.strip_prefix('#'))
            .ok_or_else(|| bad("missing '#' header line".into()))?;
        let mut t = None;
        let mut dim = None;
        let mut n = [None, None];
        let mut len = [None, None];
        let mut name = None;
        for token in header.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| bad(format!("malformed header token '{token}'")))?;
            let num = || {
                value
                    .parse::<f64>()
                    .map_err(|_| bad(format!("bad number for {key}: '{value}'")))
            };
            let int = || {
                value
                    .parse::<usize>()
                    .map_err(|_| bad(format!("bad integer for {key}: '{value}'")))
            };
            match key {
                "t" => t = Some(num()?),
                "dim" => dim = Some(int()?),
                "nx" => n[0] = Some(int()?),
                "ny" => n[1] = Some(int()?),
                "Lx" => len[0] = Some(num()?),
                "Ly" => len[1] = Some(num()?),
                "name" => name = Some(value.to_string()),
                other => return Err(bad(format!("unknown header key '{other}'"))),
            }
        }
        let missing = |k: &str| bad(format!("header lacks '{k}'"));
        let dim = dim.ok_or_else(|| missing("dim"))?;
        let grid = match dim {
            1 => Grid::new_1d(
                n[0].ok_or_else(|| missing("nx"))?,
                len[0].ok_or_else(|| missing("Lx"))?,
            )?,
            2 => Grid::new_2d(
                n[0].ok_or_else(|| missing("nx"))?,
                n[1].ok_or_else(|| missing("ny"))?,
                len[0].ok_or_else(|| missing("Lx"))?,
                len[1].ok_or_else(|| missing("Ly"))?,
            )?,
            d => return Err(GridError::Dimension(d)),
        };
        let values = lines
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .enumerate()
            .map(|(k, l)| {
                l.parse::<f64>()
                    .map_err(|_| bad(format!("value {k}: cannot parse '{l}'")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            t: t.ok_or_else(|| missing("t"))?,
            name: name.ok_or_else(|| missing("name"))?,
            field: Field::new(grid, values)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_field(grid: Grid, seed: u64) -> Field {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Field::from_raw(
            grid,
            (0..grid.cell_count())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        )
    }

    /// Dense Neumann Laplacian assembled directly from the ghost-cell rule.
    fn dense_laplacian(grid: &Grid, f: &[f64]) -> Vec<f64> {
        let (nx, ny) = (grid.nx(), grid.ny());
        let at = |i: isize, j: isize| {
            let i = i.clamp(0, nx as isize - 1) as usize;
            let j = j.clamp(0, ny as isize - 1) as usize;
            f[i + nx * j]
        };
        let mut out = vec![0.0; f.len()];
        for j in 0..ny as isize {
            for i in 0..nx as isize {
                let c = at(i, j);
                let hx = grid.spacing(0);
                let mut v = (at(i - 1, j) - 2.0 * c + at(i + 1, j)) / (hx * hx);
                if grid.dim() == 2 {
                    let hy = grid.spacing(1);
                    v += (at(i, j - 1) - 2.0 * c + at(i, j + 1)) / (hy * hy);
                }
                out[i as usize + nx * j as usize] = v;
            }
        }
        out
    }

    #[test]
    fn make_grid_examples() {
        let g = Grid::new(1, &[8], &[1.0]).unwrap();
        assert_eq!(g.spacing(0), 0.125);
        let g = Grid::new(2, &[64, 64], &[1.0, 1.0]).unwrap();
        assert_eq!(g.cell_count(), 4096);
        assert_eq!(
            Grid::new(1, &[2], &[1.0]),
            Err(GridError::TooFewCells { axis: 0, n: 2 })
        );
        assert_eq!(
            Grid::new(3, &[4, 4, 4], &[1.0; 3]),
            Err(GridError::Dimension(3))
        );
        assert!(matches!(
            Grid::new(1, &[4], &[0.0]),
            Err(GridError::Extent { .. })
        ));
        assert!(matches!(
            Grid::new(2, &[4], &[1.0]),
            Err(GridError::AxisCount { .. })
        ));
    }

    #[test]
    fn cell_centers_are_offset_by_half_a_cell() {
        let g = Grid::new_2d(4, 5, 2.0, 1.0).unwrap();
        assert_eq!(g.center(0, 0), [0.25, 0.1]);
        let last = g.centers().last().unwrap();
        assert!((last[0] - 1.75).abs() < 1e-15 && (last[1] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn field_rejects_wrong_count_and_nan() {
        let g = Grid::new_1d(4, 1.0).unwrap();
        assert!(matches!(
            Field::new(g, vec![0.0; 3]),
            Err(GridError::ValueCount { .. })
        ));
        assert!(matches!(
            Field::new(g, vec![0.0, f64::NAN, 0.0, 0.0]),
            Err(GridError::NonFinite { index: 1, .. })
        ));
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        for g in [
            Grid::new_1d(7, 2.0).unwrap(),
            Grid::new_2d(5, 6, 1.0, 3.0).unwrap(),
        ] {
            let lap = Field::constant(g, 3.7).laplacian();
            assert!(lap.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn laplacian_matches_dense_ghost_cell_stencil() {
        for g in [
            Grid::new_1d(9, 1.3).unwrap(),
            Grid::new_2d(6, 5, 1.0, 0.7).unwrap(),
        ] {
            let f = random_field(g, 3);
            let fast = f.laplacian();
            let dense = dense_laplacian(&g, f.values());
            for (a, b) in fast.values().iter().zip(&dense) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn cosine_modes_are_eigenvectors() {
        let g = Grid::new_1d(16, 2.0).unwrap();
        for k in 0..16 {
            let f = Field::cosine_mode(g, k, 0);
            let lambda = g.eigenvalue(0, k);
            let dense = dense_laplacian(&g, f.values());
            for (d, v) in dense.iter().zip(f.values()) {
                assert!((d - lambda * v).abs() < 1e-9, "k={k}");
            }
            let lap = f.laplacian();
            assert!(lap.max_diff(&f.scale(lambda)) < 1e-9);
        }
        let g = Grid::new_2d(8, 12, 1.0, 2.0).unwrap();
        let f = Field::cosine_mode(g, 3, 5);
        let lambda = g.eigenvalue(0, 3) + g.eigenvalue(1, 5);
        assert!(f.laplacian().max_diff(&f.scale(lambda)) < 1e-9);
    }

    #[test]
    fn midpoint_rule_examples() {
        let g = Grid::new_2d(4, 4, 1.0, 1.0).unwrap();
        assert_eq!(Field::constant(g, 3.0).integrate(), 3.0);
        assert_eq!(Field::zeros(g).integrate(), 0.0);
        let g = Grid::new_1d(100, 1.0).unwrap();
        // Σ (i + 1/2)/100 * 1/100 = (100^2 / 2) / 100^2
        let f = Field::from_fn(g, |[x, _]| x);
        assert!((f.integrate() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn grad_sq_integral_examples() {
        let g = Grid::new_1d(3, 1.0).unwrap();
        assert_eq!(Field::constant(g, 2.0).grad_sq_integral(), 0.0);
        let f = Field::new(g, vec![0.0, 1.0, 2.0]).unwrap();
        // two faces, each (1 / (1/3))^2 * (1/3) = 3
        assert!((f.grad_sq_integral() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn summation_by_parts_on_modes() {
        let g = Grid::new_1d(32, 1.0).unwrap();
        for k in 1..8 {
            let f = Field::cosine_mode(g, k, 0);
            let brute = -f
                .values()
                .iter()
                .zip(f.laplacian().values())
                .map(|(a, b)| a * b)
                .sum::<f64>()
                * g.cell_volume();
            let by_mode = -g.eigenvalue(0, k) * f.inner(&f);
            assert!((f.grad_sq_integral() - brute).abs() < 1e-12 * brute.max(1.0));
            assert!((brute - by_mode).abs() < 1e-9 * brute.max(1.0));
        }
    }

    #[test]
    fn norm_examples() {
        let g = Grid::new_2d(5, 5, 1.0, 1.0).unwrap();
        let c = Field::constant(g, 2.0);
        assert!((c.norm_lp(2.0).unwrap() - 2.0).abs() < 1e-15);
        let f = random_field(g, 11);
        assert_eq!(f.norm_lp(f64::INFINITY).unwrap(), f.max_abs());
        assert_eq!(f.norm_lp(0.5), Err(GridError::Exponent(0.5)));
        assert!(f.norm_lp(f64::NAN).is_err());
        assert!((f.norm_lp(3.0).unwrap() - f.map(f64::abs).norm_lp(3.0).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn second_order_accuracy_on_smooth_neumann_data() {
        // f = cos(pi x) cos(2 pi y): Δf = -5 pi^2 f, normal derivative zero.
        let err = |n: usize| {
            let g = Grid::new_2d(n, n, 1.0, 1.0).unwrap();
            let pi = std::f64::consts::PI;
            let f = Field::from_fn(g, |[x, y]| (pi * x).cos() * (2.0 * pi * y).cos());
            f.laplacian().max_diff(&f.scale(-5.0 * pi * pi))
        };
        let (e1, e2, e3) = (err(16), err(32), err(64));
        for ratio in [e1 / e2, e2 / e3] {
            assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn snapshot_round_trip_and_header() {
        let g = Grid::new_2d(3, 4, 1.0, 2.5).unwrap();
        let f = random_field(g, 5);
        let snap = Snapshot::new(0.125, "u", f);
        let text = snap.to_text();
        assert!(text.starts_with("# t=1.2500000000000000e-1 dim=2 nx=3 ny=4 Lx="));
        assert!(text.lines().next().unwrap().ends_with("name=u"));
        assert_eq!(text.lines().count(), 13);
        assert_eq!(Snapshot::parse(&text).unwrap(), snap);

        let g1 = Grid::new_1d(3, 1.0).unwrap();
        let text = Snapshot::new(2.0, "w", Field::constant(g1, 1.0 / 3.0)).to_text();
        assert!(!text.contains("ny=") && !text.contains("Ly="));
        assert!(Snapshot::parse("0.1\n0.2").is_err());
        assert!(Snapshot::parse("# t=0 dim=1 nx=3 Lx=1 name=u\n1\n2\n").is_err());
        assert!(Snapshot::parse("# t=0 dim=1 nx=3 Lx=1 name=u bogus=1\n1\n2\n3\n").is_err());
    }

    proptest! {
        #[test]
        fn laplacian_is_conservative_symmetric_and_negative(
            seed in 0u64..10_000, two_d in any::<bool>(), nx in 3usize..12, ny in 3usize..12,
        ) {
            let g = if two_d { Grid::new_2d(nx, ny, 1.0, 0.5).unwrap() } else { Grid::new_1d(nx, 1.0).unwrap() };
            let f = random_field(g, seed);
            let q = random_field(g, seed + 1);
            let lf = f.laplacian();
            let lq = q.laplacian();
            let h2 = g.min_spacing().powi(2);
            // brute-force accumulation of the cell sum
            let sum: f64 = lf.values().iter().sum();
            prop_assert!(sum.abs() <= 1e-12 * f.max_abs() * g.cell_count() as f64);
            prop_assert!(lf.integrate().abs() <= 1e-12 * f.max_abs() * g.volume() / h2);
            let a: f64 = f.values().iter().zip(lq.values()).map(|(x, y)| x * y).sum();
            let b: f64 = q.values().iter().zip(lf.values()).map(|(x, y)| x * y).sum();
            prop_assert!((a - b).abs() <= 1e-10 * (a.abs() + b.abs()).max(1.0));
            let ff: f64 = f.values().iter().zip(lf.values()).map(|(x, y)| x * y).sum();
            prop_assert!(ff <= 1e-12 * f.max_abs().powi(2) / h2);
            prop_assert!((f.grad_sq_integral() + ff * g.cell_volume()).abs() <= 1e-10 * (-ff * g.cell_volume()).max(1.0));
        }

        #[test]
        fn l1_norm_bounded_by_l2_norm(seed in 0u64..10_000, lx in 0.1f64..5.0) {
            let g = Grid::new_2d(6, 7, lx, 1.3).unwrap();
            let f = random_field(g, seed);
            let l1 = f.norm_lp(1.0).unwrap();
            let l2 = f.norm_lp(2.0).unwrap();
            prop_assert!(l1 <= l2 * g.volume().sqrt() * (1.0 + 1e-12));
        }
    }
}
