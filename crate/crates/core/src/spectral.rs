//! Fourier spectral collocation on the periodic square (−π, π]².
//!
//! Fields are stored as flat `f64` slices in row-major order with `x`
//! varying fastest: the value at node `(i, j)` lives at `j * nx + i`.
//! Node coordinates are `x_i = −π + 2πi/nx` and `y_j = −π + 2πj/ny`; the
//! origin is always a node because both counts are even.
//!
//! Derivatives are taken in spectral space by wavenumber multiplication.
//! The Nyquist mode is zeroed for odd derivative orders and kept as
//! `−(N/2)²` for even ones, so every operator maps real fields to real
//! fields.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("grid point counts must be even and at least {min}, got {nx}x{ny}")]
    InvalidGrid { nx: usize, ny: usize, min: usize },
    #[error("field has {got} values but the grid has {expected} nodes")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("derivative order must be at least 1")]
    ZeroOrder,
}

/// Uniform periodic grid on (−π, π]², or on (−π, π] for line grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PeriodicGrid {
    nx: usize,
    ny: usize,
}

impl PeriodicGrid {
    pub const MIN_POINTS: usize = 8;

    pub fn new(nx: usize, ny: usize) -> Result<Self, SpectralError> {
        let ok = |n: usize| n >= Self::MIN_POINTS && n % 2 == 0;
        if !ok(nx) || !ok(ny) {
            return Err(SpectralError::InvalidGrid {
                nx,
                ny,
                min: Self::MIN_POINTS,
            });
        }
        Ok(Self { nx, ny })
    }

    pub fn square(n: usize) -> Result<Self, SpectralError> {
        Self::new(n, n)
    }

    /// A one-dimensional periodic grid in `x`; the `y` axis collapses to
    /// the single node `y = 0` and every `y` derivative vanishes.
    pub fn line(nx: usize) -> Result<Self, SpectralError> {
        if nx < Self::MIN_POINTS || nx % 2 != 0 {
            return Err(SpectralError::InvalidGrid {
                nx,
                ny: 1,
                min: Self::MIN_POINTS,
            });
        }
        Ok(Self { nx, ny: 1 })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_line(&self) -> bool {
        self.ny == 1
    }

    /// Area (or length, for a line grid) of the periodic cell.
    pub fn cell_measure(&self) -> f64 {
        if self.is_line() {
            2.0 * PI
        } else {
            4.0 * PI * PI
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        PI * (2.0 * i as f64 - self.nx as f64) / self.nx as f64
    }

    pub fn y(&self, j: usize) -> f64 {
        if self.is_line() {
            0.0
        } else {
            PI * (2.0 * j as f64 - self.ny as f64) / self.ny as f64
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// `(i, j)` for a flat index.
    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    /// Node position for a flat index.
    pub fn position(&self, idx: usize) -> (f64, f64) {
        let (i, j) = self.coords(idx);
        (self.x(i), self.y(j))
    }

    /// Evaluates `f(x, y)` at every node.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..self.len())
            .map(|idx| {
                let (x, y) = self.position(idx);
                f(x, y)
            })
            .collect()
    }

    /// Flat index of the node closest to `(x, y)`, respecting periodicity.
    pub fn nearest_node(&self, x: f64, y: f64) -> usize {
        let wrap = |v: f64, n: usize| -> usize {
            let s = (v + PI) / (2.0 * PI) * n as f64;
            (s.round() as i64).rem_euclid(n as i64) as usize
        };
        let i = wrap(x, self.nx);
        let j = if self.is_line() { 0 } else { wrap(y, self.ny) };
        self.index(i, j)
    }

    pub fn check(&self, field: &[f64]) -> Result<(), SpectralError> {
        if field.len() != self.len() {
            return Err(SpectralError::DimensionMismatch {
                expected: self.len(),
                got: field.len(),
            });
        }
        Ok(())
    }
}

/// Signed integer wavenumbers in FFT order for `n` points.
fn wavenumbers(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i < n.div_ceil(2) || n == 1 {
                i as f64
            } else {
                i as f64 - n as f64
            }
        })
        .collect()
}

fn is_nyquist(i: usize, n: usize) -> bool {
    n > 1 && n % 2 == 0 && i == n / 2
}

/// Wavenumber information for one spectral coefficient.
#[derive(Debug, Clone, Copy)]
pub struct Mode {
    /// Signed wavenumber in `x`.
    pub kx: f64,
    /// Signed wavenumber in `y`.
    pub ky: f64,
    pub nyquist_x: bool,
    pub nyquist_y: bool,
}

impl Mode {
    /// Symbol of `∂x^order`.
    pub fn dx(&self, order: u32) -> Complex64 {
        symbol_1d(self.kx, self.nyquist_x, order)
    }

    pub fn dy(&self, order: u32) -> Complex64 {
        symbol_1d(self.ky, self.nyquist_y, order)
    }

    /// `kx² + ky²`, i.e. the symbol of `−∇²`.
    pub fn k2(&self) -> f64 {
        self.kx * self.kx + self.ky * self.ky
    }
}

fn symbol_1d(k: f64, nyquist: bool, order: u32) -> Complex64 {
    if order == 0 {
        return Complex64::new(1.0, 0.0);
    }
    if order % 2 == 1 && nyquist {
        return Complex64::new(0.0, 0.0);
    }
    Complex64::new(0.0, k).powu(order)
}

/// Multiplier applied to spectral coefficients (stored in spectral layout).
#[derive(Debug, Clone)]
pub struct Symbol(Vec<Complex64>);

impl Symbol {
    pub fn values(&self) -> &[Complex64] {
        &self.0
    }

    /// Pointwise product of two symbols.
    pub fn compose(&self, other: &Symbol) -> Symbol {
        Symbol(self.0.iter().zip(&other.0).map(|(a, b)| a * b).collect())
    }
}

/// Spectral coefficients of a real field.
///
/// Stored transposed (`kx` index major) so the second transform pass runs
/// over contiguous memory.
#[derive(Debug, Clone)]
pub struct Spectrum(Vec<Complex64>);

impl Spectrum {
    pub fn values(&self) -> &[Complex64] {
        &self.0
    }
}

/// FFT plans and wavenumber tables for one grid.
///
/// All methods take `&self` and allocate their own work buffers, so a
/// single instance can be shared between threads.
#[derive(Clone)]
pub struct Spectral {
    grid: PeriodicGrid,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
    kx: Vec<f64>,
    ky: Vec<f64>,
    dx: Symbol,
    dy: Symbol,
    neg_laplacian: Symbol,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: PeriodicGrid) -> Self {
        let mut planner = FftPlanner::new();
        let fwd_x = planner.plan_fft_forward(grid.nx);
        let inv_x = planner.plan_fft_inverse(grid.nx);
        let fwd_y = planner.plan_fft_forward(grid.ny);
        let inv_y = planner.plan_fft_inverse(grid.ny);
        let mut s = Self {
            grid,
            fwd_x,
            inv_x,
            fwd_y,
            inv_y,
            kx: wavenumbers(grid.nx),
            ky: wavenumbers(grid.ny),
            dx: Symbol(Vec::new()),
            dy: Symbol(Vec::new()),
            neg_laplacian: Symbol(Vec::new()),
        };
        s.dx = s.symbol(|m| m.dx(1));
        s.dy = s.symbol(|m| m.dy(1));
        s.neg_laplacian = s.symbol(|m| Complex64::new(m.k2(), 0.0));
        s
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    /// Builds a symbol from a per-mode function.
    pub fn symbol(&self, f: impl Fn(&Mode) -> Complex64) -> Symbol {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut out = Vec::with_capacity(nx * ny);
        for i in 0..nx {
            for j in 0..ny {
                let mode = Mode {
                    kx: self.kx[i],
                    ky: self.ky[j],
                    nyquist_x: is_nyquist(i, nx),
                    nyquist_y: is_nyquist(j, ny),
                };
                out.push(f(&mode));
            }
        }
        Symbol(out)
    }

    pub fn dx_symbol(&self) -> &Symbol {
        &self.dx
    }

    pub fn dy_symbol(&self) -> &Symbol {
        &self.dy
    }

    /// Symbol of `−∇²` (`kx² + ky²`).
    pub fn neg_laplacian_symbol(&self) -> &Symbol {
        &self.neg_laplacian
    }

    /// Mask keeping modes with `|k| ≤ N/3` in each direction.
    pub fn two_thirds_mask(&self) -> Symbol {
        let (nx, ny) = (self.grid.nx as f64, self.grid.ny as f64);
        self.symbol(|m| {
            let keep = m.kx.abs() <= nx / 3.0 && (self.grid.is_line() || m.ky.abs() <= ny / 3.0);
            Complex64::new(if keep { 1.0 } else { 0.0 }, 0.0)
        })
    }

    fn forward_complex(&self, mut buf: Vec<Complex64>) -> Vec<Complex64> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut scratch =
            vec![Complex64::default(); self.fwd_x.get_inplace_scratch_len().max(self.fwd_y.get_inplace_scratch_len())];
        self.fwd_x.process_with_scratch(&mut buf, &mut scratch);
        if ny == 1 {
            return buf;
        }
        let mut t = vec![Complex64::default(); nx * ny];
        transpose(&buf, &mut t, ny, nx);
        self.fwd_y.process_with_scratch(&mut t, &mut scratch);
        t
    }

    fn inverse_complex(&self, mut t: Vec<Complex64>) -> Vec<Complex64> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut scratch =
            vec![Complex64::default(); self.inv_x.get_inplace_scratch_len().max(self.inv_y.get_inplace_scratch_len())];
        let mut buf = if ny == 1 {
            t
        } else {
            self.inv_y.process_with_scratch(&mut t, &mut scratch);
            let mut b = vec![Complex64::default(); nx * ny];
            transpose(&t, &mut b, nx, ny);
            b
        };
        self.inv_x.process_with_scratch(&mut buf, &mut scratch);
        let scale = 1.0 / (nx * ny) as f64;
        for v in &mut buf {
            *v *= scale;
        }
        buf
    }

    /// Index in spectral layout of the mode `−k` for the mode at `s`.
    #[inline]
    fn mirror(&self, s: usize) -> usize {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let (i, j) = (s / ny, s % ny);
        ((nx - i) % nx) * ny + (ny - j) % ny
    }

    pub fn transform(&self, field: &[f64]) -> Spectrum {
        debug_assert_eq!(field.len(), self.grid.len());
        let buf = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Spectrum(self.forward_complex(buf))
    }

    /// Transforms two real fields with one complex FFT.
    pub fn transform_pair(&self, a: &[f64], b: &[f64]) -> (Spectrum, Spectrum) {
        debug_assert_eq!(a.len(), self.grid.len());
        debug_assert_eq!(b.len(), self.grid.len());
        let buf = a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect();
        let z = self.forward_complex(buf);
        let mut sa = vec![Complex64::default(); z.len()];
        let mut sb = vec![Complex64::default(); z.len()];
        for s in 0..z.len() {
            let zc = z[self.mirror(s)].conj();
            sa[s] = (z[s] + zc) * 0.5;
            // (z − conj z(−k)) / 2i
            let d = (z[s] - zc) * 0.5;
            sb[s] = Complex64::new(d.im, -d.re);
        }
        (Spectrum(sa), Spectrum(sb))
    }

    /// Inverse transform of `symbol · spectrum`, real part.
    pub fn synthesize(&self, spec: &Spectrum, symbol: &Symbol) -> Vec<f64> {
        let t = spec.0.iter().zip(&symbol.0).map(|(c, m)| c * m).collect();
        self.inverse_complex(t).into_iter().map(|c| c.re).collect()
    }

    /// Two real-preserving syntheses with a single inverse FFT.
    pub fn synthesize_pair(
        &self,
        a: (&Spectrum, &Symbol),
        b: (&Spectrum, &Symbol),
    ) -> (Vec<f64>, Vec<f64>) {
        let i = Complex64::new(0.0, 1.0);
        let t = (0..a.0 .0.len())
            .map(|s| a.0 .0[s] * a.1 .0[s] + i * (b.0 .0[s] * b.1 .0[s]))
            .collect();
        let z = self.inverse_complex(t);
        (z.iter().map(|c| c.re).collect(), z.iter().map(|c| c.im).collect())
    }

    /// Inverse transform of `Σ symbol_k · spectrum_k` into a real field,
    /// paired with a second such sum returned as the second field.
    pub fn synthesize_sums(
        &self,
        a: &[(&Spectrum, &Symbol)],
        b: &[(&Spectrum, &Symbol)],
    ) -> (Vec<f64>, Vec<f64>) {
        let n = self.grid.len();
        let i = Complex64::new(0.0, 1.0);
        let mut t = vec![Complex64::default(); n];
        for (spec, sym) in a {
            for s in 0..n {
                t[s] += spec.0[s] * sym.0[s];
            }
        }
        for (spec, sym) in b {
            for s in 0..n {
                t[s] += i * spec.0[s] * sym.0[s];
            }
        }
        let z = self.inverse_complex(t);
        (z.iter().map(|c| c.re).collect(), z.iter().map(|c| c.im).collect())
    }

    /// Applies a real-preserving operator to two fields at once.
    pub fn apply_pair(&self, a: &[f64], sym_a: &Symbol, b: &[f64], sym_b: &Symbol) -> (Vec<f64>, Vec<f64>) {
        let (sa, sb) = self.transform_pair(a, b);
        self.synthesize_pair((&sa, sym_a), (&sb, sym_b))
    }

    pub fn deriv_x(&self, field: &[f64], order: u32) -> Result<Vec<f64>, SpectralError> {
        self.grid.check(field)?;
        if order == 0 {
            return Err(SpectralError::ZeroOrder);
        }
        let sym = self.symbol(|m| m.dx(order));
        Ok(self.synthesize(&self.transform(field), &sym))
    }

    pub fn deriv_y(&self, field: &[f64], order: u32) -> Result<Vec<f64>, SpectralError> {
        self.grid.check(field)?;
        if order == 0 {
            return Err(SpectralError::ZeroOrder);
        }
        let sym = self.symbol(|m| m.dy(order));
        Ok(self.synthesize(&self.transform(field), &sym))
    }

    pub fn laplacian(&self, field: &[f64]) -> Result<Vec<f64>, SpectralError> {
        self.grid.check(field)?;
        let mut out = self.synthesize(&self.transform(field), &self.neg_laplacian);
        for v in &mut out {
            *v = -*v;
        }
        Ok(out)
    }

    /// Periodic trapezoid rule: `mean(field) · |cell|`.
    pub fn integrate_domain(&self, field: &[f64]) -> Result<f64, SpectralError> {
        integrate_domain(field, &self.grid)
    }
}

pub fn integrate_domain(field: &[f64], grid: &PeriodicGrid) -> Result<f64, SpectralError> {
    grid.check(field)?;
    let mean = field.iter().sum::<f64>() / field.len() as f64;
    Ok(mean * grid.cell_measure())
}

/// Samples the trigonometric interpolant of `field` (given on `grid_in`)
/// at the nodes of `grid_out`.
///
/// Upsampling zero-pads the spectrum; downsampling folds the modes onto
/// the coarse grid, which is exact pointwise evaluation of the interpolant.
/// The input Nyquist mode is split evenly between `±N/2`.
pub fn fourier_interpolate(
    field: &[f64],
    grid_in: &PeriodicGrid,
    grid_out: &PeriodicGrid,
) -> Result<Vec<f64>, SpectralError> {
    grid_in.check(field)?;
    if grid_in == grid_out {
        return Ok(field.to_vec());
    }
    if grid_in.is_line() != grid_out.is_line() {
        return Err(SpectralError::DimensionMismatch {
            expected: grid_out.len(),
            got: field.len(),
        });
    }
    let sin = Spectral::new(*grid_in);
    let sout = Spectral::new(*grid_out);
    let spec = sin.transform(field);
    let (nxi, nyi) = (grid_in.nx, grid_in.ny);
    let (nxo, nyo) = (grid_out.nx, grid_out.ny);
    let kxi = wavenumbers(nxi);
    let kyi = wavenumbers(nyi);

    // Targets for one axis: list of (output bin, weight).
    let targets = |i: usize, k: f64, n_in: usize, n_out: usize| -> Vec<(usize, f64)> {
        let bin = |k: f64| (k as i64).rem_euclid(n_out as i64) as usize;
        if is_nyquist(i, n_in) {
            let half = (n_in / 2) as f64;
            vec![(bin(half), 0.5), (bin(-half), 0.5)]
        } else {
            vec![(bin(k), 1.0)]
        }
    };

    let mut out = vec![Complex64::default(); grid_out.len()];
    let scale = grid_out.len() as f64 / grid_in.len() as f64;
    for i in 0..nxi {
        let tx = targets(i, kxi[i], nxi, nxo);
        for j in 0..nyi {
            let ty = targets(j, kyi[j], nyi, nyo);
            let c = spec.0[i * nyi + j] * scale;
            for &(bx, wx) in &tx {
                for &(by, wy) in &ty {
                    out[bx * nyo + by] += c * (wx * wy);
                }
            }
        }
    }
    Ok(sout.inverse_complex(out).into_iter().map(|c| c.re).collect())
}

/// Out-of-place transpose of a `rows × cols` row-major block.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const B: usize = 16;
    for rb in (0..rows).step_by(B) {
        for cb in (0..cols).step_by(B) {
            for r in rb..(rb + B).min(rows) {
                for c in cb..(cb + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}
