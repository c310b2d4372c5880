//! Nondimensional tear-film model on the periodic grid.
//!
//! The differential unknowns are the film thickness `h`, osmolarity `c`
//! and fluorescein concentration `f`; the pressure `p = −∇²h` is
//! algebraic. The solute equations are divided through by `h`, which
//! gives the system an identity mass matrix on `(h, c, f)` and a zero
//! block on `p`.

use std::f64::consts::PI;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{PeriodicGrid, Spectral, SpectralError, Symbol};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("invalid evaporation peak {index}: {reason}")]
    InvalidPeak { index: usize, reason: String },
    #[error("film thickness {value} at node {node} is below the positivity floor")]
    NonPositiveThickness { node: usize, value: f64 },
    #[error("unknown quantity kind `{0}` (expected thickness, time, rate or length)")]
    UnknownKind(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Dimensional scales used only to convert results back to SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalScales {
    /// Initial film thickness `d` in metres.
    pub thickness: f64,
    /// Horizontal length scale `ℓ` in metres.
    pub length: f64,
    /// Peak thinning rate `v_max` in metres per second.
    pub thinning_rate: f64,
}

impl Default for PhysicalScales {
    fn default() -> Self {
        Self {
            thickness: 4.5e-6,
            length: 0.54e-3,
            thinning_rate: 10e-6 / 60.0,
        }
    }
}

impl PhysicalScales {
    /// Time scale `d / v_max` in seconds.
    pub fn time(&self) -> f64 {
        self.thickness / self.thinning_rate
    }
}

/// Nondimensional model constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// Osmotic supply strength `P_c`.
    pub pc: f64,
    /// Péclet number for osmolarity.
    pub pe_c: f64,
    /// Péclet number for fluorescein.
    pub pe_f: f64,
    /// Napierian extinction parameter `φ`.
    pub phi: f64,
    /// Initial fluorescein concentration relative to the critical value.
    pub f0: f64,
    /// Intensity normalization `I_0`.
    pub i0: f64,
    pub scales: PhysicalScales,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            pc: 0.392,
            pe_c: 6.76,
            pe_f: 27.7,
            phi: 0.417,
            f0: 1.0,
            i0: 1.0,
            scales: PhysicalScales::default(),
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("pc", self.pc),
            ("pe_c", self.pe_c),
            ("pe_f", self.pe_f),
            ("phi", self.phi),
            ("f0", self.f0),
            ("i0", self.i0),
            ("scales.thickness", self.scales.thickness),
            ("scales.length", self.scales.length),
            ("scales.thinning_rate", self.scales.thinning_rate),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidParameter {
                    name,
                    reason: format!("must be positive and finite, got {v}"),
                });
            }
        }
        Ok(())
    }

    /// `I_0` that makes the intensity of the initial uniform film equal 1.
    pub fn unit_initial_intensity(&self) -> f64 {
        (1.0 + self.f0 * self.f0) / (1.0 - (-self.phi * self.f0).exp())
    }
}

/// One Gaussian peak of the evaporation map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaporationPeak {
    /// Peak rate in units of `v_max`.
    pub amplitude: f64,
    pub center: [f64; 2],
    /// Gaussian widths `(x_w, y_w)`; an infinite width makes the peak
    /// uniform along that axis.
    pub widths: [f64; 2],
}

impl EvaporationPeak {
    pub fn circular(amplitude: f64, center: [f64; 2], width: f64) -> Self {
        Self {
            amplitude,
            center,
            widths: [width, width],
        }
    }

    pub fn is_circular(&self) -> bool {
        self.widths[0] == self.widths[1]
    }

    fn gaussian(&self, x: f64, y: f64) -> f64 {
        let sx = (x - self.center[0]) / self.widths[0];
        let sy = (y - self.center[1]) / self.widths[1];
        (-(sx * sx + sy * sy) / 2.0).exp()
    }
}

/// Evaporation rate map: a baseline plus Gaussian peaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Evaporation {
    /// Baseline rate `v_b` (ratio of minimum to peak thinning rate).
    pub baseline: f64,
    #[serde(default)]
    pub peaks: Vec<EvaporationPeak>,
    /// Add the eight nearest periodic images of each peak.
    #[serde(default)]
    pub periodic_images: bool,
}

impl Evaporation {
    pub fn new(baseline: f64, peaks: Vec<EvaporationPeak>) -> Result<Self, ModelError> {
        let e = Self {
            baseline,
            peaks,
            periodic_images: false,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn uniform(rate: f64) -> Self {
        Self {
            baseline: rate,
            peaks: Vec::new(),
            periodic_images: false,
        }
    }

    pub fn single_spot(amplitude: f64, baseline: f64, width: f64) -> Self {
        Self {
            baseline,
            peaks: vec![EvaporationPeak::circular(amplitude, [0.0, 0.0], width)],
            periodic_images: false,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.baseline >= 0.0 && self.baseline.is_finite()) {
            return Err(ModelError::InvalidParameter {
                name: "baseline",
                reason: format!("must be non-negative, got {}", self.baseline),
            });
        }
        for (index, p) in self.peaks.iter().enumerate() {
            let bad = |reason: String| Err(ModelError::InvalidPeak { index, reason });
            if !(p.amplitude > self.baseline) || !p.amplitude.is_finite() {
                return bad(format!(
                    "amplitude {} must exceed the baseline {}",
                    p.amplitude, self.baseline
                ));
            }
            if p.widths.iter().any(|w| !(*w > 0.0)) {
                return bad(format!("widths {:?} must be positive", p.widths));
            }
            if p.center.iter().any(|c| !(*c > -PI && *c <= PI)) {
                return bad(format!("center {:?} lies outside (−π, π]", p.center));
            }
        }
        Ok(())
    }

    /// Rate at a point.
    pub fn at(&self, x: f64, y: f64) -> f64 {
        let shifts: &[f64] = if self.periodic_images {
            &[-2.0 * PI, 0.0, 2.0 * PI]
        } else {
            &[0.0]
        };
        let mut j = self.baseline;
        for p in &self.peaks {
            for &sx in shifts {
                for &sy in shifts {
                    if sy != 0.0 && p.widths[1].is_infinite() {
                        continue;
                    }
                    j += (p.amplitude - self.baseline) * p.gaussian(x + sx, y + sy);
                }
            }
        }
        j
    }

    /// Rate at every grid node.
    pub fn evaluate(&self, grid: &PeriodicGrid) -> Result<Vec<f64>, ModelError> {
        self.validate()?;
        Ok(grid.sample(|x, y| self.at(x, y)))
    }
}

/// Fluorescence intensity `I = I0 (1 − exp(−φ f h)) / (1 + f²)`.
pub fn fl_intensity(h: &[f64], f: &[f64], params: &ModelParams) -> Vec<f64> {
    h.iter()
        .zip(f)
        .map(|(&h, &f)| params.i0 * (1.0 - (-params.phi * f * h).exp()) / (1.0 + f * f))
        .collect()
}

/// Quantity kinds for unit conversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantityKind {
    Thickness,
    Time,
    Rate,
    Length,
}

impl FromStr for QuantityKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "thickness" => Ok(Self::Thickness),
            "time" => Ok(Self::Time),
            "rate" => Ok(Self::Rate),
            "length" => Ok(Self::Length),
            other => Err(ModelError::UnknownKind(other.to_string())),
        }
    }
}

/// A value in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantity {
    pub value: f64,
    pub unit: &'static str,
}

pub fn dimensionalize(value: f64, kind: QuantityKind, params: &ModelParams) -> Quantity {
    let s = &params.scales;
    match kind {
        QuantityKind::Thickness => Quantity { value: value * s.thickness, unit: "m" },
        QuantityKind::Time => Quantity { value: value * s.time(), unit: "s" },
        QuantityKind::Rate => Quantity { value: value * s.thinning_rate, unit: "m/s" },
        QuantityKind::Length => Quantity { value: value * s.length, unit: "m" },
    }
}

/// Discretized fields at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub h: Vec<f64>,
    pub p: Vec<f64>,
    pub c: Vec<f64>,
    /// Fluorescein concentration; absent until the fluorescein stage ran.
    pub f: Option<Vec<f64>>,
}

impl FieldState {
    /// Uniform film `h = c = 1`, `f = f0`, `p = 0`.
    pub fn uniform(grid: &PeriodicGrid, f0: f64) -> Self {
        let n = grid.len();
        Self {
            t: 0.0,
            h: vec![1.0; n],
            p: vec![0.0; n],
            c: vec![1.0; n],
            f: Some(vec![f0; n]),
        }
    }
}

/// Right-hand sides / constraint residuals for every variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    /// `∂t h` target.
    pub h: Vec<f64>,
    /// Algebraic residual `p + ∇²h`.
    pub p: Vec<f64>,
    /// `∂t c` target.
    pub c: Vec<f64>,
    pub f: Option<Vec<f64>>,
}

/// The four labelled groups of terms in the osmolarity equation, arranged
/// so that `∂t c = −advection + diffusion + evaporation − osmosis`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mechanisms {
    pub advection: Vec<f64>,
    pub diffusion: Vec<f64>,
    pub evaporation: Vec<f64>,
    pub osmosis: Vec<f64>,
}

/// Intermediate quantities shared by the solute equations.
pub struct Transport {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// The model bound to a grid and an evaporation map.
#[derive(Debug, Clone)]
pub struct TearFilmModel {
    spectral: Spectral,
    params: ModelParams,
    evaporation: Evaporation,
    j: Vec<f64>,
    div_x: Symbol,
    div_y: Symbol,
    px_of_h: Symbol,
    py_of_h: Symbol,
}

impl TearFilmModel {
    pub fn new(
        grid: PeriodicGrid,
        params: ModelParams,
        evaporation: Evaporation,
    ) -> Result<Self, ModelError> {
        params.validate()?;
        let j = evaporation.evaluate(&grid)?;
        let spectral = Spectral::new(grid);
        let div_x = spectral.dx_symbol().clone();
        let div_y = spectral.dy_symbol().clone();
        let px_of_h = spectral.dx_symbol().compose(spectral.neg_laplacian_symbol());
        let py_of_h = spectral.dy_symbol().compose(spectral.neg_laplacian_symbol());
        Ok(Self {
            spectral,
            params,
            evaporation,
            j,
            div_x,
            div_y,
            px_of_h,
            py_of_h,
        })
    }

    /// Filters flux products with the 2/3 rule before differentiating.
    pub fn with_dealiasing(mut self) -> Self {
        let mask = self.spectral.two_thirds_mask();
        self.div_x = self.spectral.dx_symbol().compose(&mask);
        self.div_y = self.spectral.dy_symbol().compose(&mask);
        self
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.spectral.grid()
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn evaporation(&self) -> &Evaporation {
        &self.evaporation
    }

    /// Evaporation rate at every node.
    pub fn j(&self) -> &[f64] {
        &self.j
    }

    fn check_state(&self, h: &[f64], p: &[f64], c: &[f64]) -> Result<(), ModelError> {
        let g = self.grid();
        g.check(h)?;
        g.check(p)?;
        g.check(c)?;
        check_positive(h)
    }

    /// Pressure consistent with `h`: `p = −∇²h`.
    pub fn pressure(&self, h: &[f64]) -> Vec<f64> {
        let s = &self.spectral;
        s.synthesize(&s.transform(h), s.neg_laplacian_symbol())
    }

    /// Depth-averaged velocities `ū = −h²/12 ∂x p`, `v̄ = −h²/12 ∂y p`.
    pub fn velocities(&self, h: &[f64], p: &[f64]) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        self.grid().check(h)?;
        self.grid().check(p)?;
        let t = self.transport(h, p);
        Ok((t.u, t.v))
    }

    pub(crate) fn transport(&self, h: &[f64], p: &[f64]) -> Transport {
        let s = &self.spectral;
        let sp = s.transform(p);
        let (px, py) = s.synthesize_pair((&sp, s.dx_symbol()), (&sp, s.dy_symbol()));
        let u = h.iter().zip(&px).map(|(h, d)| -h * h / 12.0 * d).collect();
        let v = h.iter().zip(&py).map(|(h, d)| -h * h / 12.0 * d).collect();
        Transport { u, v }
    }

    /// Time derivatives of `h` and `c` for given `(h, p, c)`.
    pub fn film_rates(
        &self,
        h: &[f64],
        p: &[f64],
        c: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        self.check_state(h, p, c)?;
        let s = &self.spectral;
        let (sp, sc) = s.transform_pair(p, c);
        let (px, py) = s.synthesize_pair((&sp, s.dx_symbol()), (&sp, s.dy_symbol()));
        let (cx, cy) = s.synthesize_pair((&sc, s.dx_symbol()), (&sc, s.dy_symbol()));
        Ok(self.rates_from_gradients(h, c, [&px, &py], [&cx, &cy]))
    }

    /// Time derivatives of `h` and `c` with `p = −∇²h` eliminated.
    pub fn film_rates_consistent(&self, h: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        let g = self.grid();
        g.check(h)?;
        g.check(c)?;
        check_positive(h)?;
        let s = &self.spectral;
        let (sh, sc) = s.transform_pair(h, c);
        let (px, py) = s.synthesize_pair((&sh, &self.px_of_h), (&sh, &self.py_of_h));
        let (cx, cy) = s.synthesize_pair((&sc, s.dx_symbol()), (&sc, s.dy_symbol()));
        Ok(self.rates_from_gradients(h, c, [&px, &py], [&cx, &cy]))
    }

    fn rates_from_gradients(&self, h: &[f64], c: &[f64], gp: [&[f64]; 2], gc: [&[f64]; 2]) -> (Vec<f64>, Vec<f64>) {
        let s = &self.spectral;
        let n = h.len();
        let ([px, py], [cx, cy]) = (gp, gc);
        let mut u = vec![0.0; n];
        let mut v = vec![0.0; n];
        let mut qx = vec![0.0; n];
        let mut qy = vec![0.0; n];
        let mut gx = vec![0.0; n];
        let mut gy = vec![0.0; n];
        for k in 0..n {
            let hk = h[k];
            let m = -hk * hk / 12.0;
            u[k] = m * px[k];
            v[k] = m * py[k];
            qx[k] = hk * u[k];
            qy[k] = hk * v[k];
            gx[k] = hk * cx[k];
            gy[k] = hk * cy[k];
        }
        let (sqx, sqy) = s.transform_pair(&qx, &qy);
        let (sgx, sgy) = s.transform_pair(&gx, &gy);
        let (div_q, div_g) = s.synthesize_sums(
            &[(&sqx, &self.div_x), (&sqy, &self.div_y)],
            &[(&sgx, &self.div_x), (&sgy, &self.div_y)],
        );

        let pr = &self.params;
        let mut dh = vec![0.0; n];
        let mut dc = vec![0.0; n];
        for k in 0..n {
            let (hk, ck, jk) = (h[k], c[k], self.j[k]);
            let osm = pr.pc * (ck - 1.0);
            dh[k] = -div_q[k] - jk + osm;
            dc[k] = -u[k] * cx[k] - v[k] * cy[k] + div_g[k] / (hk * pr.pe_c) + (jk - osm) * ck / hk;
        }
        (dh, dc)
    }

    /// Applies `(1 + γ a |k|⁴)⁻¹` to `vh` and `(1 + γ|k|²/Pe_c)⁻¹` to `vc`,
    /// the constant-coefficient part of `I − γJ` with `a = mean(h³)/12`.
    pub fn precondition_film(&self, gamma: f64, h: &[f64], vh: &mut [f64], vc: &mut [f64]) {
        let a = h.iter().map(|h| h * h * h).sum::<f64>() / (12.0 * h.len() as f64);
        let pe = self.params.pe_c;
        let s = &self.spectral;
        let sym_h = s.symbol(|m| {
            let k2 = m.k2();
            Complex64::new(1.0 / (1.0 + gamma * a * k2 * k2), 0.0)
        });
        let sym_c = s.symbol(|m| Complex64::new(1.0 / (1.0 + gamma * m.k2() / pe), 0.0));
        let (oh, oc) = s.apply_pair(vh, &sym_h, vc, &sym_c);
        vh.copy_from_slice(&oh);
        vc.copy_from_slice(&oc);
    }

    /// Applies `(1 + γ|k|²/Pe)⁻¹` to `v`.
    pub fn precondition_diffusion(&self, gamma: f64, pe: f64, v: &mut [f64]) {
        let s = &self.spectral;
        let sym = s.symbol(|m| Complex64::new(1.0 / (1.0 + gamma * m.k2() / pe), 0.0));
        let out = s.synthesize(&s.transform(v), &sym);
        v.copy_from_slice(&out);
    }

    /// Time derivative of the fluorescein concentration `f`.
    pub fn fluorescein_rate(
        &self,
        h: &[f64],
        p: &[f64],
        c: &[f64],
        f: &[f64],
    ) -> Result<Vec<f64>, ModelError> {
        self.check_state(h, p, c)?;
        self.grid().check(f)?;
        let t = self.transport(h, p);
        Ok(self.fluorescein_rate_with(h, c, f, &t))
    }

    pub(crate) fn fluorescein_rate_with(&self, h: &[f64], c: &[f64], f: &[f64], t: &Transport) -> Vec<f64> {
        let (adv, diff) = self.advection_diffusion(h, f, &t.u, &t.v, self.params.pe_f);
        let pr = &self.params;
        (0..h.len())
            .map(|k| {
                let osm = pr.pc * (c[k] - 1.0);
                -adv[k] + diff[k] + (self.j[k] - osm) * f[k] / h[k]
            })
            .collect()
    }

    /// `(ū·∇s, ∇·(h∇s)/(h Pe))` for a solute `s`.
    fn advection_diffusion(&self, h: &[f64], s: &[f64], u: &[f64], v: &[f64], pe: f64) -> (Vec<f64>, Vec<f64>) {
        let sp = &self.spectral;
        let n = h.len();
        let ss = sp.transform(s);
        let (sx, sy) = sp.synthesize_pair((&ss, sp.dx_symbol()), (&ss, sp.dy_symbol()));
        let gx: Vec<f64> = (0..n).map(|k| h[k] * sx[k]).collect();
        let gy: Vec<f64> = (0..n).map(|k| h[k] * sy[k]).collect();
        let (sgx, sgy) = sp.transform_pair(&gx, &gy);
        let (div_g, _) = sp.synthesize_sums(&[(&sgx, &self.div_x), (&sgy, &self.div_y)], &[]);
        let adv = (0..n).map(|k| u[k] * sx[k] + v[k] * sy[k]).collect();
        let diff = (0..n).map(|k| div_g[k] / (h[k] * pe)).collect();
        (adv, diff)
    }

    /// Residuals of the full system at a state.
    pub fn residual(&self, state: &FieldState) -> Result<Residual, ModelError> {
        let (dh, dc) = self.film_rates(&state.h, &state.p, &state.c)?;
        let p_of_h = self.pressure(&state.h);
        let rp = state.p.iter().zip(&p_of_h).map(|(p, q)| p - q).collect();
        let rf = match &state.f {
            Some(f) => Some(self.fluorescein_rate(&state.h, &state.p, &state.c, f)?),
            None => None,
        };
        Ok(Residual { h: dh, p: rp, c: dc, f: rf })
    }

    /// Labelled terms of the osmolarity equation.
    pub fn mechanism_terms(&self, state: &FieldState) -> Result<Mechanisms, ModelError> {
        self.check_state(&state.h, &state.p, &state.c)?;
        let t = self.transport(&state.h, &state.p);
        let (advection, diffusion) = self.advection_diffusion(&state.h, &state.c, &t.u, &t.v, self.params.pe_c);
        let pr = &self.params;
        let (h, c) = (&state.h, &state.c);
        let evaporation = (0..h.len()).map(|k| self.j[k] * c[k] / h[k]).collect();
        let osmosis = (0..h.len()).map(|k| pr.pc * (c[k] - 1.0) * c[k] / h[k]).collect();
        Ok(Mechanisms {
            advection,
            diffusion,
            evaporation,
            osmosis,
        })
    }

    /// `∫ h·s` over the periodic cell.
    pub fn total_solute(&self, h: &[f64], s: &[f64]) -> Result<f64, ModelError> {
        total_solute(h, s, self.grid())
    }
}

pub fn total_solute(h: &[f64], s: &[f64], grid: &PeriodicGrid) -> Result<f64, ModelError> {
    grid.check(h)?;
    grid.check(s)?;
    let hs: Vec<f64> = h.iter().zip(s).map(|(a, b)| a * b).collect();
    Ok(crate::spectral::integrate_domain(&hs, grid)?)
}

pub(crate) fn check_positive(h: &[f64]) -> Result<(), ModelError> {
    for (node, &value) in h.iter().enumerate() {
        if !(value > 0.0) {
            return Err(ModelError::NonPositiveThickness { node, value });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn model(n: usize, evap: Evaporation) -> TearFilmModel {
        TearFilmModel::new(PeriodicGrid::square(n).unwrap(), ModelParams::default(), evap).unwrap()
    }

    #[test]
    fn defaults_match_tables() {
        let p = ModelParams::default();
        assert_eq!((p.pc, p.pe_f, p.pe_c, p.phi), (0.392, 27.7, 6.76, 0.417));
        assert!(p.validate().is_ok());
    }

    #[test]
    fn evaporation_examples() {
        let e = Evaporation::single_spot(1.0, 0.1, 0.5);
        assert_eq!(e.at(0.0, 0.0), 1.0);
        let expect = 0.1 + 0.9 * (-0.5f64).exp();
        assert!((e.at(0.5, 0.0) - expect).abs() < 1e-15);
        assert!((expect - 0.6459).abs() < 1e-4);
        let g = PeriodicGrid::square(16).unwrap();
        assert!(Evaporation::uniform(0.1).evaluate(&g).unwrap().iter().all(|&v| v == 0.1));
    }

    #[test]
    fn evaporation_rejects_bad_peaks() {
        let mut e = Evaporation::single_spot(1.0, 0.1, 0.5);
        e.peaks[0].widths[1] = 0.0;
        assert!(matches!(e.validate(), Err(ModelError::InvalidPeak { index: 0, .. })));
        let e = Evaporation::single_spot(0.05, 0.1, 0.5);
        assert!(e.validate().is_err());
        let e = Evaporation::new(0.1, vec![EvaporationPeak::circular(1.0, [4.0, 0.0], 0.5)]);
        assert!(e.is_err());
    }

    #[test]
    fn infinite_width_is_a_streak() {
        let e = Evaporation {
            baseline: 0.1,
            peaks: vec![EvaporationPeak {
                amplitude: 1.0,
                center: [0.0, 0.0],
                widths: [0.5, f64::INFINITY],
            }],
            periodic_images: true,
        };
        assert!((e.at(0.0, 2.0) - (1.0 + 0.9 * 2.0 * (-0.5 * (2.0 * PI / 0.5f64).powi(2)).exp())).abs() < 1e-12);
    }

    #[test]
    fn velocities_examples() {
        let m = model(32, Evaporation::uniform(0.1));
        let g = *m.grid();
        let (u, v) = m.velocities(&vec![1.0; g.len()], &vec![3.0; g.len()]).unwrap();
        assert!(u.iter().chain(&v).all(|x| x.abs() < 1e-14));
        let (u, _) = m.velocities(&vec![1.0; g.len()], &g.sample(|x, _| x.sin())).unwrap();
        assert!(max_err(&u, &g.sample(|x, _| -x.cos() / 12.0)) < 1e-10);
        let (_, v) = m.velocities(&vec![2.0; g.len()], &g.sample(|_, y| y.sin())).unwrap();
        assert!(max_err(&v, &g.sample(|_, y| -y.cos() / 3.0)) < 1e-10);
    }

    #[test]
    fn uniform_residual() {
        let m = model(16, Evaporation::uniform(0.1));
        let f0 = 0.7;
        let mut s = FieldState::uniform(m.grid(), f0);
        s.f = Some(vec![f0; 256]);
        let r = m.residual(&s).unwrap();
        assert!(r.h.iter().all(|v| (v + 0.1).abs() < 1e-14));
        assert!(r.p.iter().all(|v| v.abs() < 1e-14));
        assert!(r.c.iter().all(|v| (v - 0.1).abs() < 1e-14));
        assert!(r.f.unwrap().iter().all(|v| (v - 0.1 * f0).abs() < 1e-14));
    }

    #[test]
    fn steady_without_evaporation() {
        let m = model(16, Evaporation::uniform(0.0));
        let r = m.residual(&FieldState::uniform(m.grid(), 1.0)).unwrap();
        for v in r.h.iter().chain(&r.c).chain(r.f.as_ref().unwrap()) {
            assert!(v.abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_non_positive_thickness() {
        let m = model(8, Evaporation::uniform(0.1));
        let mut s = FieldState::uniform(m.grid(), 1.0);
        s.h[5] = 0.0;
        assert!(matches!(
            m.residual(&s),
            Err(ModelError::NonPositiveThickness { node: 5, .. })
        ));
    }

    #[test]
    fn intensity_examples() {
        let p = ModelParams::default();
        assert_eq!(fl_intensity(&[1.0], &[0.0], &p), vec![0.0]);
        let i = fl_intensity(&[1.0], &[1.0], &p)[0];
        assert!((i - (1.0 - (-0.417f64).exp()) / 2.0).abs() < 1e-15);
        assert!((i - 0.17048).abs() < 1e-5);
        let sat = fl_intensity(&[1e6], &[2.0], &p)[0];
        assert!((sat - 1.0 / 5.0).abs() < 1e-12);
        let mut q = p;
        q.i0 = q.unit_initial_intensity();
        assert!((fl_intensity(&[1.0], &[q.f0], &q)[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn total_solute_examples() {
        let g = PeriodicGrid::square(8).unwrap();
        let tau = 4.0 * PI * PI;
        assert!((total_solute(&[1.0; 64], &[1.0; 64], &g).unwrap() - tau).abs() < 1e-12);
        assert!((total_solute(&[2.0; 64], &[0.5; 64], &g).unwrap() - tau).abs() < 1e-12);
    }

    #[test]
    fn dimensional_examples() {
        let p = ModelParams::default();
        let h = dimensionalize(1.0, QuantityKind::Thickness, &p);
        assert!((h.value - 4.5e-6).abs() < 1e-18 && h.unit == "m");
        assert!((dimensionalize(1.0, QuantityKind::Time, &p).value - 27.0).abs() < 1e-12);
        assert!((dimensionalize(1.0, QuantityKind::Length, &p).value - 0.54e-3).abs() < 1e-15);
        assert!((dimensionalize(1.0, QuantityKind::Rate, &p).value - 1e-5 / 60.0).abs() < 1e-18);
        assert!(matches!("volume".parse::<QuantityKind>(), Err(ModelError::UnknownKind(_))));
        assert_eq!("time".parse::<QuantityKind>().unwrap(), QuantityKind::Time);
    }
}
