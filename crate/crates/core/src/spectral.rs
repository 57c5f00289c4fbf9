//! Sine-spectral representation of fields on `(0, pi)` with Dirichlet
//! boundary conditions.
//!
//! Mode `k` (1-based) is the orthonormal eigenfunction
//! `e_k(x) = sqrt(2/pi) sin(k x)` of `-d^2/dx^2` with eigenvalue `k^2`.
//! Coefficient vectors store mode `k` at index `k - 1`.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sine-series coefficients `a_1..a_M` of a field in `L^2(0, pi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralField {
    coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn zeros(modes: usize) -> Self {
        Self { coeffs: vec![0.0; modes] }
    }

    /// Rejects non-finite entries.
    pub fn from_coeffs(coeffs: Vec<f64>) -> Result<Self> {
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "coefficient of mode {} is not finite",
                i + 1
            )));
        }
        Ok(Self { coeffs })
    }

    /// The basis function `e_k` truncated to `modes` modes.
    pub fn basis(modes: usize, k: usize) -> Self {
        assert!(k >= 1 && k <= modes, "mode {k} out of 1..={modes}");
        let mut f = Self::zeros(modes);
        f.coeffs[k - 1] = 1.0;
        f
    }

    pub fn modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Coefficient of mode `k` (1-based).
    pub fn mode(&self, k: usize) -> f64 {
        self.coeffs[k - 1]
    }

    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.modes(), other.modes());
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `sqrt(sum k^2 a_k^2)`, the `H^1_0` seminorm.
    pub fn h1_seminorm(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let k = (i + 1) as f64;
                k * k * a * a
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Applies the Dirichlet Laplacian: mode `k` is multiplied by `-k^2`.
    pub fn laplacian(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, a)| -((i + 1) as f64).powi(2) * a)
            .collect();
        Self { coeffs }
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.modes() != other.modes() {
            return Err(Error::ShapeMismatch {
                expected: self.modes(),
                found: other.modes(),
            });
        }
        Ok(())
    }
}

impl Index<usize> for SpectralField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.coeffs[i]
    }
}

impl IndexMut<usize> for SpectralField {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.coeffs[i]
    }
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl AddAssign<&SpectralField> for SpectralField {
    fn add_assign(&mut self, rhs: &SpectralField) {
        assert_eq!(self.modes(), rhs.modes(), "mode count mismatch");
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a += b;
        }
    }
}

impl SubAssign<&SpectralField> for SpectralField {
    fn sub_assign(&mut self, rhs: &SpectralField) {
        assert_eq!(self.modes(), rhs.modes(), "mode count mismatch");
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a -= b;
        }
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, s: f64) -> SpectralField {
        SpectralField {
            coeffs: self.coeffs.iter().map(|a| a * s).collect(),
        }
    }
}

/// Keeps modes `1..=n`.
pub fn project_low(u: &SpectralField, n: usize) -> Result<SpectralField> {
    check_cutoff(u, n)?;
    let mut out = u.clone();
    out.coeffs[n..].iter_mut().for_each(|a| *a = 0.0);
    Ok(out)
}

/// Keeps modes `n+1..=M`.
pub fn project_high(u: &SpectralField, n: usize) -> Result<SpectralField> {
    check_cutoff(u, n)?;
    let mut out = u.clone();
    out.coeffs[..n].iter_mut().for_each(|a| *a = 0.0);
    Ok(out)
}

fn check_cutoff(u: &SpectralField, n: usize) -> Result<()> {
    if n == 0 || n > u.modes() {
        return Err(Error::InvalidParameter(format!(
            "cutoff {n} outside 1..={}",
            u.modes()
        )));
    }
    Ok(())
}

/// Diagonal trace-class covariance: mode `k` of the Wiener process has
/// variance rate `q_k`, and the noise is scaled by `sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QSpectrum {
    q: Vec<f64>,
    pub sigma: f64,
}

impl QSpectrum {
    pub fn new(q: Vec<f64>, sigma: f64) -> Result<Self> {
        if q.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter("q_k must be finite and >= 0".into()));
        }
        if !sigma.is_finite() {
            return Err(Error::InvalidParameter("sigma must be finite".into()));
        }
        Ok(Self { q, sigma })
    }

    /// `q_k = k^(-p)`; summable only for `p > 1`.
    pub fn power_law(modes: usize, p: f64, sigma: f64) -> Result<Self> {
        if p <= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "power-law exponent {p} does not give a trace-class covariance"
            )));
        }
        Self::new((1..=modes).map(|k| (k as f64).powf(-p)).collect(), sigma)
    }

    pub fn zero(modes: usize) -> Self {
        Self { q: vec![0.0; modes], sigma: 1.0 }
    }

    pub fn modes(&self) -> usize {
        self.q.len()
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// Effective variance rate `sigma^2 q_k` of mode `k` (1-based).
    pub fn rate(&self, k: usize) -> f64 {
        self.sigma * self.sigma * self.q[k - 1]
    }

    /// `sigma^2 Tr Q` at this truncation.
    pub fn trace(&self) -> f64 {
        (1..=self.modes()).map(|k| self.rate(k)).sum()
    }
}

/// Piecewise-linear scalar map given by a table of knots; extended linearly
/// with the end slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::InvalidParameter("table needs >= 2 matching knots".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("table knots must increase".into()));
        }
        Ok(Self { xs, ys })
    }

    fn slope(&self, i: usize) -> f64 {
        (self.ys[i + 1] - self.ys[i]) / (self.xs[i + 1] - self.xs[i])
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let i = match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        self.ys[i] + self.slope(i) * (x - self.xs[i])
    }

    pub fn lipschitz(&self) -> f64 {
        (0..self.xs.len() - 1).map(|i| self.slope(i).abs()).fold(0.0, f64::max)
    }
}

/// The scalar nonlinearity `f` acting pointwise (Nemytskii operator).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Nonlinearity {
    Zero,
    /// `f(u) = a sin(u)`, Lipschitz constant `|a|`.
    ScaledSine { a: f64 },
    /// `f(u) = a u`.
    Linear { a: f64 },
    Table(PiecewiseLinear),
}

impl Nonlinearity {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::ScaledSine { a } => a * x.sin(),
            Nonlinearity::Linear { a } => a * x,
            Nonlinearity::Table(t) => t.eval(x),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::ScaledSine { a } | Nonlinearity::Linear { a } => a.abs(),
            Nonlinearity::Table(t) => t.lipschitz(),
        }
    }

    /// Bound on `||f(w)||_{L^2}` valid for every `w`, when `f` is bounded.
    pub fn l2_bound(&self) -> Option<f64> {
        match self {
            Nonlinearity::Zero => Some(0.0),
            Nonlinearity::ScaledSine { a } => Some(a.abs() * PI.sqrt()),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Nonlinearity::Zero)
            || matches!(self, Nonlinearity::ScaledSine { a } | Nonlinearity::Linear { a } if *a == 0.0)
    }

    /// Requires `f(0) = 0` and `L_f <= sqrt(lambda_1) = 1`.
    pub fn validate(&self) -> Result<()> {
        if self.eval(0.0) != 0.0 {
            return Err(Error::InvalidParameter("nonlinearity must satisfy f(0) = 0".into()));
        }
        let l = self.lipschitz();
        if !(l <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "Lipschitz constant {l} exceeds sqrt(lambda_1) = 1"
            )));
        }
        Ok(())
    }
}

/// Discretisation parameters shared by the solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Spectral truncation `M`.
    pub modes: usize,
    /// Interior quadrature points (at least `2 M`).
    pub phys_points: usize,
    pub dt: f64,
    pub t_back: f64,
    pub t_fwd: f64,
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.modes == 0 {
            return Err(Error::InvalidParameter("need at least one mode".into()));
        }
        if self.phys_points < 2 * self.modes {
            return Err(Error::InvalidParameter(format!(
                "{} quadrature points cannot resolve {} modes without aliasing (need >= {})",
                self.phys_points,
                self.modes,
                2 * self.modes
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter("dt must be positive".into()));
        }
        if !(self.t_back > 0.0) {
            return Err(Error::InvalidParameter("t_back must be positive".into()));
        }
        if !(self.t_fwd >= 0.0) {
            return Err(Error::InvalidParameter("t_fwd must be non-negative".into()));
        }
        Ok(())
    }

    pub fn transform(&self) -> SineTransform {
        SineTransform::new(self.modes, self.phys_points)
    }
}

/// Type-I discrete sine transform between `M` orthonormal modes and
/// `P` interior points `x_j = j pi / (P + 1)`.
///
/// The quadrature weight `pi / (P + 1)` makes the transform exact for
/// band-limited fields, so `backward` then `forward` is the identity on
/// modes `1..=M` whenever `M <= P`.
#[derive(Debug, Clone)]
pub struct SineTransform {
    modes: usize,
    points: usize,
    /// `e_k(x_j)`, row-major with one row per mode.
    table: Vec<f64>,
    weight: f64,
}

impl SineTransform {
    pub fn new(modes: usize, points: usize) -> Self {
        assert!(modes >= 1 && points >= modes, "need points >= modes >= 1");
        let h = PI / (points + 1) as f64;
        let norm = (2.0 / PI).sqrt();
        let mut table = Vec::with_capacity(modes * points);
        for k in 1..=modes {
            for j in 1..=points {
                // exact reduction of k j mod 2(P+1) keeps the table accurate
                let r = (k * j) % (2 * (points + 1));
                table.push(norm * (r as f64 * h).sin());
            }
        }
        Self { modes, points, table, weight: h }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn points(&self) -> usize {
        self.points
    }

    /// Grid abscissae `x_1..x_P`.
    pub fn abscissae(&self) -> Vec<f64> {
        (1..=self.points).map(|j| j as f64 * self.weight).collect()
    }

    pub fn quadrature_weight(&self) -> f64 {
        self.weight
    }

    pub fn dst_forward(&self, samples: &[f64]) -> Result<SpectralField> {
        if samples.len() != self.points {
            return Err(Error::ShapeMismatch {
                expected: self.points,
                found: samples.len(),
            });
        }
        let mut out = vec![0.0; self.modes];
        self.forward_into(samples, &mut out);
        SpectralField::from_coeffs(out)
    }

    pub fn dst_backward(&self, u: &SpectralField) -> Result<Vec<f64>> {
        if u.modes() != self.modes {
            return Err(Error::ShapeMismatch {
                expected: self.modes,
                found: u.modes(),
            });
        }
        let mut out = vec![0.0; self.points];
        self.backward_into(u.coeffs(), &mut out);
        Ok(out)
    }

    pub fn forward_into(&self, samples: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate().take(self.modes) {
            let row = &self.table[k * self.points..(k + 1) * self.points];
            *o = self.weight * row.iter().zip(samples).map(|(e, s)| e * s).sum::<f64>();
        }
    }

    pub fn backward_into(&self, coeffs: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (k, &a) in coeffs.iter().enumerate().take(self.modes) {
            if a == 0.0 {
                continue;
            }
            let row = &self.table[k * self.points..(k + 1) * self.points];
            for (o, e) in out.iter_mut().zip(row) {
                *o += a * e;
            }
        }
    }

    /// Pseudo-spectral Nemytskii map `f(u + z)` projected back onto the
    /// modes. `scratch` must hold `P` values.
    pub fn nemytskii_into(
        &self,
        f: &Nonlinearity,
        u: &[f64],
        z: Option<&[f64]>,
        out: &mut [f64],
        scratch: &mut [f64],
    ) {
        if f.is_zero() {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        match z {
            Some(z) => {
                let sum: Vec<f64> = u.iter().zip(z).map(|(a, b)| a + b).collect();
                self.backward_into(&sum, scratch);
            }
            None => self.backward_into(u, scratch),
        }
        scratch.iter_mut().for_each(|v| *v = f.eval(*v));
        self.forward_into(scratch, out);
    }

    /// `f(u + z)` as a spectral field.
    pub fn apply_nonlinearity(
        &self,
        u: &SpectralField,
        z: &SpectralField,
        f: &Nonlinearity,
    ) -> Result<SpectralField> {
        u.check_same(z)?;
        if u.modes() != self.modes {
            return Err(Error::ShapeMismatch {
                expected: self.modes,
                found: u.modes(),
            });
        }
        let mut out = vec![0.0; self.modes];
        let mut scratch = vec![0.0; self.points];
        self.nemytskii_into(f, u.coeffs(), Some(z.coeffs()), &mut out, &mut scratch);
        SpectralField::from_coeffs(out)
    }

    /// Discrete `L^2` norm of physical samples.
    pub fn quadrature_norm(&self, samples: &[f64]) -> f64 {
        (self.weight * samples.iter().map(|s| s * s).sum::<f64>()).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn e(k: f64, x: f64) -> f64 {
        (2.0 / PI).sqrt() * (k * x).sin()
    }

    #[test]
    fn basis_function_maps_to_unit_coefficient() {
        let t = SineTransform::new(8, 16);
        let s: Vec<f64> = t.abscissae().iter().map(|&x| e(1.0, x)).collect();
        let a = t.dst_forward(&s).unwrap();
        assert_abs_diff_eq!(a.mode(1), 1.0, epsilon = 1e-14);
        assert!(a.coeffs()[1..].iter().all(|c| c.abs() < 1e-14));
    }

    #[test]
    fn zero_samples_give_zero_coefficients() {
        let t = SineTransform::new(8, 16);
        let a = t.dst_forward(&[0.0; 16]).unwrap();
        assert_eq!(a, SpectralField::zeros(8));
    }

    #[test]
    fn two_mode_expansion() {
        let t = SineTransform::new(8, 16);
        let s: Vec<f64> = t
            .abscissae()
            .iter()
            .map(|&x| e(2.0, x) + 0.5 * e(3.0, x))
            .collect();
        let a = t.dst_forward(&s).unwrap();
        let want = [0.0, 1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0];
        for (got, w) in a.coeffs().iter().zip(want) {
            assert_abs_diff_eq!(*got, w, epsilon = 1e-14);
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let t = SineTransform::new(4, 8);
        assert!(matches!(t.dst_forward(&[0.0; 7]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn nonlinearity_examples() {
        let t = SineTransform::new(16, 32);
        let u = SpectralField::basis(16, 1);
        let z = SpectralField::zeros(16);
        let zero = t.apply_nonlinearity(&u, &z, &Nonlinearity::Zero).unwrap();
        assert_eq!(zero, SpectralField::zeros(16));
        let lin = t
            .apply_nonlinearity(&u, &z, &Nonlinearity::Linear { a: 0.5 })
            .unwrap();
        assert_abs_diff_eq!(lin.mode(1), 0.5, epsilon = 1e-14);
        assert!(lin.coeffs()[1..].iter().all(|c| c.abs() < 1e-14));
    }

    #[test]
    fn sine_nonlinearity_matches_fine_quadrature() {
        // f = sin, u + z = 0.1 e_1; reference coefficients by midpoint
        // quadrature on 1024 cells of the exact composite function
        let t = SineTransform::new(16, 32);
        let u = &SpectralField::basis(16, 1) * 0.1;
        let z = SpectralField::zeros(16);
        let f = Nonlinearity::ScaledSine { a: 1.0 };
        let got = t.apply_nonlinearity(&u, &z, &f).unwrap();
        let n = 1024;
        let h = PI / n as f64;
        for k in 1..=16 {
            let want: f64 = (0..n)
                .map(|i| {
                    let x = (i as f64 + 0.5) * h;
                    (0.1 * e(1.0, x)).sin() * e(k as f64, x) * h
                })
                .sum();
            assert_abs_diff_eq!(got.mode(k), want, epsilon = 1e-7);
        }
        assert!(got.l2_norm() <= 0.1);
    }

    #[test]
    fn projection_examples() {
        let u = &SpectralField::basis(5, 1) + &SpectralField::basis(5, 3);
        let lo = project_low(&u, 2).unwrap();
        let hi = project_high(&u, 2).unwrap();
        assert_eq!(lo, SpectralField::basis(5, 1));
        assert_eq!(hi, SpectralField::basis(5, 3));
        assert_eq!(project_high(&u, 5).unwrap(), SpectralField::zeros(5));
        assert!(project_low(&u, 0).is_err());
        assert!(project_high(&u, 6).is_err());
    }

    #[test]
    fn nonlinearity_validation() {
        assert!(Nonlinearity::ScaledSine { a: 0.5 }.validate().is_ok());
        assert!(Nonlinearity::ScaledSine { a: 1.5 }.validate().is_err());
        let shifted = PiecewiseLinear::new(vec![-1.0, 1.0], vec![0.1, 0.3]).unwrap();
        assert!(Nonlinearity::Table(shifted).validate().is_err());
        let tab = PiecewiseLinear::new(vec![-1.0, 0.0, 2.0], vec![-0.5, 0.0, 0.4]).unwrap();
        assert_abs_diff_eq!(tab.lipschitz(), 0.5);
        assert_abs_diff_eq!(tab.eval(1.0), 0.2);
        assert_abs_diff_eq!(tab.eval(-3.0), -1.5);
        assert!(Nonlinearity::Table(tab).validate().is_ok());
    }

    #[test]
    fn grid_config_validation() {
        let mut g = GridConfig { modes: 16, phys_points: 32, dt: 1e-3, t_back: 5.0, t_fwd: 1.0 };
        assert!(g.validate().is_ok());
        g.phys_points = 31;
        assert!(g.validate().is_err());
        g.phys_points = 32;
        g.dt = 0.0;
        assert!(g.validate().is_err());
    }

    #[test]
    fn q_spectrum_requires_summable_law() {
        assert!(QSpectrum::power_law(8, 1.0, 1.0).is_err());
        let q = QSpectrum::power_law(2, 4.0, 2.0).unwrap();
        assert_abs_diff_eq!(q.rate(2), 4.0 / 16.0);
        assert_abs_diff_eq!(q.trace(), 4.0 + 0.25);
    }

    fn field(modes: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-2.0..2.0f64, modes)
    }

    proptest! {
        #[test]
        fn dst_round_trip_and_parseval(a in field(12)) {
            let t = SineTransform::new(12, 24);
            let u = SpectralField::from_coeffs(a).unwrap();
            let s = t.dst_backward(&u).unwrap();
            let back = t.dst_forward(&s).unwrap();
            for (x, y) in back.coeffs().iter().zip(u.coeffs()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            let n1 = u.l2_norm().powi(2);
            let n2 = t.quadrature_norm(&s).powi(2);
            prop_assert!((n1 - n2).abs() < 1e-10 * (1.0 + n1));
        }

        #[test]
        fn low_high_split_is_parseval(a in field(9), n in 1usize..=9) {
            let u = SpectralField::from_coeffs(a).unwrap();
            let lo = project_low(&u, n).unwrap();
            let hi = project_high(&u, n).unwrap();
            prop_assert_eq!(&(&lo + &hi), &u);
            let d = lo.l2_norm().powi(2) + hi.l2_norm().powi(2) - u.l2_norm().powi(2);
            prop_assert!(d.abs() < 1e-14 * (1.0 + u.l2_norm().powi(2)));
        }

        #[test]
        fn nemytskii_is_lipschitz(a in field(16), b in field(16), c in field(16), amp in 0.0..1.0f64) {
            let t = SineTransform::new(16, 32);
            let f = Nonlinearity::ScaledSine { a: amp };
            let u1 = SpectralField::from_coeffs(a).unwrap();
            let u2 = SpectralField::from_coeffs(b).unwrap();
            let z = SpectralField::from_coeffs(c).unwrap();
            let f1 = t.apply_nonlinearity(&u1, &z, &f).unwrap();
            let f2 = t.apply_nonlinearity(&u2, &z, &f).unwrap();
            prop_assert!((&f1 - &f2).l2_norm() <= amp * (&u1 - &u2).l2_norm() + 1e-8);
        }
    }
}
