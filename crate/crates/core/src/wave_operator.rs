//! Phase-space form of the damped wave equation.
//!
//! With `v = nu u_t + u / 2` the equation `nu u_tt + u_t = Delta u + f`
//! becomes `U_t = C U + (0, f)`, where on mode `k`
//!
//! ```text
//! C_k = [[ -1/(2 nu),         1/nu     ],
//!        [ 1/(4 nu) - k^2,   -1/(2 nu) ]]
//! ```
//!
//! For `k <= N` (real regime) the eigenvalues are
//! `lambda_k^{+-} = (-1 +- sqrt(1 - 4 nu k^2)) / (2 nu)` with eigenvectors
//! `e_k^{+-} = (e_k, +-c_k e_k)`, `c_k = sqrt(1 - 4 nu k^2) / 2`.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::expm2;
use crate::spectral::SpectralField;

/// Mode-`k` block of `C`.
pub fn c_matrix(k: usize, nu: f64) -> Matrix2<f64> {
    let k2 = (k * k) as f64;
    Matrix2::new(-0.5 / nu, 1.0 / nu, 0.25 / nu - k2, -0.5 / nu)
}

/// Real eigen-structure of a low mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub k: usize,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub c_k: f64,
}

/// Eigenvalues of `C_k`; fails in the complex regime `4 nu k^2 >= 1`.
pub fn eigen(k: usize, nu: f64) -> Result<EigenPair> {
    if !(nu > 0.0) {
        return Err(Error::InvalidParameter(format!("nu must be positive, got {nu}")));
    }
    let d = 1.0 - 4.0 * nu * (k * k) as f64;
    if d <= 0.0 {
        return Err(Error::ComplexRegime { k, nu });
    }
    let s = d.sqrt();
    // -1 + s loses digits for small nu k^2; use the conjugate form instead
    let lambda_plus = -2.0 * (k * k) as f64 / (1.0 + s);
    Ok(EigenPair {
        k,
        lambda_plus,
        lambda_minus: (-1.0 - s) / (2.0 * nu),
        c_k: 0.5 * s,
    })
}

/// The parameters `(nu, N)` fixing the splitting `E = E_1 + E_-1 + E_22`
/// and the equivalent inner product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveGeometry {
    pub nu: f64,
    pub n: usize,
}

impl WaveGeometry {
    /// Requires `nu < 1 / (4 (N + 1)^2)` so that modes `1..=N+1` are real.
    pub fn new(nu: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("cutoff N must be >= 1".into()));
        }
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidParameter(format!("nu must be positive, got {nu}")));
        }
        let n1 = ((n + 1) * (n + 1)) as f64;
        if 4.0 * nu * n1 >= 1.0 {
            return Err(Error::ComplexRegime { k: n + 1, nu });
        }
        Ok(Self { nu, n })
    }

    pub fn eigen(&self, k: usize) -> EigenPair {
        eigen(k, self.nu).expect("real regime checked at construction for k <= N + 1")
    }

    /// Weight of `u_1 u_2` on mode `k` in the E inner product; the `v`
    /// weight is always 1.
    ///
    /// Low modes: `1/4 - nu k^2`. High modes: `nu k^2 + 1/4 - 2 nu (N+1)^2`.
    pub fn u_weight(&self, k: usize) -> f64 {
        let k2 = (k * k) as f64;
        if k <= self.n {
            0.25 - self.nu * k2
        } else {
            let n1 = ((self.n + 1) * (self.n + 1)) as f64;
            self.nu * k2 + 0.25 - 2.0 * self.nu * n1
        }
    }

    /// Constant `sqrt(1/4 - nu (N+1)^2)` in `||U||_E >= c ||u||`.
    pub fn u_lower_bound(&self) -> f64 {
        let n1 = ((self.n + 1) * (self.n + 1)) as f64;
        (0.25 - self.nu * n1).sqrt()
    }

    /// `alpha = lambda_N^+`.
    pub fn alpha(&self) -> f64 {
        self.eigen(self.n).lambda_plus
    }

    /// `beta = lambda_{N+1}^+`.
    pub fn beta(&self) -> f64 {
        self.eigen(self.n + 1).lambda_plus
    }

    /// Mode-wise E inner product of `(u1, v1)` and `(u2, v2)`.
    #[inline]
    pub fn mode_inner(&self, k: usize, u1: f64, v1: f64, u2: f64, v2: f64) -> f64 {
        self.u_weight(k) * u1 * u2 + v1 * v2
    }

    /// Squared E-norm of a state given as coefficient slices.
    pub fn norm_sq(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter()
            .zip(v)
            .enumerate()
            .map(|(i, (a, b))| self.u_weight(i + 1) * a * a + b * b)
            .sum()
    }

    /// Eigen-coordinates `(p, m)` of a low mode: `(u, v) = p e^+ + m e^-`.
    #[inline]
    pub fn to_eigen(&self, k: usize, u: f64, v: f64) -> (f64, f64) {
        let c = self.eigen(k).c_k;
        (0.5 * (u + v / c), 0.5 * (u - v / c))
    }

    pub fn phase_point(&self, u: SpectralField, v: SpectralField) -> Result<PhasePoint> {
        PhasePoint::new(u, v, self.nu, self.n)
    }

    /// `e_k^+` (sign `+1`) or `e_k^-` (sign `-1`) with `modes` modes.
    pub fn eigenvector(&self, modes: usize, k: usize, sign: f64) -> PhasePoint {
        let c = self.eigen(k).c_k;
        let u = SpectralField::basis(modes, k);
        let v = &u * (sign * c);
        PhasePoint { u, v, nu: self.nu, n: self.n }
    }
}

/// Element `(u, v)` of `E = H^1_0 x L^2` tagged with the geometry it is
/// measured in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub u: SpectralField,
    pub v: SpectralField,
    pub nu: f64,
    pub n: usize,
}

/// Spectral projections of the splitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    P1,
    Pm1,
    P22,
}

/// Branch of the dichotomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `e^{C t}` on `E_1`, for `t <= 0`.
    Backward,
    /// `e^{C t}` on `E_-1 + E_22`, for `t >= 0`.
    Forward,
}

impl PhasePoint {
    pub fn new(u: SpectralField, v: SpectralField, nu: f64, n: usize) -> Result<Self> {
        if u.modes() != v.modes() {
            return Err(Error::ShapeMismatch { expected: u.modes(), found: v.modes() });
        }
        if n > u.modes() {
            return Err(Error::InvalidParameter(format!(
                "cutoff {n} exceeds truncation {}",
                u.modes()
            )));
        }
        WaveGeometry::new(nu, n)?;
        Ok(Self { u, v, nu, n })
    }

    pub fn zeros(modes: usize, geometry: WaveGeometry) -> Self {
        Self {
            u: SpectralField::zeros(modes),
            v: SpectralField::zeros(modes),
            nu: geometry.nu,
            n: geometry.n,
        }
    }

    pub fn geometry(&self) -> WaveGeometry {
        WaveGeometry { nu: self.nu, n: self.n }
    }

    pub fn modes(&self) -> usize {
        self.u.modes()
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.nu != other.nu || self.n != other.n {
            return Err(Error::InvalidParameter(format!(
                "phase points measured in different geometries: (nu={}, N={}) vs (nu={}, N={})",
                self.nu, self.n, other.nu, other.n
            )));
        }
        if self.modes() != other.modes() {
            return Err(Error::ShapeMismatch { expected: self.modes(), found: other.modes() });
        }
        Ok(())
    }

    pub fn inner_e(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        let g = self.geometry();
        Ok((1..=self.modes())
            .map(|k| g.mode_inner(k, self.u.mode(k), self.v.mode(k), other.u.mode(k), other.v.mode(k)))
            .sum())
    }

    pub fn norm_e(&self) -> f64 {
        self.geometry().norm_sq(self.u.coeffs(), self.v.coeffs()).sqrt()
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self { u: &self.u - &other.u, v: &self.v - &other.v, nu: self.nu, n: self.n })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self { u: &self.u + &other.u, v: &self.v + &other.v, nu: self.nu, n: self.n })
    }

    pub fn project(&self, which: Projection) -> Self {
        let g = self.geometry();
        let mut u = SpectralField::zeros(self.modes());
        let mut v = SpectralField::zeros(self.modes());
        for k in 1..=self.modes() {
            let (a, b) = (self.u.mode(k), self.v.mode(k));
            let (pu, pv) = if k <= self.n {
                let c = g.eigen(k).c_k;
                let (p, m) = g.to_eigen(k, a, b);
                match which {
                    Projection::P1 => (p, c * p),
                    Projection::Pm1 => (m, -c * m),
                    Projection::P22 => (0.0, 0.0),
                }
            } else {
                match which {
                    Projection::P22 => (a, b),
                    _ => (0.0, 0.0),
                }
            };
            u[k - 1] = pu;
            v[k - 1] = pv;
        }
        Self { u, v, nu: self.nu, n: self.n }
    }

    /// Applies the linear flow `e^{C t}` restricted to the branch's range.
    pub fn semigroup_apply(&self, t: f64, branch: Branch) -> Result<Self> {
        match branch {
            Branch::Backward if t > 0.0 => {
                return Err(Error::InvalidParameter("backward branch needs t <= 0".into()))
            }
            Branch::Forward if t < 0.0 => {
                return Err(Error::InvalidParameter("forward branch needs t >= 0".into()))
            }
            _ => {}
        }
        let g = self.geometry();
        let mut u = SpectralField::zeros(self.modes());
        let mut v = SpectralField::zeros(self.modes());
        for k in 1..=self.modes() {
            let (a, b) = (self.u.mode(k), self.v.mode(k));
            let (nu_, nv) = if k <= self.n {
                let e = g.eigen(k);
                let (p, m) = g.to_eigen(k, a, b);
                match branch {
                    Branch::Backward => {
                        let p = p * (e.lambda_plus * t).exp();
                        (p, e.c_k * p)
                    }
                    Branch::Forward => {
                        let m = m * (e.lambda_minus * t).exp();
                        (m, -e.c_k * m)
                    }
                }
            } else {
                match branch {
                    Branch::Backward => (0.0, 0.0),
                    Branch::Forward => {
                        let p = expm2(&c_matrix(k, self.nu), t);
                        (p[(0, 0)] * a + p[(0, 1)] * b, p[(1, 0)] * a + p[(1, 1)] * b)
                    }
                }
            };
            u[k - 1] = nu_;
            v[k - 1] = nv;
        }
        Ok(Self { u, v, nu: self.nu, n: self.n })
    }
}

/// Which equation a gap check refers to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "lowercase")]
pub enum GapCase {
    Heat,
    Wave { nu: f64 },
}

/// Outcome of the spectral gap check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    #[serde(flatten)]
    pub case: GapCase,
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub k_const: f64,
    pub lipschitz_f: f64,
    pub lipschitz_h: Option<f64>,
    pub gap_value: f64,
    pub strong_gap_value: Option<f64>,
    pub pass: bool,
    pub strong_pass: Option<bool>,
}

/// Lipschitz constant of `F` in the norm the gap is measured in, given the
/// constant `l_f` of the scalar map.
///
/// Heat: `l_f`. Wave: `l_f / sqrt(1/4 - nu (N+1)^2)`, from
/// `||(0, g)||_E = ||g||` and the lower bound on `||U||_E`.
pub fn effective_lipschitz(case: GapCase, n: usize, l_f: f64) -> Result<f64> {
    match case {
        GapCase::Heat => Ok(l_f),
        GapCase::Wave { nu } => Ok(l_f / WaveGeometry::new(nu, n)?.u_lower_bound()),
    }
}

/// `alpha`, `beta` and the midpoint `eta` of the dichotomy.
pub fn dichotomy_rates(case: GapCase, n: usize) -> Result<(f64, f64, f64)> {
    let (alpha, beta) = match case {
        GapCase::Heat => {
            if n == 0 {
                return Err(Error::InvalidParameter("cutoff N must be >= 1".into()));
            }
            (-((n * n) as f64), -(((n + 1) * (n + 1)) as f64))
        }
        GapCase::Wave { nu } => {
            let g = WaveGeometry::new(nu, n)?;
            (g.alpha(), g.beta())
        }
    };
    Ok((alpha, beta, 0.5 * (alpha + beta)))
}

/// Gap value `K L_F (1/(alpha - eta) + 1/(eta - beta))` and, when `L_h` is
/// known, the strong value with the extra term `K^2 L_h L_F / (alpha - eta)`.
pub fn gap_check(
    case: GapCase,
    n: usize,
    k_const: f64,
    lipschitz_f: f64,
    lipschitz_h: Option<f64>,
) -> Result<GapReport> {
    if !(k_const >= 1.0) {
        return Err(Error::InvalidParameter(format!("dichotomy constant K = {k_const} < 1")));
    }
    if !(lipschitz_f >= 0.0) {
        return Err(Error::InvalidParameter("Lipschitz constant must be >= 0".into()));
    }
    let (alpha, beta, eta) = dichotomy_rates(case, n)?;
    let gap_value = k_const * lipschitz_f * (1.0 / (alpha - eta) + 1.0 / (eta - beta));
    let strong_gap_value =
        lipschitz_h.map(|lh| gap_value + k_const * k_const * lh * lipschitz_f / (alpha - eta));
    Ok(GapReport {
        case,
        n,
        alpha,
        beta,
        eta,
        k_const,
        lipschitz_f,
        lipschitz_h,
        gap_value,
        strong_gap_value,
        pass: gap_value < 1.0,
        strong_pass: strong_gap_value.map(|s| s < 1.0),
    })
}
