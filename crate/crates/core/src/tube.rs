//! Fermi-coordinate data on a transition tube and the constants built from it.
//!
//! The cross-section α is a sampled 1-D interval `[0, Vol(α)]` with trapezoid
//! weights; the radial coordinate runs over `[0, R]` on a uniform grid.
//! Radial derivatives are central differences (second-order one-sided at the
//! ends) and radial integrals use the trapezoid rule.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::factor::LdlFactor;
use crate::sparse::{norm, CsrMatrix};

/// Sampled volume element `θ(x, r)` with `dV = θ^{n-1} dV_α dr`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProfile", into = "RawProfile")]
pub struct TubeProfile {
    n: usize,
    r_max: f64,
    vol_alpha: f64,
    nx: usize,
    nr: usize,
    theta: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawProfile {
    n: usize,
    #[serde(rename = "R")]
    r_max: f64,
    vol_alpha: f64,
    nx: usize,
    nr: usize,
    theta: Vec<f64>,
}

impl TryFrom<RawProfile> for TubeProfile {
    type Error = Error;
    fn try_from(r: RawProfile) -> Result<Self> {
        TubeProfile::new(r.n, r.r_max, r.vol_alpha, r.nx, r.nr, r.theta)
    }
}

impl From<TubeProfile> for RawProfile {
    fn from(t: TubeProfile) -> Self {
        RawProfile { n: t.n, r_max: t.r_max, vol_alpha: t.vol_alpha, nx: t.nx, nr: t.nr, theta: t.theta }
    }
}

impl TubeProfile {
    /// `theta` is row-major with the cross-section index outermost:
    /// `theta[i * nr + j] = θ(x_i, r_j)`.
    pub fn new(n: usize, r_max: f64, vol_alpha: f64, nx: usize, nr: usize, theta: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::Tube(format!("ambient dimension {n} is below 2")));
        }
        if !(r_max > 0.0) || !(vol_alpha > 0.0) {
            return Err(Error::Tube("R and Vol(α) must be positive".into()));
        }
        if nx == 0 || nr < 2 {
            return Err(Error::Tube("grid needs nx ≥ 1 and nr ≥ 2".into()));
        }
        if theta.len() != nx * nr {
            return Err(Error::DimensionMismatch { expected: nx * nr, got: theta.len() });
        }
        if let Some(k) = theta.iter().position(|&t| !(t > 0.0) || !t.is_finite()) {
            return Err(Error::Tube(format!("θ sample {k} is not positive")));
        }
        for i in 0..nx {
            if (theta[i * nr] - 1.0).abs() > 1e-12 {
                return Err(Error::Tube(format!("θ(x_{i}, 0) = {} differs from 1", theta[i * nr])));
            }
        }
        Ok(Self { n, r_max, vol_alpha, nx, nr, theta })
    }

    /// Samples `f(x, r)` with `x_i = Vol(α)·i/(nx−1)` and `r_j = R·j/(nr−1)`.
    pub fn from_fn(
        n: usize,
        r_max: f64,
        vol_alpha: f64,
        nx: usize,
        nr: usize,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let mut theta = Vec::with_capacity(nx * nr);
        for i in 0..nx {
            let x = if nx > 1 { vol_alpha * i as f64 / (nx - 1) as f64 } else { 0.0 };
            for j in 0..nr {
                theta.push(f(x, r_max * j as f64 / (nr - 1) as f64));
            }
        }
        Self::new(n, r_max, vol_alpha, nx, nr, theta)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn vol_alpha(&self) -> f64 {
        self.vol_alpha
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nr(&self) -> usize {
        self.nr
    }

    pub fn dr(&self) -> f64 {
        self.r_max / (self.nr - 1) as f64
    }

    pub fn dx(&self) -> f64 {
        if self.nx > 1 {
            self.vol_alpha / (self.nx - 1) as f64
        } else {
            self.vol_alpha
        }
    }

    pub fn r(&self, j: usize) -> f64 {
        self.r_max * j as f64 / (self.nr - 1) as f64
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.nr).map(|j| self.r(j)).collect()
    }

    pub fn theta(&self, i: usize, j: usize) -> f64 {
        self.theta[i * self.nr + j]
    }

    pub fn samples(&self) -> &[f64] {
        &self.theta
    }

    /// Trapezoid weights over α summing to `Vol(α)`.
    pub fn x_weights(&self) -> Vec<f64> {
        if self.nx == 1 {
            return vec![self.vol_alpha];
        }
        let dx = self.dx();
        (0..self.nx)
            .map(|i| if i == 0 || i + 1 == self.nx { 0.5 * dx } else { dx })
            .collect()
    }

    /// `∂_r log θ` on the grid.
    pub fn log_derivative(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.nx * self.nr);
        for i in 0..self.nx {
            let logs: Vec<f64> = (0..self.nr).map(|j| self.theta(i, j).ln()).collect();
            out.extend(first_derivative(&logs, self.dr()));
        }
        out
    }
}

/// Central differences with second-order one-sided ends.
pub fn first_derivative(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    let mut d = vec![0.0; n];
    if n < 2 {
        return d;
    }
    if n == 2 {
        let s = (y[1] - y[0]) / h;
        return vec![s, s];
    }
    d[0] = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * h);
    d[n - 1] = (3.0 * y[n - 1] - 4.0 * y[n - 2] + y[n - 3]) / (2.0 * h);
    for j in 1..n - 1 {
        d[j] = (y[j + 1] - y[j - 1]) / (2.0 * h);
    }
    d
}

/// Three-point second differences; four-point one-sided at the ends when
/// available.
pub fn second_derivative(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    let mut d = vec![0.0; n];
    if n < 3 {
        return d;
    }
    for j in 1..n - 1 {
        d[j] = (y[j + 1] - 2.0 * y[j] + y[j - 1]) / (h * h);
    }
    if n >= 4 {
        d[0] = (2.0 * y[0] - 5.0 * y[1] + 4.0 * y[2] - y[3]) / (h * h);
        d[n - 1] = (2.0 * y[n - 1] - 5.0 * y[n - 2] + 4.0 * y[n - 3] - y[n - 4]) / (h * h);
    } else {
        d[0] = d[1];
        d[n - 1] = d[n - 2];
    }
    d
}

/// `Δ(u∘r) = −u'' − (n−1)(θ'/θ) u'` on the full grid.
pub fn radial_laplacian_apply(t: &TubeProfile, u: &[f64]) -> Result<Vec<f64>> {
    if u.len() != t.nr() {
        return Err(Error::DimensionMismatch { expected: t.nr(), got: u.len() });
    }
    if u.len() < 3 {
        return Err(Error::Tube("the radial Laplacian needs at least 3 radial samples".into()));
    }
    let du = first_derivative(u, t.dr());
    let ddu = second_derivative(u, t.dr());
    let logd = t.log_derivative();
    let k = (t.dimension() - 1) as f64;
    let mut out = Vec::with_capacity(t.nx() * t.nr());
    for i in 0..t.nx() {
        for j in 0..t.nr() {
            out.push(-ddu[j] - k * logd[i * t.nr() + j] * du[j]);
        }
    }
    Ok(out)
}

/// The same operator with `θ_inf` in place of `θ`, returning radial samples.
pub fn radial_laplacian_inf(d: &TubeDerived, u: &[f64]) -> Result<Vec<f64>> {
    if u.len() != d.theta_inf.len() {
        return Err(Error::DimensionMismatch { expected: d.theta_inf.len(), got: u.len() });
    }
    if u.len() < 3 {
        return Err(Error::Tube("the radial Laplacian needs at least 3 radial samples".into()));
    }
    let du = first_derivative(u, d.dr);
    let ddu = second_derivative(u, d.dr);
    let k = (d.n - 1) as f64;
    Ok((0..u.len()).map(|j| -ddu[j] - k * d.theta_inf_logderiv[j] * du[j]).collect())
}

fn cumulative_trapezoid(f: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(f.len());
    let mut acc = 0.0;
    out.push(0.0);
    for j in 1..f.len() {
        acc += 0.5 * h * (f[j - 1] + f[j]);
        out.push(acc);
    }
    out
}

/// Per-radius minimum over α of the log-derivative, and the corresponding
/// `θ_inf(r) = exp ∫₀^r min_x ∂_s log θ(x, s) ds` (trapezoid rule).
pub fn compute_theta_inf(t: &TubeProfile) -> (Vec<f64>, Vec<f64>) {
    let logd = t.log_derivative();
    let m: Vec<f64> = (0..t.nr())
        .map(|j| (0..t.nx()).map(|i| logd[i * t.nr() + j]).fold(f64::INFINITY, f64::min))
        .collect();
    let theta_inf = cumulative_trapezoid(&m, t.dr()).into_iter().map(f64::exp).collect();
    (theta_inf, m)
}

/// Oscillation `β = (θ^{n−1})'/θ^{n−1} − V'/V` and `Κ = max |β|`, together
/// with `V(r) = ∫_α θ^{n−1}`.
pub fn oscillation_beta(t: &TubeProfile) -> (Vec<f64>, f64, Vec<f64>) {
    let logd = t.log_derivative();
    let q = t.x_weights();
    let k = (t.dimension() - 1) as f64;
    let nr = t.nr();
    let mut beta = vec![0.0; t.nx() * nr];
    let mut volume = vec![0.0; nr];
    let mut kappa = 0.0f64;
    for j in 0..nr {
        let mut v = 0.0;
        let mut dv = 0.0;
        for i in 0..t.nx() {
            let w = t.theta(i, j).powf(k);
            v += q[i] * w;
            dv += q[i] * w * k * logd[i * nr + j];
        }
        volume[j] = v;
        for i in 0..t.nx() {
            let b = k * logd[i * nr + j] - dv / v;
            beta[i * nr + j] = b;
            kappa = kappa.max(b.abs());
        }
    }
    (beta, kappa, volume)
}

/// Everything the constants need, derived from one profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeDerived {
    pub n: usize,
    pub r_max: f64,
    pub vol_alpha: f64,
    pub dr: f64,
    pub theta_inf: Vec<f64>,
    /// `θ_inf'/θ_inf`, i.e. the per-radius minimum log-derivative.
    pub theta_inf_logderiv: Vec<f64>,
    pub beta: Vec<f64>,
    pub kappa: f64,
    pub volume: Vec<f64>,
    pub u_inf: Vec<f64>,
}

impl TubeDerived {
    pub fn from_profile(t: &TubeProfile) -> Self {
        let (theta_inf, m) = compute_theta_inf(t);
        let (beta, kappa, volume) = oscillation_beta(t);
        let e = 1.0 - t.dimension() as f64;
        let integrand: Vec<f64> = theta_inf.iter().map(|th: &f64| th.powf(e)).collect();
        let u_inf = cumulative_trapezoid(&integrand, t.dr());
        Self {
            n: t.dimension(),
            r_max: t.r_max(),
            vol_alpha: t.vol_alpha(),
            dr: t.dr(),
            theta_inf,
            theta_inf_logderiv: m,
            beta,
            kappa,
            volume,
            u_inf,
        }
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.theta_inf.len()).map(|j| self.dr * j as f64).collect()
    }

    /// `U_inf(r)` for any `r ∈ [0, R]`, interpolating the integrand linearly
    /// inside the last grid cell.
    pub fn u_inf_at(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) || r > self.r_max * (1.0 + 1e-12) {
            return Err(invalid(format!("radius {r} outside [0, {}]", self.r_max)));
        }
        let last = self.u_inf.len() - 1;
        let s = (r / self.dr).min(last as f64);
        let j = (s.floor() as usize).min(last.saturating_sub(1));
        let frac = s - j as f64;
        if frac <= 1e-12 {
            return Ok(self.u_inf[j]);
        }
        let e = 1.0 - self.n as f64;
        let f0 = self.theta_inf[j].powf(e);
        let f1 = self.theta_inf[j + 1].powf(e);
        let fr = f0 + frac * (f1 - f0);
        Ok(self.u_inf[j] + 0.5 * frac * self.dr * (f0 + fr))
    }

    /// `θ_inf^{n−1}` at `r`, linearly interpolated.
    pub fn weight_inf_at(&self, r: f64) -> f64 {
        let last = self.theta_inf.len() - 1;
        let s = (r / self.dr).clamp(0.0, last as f64);
        let j = (s.floor() as usize).min(last.saturating_sub(1));
        let frac = s - j as f64;
        let th = self.theta_inf[j] + frac * (self.theta_inf[j + 1] - self.theta_inf[j]);
        th.powf((self.n - 1) as f64)
    }
}

/// `G_inf(r) = P − (P−Q) U_inf(r)/U_inf(R₀)` on `[0, R₀]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicProfile {
    pub p: f64,
    pub q: f64,
    pub r0: f64,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// Closed form `Vol(α)(P−Q)²/U_inf(R₀)`.
    pub energy: f64,
}

impl HarmonicProfile {
    /// Discrete Dirichlet energy of the samples with the weight
    /// `θ_inf^{n−1}` averaged over each radial cell.
    pub fn discrete_energy(&self, d: &TubeDerived) -> f64 {
        let mut e = 0.0;
        for j in 0..self.radii.len().saturating_sub(1) {
            let h = self.radii[j + 1] - self.radii[j];
            let w = 0.5 * (d.weight_inf_at(self.radii[j]) + d.weight_inf_at(self.radii[j + 1]));
            let dg = self.values[j + 1] - self.values[j];
            e += w * dg * dg / h;
        }
        d.vol_alpha * e
    }
}

pub fn g_inf_profile(d: &TubeDerived, p: f64, q: f64, r0: f64) -> Result<HarmonicProfile> {
    if !(r0 > 0.0) || r0 > d.r_max * (1.0 + 1e-12) {
        return Err(invalid(format!("R₀ = {r0} outside (0, {}]", d.r_max)));
    }
    let u0 = d.u_inf_at(r0)?;
    if !(u0 > 0.0) {
        return Err(invalid("U_inf(R₀) is not positive"));
    }
    let mut radii: Vec<f64> = d.radii().into_iter().filter(|&r| r < r0 - 1e-12 * d.r_max).collect();
    radii.push(r0);
    let values = radii
        .iter()
        .map(|&r| Ok(p - (p - q) * d.u_inf_at(r)? / u0))
        .collect::<Result<Vec<f64>>>()?;
    Ok(HarmonicProfile { p, q, r0, radii, values, energy: d.vol_alpha * (p - q) * (p - q) / u0 })
}

/// Discrete harmonic function of the tube with Dirichlet caps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSolution {
    /// Row-major over `(x_i, r_j)` for `j = 0..=j0`.
    pub field: Vec<f64>,
    pub nx: usize,
    pub j0: usize,
    pub energy: f64,
    pub residual: f64,
}

/// Solves the weighted Laplace problem `div(θ^{n−1}∇G) = 0` on
/// `α × [0, R₀]` with `G = P` at `r = 0`, `G = Q` at `r = R₀` and natural
/// conditions on the sides.
///
/// The discrete energy is
/// `Σ q_i w_r (ΔG)²/Δr + Σ ρ_j w_x (ΔG)²/Δx` with `w_r` the cell average of
/// `θ^{n−1}` and `w_x` the cell average of `θ^{n−3}` (the horizontal metric
/// scales like `θ²`). `R₀` must lie on the radial grid.
pub fn harmonic_solve_tube(t: &TubeProfile, p: f64, q: f64, r0: f64) -> Result<HarmonicSolution> {
    let dr = t.dr();
    if !(r0 > 0.0) || r0 > t.r_max() * (1.0 + 1e-12) {
        return Err(invalid(format!("R₀ = {r0} outside (0, {}]", t.r_max())));
    }
    let j0 = (r0 / dr).round() as usize;
    if j0 == 0 || (j0 as f64 * dr - r0).abs() > 1e-9 * t.r_max() {
        return Err(invalid(format!("R₀ = {r0} does not lie on the radial grid")));
    }
    let nx = t.nx();
    let cols = j0 + 1;
    let mut field = vec![0.0; nx * cols];
    for i in 0..nx {
        field[i * cols] = p;
        field[i * cols + j0] = q;
    }
    let k = (t.dimension() - 1) as f64;
    let qx = t.x_weights();
    let dx = t.dx();
    let w_r = |i: usize, j: usize| qx[i] * 0.5 * (t.theta(i, j).powf(k) + t.theta(i, j + 1).powf(k)) / dr;
    let w_x = |i: usize, j: usize| {
        let rho = if j == 0 || j == j0 { 0.5 * dr } else { dr };
        rho * 0.5 * (t.theta(i, j).powf(k - 2.0) + t.theta(i + 1, j).powf(k - 2.0)) / dx
    };
    let mut residual = 0.0;
    if p != q && j0 >= 2 {
        let inner = j0 - 1;
        let idx = |i: usize, j: usize| i * inner + (j - 1);
        let n_unknowns = nx * inner;
        let mut trip = Vec::new();
        let mut rhs = vec![0.0; n_unknowns];
        let mut couple = |a: (usize, usize), b: (usize, usize), w: f64, trip: &mut Vec<(usize, usize, f64)>| {
            let free = |(_, j): (usize, usize)| j != 0 && j != j0;
            let val = |(_, j): (usize, usize)| if j == 0 { p } else { q };
            match (free(a), free(b)) {
                (true, true) => {
                    let (ia, ib) = (idx(a.0, a.1), idx(b.0, b.1));
                    trip.extend([(ia, ia, w), (ib, ib, w), (ia, ib, -w), (ib, ia, -w)]);
                }
                (true, false) => {
                    let ia = idx(a.0, a.1);
                    trip.push((ia, ia, w));
                    rhs[ia] += w * val(b);
                }
                (false, true) => {
                    let ib = idx(b.0, b.1);
                    trip.push((ib, ib, w));
                    rhs[ib] += w * val(a);
                }
                (false, false) => {}
            }
        };
        for i in 0..nx {
            for j in 0..j0 {
                couple((i, j), (i, j + 1), w_r(i, j), &mut trip);
            }
        }
        for i in 0..nx.saturating_sub(1) {
            for j in 1..j0 {
                couple((i, j), (i + 1, j), w_x(i, j), &mut trip);
            }
        }
        let a = CsrMatrix::from_triplets(n_unknowns, n_unknowns, &trip)?;
        let f = LdlFactor::new(&a)?;
        let x = f.solve(&rhs);
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = ax.iter().zip(&rhs).map(|(u, v)| u - v).collect();
        residual = norm(&r) / norm(&rhs).max(f64::MIN_POSITIVE);
        if !(residual <= 1e-8) {
            return Err(Error::LinearSolve { residual });
        }
        for i in 0..nx {
            for j in 1..j0 {
                field[i * cols + j] = x[idx(i, j)];
            }
        }
    } else if p != q {
        // Single radial cell: the field is already its caps.
    } else {
        field.iter_mut().for_each(|v| *v = p);
    }
    let mut energy = 0.0;
    for i in 0..nx {
        for j in 0..j0 {
            let dg = field[i * cols + j + 1] - field[i * cols + j];
            energy += w_r(i, j) * dg * dg;
        }
    }
    for i in 0..nx.saturating_sub(1) {
        for j in 0..=j0 {
            let dg = field[(i + 1) * cols + j] - field[i * cols + j];
            energy += w_x(i, j) * dg * dg;
        }
    }
    Ok(HarmonicSolution { field, nx, j0, energy, residual })
}

/// The constants of the lower bound, with every intermediate value exposed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerConstants {
    pub phi0_mean: f64,
    pub lambda1: f64,
    pub kappa: f64,
    pub vol_tube_plus: f64,
    /// `Vol(α × [0, R])` in the product measure.
    pub vol_alpha_times_r: f64,
    pub u_inf_r: f64,
    pub a1: f64,
    pub a2: f64,
    /// `A₃ = A₂/(4Κ²)`; absent when `Κ = 0`.
    pub a3: Option<f64>,
    pub a: f64,
}

/// `A₂ = Vol(α) Φ₀(0)² / (16 U_inf(R))`.
pub fn constant_a2(d: &TubeDerived, phi0_mean: f64) -> Result<f64> {
    if !(phi0_mean > 0.0) {
        return Err(invalid("Φ₀(0) must be positive"));
    }
    let u = d.u_inf_at(d.r_max)?;
    if !(u > 0.0) || !(d.vol_alpha > 0.0) {
        return Err(invalid("U_inf(R) and Vol(α) must be positive"));
    }
    Ok(d.vol_alpha * phi0_mean * phi0_mean / (16.0 * u))
}

/// `A = min{A₁, A₂/(4λ₁), A₃}/2` with `A₁ = Φ₀(0)² Vol(T⁺)/16` and
/// `A₃ = A₂/(4Κ²)` (dropped when `Κ = 0`).
pub fn constant_a_parts(d: &TubeDerived, phi0_mean: f64, lambda1: f64, vol_tube_plus: f64) -> Result<LowerConstants> {
    if !(lambda1 > 0.0) {
        return Err(invalid("λ₁ must be positive"));
    }
    if !(vol_tube_plus > 0.0) {
        return Err(invalid("Vol(T⁺) must be positive"));
    }
    let a2 = constant_a2(d, phi0_mean)?;
    let a1 = phi0_mean * phi0_mean * vol_tube_plus / 16.0;
    let a3 = if d.kappa > 0.0 { Some(a2 / (4.0 * d.kappa * d.kappa)) } else { None };
    let mut m = a1.min(a2 / (4.0 * lambda1));
    if let Some(a3) = a3 {
        m = m.min(a3);
    }
    Ok(LowerConstants {
        phi0_mean,
        lambda1,
        kappa: d.kappa,
        vol_tube_plus,
        vol_alpha_times_r: d.vol_alpha * d.r_max,
        u_inf_r: d.u_inf_at(d.r_max)?,
        a1,
        a2,
        a3,
        a: 0.5 * m,
    })
}

pub fn constant_a(d: &TubeDerived, phi0_mean: f64, lambda1: f64, vol_tube_plus: f64) -> Result<f64> {
    Ok(constant_a_parts(d, phi0_mean, lambda1, vol_tube_plus)?.a)
}

/// `A' = k (1/R² + 2√λ₀/R + λ₀)`.
pub fn constant_a_prime(k: usize, r: f64, lambda0: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(invalid("tube width R must be positive"));
    }
    if k == 0 {
        return Err(invalid("neighbour count k must be at least 1"));
    }
    if !(lambda0 >= 0.0) {
        return Err(invalid("λ₀ must be nonnegative"));
    }
    Ok(k as f64 * (1.0 / (r * r) + 2.0 * lambda0.sqrt() / r + lambda0))
}
