//! Lattice, potential and free-particle basis for the reduced two-component
//! Dirac Hamiltonian `h(z) = c σ₁ p + σ₃ c² + U(z)`.
//!
//! Energies carried by [`WellParams`] are expressed in units of c²; lengths,
//! momenta and times are atomic units.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Speed of light in atomic units.
pub const SPEED_OF_LIGHT: f64 = 137.035999;

/// Periodic spatial lattice `z_k = -L/2 + k dz` and its conjugate momentum
/// lattice `p_j = 2πj/L`, `j ∈ [-n/2, n/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    n_z: usize,
    box_length: f64,
}

impl GridSpec {
    pub fn new(n_z: usize, box_length: f64) -> Result<Self> {
        if n_z < 2 || !n_z.is_power_of_two() {
            return Err(Error::invalid(
                "n_z",
                format!("must be an even power of two, got {n_z}"),
            ));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::invalid(
                "box_length",
                format!("must be positive, got {box_length}"),
            ));
        }
        Ok(Self { n_z, box_length })
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn dz(&self) -> f64 {
        self.box_length / self.n_z as f64
    }

    /// Left edge of the box.
    pub fn z_min(&self) -> f64 {
        -0.5 * self.box_length
    }

    pub fn position(&self, k: usize) -> f64 {
        self.z_min() + k as f64 * self.dz()
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n_z).map(|k| self.position(k)).collect()
    }

    /// Lattice spacing in momentum.
    pub fn dp(&self) -> f64 {
        2.0 * PI / self.box_length
    }

    pub fn min_index(&self) -> i64 {
        -(self.n_z as i64 / 2)
    }

    pub fn max_index(&self) -> i64 {
        self.n_z as i64 / 2 - 1
    }

    pub fn contains_index(&self, j: i64) -> bool {
        (self.min_index()..=self.max_index()).contains(&j)
    }

    pub fn momentum(&self, j: i64) -> f64 {
        j as f64 * self.dp()
    }

    /// Momentum indices in ascending order; this is also the row/column order
    /// of every Bogoliubov block.
    pub fn momentum_indices(&self) -> impl Iterator<Item = i64> {
        self.min_index()..=self.max_index()
    }

    /// Position of index `j` in the ascending lattice ordering.
    pub fn lattice_slot(&self, j: i64) -> usize {
        (j - self.min_index()) as usize
    }

    /// Inverse of [`GridSpec::lattice_slot`].
    pub fn index_at_slot(&self, slot: usize) -> i64 {
        slot as i64 + self.min_index()
    }

    /// Position of index `j` in the standard FFT output ordering.
    pub fn fft_slot(&self, j: i64) -> usize {
        j.rem_euclid(self.n_z as i64) as usize
    }

    /// Largest kinetic energy `√(c⁴ + c²p²)` represented on the lattice.
    pub fn max_free_energy(&self, c: f64) -> f64 {
        free_energy(self.momentum(self.min_index()), c)
    }
}

/// The five parameters of the asymmetric well. `v1`/`v2` are in units of c².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WellParams {
    pub v1: f64,
    pub v2: f64,
    pub w: f64,
    pub d: f64,
    pub c: f64,
}

impl WellParams {
    pub fn new(v1: f64, v2: f64, w: f64, d: f64, c: f64) -> Result<Self> {
        let p = Self { v1, v2, w, d, c };
        p.validate()?;
        Ok(p)
    }

    /// Sharp-wall (`w = 0`) well with the standard speed of light.
    pub fn sharp(v1: f64, v2: f64, d: f64) -> Result<Self> {
        Self::new(v1, v2, 0.0, d, SPEED_OF_LIGHT)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &'static str, ok: bool, v: f64, what: &str| {
            if ok && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("{what}, got {v}")))
            }
        };
        check("v1", self.v1 >= 0.0, self.v1, "must be non-negative")?;
        check("v2", self.v2 >= 0.0, self.v2, "must be non-negative")?;
        check("w", self.w >= 0.0, self.w, "must be non-negative")?;
        check("d", self.d > 0.0, self.d, "must be positive")?;
        check("c", self.c > 0.0, self.c, "must be positive")
    }

    pub fn c2(&self) -> f64 {
        self.c * self.c
    }

    pub fn v1_au(&self) -> f64 {
        self.v1 * self.c2()
    }

    pub fn v2_au(&self) -> f64 {
        self.v2 * self.c2()
    }

    pub fn v1_supercritical(&self) -> bool {
        self.v1 > 2.0
    }

    pub fn v2_supercritical(&self) -> bool {
        self.v2 > 2.0
    }

    pub fn v1_subcritical(&self) -> bool {
        self.v1 < 2.0
    }

    pub fn v2_subcritical(&self) -> bool {
        self.v2 < 2.0
    }

    /// Height of the far-right plateau (region III) above region I, units of c².
    pub fn step_height(&self) -> f64 {
        self.v1 - self.v2
    }

    pub fn is_symmetric(&self) -> bool {
        self.v1 == self.v2
    }

    pub fn with_v1(mut self, v1: f64) -> Self {
        self.v1 = v1;
        self
    }

    pub fn with_v2(mut self, v2: f64) -> Self {
        self.v2 = v2;
        self
    }
}

/// Potential-energy term `U(z) = -V(z)` of the Hamiltonian, in atomic units:
///
/// `U(z) = V₁/2 [1 + tanh(z/w)] - V₂/2 [1 + tanh((z+d)/w)]`
///
/// The deep step sits at `z = -d` and the high step at `z = 0`, so `U → 0`
/// for `z → -∞` and `U → V₁ - V₂` for `z → +∞`.
pub fn sauter_well_potential(z: f64, params: &WellParams) -> Result<f64> {
    if !(params.w > 0.0) {
        return Err(Error::SharpWall);
    }
    Ok(smooth_well(z, params))
}

pub(crate) fn smooth_well(z: f64, p: &WellParams) -> f64 {
    0.5 * p.v1_au() * (1.0 + (z / p.w).tanh()) - 0.5 * p.v2_au() * (1.0 + ((z + p.d) / p.w).tanh())
}

/// Free-particle energy `√(c⁴ + c²p²)`.
pub fn free_energy(p: f64, c: f64) -> f64 {
    (c * c * c * c + c * c * p * p).sqrt()
}

/// Group velocity `dE/dp = c²|p|/E` of the positive branch.
pub fn group_velocity(p: f64, c: f64) -> f64 {
    c * c * p.abs() / free_energy(p, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Branch {
    Positive,
    Negative,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Positive => 1.0,
            Branch::Negative => -1.0,
        }
    }
}

/// One free plane-wave state: a lattice momentum and an energy branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisLabel {
    pub momentum_index: i64,
    pub branch: Branch,
}

impl BasisLabel {
    pub fn new(momentum_index: i64, branch: Branch) -> Self {
        Self {
            momentum_index,
            branch,
        }
    }

    pub fn momentum(&self, grid: &GridSpec) -> f64 {
        grid.momentum(self.momentum_index)
    }

    pub fn energy(&self, grid: &GridSpec, c: f64) -> f64 {
        self.branch.sign() * free_energy(self.momentum(grid), c)
    }

    /// All `2 n_z` labels: every positive state in ascending momentum, then
    /// every negative state.
    pub fn all(grid: &GridSpec) -> Vec<BasisLabel> {
        [Branch::Positive, Branch::Negative]
            .into_iter()
            .flat_map(|b| grid.momentum_indices().map(move |j| BasisLabel::new(j, b)))
            .collect()
    }
}

/// Real unit eigenvector of `h₀(p) = c p σ₁ + c² σ₃` for eigenvalue `±E_p`.
pub fn free_spinor(p: f64, branch: Branch, c: f64) -> [f64; 2] {
    let e = free_energy(p, c);
    let norm = (2.0 * e * (e + c * c)).sqrt();
    match branch {
        Branch::Positive => [(e + c * c) / norm, c * p / norm],
        Branch::Negative => [-c * p / norm, (e + c * c) / norm],
    }
}

/// Complex two-component field sampled on the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField {
    grid: GridSpec,
    values: Vec<[Complex64; 2]>,
}

impl SpinorField {
    pub fn new(grid: GridSpec, values: Vec<[Complex64; 2]>) -> Result<Self> {
        if values.len() != grid.n_z() {
            return Err(Error::invalid(
                "values",
                format!(
                    "expected {} lattice sites, got {}",
                    grid.n_z(),
                    values.len()
                ),
            ));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![[Complex64::new(0.0, 0.0); 2]; grid.n_z()],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[[Complex64; 2]] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [[Complex64; 2]] {
        &mut self.values
    }

    /// `Σ_z dz ψ†φ`.
    pub fn inner(&self, other: &SpinorField) -> Complex64 {
        let s: Complex64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a[0].conj() * b[0] + a[1].conj() * b[1])
            .sum();
        s * self.grid.dz()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values
            .iter()
            .map(|v| v[0].norm_sqr() + v[1].norm_sqr())
            .sum::<f64>()
            * self.grid.dz()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }
}

/// Box-normalised plane wave `e^{ipz} χ±(p) / √L`.
pub fn free_eigenstate(label: BasisLabel, grid: &GridSpec, c: f64) -> Result<SpinorField> {
    if !grid.contains_index(label.momentum_index) {
        return Err(Error::invalid(
            "momentum_index",
            format!(
                "{} outside lattice [{}, {}]",
                label.momentum_index,
                grid.min_index(),
                grid.max_index()
            ),
        ));
    }
    let p = label.momentum(grid);
    let chi = free_spinor(p, label.branch, c);
    let amp = 1.0 / grid.box_length().sqrt();
    let values = (0..grid.n_z())
        .map(|k| {
            let phase = Complex64::from_polar(amp, p * grid.position(k));
            [phase * chi[0], phase * chi[1]]
        })
        .collect();
    SpinorField::new(*grid, values)
}

/// 2×2 complex matrix, row-major.
pub type Mat2 = [[Complex64; 2]; 2];

/// Closed form of `exp(-i h₀(p) dt)`:
/// `cos(E dt) I - i sin(E dt) (c p σ₁ + c² σ₃) / E`.
pub fn kinetic_step_factor(p: f64, dt: f64, c: f64) -> Mat2 {
    let e = free_energy(p, c);
    let (s, co) = (e * dt).sin_cos();
    let diag = s * c * c / e;
    let off = Complex64::new(0.0, -s * c * p / e);
    [
        [Complex64::new(co, -diag), off],
        [off, Complex64::new(co, diag)],
    ]
}

pub fn mat2_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c() -> f64 {
        SPEED_OF_LIGHT
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(GridSpec::new(100, 1.0).is_err());
        assert!(GridSpec::new(1, 1.0).is_err());
        assert!(GridSpec::new(64, 0.0).is_err());
        let g = GridSpec::new(64, 8.0).unwrap();
        assert_eq!(g.min_index(), -32);
        assert_eq!(g.max_index(), 31);
        assert_eq!(g.momentum_indices().count(), 64);
        assert_eq!(g.fft_slot(-1), 63);
        assert_eq!(g.lattice_slot(-32), 0);
        assert_eq!(g.index_at_slot(63), 31);
    }

    #[test]
    fn criticality_predicates() {
        let p = WellParams::sharp(2.5, 0.25, 0.2).unwrap();
        assert!(p.v1_supercritical() && !p.v1_subcritical());
        assert!(p.v2_subcritical() && !p.v2_supercritical());
        assert!(WellParams::new(-1.0, 0.0, 0.0, 0.2, c()).is_err());
        assert!(WellParams::new(1.0, 0.0, 0.0, 0.0, c()).is_err());
    }

    #[test]
    fn potential_asymptotes() {
        let p = WellParams::new(2.5, 0.25, 0.3 / c(), 0.2, c()).unwrap();
        let c2 = c() * c();
        assert_abs_diff_eq!(
            sauter_well_potential(-50.0, &p).unwrap(),
            0.0,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            sauter_well_potential(50.0, &p).unwrap() / c2,
            2.25,
            epsilon = 1e-12
        );
        // Well floor between the steps sits at -V2.
        assert_abs_diff_eq!(
            sauter_well_potential(-0.1, &p).unwrap() / c2,
            -0.25,
            epsilon = 1e-12
        );
    }

    #[test]
    fn potential_at_origin_matches_scalar_arithmetic() {
        let c = c();
        let (v1, v2, d, w) = (2.5, 0.25, 0.2, 0.3 / c);
        let p = WellParams::new(v1, v2, w, d, c).unwrap();
        // tanh(0) = 0 for the first step.
        let expected = c * c * (v1 / 2.0 - v2 / 2.0 * (1.0 + (d / w).tanh()));
        let got = sauter_well_potential(0.0, &p).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-9);
        assert_abs_diff_eq!(got / (c * c), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sharp_wall_rejected() {
        let p = WellParams::sharp(2.5, 0.25, 0.2).unwrap();
        assert!(matches!(
            sauter_well_potential(0.0, &p),
            Err(Error::SharpWall)
        ));
    }

    #[test]
    fn zero_momentum_states() {
        let g = GridSpec::new(16, 4.0).unwrap();
        let amp = 1.0 / 2.0;
        let up = free_eigenstate(BasisLabel::new(0, Branch::Positive), &g, c()).unwrap();
        let dn = free_eigenstate(BasisLabel::new(0, Branch::Negative), &g, c()).unwrap();
        for v in up.values() {
            assert_abs_diff_eq!(v[0].re, amp, epsilon = 1e-15);
            assert_abs_diff_eq!(v[1].norm(), 0.0, epsilon = 1e-15);
        }
        for v in dn.values() {
            assert_abs_diff_eq!(v[1].re, amp, epsilon = 1e-15);
            assert_abs_diff_eq!(v[0].norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn label_outside_lattice_rejected() {
        let g = GridSpec::new(16, 4.0).unwrap();
        assert!(free_eigenstate(BasisLabel::new(8, Branch::Positive), &g, c()).is_err());
        assert!(free_eigenstate(BasisLabel::new(-8, Branch::Positive), &g, c()).is_ok());
    }

    #[test]
    fn free_spinors_are_eigenvectors() {
        let c = c();
        for &p in &[-300.0, -1.0, 0.0, 0.5, 42.0, 1e4] {
            let e = free_energy(p, c);
            for b in [Branch::Positive, Branch::Negative] {
                let chi = free_spinor(p, b, c);
                let h = [
                    c * c * chi[0] + c * p * chi[1],
                    c * p * chi[0] - c * c * chi[1],
                ];
                let lam = b.sign() * e;
                assert_abs_diff_eq!(h[0], lam * chi[0], epsilon = 1e-12 * e);
                assert_abs_diff_eq!(h[1], lam * chi[1], epsilon = 1e-12 * e);
                assert_abs_diff_eq!(chi[0].hypot(chi[1]), 1.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn kinetic_factor_at_rest_is_diagonal_phase() {
        let c = c();
        let dt = 3e-6;
        let k = kinetic_step_factor(0.0, dt, c);
        let e = c * c * dt;
        assert_abs_diff_eq!(
            (k[0][0] - Complex64::from_polar(1.0, -e)).norm(),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            (k[1][1] - Complex64::from_polar(1.0, e)).norm(),
            0.0,
            epsilon = 1e-15
        );
        assert_eq!(k[0][1], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn kinetic_factor_inverse() {
        let c = c();
        for &(p, dt) in &[(0.0, 1e-3), (50.0, 1e-6), (-800.0, 2.5e-6), (3.0, 0.7)] {
            let prod = mat2_mul(
                &kinetic_step_factor(p, dt, c),
                &kinetic_step_factor(p, -dt, c),
            );
            for i in 0..2 {
                for j in 0..2 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!((prod[i][j] - want).norm(), 0.0, epsilon = 1e-13);
                }
            }
        }
    }

    /// Scaling-and-squaring Taylor oracle for a 2×2 matrix exponential.
    fn expm_series(a: &Mat2) -> Mat2 {
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let mut scaled = *a;
        let mut squarings = 0;
        let norm = a.iter().flatten().map(|z| z.norm()).sum::<f64>();
        let mut s = norm;
        while s > 0.25 {
            s *= 0.5;
            squarings += 1;
        }
        let f = 0.5f64.powi(squarings);
        for row in scaled.iter_mut() {
            for z in row.iter_mut() {
                *z *= f;
            }
        }
        let mut term = [[one, zero], [zero, one]];
        let mut sum = term;
        for k in 1..30 {
            term = mat2_mul(&term, &scaled);
            for row in term.iter_mut() {
                for z in row.iter_mut() {
                    *z /= k as f64;
                }
            }
            for i in 0..2 {
                for j in 0..2 {
                    sum[i][j] += term[i][j];
                }
            }
        }
        for _ in 0..squarings {
            sum = mat2_mul(&sum, &sum);
        }
        sum
    }

    #[test]
    fn kinetic_factor_matches_series_exponential() {
        let c = c();
        let (p, dt) = (50.0, 1e-6);
        let mi = Complex64::new(0.0, -dt);
        let h = [[mi * (c * c), mi * (c * p)], [mi * (c * p), mi * (-c * c)]];
        let oracle = expm_series(&h);
        let k = kinetic_step_factor(p, dt, c);
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!((k[i][j] - oracle[i][j]).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }
}
