//! Sharp-wall three-region matching for the asymmetric well: real bound
//! states, complex (Gamow) resonances, the symmetric-well transmission
//! coefficient and the level-vs-height fits used to seed continuation.
//!
//! Energies are in units of c², lengths in atomic units. Internally momenta
//! are carried as `q = p/c = √(x² − 1)` for the shifted energy `x` of each
//! region, on the principal square-root branch.

use num_complex::Complex64;

use crate::dirac::WellParams;
use crate::error::{Error, Result};
use crate::stats::{linear_fit, LinearFit};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub const NEWTON_MAX_ITER: usize = 100;
pub const NEWTON_TOL: f64 = 1e-12;
pub const DEDUP_TOL: f64 = 1e-8;
/// Intervals in the real-axis scans for bound states and transmission peaks.
pub const SCAN_INTERVALS: usize = 20_000;
/// Default fit sample grid: 41 uniform heights on [1.05, 1.95] c².
pub const FIT_SAMPLES: usize = 41;
pub const FIT_RANGE: (f64, f64) = (1.05, 1.95);

/// `q = √(x² − 1)` on the principal branch.
///
/// A real `x` gives `x² − 1` with a zero imaginary part whose sign follows
/// `x`; it is normalised to +0 so that every evanescent region decays as
/// `+iκ` regardless of the sign of the energy.
pub fn reduced_momentum(x: Complex64) -> Complex64 {
    let s = x * x - 1.0;
    Complex64::new(s.re, s.im + 0.0).sqrt()
}

/// Momenta (a.u.) in region I (`z < −d`, U = 0), II (well, U = −V₂) and
/// III (`z > 0`, U = V₁ − V₂).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionMomenta {
    pub p1: Complex64,
    pub p2: Complex64,
    pub p3: Complex64,
}

pub fn region_momenta(e: Complex64, params: &WellParams) -> RegionMomenta {
    let c = params.c;
    RegionMomenta {
        p1: c * reduced_momentum(e),
        p2: c * reduced_momentum(e + params.v2),
        p3: c * reduced_momentum(e + params.v2 - params.v1),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchingFactors {
    pub gamma: Complex64,
    pub tau: Complex64,
}

/// `γ = p₁c/(E+c²) · (E+V₂+c²)/(p₂c)`, `τ = p₂c/(E+V₂+c²) · (E+V₂−V₁+c²)/(p₃c)`.
pub fn matching_factors(e: Complex64, params: &WellParams) -> MatchingFactors {
    let (v1, v2) = (params.v1, params.v2);
    let q1 = reduced_momentum(e);
    let q2 = reduced_momentum(e + v2);
    let q3 = reduced_momentum(e + v2 - v1);
    MatchingFactors {
        gamma: q1 / (e + 1.0) * (e + v2 + 1.0) / q2,
        tau: q2 / (e + v2 + 1.0) * (e + v2 - v1 + 1.0) / q3,
    }
}

/// `F(E) = (γ+1)(τ+1)e^{−ip₂d} + (γ−1)(τ−1)e^{ip₂d}`; zero at a level.
///
/// Evaluated as `2(γτ+1)cos θ − 2i(γ+τ)sin θ` with the `1/p₂` of `γ`
/// absorbed into `sin θ/q₂ = c·d·sinc θ`, so the residual stays finite at the
/// region-II threshold.
pub fn matching_residual(e: Complex64, params: &WellParams) -> Complex64 {
    let (v1, v2, c, d) = (params.v1, params.v2, params.c, params.d);
    let q1 = reduced_momentum(e);
    let q2 = reduced_momentum(e + v2);
    let q3 = reduced_momentum(e + v2 - v1);
    let a = q1 * (e + v2 + 1.0) / (e + 1.0);
    let b = (e + v2 - v1 + 1.0) / ((e + v2 + 1.0) * q3);
    let theta = c * d * q2;
    let (sin, cos) = (theta.sin(), theta.cos());
    let sinc = if theta.norm() < 1e-8 {
        Complex64::new(1.0, 0.0) - theta * theta / 6.0
    } else {
        sin / theta
    };
    2.0 * (a * b + 1.0) * cos - 2.0 * I * (a * c * d * sinc + q2 * b * sin)
}

/// Reduced form for the symmetric well: `i tan(p₂d) − 2γ/(1+γ²)`.
pub fn symmetric_residual(e: Complex64, params: &WellParams) -> Complex64 {
    let g = matching_factors(e, params).gamma;
    let theta = region_momenta(e, params).p2 * params.d;
    I * theta.tan() - 2.0 * g / (1.0 + g * g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    RealRoot,
    ComplexContinuation,
    TransmissionPeak,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::RealRoot => "real_root",
            Method::ComplexContinuation => "complex_continuation",
            Method::TransmissionPeak => "transmission_peak",
        }
    }
}

/// One level. `level_index` counts from the highest energy (level 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonanceSolution {
    /// Energy in c²; the imaginary part is reported as `|Im E|`.
    pub energy: Complex64,
    pub method: Method,
    pub level_index: usize,
    /// Half the transmission FWHM, for [`Method::TransmissionPeak`].
    pub fwhm_half: Option<f64>,
}

impl ResonanceSolution {
    /// `Γ = 2 Im E`.
    pub fn width(&self) -> f64 {
        2.0 * self.energy.im
    }
}

/// Lower and upper ends of the real window where regions I and III are both
/// evanescent and region II propagates.
pub fn bound_window(params: &WellParams) -> Option<(f64, f64)> {
    let lo = (-1.0f64)
        .max(params.v1 - params.v2 - 1.0)
        .max(1.0 - params.v2);
    let hi = 1.0f64.min(params.v1 - params.v2 + 1.0);
    (lo < hi).then_some((lo, hi))
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    while b - a > tol {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
        if m == a && m == b {
            break;
        }
    }
    0.5 * (a + b)
}

/// Real roots of the residual by sign-change scan over `intervals` cells and
/// bisection; ascending in energy.
pub fn scan_real_roots(params: &WellParams, intervals: usize) -> Vec<f64> {
    let Some((lo, hi)) = bound_window(params) else {
        return Vec::new();
    };
    // In the window F is real up to rounding.
    let f = |x: f64| matching_residual(Complex64::new(x, 0.0), params).re;
    let h = (hi - lo) / intervals as f64;
    let mut roots = Vec::new();
    let mut x0 = lo + 1e-3 * h;
    let mut f0 = f(x0);
    for k in 1..=intervals {
        let x1 = if k == intervals {
            hi - 1e-3 * h
        } else {
            lo + k as f64 * h
        };
        let f1 = f(x1);
        if f0 == 0.0 {
            roots.push(x0);
        } else if (f0 < 0.0) != (f1 < 0.0) && f1 != 0.0 {
            roots.push(bisect(f, x0, x1, 1e-14));
        }
        x0 = x1;
        f0 = f1;
    }
    roots
}

fn number_levels(mut sols: Vec<ResonanceSolution>) -> Vec<ResonanceSolution> {
    sols.sort_by(|a, b| b.energy.re.total_cmp(&a.energy.re));
    for (i, s) in sols.iter_mut().enumerate() {
        s.level_index = i + 1;
    }
    sols.reverse();
    sols
}

/// Real bound states of a subcritical well, ascending in energy.
pub fn find_bound_states(params: &WellParams) -> Result<Vec<ResonanceSolution>> {
    params.validate()?;
    if params.v1_supercritical() {
        return Err(Error::invalid(
            "v1",
            format!(
                "{} c² is supercritical; bound states need V1 < 2 c²",
                params.v1
            ),
        ));
    }
    Ok(number_levels(
        scan_real_roots(params, SCAN_INTERVALS)
            .into_iter()
            .map(|x| ResonanceSolution {
                energy: Complex64::new(x, 0.0),
                method: Method::RealRoot,
                level_index: 0,
                fwhm_half: None,
            })
            .collect(),
    ))
}

/// Newton iteration with a central-difference derivative.
pub fn newton_root(
    f: impl Fn(Complex64) -> Complex64,
    seed: Complex64,
) -> std::result::Result<Complex64, Complex64> {
    let mut z = seed;
    for _ in 0..NEWTON_MAX_ITER {
        let h = 1e-7 * z.norm().max(1.0);
        let df = (f(z + h) - f(z - h)) / (2.0 * h);
        let step = f(z) / df;
        if !step.is_finite() {
            return Err(z);
        }
        z -= step;
        if step.norm() < NEWTON_TOL {
            return Ok(z);
        }
    }
    Err(z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceReport {
    /// Converged, deduplicated roots, ascending in `Re E`.
    pub solutions: Vec<ResonanceSolution>,
    /// Seeds whose Newton iteration did not converge.
    pub unconverged: Vec<Complex64>,
}

/// Complex roots of the matching condition by Newton continuation.
///
/// Without explicit seeds: subcritical wells seed from the real bound states;
/// symmetric supercritical wells from transmission peaks; asymmetric ones
/// from the level fits extrapolated to `V₁`, falling back to minima of `|F|`
/// along the real axis when a fit cannot be tracked.
pub fn find_resonances(
    params: &WellParams,
    seeds: Option<&[Complex64]>,
) -> Result<ResonanceReport> {
    params.validate()?;
    let seeds: Vec<Complex64> = match seeds {
        Some(s) => s.to_vec(),
        None => default_seeds(params)?,
    };
    let subcritical = !params.v1_supercritical() && !params.v2_supercritical();
    let mut found: Vec<Complex64> = Vec::new();
    let mut unconverged = Vec::new();
    for seed in seeds {
        match newton_root(|e| matching_residual(e, params), seed) {
            Ok(root) => {
                if !found.iter().any(|r| (r - root).norm() < DEDUP_TOL) {
                    found.push(root);
                }
            }
            Err(_) => unconverged.push(seed),
        }
    }
    let sols = found
        .into_iter()
        .map(|e| {
            let real = subcritical || e.im.abs() <= 1e-12;
            ResonanceSolution {
                energy: Complex64::new(e.re, if real { 0.0 } else { e.im.abs() }),
                method: if real {
                    Method::RealRoot
                } else {
                    Method::ComplexContinuation
                },
                level_index: 0,
                fwhm_half: None,
            }
        })
        .collect();
    Ok(ResonanceReport {
        solutions: number_levels(sols),
        unconverged,
    })
}

fn default_seeds(params: &WellParams) -> Result<Vec<Complex64>> {
    if !params.v1_supercritical() && !params.v2_supercritical() {
        return Ok(find_bound_states(params)?
            .into_iter()
            .map(|s| s.energy)
            .collect());
    }
    if params.is_symmetric() {
        let window = transmission_window(params)?;
        return Ok(transmission_peaks(params, window)?
            .into_iter()
            .map(|p| Complex64::new(p.energy, p.fwhm_half))
            .collect());
    }
    let template = *params;
    let samples = default_fit_samples();
    let mut seeds = Vec::new();
    for level in 1.. {
        match fit_energy_vs_height(level, &template, &samples) {
            Ok(fit) => seeds.push(Complex64::new(extrapolate_level(&fit, params.v1), 0.0)),
            Err(_) if level > 1 => break,
            Err(_) => return Ok(residual_minima(params)),
        }
    }
    Ok(seeds)
}

/// Local minima of `|F|` on the real axis of the resonance window.
pub fn residual_minima(params: &WellParams) -> Vec<Complex64> {
    let lo = (-1.0f64).max(1.0 - params.v2);
    let hi = 1.0f64;
    if lo >= hi {
        return Vec::new();
    }
    let n = SCAN_INTERVALS;
    let xs: Vec<f64> = (1..n)
        .map(|k| lo + (hi - lo) * k as f64 / n as f64)
        .collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| matching_residual(Complex64::new(x, 0.0), params).norm())
        .collect();
    (1..ys.len() - 1)
        .filter(|&i| ys[i] < ys[i - 1] && ys[i] <= ys[i + 1])
        .map(|i| Complex64::new(xs[i], 0.0))
        .collect()
}

pub fn default_fit_samples() -> Vec<f64> {
    let (a, b) = FIT_RANGE;
    (0..FIT_SAMPLES)
        .map(|i| a + (b - a) * i as f64 / (FIT_SAMPLES - 1) as f64)
        .collect()
}

/// Real energies where the symmetric-well transmission is defined: regions
/// I/III in the lower continuum (`E < −c²`) and region II in the upper one.
pub fn transmission_window(params: &WellParams) -> Result<(f64, f64)> {
    let lo = 1.0 - params.v2;
    let hi = -1.0;
    if lo >= hi {
        return Err(Error::NoTransmission(format!(
            "V = {} c² has no lower-continuum/upper-continuum overlap",
            params.v2
        )));
    }
    Ok((lo, hi))
}

/// `T = 1/(1 + ((1−γ²)/(2γ))² sin²(p₂d))` for the symmetric well.
pub fn transmission_coefficient(e: f64, params: &WellParams) -> Result<f64> {
    if !params.is_symmetric() {
        return Err(Error::NoTransmission(
            "the closed form holds only for V1 = V2".into(),
        ));
    }
    if e.abs() <= 1.0 {
        return Err(Error::NoTransmission(format!(
            "E = {e} c² lies in the gap: regions I and III are evanescent"
        )));
    }
    let g = matching_factors(Complex64::new(e, 0.0), params).gamma;
    let s = (region_momenta(Complex64::new(e, 0.0), params).p2 * params.d).sin();
    let k = (1.0 - g * g) / (2.0 * g);
    let t = 1.0 / (1.0 + k * k * s * s);
    if !(t.re.is_finite()) {
        return Err(Error::NoTransmission(format!("T undefined at E = {e} c²")));
    }
    Ok(t.re)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionPeak {
    pub energy: f64,
    pub height: f64,
    /// Half of the full width at `height/2`.
    pub fwhm_half: f64,
    /// A half-maximum crossing fell outside the window; `fwhm_half` then
    /// uses the side that was found.
    pub partial: bool,
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if b - a < 1e-14 * a.abs().max(1.0) {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        }
    }
    0.5 * (a + b)
}

/// Maxima of a sampled profile with half-maximum widths.
///
/// Scans `intervals` cells over `window`, refines each interior local maximum
/// by golden section and locates the `T = T_peak/2` crossing on each side by
/// marching outward in scan steps and bisecting.
pub fn profile_peaks(
    f: impl Fn(f64) -> f64,
    window: (f64, f64),
    intervals: usize,
) -> Vec<TransmissionPeak> {
    let (lo, hi) = window;
    let h = (hi - lo) / intervals as f64;
    let xs: Vec<f64> = (0..=intervals).map(|k| lo + k as f64 * h).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut peaks = Vec::new();
    for i in 1..intervals {
        if !(ys[i] > ys[i - 1] && ys[i] >= ys[i + 1]) {
            continue;
        }
        let e = golden_max(&f, xs[i - 1], xs[i + 1]);
        let top = f(e);
        let half = 0.5 * top;
        let g = |x: f64| f(x) - half;
        let side = |dir: f64| -> Option<f64> {
            let mut a = e;
            loop {
                let b = a + dir * h;
                if b < lo || b > hi {
                    return None;
                }
                if g(b) < 0.0 {
                    let (l, r) = if dir < 0.0 { (b, a) } else { (a, b) };
                    return Some(bisect(|x| -g(x) * dir, l, r, 1e-15));
                }
                a = b;
            }
        };
        let (left, right) = (side(-1.0), side(1.0));
        let (fwhm_half, partial) = match (left, right) {
            (Some(l), Some(r)) => (0.5 * (r - l), false),
            (Some(l), None) => (e - l, true),
            (None, Some(r)) => (r - e, true),
            (None, None) => (f64::NAN, true),
        };
        peaks.push(TransmissionPeak {
            energy: e,
            height: top,
            fwhm_half,
            partial,
        });
    }
    peaks
}

/// Transmission maxima of the symmetric well inside `window` (ascending).
pub fn transmission_peaks(
    params: &WellParams,
    window: (f64, f64),
) -> Result<Vec<TransmissionPeak>> {
    // Validate up front so the scan closure cannot fail silently.
    let mid = 0.5 * (window.0 + window.1);
    transmission_coefficient(mid, params)?;
    let (lo, hi) = window;
    if !(lo < hi) || lo.abs() <= 1.0 && hi.abs() <= 1.0 {
        return Err(Error::invalid("window", format!("({lo}, {hi}) is empty")));
    }
    // Keep the open window away from the branch points at its ends.
    let pad = 1e-9 * (hi - lo);
    Ok(profile_peaks(
        |e| transmission_coefficient(e, params).unwrap_or(0.0),
        (lo + pad, hi - pad),
        SCAN_INTERVALS,
    ))
}

/// Symmetric-well levels from the transmission maxima, ascending, with the
/// half-width carried in `fwhm_half`.
pub fn transmission_levels(params: &WellParams) -> Result<Vec<ResonanceSolution>> {
    let window = transmission_window(params)?;
    Ok(number_levels(
        transmission_peaks(params, window)?
            .into_iter()
            .map(|p| ResonanceSolution {
                energy: Complex64::new(p.energy, 0.0),
                method: Method::TransmissionPeak,
                level_index: 0,
                fwhm_half: Some(p.fwhm_half),
            })
            .collect(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub level_index: usize,
    pub intercept: f64,
    pub slope: f64,
    pub correlation: f64,
    pub v1_range: (f64, f64),
    /// Tracked level energy at each sample.
    pub energies: Vec<f64>,
}

impl FitResult {
    pub fn line(&self) -> LinearFit {
        LinearFit {
            intercept: self.intercept,
            slope: self.slope,
            r: self.correlation,
        }
    }
}

/// Tracks bound level `level_index` (1 = highest) across `v1_samples` and
/// fits `E = a + b·V₁`.
///
/// The level is picked by rank at the first sample and followed by nearest
/// energy afterwards; a jump larger than half the gap to its former
/// neighbours means the level vanished and is reported as an error.
pub fn fit_energy_vs_height(
    level_index: usize,
    template: &WellParams,
    v1_samples: &[f64],
) -> Result<FitResult> {
    if v1_samples.len() < 10 {
        return Err(Error::InsufficientSamples {
            needed: 10,
            found: v1_samples.len(),
        });
    }
    if level_index == 0 {
        return Err(Error::invalid("level_index", "levels are numbered from 1"));
    }
    if let Some(&v) = v1_samples.iter().find(|&&v| !(v > 1.0 && v < 2.0)) {
        return Err(Error::invalid(
            "v1_samples",
            format!("{v} c² lies outside (1, 2) c²"),
        ));
    }
    let mut energies = Vec::with_capacity(v1_samples.len());
    let mut prev: Option<(f64, f64)> = None;
    for &v1 in v1_samples {
        let params = template.with_v1(v1);
        let mut roots: Vec<f64> = find_bound_states(&params)?
            .into_iter()
            .map(|s| s.energy.re)
            .collect();
        roots.sort_by(|a, b| b.total_cmp(a));
        let pick = match prev {
            None => roots
                .get(level_index - 1)
                .copied()
                .ok_or_else(|| Error::LevelLost {
                    level: level_index,
                    v1,
                    reason: format!("only {} bound levels", roots.len()),
                })?,
            Some((e0, reach)) => {
                let near = roots
                    .iter()
                    .copied()
                    .min_by(|a, b| (a - e0).abs().total_cmp(&(b - e0).abs()))
                    .ok_or_else(|| Error::LevelLost {
                        level: level_index,
                        v1,
                        reason: "no bound levels".into(),
                    })?;
                if (near - e0).abs() > reach {
                    return Err(Error::LevelLost {
                        level: level_index,
                        v1,
                        reason: format!("nearest level {near:.6} is too far from {e0:.6}"),
                    });
                }
                near
            }
        };
        let window = bound_window(&params).expect("roots imply a window");
        let gap = roots
            .iter()
            .copied()
            .filter(|&r| r != pick)
            .chain([window.0, window.1])
            .map(|r| (r - pick).abs())
            .fold(f64::INFINITY, f64::min);
        prev = Some((pick, 0.5 * gap));
        energies.push(pick);
    }
    let fit = linear_fit(v1_samples, &energies)?;
    let lo = v1_samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v1_samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(FitResult {
        level_index,
        intercept: fit.intercept,
        slope: fit.slope,
        correlation: fit.r,
        v1_range: (lo, hi),
        energies,
    })
}

pub fn extrapolate_level(fit: &FitResult, v1: f64) -> f64 {
    fit.intercept + fit.slope * v1
}
