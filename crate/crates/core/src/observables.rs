//! Created-particle observables from Bogoliubov overlaps: density, particle
//! numbers, energy spectra, the continuum/bound partition and growth rates.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::dirac::{free_energy, free_spinor, group_velocity, Branch, GridSpec, WellParams};
use crate::error::{Error, Result};
use crate::evolution::{BogoliubovMatrix, Populations};
use crate::stats::linear_fit;

/// Fewest samples accepted by [`growth_rate`].
pub const MIN_RATE_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Species {
    Electron,
    Positron,
}

impl Species {
    pub fn as_str(self) -> &'static str {
        match self {
            Species::Electron => "electron",
            Species::Positron => "positron",
        }
    }
}

/// `ρ(z_k) = Σ_n |Σ_p U_pn u_p(z_k)|²` on the lattice.
pub fn electron_density(snapshot: &BogoliubovMatrix, grid: &GridSpec, c: f64) -> Result<Vec<f64>> {
    let u_pn = snapshot.pn()?;
    let n = grid.n_z();
    if snapshot.n_z != n {
        return Err(Error::Mismatch(format!(
            "snapshot has n_z = {}, grid has {n}",
            snapshot.n_z
        )));
    }
    let fft = FftPlanner::new().plan_fft_inverse(n);
    let inv_l = 1.0 / grid.box_length();
    let shift: Vec<(usize, Complex64, [f64; 2])> = grid
        .momentum_indices()
        .map(|j| {
            let p = grid.momentum(j);
            (
                grid.fft_slot(j),
                Complex64::from_polar(1.0, p * grid.z_min()),
                free_spinor(p, Branch::Positive, c),
            )
        })
        .collect();

    const COLS: usize = 16;
    let cols: Vec<usize> = (0..n).collect();
    let partials: Vec<Vec<f64>> = cols
        .par_chunks(COLS)
        .map(|chunk| {
            let mut acc = vec![0.0; n];
            let mut up = vec![Complex64::new(0.0, 0.0); n];
            let mut lo = vec![Complex64::new(0.0, 0.0); n];
            for &col in chunk {
                for (row, &(m, ph, chi)) in shift.iter().enumerate() {
                    let a = u_pn[(row, col)] * ph;
                    up[m] = a * chi[0];
                    lo[m] = a * chi[1];
                }
                fft.process(&mut up);
                fft.process(&mut lo);
                for k in 0..n {
                    acc[k] += (up[k].norm_sqr() + lo[k].norm_sqr()) * inv_l;
                }
            }
            acc
        })
        .collect();
    let mut rho = vec![0.0; n];
    for part in partials {
        for (r, v) in rho.iter_mut().zip(part) {
            *r += v;
        }
    }
    Ok(rho)
}

/// Total created electrons and, when `u_np` is present, positrons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleNumbers {
    pub electron: f64,
    pub positron: Option<f64>,
}

pub fn particle_numbers(snapshot: &BogoliubovMatrix) -> Result<ParticleNumbers> {
    let sum = |a: &ndarray::Array2<Complex64>| a.iter().map(|z| z.norm_sqr()).sum::<f64>();
    Ok(ParticleNumbers {
        electron: sum(snapshot.pn()?),
        positron: snapshot.u_np.as_ref().map(sum),
    })
}

/// Energy distribution `N(E)` on the folded branch-energy grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSeries {
    pub species: Species,
    pub time: f64,
    /// Bin energies `E/c²`, ascending: `|p| = 0, dp, 2dp, …`.
    pub energy: Vec<f64>,
    /// Spectral density per unit `E/c²` (dN/dE in a.u. multiplied by c²).
    pub values: Vec<f64>,
    /// Particles in each bin, `N(p) + N(−p)`; sums to the total count.
    pub counts: Vec<f64>,
}

impl SpectrumSeries {
    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Trapezoidal `∫ N(E) dE` over the bins.
    pub fn integral(&self) -> f64 {
        self.energy
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(e, v)| 0.5 * (e[1] - e[0]) * (v[0] + v[1]))
            .sum()
    }
}

/// Folds per-momentum occupations (ascending lattice order) into `N(E)`.
///
/// `N(E) = L/(2π v) (N(p) + N(−p))` with group velocity `v = c²|p|/E`. The
/// `p = 0` bin uses the velocity of the smallest nonzero `|p|`; the unpaired
/// `j = −n_z/2` endpoint forms the last bin on its own.
pub fn spectrum_from_counts(
    counts: &[f64],
    species: Species,
    time: f64,
    grid: &GridSpec,
    c: f64,
) -> Result<SpectrumSeries> {
    let n = grid.n_z();
    if counts.len() != n {
        return Err(Error::Mismatch(format!(
            "{} occupations for a {n}-point lattice",
            counts.len()
        )));
    }
    let half = (n / 2) as i64;
    let c2 = c * c;
    let l = grid.box_length();
    let at = |j: i64| counts[grid.lattice_slot(j)];
    let mut energy = Vec::with_capacity(half as usize + 1);
    let mut values = Vec::with_capacity(half as usize + 1);
    let mut binned = Vec::with_capacity(half as usize + 1);
    for k in 0..=half {
        let bin = match k {
            0 => at(0),
            k if k == half => at(-half),
            k => at(k) + at(-k),
        };
        let p = grid.momentum(k);
        let v = group_velocity(if k == 0 { grid.dp() } else { p }, c);
        energy.push(free_energy(p, c) / c2);
        values.push(l / (2.0 * std::f64::consts::PI * v) * bin * c2);
        binned.push(bin);
    }
    Ok(SpectrumSeries {
        species,
        time,
        energy,
        values,
        counts: binned,
    })
}

pub fn energy_spectrum(
    snapshot: &BogoliubovMatrix,
    species: Species,
    grid: &GridSpec,
    c: f64,
) -> Result<SpectrumSeries> {
    let pops = Populations::from_matrix(snapshot);
    population_spectrum(&pops, species, grid, c)
}

pub fn population_spectrum(
    pops: &Populations,
    species: Species,
    grid: &GridSpec,
    c: f64,
) -> Result<SpectrumSeries> {
    let counts = match species {
        Species::Electron => pops.electron.as_ref().ok_or(Error::MissingBlock("u_pn"))?,
        Species::Positron => pops.positron.as_ref().ok_or(Error::MissingBlock("u_np"))?,
    };
    spectrum_from_counts(counts, species, pops.time, grid, c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// Refined peak energy, `E/c²`.
    pub energy: f64,
    pub height: f64,
    /// Index of the maximal bin.
    pub bin: usize,
}

/// Interior local maxima of `values` at least `min_fraction` of the global
/// maximum, refined by the vertex of the parabola through the three bins.
pub fn find_peaks(energy: &[f64], values: &[f64], min_fraction: f64) -> Vec<Peak> {
    let top = values.iter().cloned().fold(0.0f64, f64::max);
    if !(top > 0.0) {
        return Vec::new();
    }
    let mut peaks = Vec::new();
    for i in 1..values.len().saturating_sub(1) {
        let (y0, y1, y2) = (values[i - 1], values[i], values[i + 1]);
        if !(y1 > y0 && y1 >= y2) || y1 < min_fraction * top {
            continue;
        }
        let (x0, x1, x2) = (energy[i - 1], energy[i], energy[i + 1]);
        let denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
        let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom;
        let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom;
        let (e, h) = if a < 0.0 {
            let xv = -b / (2.0 * a);
            let cc = y1 - a * x1 * x1 - b * x1;
            (xv.clamp(x0, x2), a * xv * xv + b * xv + cc)
        } else {
            (x1, y1)
        };
        peaks.push(Peak {
            energy: e,
            height: h,
            bin: i,
        });
    }
    peaks
}

pub fn spectrum_peaks(spectrum: &SpectrumSeries, min_fraction: f64) -> Vec<Peak> {
    find_peaks(&spectrum.energy, &spectrum.values, min_fraction)
}

/// Why a partition put everything on one side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionNote {
    /// Threshold rule applied.
    Threshold,
    /// `V₁ − V₂ ≤ 2c²`: no continuum–continuum window.
    NoContinuumWindow,
    /// `V₂ = 0`: a single step has no bound states.
    NoWell,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// `E* = V₁ − V₂ − 1` in units of c².
    pub threshold: f64,
    pub note: PartitionNote,
    pub cc_count: f64,
    pub bc_count: f64,
    pub cc: SpectrumSeries,
    pub bc: SpectrumSeries,
}

/// Splits a positron spectrum into continuum–continuum (`E ≤ E*`) and
/// bound–continuum (`E > E*`) parts at `E* = V₁ − V₂ − c²`.
///
/// This threshold rule is a reconstruction; the bins are split exactly so
/// `cc_count + bc_count` equals the spectrum total.
pub fn partition_spectrum(spectrum: &SpectrumSeries, params: &WellParams) -> Result<Partition> {
    if spectrum.species != Species::Positron {
        return Err(Error::invalid(
            "species",
            "partition needs a positron spectrum",
        ));
    }
    let threshold = params.v1 - params.v2 - 1.0;
    let note = if params.v2 == 0.0 {
        PartitionNote::NoWell
    } else if params.v1 - params.v2 <= 2.0 {
        PartitionNote::NoContinuumWindow
    } else {
        PartitionNote::Threshold
    };
    let in_cc = |e: f64| match note {
        PartitionNote::NoWell => true,
        PartitionNote::NoContinuumWindow => false,
        PartitionNote::Threshold => e <= threshold,
    };
    let mut cc = spectrum.clone();
    let mut bc = spectrum.clone();
    for (i, &e) in spectrum.energy.iter().enumerate() {
        let other = if in_cc(e) { &mut bc } else { &mut cc };
        other.values[i] = 0.0;
        other.counts[i] = 0.0;
    }
    Ok(Partition {
        threshold,
        note,
        cc_count: cc.total(),
        bc_count: bc.total(),
        cc,
        bc,
    })
}

/// Particle counts over time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NumberSeries {
    pub times: Vec<f64>,
    pub electron: Vec<Option<f64>>,
    pub positron: Vec<Option<f64>>,
    pub cc: Vec<Option<f64>>,
    pub bc: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Electron,
    Positron,
    ContinuumContinuum,
    BoundContinuum,
}

impl NumberSeries {
    /// Builds the series from population snapshots; the partition columns
    /// are filled when positron data is present.
    pub fn from_populations(
        pops: &[Populations],
        grid: &GridSpec,
        params: &WellParams,
    ) -> Result<Self> {
        let mut s = Self::default();
        for p in pops {
            s.times.push(p.time);
            s.electron.push(p.electron.as_ref().map(|v| v.iter().sum()));
            match &p.positron {
                Some(counts) => {
                    let spec =
                        spectrum_from_counts(counts, Species::Positron, p.time, grid, params.c)?;
                    let part = partition_spectrum(&spec, params)?;
                    s.positron.push(Some(spec.total()));
                    s.cc.push(Some(part.cc_count));
                    s.bc.push(Some(part.bc_count));
                }
                None => {
                    s.positron.push(None);
                    s.cc.push(None);
                    s.bc.push(None);
                }
            }
        }
        Ok(s)
    }

    pub fn channel(&self, ch: Channel) -> &[Option<f64>] {
        match ch {
            Channel::Electron => &self.electron,
            Channel::Positron => &self.positron,
            Channel::ContinuumContinuum => &self.cc,
            Channel::BoundContinuum => &self.bc,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Least-squares slope of `values` against `times` over `window` (inclusive).
pub fn growth_rate_of(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= window.0 && **t <= window.1)
        .map(|(&t, &v)| (t, v))
        .unzip();
    if x.len() < MIN_RATE_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_RATE_SAMPLES,
            found: x.len(),
        });
    }
    Ok(linear_fit(&x, &y)?.slope)
}

pub fn growth_rate(series: &NumberSeries, channel: Channel, window: (f64, f64)) -> Result<f64> {
    let mut t = Vec::new();
    let mut v = Vec::new();
    for (&time, val) in series.times.iter().zip(series.channel(channel)) {
        if let Some(val) = val {
            t.push(time);
            v.push(*val);
        }
    }
    growth_rate_of(&t, &v, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirac::SPEED_OF_LIGHT;
    use crate::evolution::BranchSelection;
    use approx::assert_abs_diff_eq;

    const C: f64 = SPEED_OF_LIGHT;

    #[test]
    fn identity_snapshot_is_empty() {
        let g = GridSpec::new(16, 2.0).unwrap();
        let id = BogoliubovMatrix::identity(16, BranchSelection::Both);
        assert!(electron_density(&id, &g, C)
            .unwrap()
            .iter()
            .all(|&r| r == 0.0));
        let n = particle_numbers(&id).unwrap();
        assert_eq!((n.electron, n.positron), (0.0, Some(0.0)));
        for s in [Species::Electron, Species::Positron] {
            let spec = energy_spectrum(&id, s, &g, C).unwrap();
            assert!(spec.values.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn missing_block_is_reported() {
        let g = GridSpec::new(8, 2.0).unwrap();
        let m = BogoliubovMatrix::identity(8, BranchSelection::Positive);
        assert!(matches!(
            electron_density(&m, &g, C),
            Err(Error::MissingBlock("u_pn"))
        ));
        assert!(particle_numbers(&m).is_err());
        assert!(energy_spectrum(&m, Species::Electron, &g, C).is_err());
    }

    #[test]
    fn single_overlap_gives_flat_density() {
        let g = GridSpec::new(128, 3.0).unwrap();
        let mut m = BogoliubovMatrix::identity(128, BranchSelection::Negative);
        m.u_pn.as_mut().unwrap()[(g.lattice_slot(5), 17)] = Complex64::new(0.0, 1.0);
        let rho = electron_density(&m, &g, C).unwrap();
        for r in rho {
            assert_abs_diff_eq!(r, 1.0 / 3.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn density_integrates_to_count() {
        let g = GridSpec::new(32, 2.0).unwrap();
        let mut m = BogoliubovMatrix::identity(32, BranchSelection::Negative);
        let u = m.u_pn.as_mut().unwrap();
        for (i, z) in u.iter_mut().enumerate() {
            *z = Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()) * 0.01;
        }
        let rho = electron_density(&m, &g, C).unwrap();
        let integral: f64 = rho.iter().sum::<f64>() * g.dz();
        let n = particle_numbers(&m).unwrap().electron;
        assert_abs_diff_eq!(integral, n, epsilon = 1e-8 * n.max(1.0));
    }

    #[test]
    fn spectrum_folds_and_regularizes() {
        let g = GridSpec::new(8, 2.0).unwrap();
        // Lattice order j = -4..3.
        let counts = [1.0, 0.5, 0.0, 0.25, 2.0, 0.25, 0.0, 0.5];
        let s = spectrum_from_counts(&counts, Species::Electron, 0.0, &g, C).unwrap();
        assert_eq!(s.counts, vec![2.0, 0.5, 0.0, 1.0, 1.0]);
        assert_abs_diff_eq!(s.total(), 4.5);
        assert_abs_diff_eq!(s.energy[0], 1.0);
        let v1 = group_velocity(g.dp(), C);
        assert_abs_diff_eq!(
            s.values[0],
            2.0 / (2.0 * std::f64::consts::PI * v1) * 2.0 * C * C,
            epsilon = 1e-9
        );
        assert!(s.energy.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn parabolic_peak_refinement() {
        let e: Vec<f64> = (0..50).map(|i| 1.0 + 0.01 * i as f64).collect();
        let v: Vec<f64> = e
            .iter()
            .map(|x| 3.0 - 100.0 * (x - 1.2345).powi(2))
            .collect();
        let peaks = find_peaks(&e, &v, 0.5);
        assert_eq!(peaks.len(), 1);
        assert_abs_diff_eq!(peaks[0].energy, 1.2345, epsilon = 1e-10);
        assert_abs_diff_eq!(peaks[0].height, 3.0, epsilon = 1e-9);
        assert!(find_peaks(&e, &vec![0.0; 50], 0.1).is_empty());
    }

    fn flat_positrons() -> SpectrumSeries {
        let g = GridSpec::new(1024, 2.0).unwrap();
        spectrum_from_counts(&vec![1e-3; 1024], Species::Positron, 0.0, &g, C).unwrap()
    }

    #[test]
    fn partition_threshold() {
        let s = flat_positrons();
        let p = WellParams::sharp(3.54, 0.95, 0.2).unwrap();
        let part = partition_spectrum(&s, &p).unwrap();
        assert_abs_diff_eq!(part.threshold, 1.59, epsilon = 1e-12);
        assert_eq!(part.note, PartitionNote::Threshold);
        assert!(part.cc_count > 0.0 && part.bc_count > 0.0);
        assert!((part.cc_count + part.bc_count - s.total()).abs() < 1e-10);
        for (i, &e) in s.energy.iter().enumerate() {
            if e <= 1.59 {
                assert_eq!(part.bc.counts[i], 0.0);
            } else {
                assert_eq!(part.cc.counts[i], 0.0);
            }
        }
    }

    #[test]
    fn partition_special_cases() {
        let s = flat_positrons();
        let narrow = partition_spectrum(&s, &WellParams::sharp(2.5, 0.5, 0.2).unwrap()).unwrap();
        assert_eq!(narrow.note, PartitionNote::NoContinuumWindow);
        assert_eq!(narrow.cc_count, 0.0);
        let step = partition_spectrum(&s, &WellParams::sharp(2.59, 0.0, 0.2).unwrap()).unwrap();
        assert_eq!(step.note, PartitionNote::NoWell);
        assert_eq!(step.bc_count, 0.0);
        let mut e = s.clone();
        e.species = Species::Electron;
        assert!(partition_spectrum(&e, &WellParams::sharp(3.0, 0.5, 0.2).unwrap()).is_err());
    }

    #[test]
    fn growth_rates() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let lin: Vec<f64> = t.iter().map(|x| 2.0 * x + 7.0).collect();
        assert_abs_diff_eq!(
            growth_rate_of(&t, &lin, (0.0, 10.0)).unwrap(),
            2.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            growth_rate_of(&t, &vec![3.0; 20], (0.0, 10.0)).unwrap(),
            0.0
        );
        assert!(matches!(
            growth_rate_of(&t, &lin, (0.0, 2.0)),
            Err(Error::InsufficientSamples {
                needed: 10,
                found: 5
            })
        ));
        let series = NumberSeries {
            times: t.clone(),
            electron: lin.iter().map(|&v| Some(v)).collect(),
            positron: vec![None; 20],
            cc: vec![None; 20],
            bc: vec![None; 20],
        };
        assert_abs_diff_eq!(
            growth_rate(&series, Channel::Electron, (0.0, 9.5)).unwrap(),
            2.0,
            epsilon = 1e-12
        );
        assert!(growth_rate(&series, Channel::Positron, (0.0, 9.5)).is_err());
    }
}
