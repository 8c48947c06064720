//! Strang split-operator propagation of free basis states under the full
//! Hamiltonian and assembly of the Bogoliubov overlap blocks.
//!
//! Two drivers share one step kernel:
//!
//! * [`bogoliubov_evolution`] advances the whole basis ensemble in lockstep and
//!   hands each complete [`BogoliubovMatrix`] to the caller as soon as its
//!   snapshot time is reached, so only one snapshot is resident at a time.
//! * [`evolve_populations`] keeps only the occupation reductions
//!   `Σ|U|²` needed for particle numbers and spectra. States are evolved in
//!   fixed-size chunks (cache resident for the whole run) and merged in label
//!   order, so the result does not depend on the thread count.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::dirac::{
    free_energy, free_spinor, kinetic_step_factor, smooth_well, BasisLabel, Branch, GridSpec, Mat2,
    SpinorField, WellParams,
};
use crate::error::{Error, Result};

/// Largest phase `dt·max|E|` accepted per step.
pub const MAX_PHASE_PER_STEP: f64 = 0.2;

/// Default memory budget for holding full snapshots in memory (2 GiB).
pub const DEFAULT_MEMORY_BUDGET: usize = 2 << 30;

/// States per work unit in [`evolve_populations`]. Fixed so that the merge
/// order (and hence the floating-point result) is independent of threading.
const CHUNK: usize = 8;

/// Work units processed per parallel wave; bounds the partial sums held
/// before the ordered merge.
const WAVE: usize = 64;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Time stepping and the times at which overlaps are recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub snapshot_times: Vec<f64>,
}

impl PropagatorConfig {
    pub fn new(dt: f64, n_steps: usize, snapshot_times: Vec<f64>) -> Result<Self> {
        let cfg = Self {
            dt,
            n_steps,
            snapshot_times,
        };
        cfg.snapshot_steps()?;
        Ok(cfg)
    }

    /// Evolve to `t_end`, recording a snapshot every `every` steps and at the end.
    pub fn uniform(dt: f64, t_end: f64, every: usize) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
        }
        let n_steps = (t_end / dt).round() as usize;
        let every = every.max(1);
        let mut steps: Vec<usize> = (0..=n_steps).step_by(every).collect();
        if steps.last() != Some(&n_steps) {
            steps.push(n_steps);
        }
        Self::new(dt, n_steps, steps.iter().map(|&k| k as f64 * dt).collect())
    }

    pub fn total_time(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    /// Step indices of the snapshot times. Fails unless every time is a
    /// multiple of `dt` inside `[0, n_steps·dt]` and the list is sorted.
    pub fn snapshot_steps(&self) -> Result<Vec<usize>> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(
                "dt",
                format!("must be positive, got {}", self.dt),
            ));
        }
        let mut steps = Vec::with_capacity(self.snapshot_times.len());
        for &t in &self.snapshot_times {
            let k = (t / self.dt).round();
            if !(k >= 0.0) || (k * self.dt - t).abs() > 1e-9 * self.dt.max(t.abs()) {
                return Err(Error::invalid(
                    "snapshot_times",
                    format!("{t} is not a multiple of dt = {}", self.dt),
                ));
            }
            let k = k as usize;
            if k > self.n_steps {
                return Err(Error::invalid(
                    "snapshot_times",
                    format!("{t} lies beyond the final time {}", self.total_time()),
                ));
            }
            if steps.last().is_some_and(|&prev| k <= prev) {
                return Err(Error::invalid(
                    "snapshot_times",
                    "must be strictly increasing",
                ));
            }
            steps.push(k);
        }
        Ok(steps)
    }
}

/// Which free-basis branches to evolve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BranchSelection {
    /// Negative-energy states only: `U_pn` and `U_nn'` (electron observables).
    #[default]
    Negative,
    /// Positive-energy states only: `U_pp'` and `U_np` (positron observables).
    Positive,
    Both,
}

impl BranchSelection {
    pub fn includes(self, branch: Branch) -> bool {
        match self {
            BranchSelection::Both => true,
            BranchSelection::Negative => branch == Branch::Negative,
            BranchSelection::Positive => branch == Branch::Positive,
        }
    }

    pub fn labels(self, grid: &GridSpec) -> Vec<BasisLabel> {
        BasisLabel::all(grid)
            .into_iter()
            .filter(|l| self.includes(l.branch))
            .collect()
    }
}

/// Centre and width of the smooth ramp that returns the potential from the
/// right plateau to zero near the periodic seam, as fractions of the box.
const RAMP_CENTRE: f64 = 0.375;
const RAMP_WIDTH: f64 = 1.0 / 64.0;

/// Potential energy `U(z_k)` on the lattice, in atomic units.
///
/// The Sauter well is placed with its high step at `z = 0`; the far-right
/// plateau is brought back to zero by a broad tanh ramp centred at `3L/8`
/// so the periodic box has no sharp supercritical jump at its seam. The ramp
/// is far too gentle to create pairs on the time scales allowed by the
/// light-cone guard.
pub fn sampled_potential(grid: &GridSpec, params: &WellParams) -> Result<Vec<f64>> {
    params.validate()?;
    if !(params.w > 0.0) {
        return Err(Error::SharpWall);
    }
    let l = grid.box_length();
    let centre = RAMP_CENTRE * l;
    let width = RAMP_WIDTH * l;
    let plateau = params.step_height() * params.c2();
    Ok(grid
        .positions()
        .into_iter()
        .map(|z| smooth_well(z, params) - 0.5 * plateau * (1.0 + ((z - centre) / width).tanh()))
        .collect())
}

/// Precomputed operators for one (grid, well, time step) combination.
pub struct Propagator {
    grid: GridSpec,
    c: f64,
    dt: f64,
    n_steps: usize,
    snapshot_steps: Vec<usize>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch_len: usize,
    /// Full kinetic step, FFT order, including the 1/n of the inverse FFT.
    kin_full: Vec<Mat2>,
    /// Half kinetic step, FFT order, including 1/n.
    kin_half: Vec<Mat2>,
    /// `exp(-i U(z) dt)`.
    pot_phase: Vec<Complex64>,
    /// `exp(-i p_j z_min)` in FFT order; turns a raw FFT into plane-wave amplitudes.
    origin_phase: Vec<Complex64>,
    /// Free spinors in lattice order.
    chi_pos: Vec<[f64; 2]>,
    chi_neg: Vec<[f64; 2]>,
}

impl Propagator {
    pub fn new(grid: &GridSpec, params: &WellParams, cfg: &PropagatorConfig) -> Result<Self> {
        let snapshot_steps = cfg.snapshot_steps()?;
        let potential = sampled_potential(grid, params)?;
        let c = params.c;

        let reach = c * cfg.total_time();
        let limit = grid.box_length() / 4.0;
        if reach >= limit {
            return Err(Error::LightCone { reach, limit });
        }
        let u_max = potential.iter().fold(0.0f64, |m, u| m.max(u.abs()));
        let phase = cfg.dt * (grid.max_free_energy(c) + u_max);
        if phase >= MAX_PHASE_PER_STEP {
            return Err(Error::StepTooLarge {
                phase,
                limit: MAX_PHASE_PER_STEP,
            });
        }

        let n = grid.n_z();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch_len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());

        let inv_n = 1.0 / n as f64;
        let mut kin_full = vec![[[ZERO; 2]; 2]; n];
        let mut kin_half = vec![[[ZERO; 2]; 2]; n];
        let mut origin_phase = vec![ZERO; n];
        for j in grid.momentum_indices() {
            let p = grid.momentum(j);
            let m = grid.fft_slot(j);
            let scale = |mut k: Mat2| {
                k.iter_mut().flatten().for_each(|z| *z *= inv_n);
                k
            };
            kin_full[m] = scale(kinetic_step_factor(p, cfg.dt, c));
            kin_half[m] = scale(kinetic_step_factor(p, 0.5 * cfg.dt, c));
            origin_phase[m] = Complex64::from_polar(1.0, -p * grid.z_min());
        }
        let pot_phase = potential
            .iter()
            .map(|&u| Complex64::from_polar(1.0, -u * cfg.dt))
            .collect();
        let chi_pos = grid
            .momentum_indices()
            .map(|j| free_spinor(grid.momentum(j), Branch::Positive, c))
            .collect();
        let chi_neg = grid
            .momentum_indices()
            .map(|j| free_spinor(grid.momentum(j), Branch::Negative, c))
            .collect();

        Ok(Self {
            grid: *grid,
            c,
            dt: cfg.dt,
            n_steps: cfg.n_steps,
            snapshot_steps,
            fwd,
            inv,
            scratch_len,
            kin_full,
            kin_half,
            pot_phase,
            origin_phase,
            chi_pos,
            chi_neg,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        self.snapshot_steps
            .iter()
            .map(|&k| k as f64 * self.dt)
            .collect()
    }

    fn evolver_for_label(&self, label: BasisLabel) -> Evolver<'_> {
        let n = self.grid.n_z();
        let p = label.momentum(&self.grid);
        let chi = free_spinor(p, label.branch, self.c);
        // The opening half kinetic step is a pure phase on an eigenstate.
        let e = label.branch.sign() * free_energy(p, self.c);
        let half = Complex64::from_polar(1.0, -0.5 * e * self.dt);
        let mut x = vec![ZERO; 2 * n];
        for k in 0..n {
            let w = half * Complex64::from_polar(1.0, p * self.grid.position(k));
            x[k] = w * chi[0];
            x[n + k] = w * chi[1];
        }
        let mut initial = vec![ZERO; 2 * n];
        let slot = self.grid.fft_slot(label.momentum_index);
        initial[slot] = Complex64::new(chi[0], 0.0);
        initial[n + slot] = Complex64::new(chi[1], 0.0);
        Evolver::new(self, x, initial)
    }

    fn evolver_for_field(&self, field: &SpinorField) -> Evolver<'_> {
        let n = self.grid.n_z();
        let norm = self.grid.box_length().sqrt();
        let mut spec = vec![ZERO; 2 * n];
        for (k, v) in field.values().iter().enumerate() {
            spec[k] = v[0] * norm;
            spec[n + k] = v[1] * norm;
        }
        let mut ev = Evolver::new(self, vec![ZERO; 2 * n], Vec::new());
        ev.fwd(&mut spec);
        ev.initial = self.amplitudes(&spec, 1.0 / n as f64);
        ev.apply_kinetic(&mut spec, &self.kin_half);
        ev.inv(&mut spec);
        ev.x = spec;
        ev
    }

    /// Plane-wave amplitudes (FFT order) from a raw forward transform.
    fn amplitudes(&self, spectrum: &[Complex64], scale: f64) -> Vec<Complex64> {
        let n = self.grid.n_z();
        let mut out = vec![ZERO; 2 * n];
        for m in 0..n {
            let ph = self.origin_phase[m] * scale;
            out[m] = spectrum[m] * ph;
            out[n + m] = spectrum[n + m] * ph;
        }
        out
    }

    /// Projections of plane-wave amplitudes onto the positive and negative
    /// free states, each in ascending lattice order.
    fn project(&self, amp: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let n = self.grid.n_z();
        let mut pos = Vec::with_capacity(n);
        let mut neg = Vec::with_capacity(n);
        for (slot, j) in self.grid.momentum_indices().enumerate() {
            let m = self.grid.fft_slot(j);
            let (a, b) = (amp[m], amp[n + m]);
            let cp = self.chi_pos[slot];
            let cn = self.chi_neg[slot];
            pos.push(a * cp[0] + b * cp[1]);
            neg.push(a * cn[0] + b * cn[1]);
        }
        (pos, neg)
    }
}

/// One state being advanced through the Strang sequence
/// `K½ (P K)^(N-1) P K½`, with consecutive half kinetic steps merged.
struct Evolver<'p> {
    prop: &'p Propagator,
    /// Position-space state (upper block then lower block), scaled by √L.
    x: Vec<Complex64>,
    spec: Vec<Complex64>,
    scratch: Vec<Complex64>,
    /// Plane-wave amplitudes at t = 0.
    initial: Vec<Complex64>,
    step: usize,
    next_snapshot: usize,
}

impl<'p> Evolver<'p> {
    fn new(prop: &'p Propagator, x: Vec<Complex64>, initial: Vec<Complex64>) -> Self {
        let n = prop.grid.n_z();
        Self {
            prop,
            x,
            spec: vec![ZERO; 2 * n],
            scratch: vec![ZERO; prop.scratch_len],
            initial,
            step: 0,
            next_snapshot: 0,
        }
    }

    fn fwd(&mut self, buf: &mut [Complex64]) {
        self.prop.fwd.process_with_scratch(buf, &mut self.scratch);
    }

    fn inv(&mut self, buf: &mut [Complex64]) {
        self.prop.inv.process_with_scratch(buf, &mut self.scratch);
    }

    fn apply_kinetic(&self, buf: &mut [Complex64], kin: &[Mat2]) {
        let n = self.prop.grid.n_z();
        let (up, lo) = buf.split_at_mut(n);
        for ((a, b), k) in up.iter_mut().zip(lo.iter_mut()).zip(kin) {
            let (a0, b0) = (*a, *b);
            *a = k[0][0] * a0 + k[0][1] * b0;
            *b = k[1][0] * a0 + k[1][1] * b0;
        }
    }

    /// Snapshot at t = 0 if requested; returns plane-wave amplitudes.
    fn take_initial(&mut self) -> Option<Vec<Complex64>> {
        if self.prop.snapshot_steps.first() == Some(&0) && self.next_snapshot == 0 {
            self.next_snapshot = 1;
            Some(self.initial.clone())
        } else {
            None
        }
    }

    /// Advances one full step. Returns the plane-wave amplitudes when the
    /// new time is a snapshot time.
    fn advance(&mut self) -> Option<Vec<Complex64>> {
        debug_assert!(self.step < self.prop.n_steps);
        let n = self.prop.grid.n_z();
        let prop = self.prop;
        self.step += 1;
        let (up, lo) = self.x.split_at_mut(n);
        for ((a, b), ph) in up.iter_mut().zip(lo.iter_mut()).zip(&prop.pot_phase) {
            *a *= ph;
            *b *= ph;
        }
        let mut spec = std::mem::take(&mut self.spec);
        spec.copy_from_slice(&self.x);
        self.fwd(&mut spec);

        let mut out = None;
        let is_snapshot = prop.snapshot_steps.get(self.next_snapshot) == Some(&self.step);
        let last = self.step == prop.n_steps;
        if is_snapshot || last {
            let mut half = spec.clone();
            self.apply_kinetic(&mut half, &prop.kin_half);
            // kin_half carries 1/n; amplitudes need the inverse-FFT scale
            // undone and the forward-FFT 1/n applied, which cancel.
            let amp = prop.amplitudes(&half, 1.0);
            if is_snapshot {
                self.next_snapshot += 1;
                out = Some(amp);
            }
            if last {
                // Leave x holding the final state.
                self.x.copy_from_slice(&half);
                let mut x = std::mem::take(&mut self.x);
                self.inv(&mut x);
                self.x = x;
                self.spec = spec;
                return out;
            }
        }
        self.apply_kinetic(&mut spec, &prop.kin_full);
        self.x.copy_from_slice(&spec);
        let mut x = std::mem::take(&mut self.x);
        self.inv(&mut x);
        self.x = x;
        self.spec = spec;
        out
    }

    fn into_field(self) -> SpinorField {
        let n = self.prop.grid.n_z();
        let norm = 1.0 / self.prop.grid.box_length().sqrt();
        let values = (0..n)
            .map(|k| [self.x[k] * norm, self.x[n + k] * norm])
            .collect();
        SpinorField::new(self.prop.grid, values).expect("lattice size is fixed")
    }
}

/// Evolves `field` for `cfg.n_steps` steps of `K½ P K½`.
pub fn propagate(
    field: &SpinorField,
    params: &WellParams,
    cfg: &PropagatorConfig,
) -> Result<SpinorField> {
    let cfg = PropagatorConfig {
        snapshot_times: Vec::new(),
        ..cfg.clone()
    };
    let prop = Propagator::new(field.grid(), params, &cfg)?;
    let mut ev = prop.evolver_for_field(field);
    if prop.n_steps == 0 {
        return Ok(field.clone());
    }
    while ev.step < prop.n_steps {
        ev.advance();
    }
    Ok(ev.into_field())
}

/// Overlap blocks of the evolution operator at one time.
///
/// Rows index the free state projected onto, columns the evolved initial
/// state, both in ascending momentum order:
/// `u_pn[(p, n)] = ⟨u_p | v_n(t)⟩`, `u_np[(n, p)] = ⟨v_n | u_p(t)⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct BogoliubovMatrix {
    pub time: f64,
    pub n_z: usize,
    pub u_pp: Option<Array2<Complex64>>,
    pub u_pn: Option<Array2<Complex64>>,
    pub u_np: Option<Array2<Complex64>>,
    pub u_nn: Option<Array2<Complex64>>,
}

pub const BLOCK_PP: u32 = 1;
pub const BLOCK_PN: u32 = 2;
pub const BLOCK_NP: u32 = 4;
pub const BLOCK_NN: u32 = 8;

impl BogoliubovMatrix {
    /// The t = 0 matrix: identity diagonal blocks, zero off-diagonal blocks.
    pub fn identity(n_z: usize, branches: BranchSelection) -> Self {
        let eye = Array2::from_diag_elem(n_z, Complex64::new(1.0, 0.0));
        let zero = Array2::zeros((n_z, n_z));
        let pos = branches.includes(Branch::Positive);
        let neg = branches.includes(Branch::Negative);
        Self {
            time: 0.0,
            n_z,
            u_pp: pos.then(|| eye.clone()),
            u_np: pos.then(|| zero.clone()),
            u_pn: neg.then(|| zero.clone()),
            u_nn: neg.then(|| eye.clone()),
        }
    }

    pub fn block_mask(&self) -> u32 {
        let mut m = 0;
        if self.u_pp.is_some() {
            m |= BLOCK_PP;
        }
        if self.u_pn.is_some() {
            m |= BLOCK_PN;
        }
        if self.u_np.is_some() {
            m |= BLOCK_NP;
        }
        if self.u_nn.is_some() {
            m |= BLOCK_NN;
        }
        m
    }

    pub fn byte_size(&self) -> usize {
        self.block_mask().count_ones() as usize * self.n_z * self.n_z * 16
    }

    pub fn pn(&self) -> Result<&Array2<Complex64>> {
        self.u_pn.as_ref().ok_or(Error::MissingBlock("u_pn"))
    }

    pub fn np(&self) -> Result<&Array2<Complex64>> {
        self.u_np.as_ref().ok_or(Error::MissingBlock("u_np"))
    }

    /// Largest `|1 - Σ_rows |U_{·,col}|²|` over the evolved columns present.
    pub fn column_norm_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        let mut audit = |top: &Option<Array2<Complex64>>, bottom: &Option<Array2<Complex64>>| {
            if let (Some(a), Some(b)) = (top, bottom) {
                for col in 0..self.n_z {
                    let s: f64 = a.column(col).iter().map(|z| z.norm_sqr()).sum::<f64>()
                        + b.column(col).iter().map(|z| z.norm_sqr()).sum::<f64>();
                    worst = worst.max((1.0 - s).abs());
                }
            }
        };
        audit(&self.u_pp, &self.u_np);
        audit(&self.u_pn, &self.u_nn);
        worst
    }
}

/// Evolves the selected basis states and streams one [`BogoliubovMatrix`]
/// per snapshot time, in time order, to `sink`.
pub fn bogoliubov_evolution_with<F>(
    grid: &GridSpec,
    params: &WellParams,
    cfg: &PropagatorConfig,
    branches: BranchSelection,
    mut sink: F,
) -> Result<()>
where
    F: FnMut(BogoliubovMatrix) -> Result<()>,
{
    let prop = Propagator::new(grid, params, cfg)?;
    let times = prop.snapshot_times();
    let n = grid.n_z();
    let pos_labels = BranchSelection::Positive.labels(grid);
    let neg_labels = BranchSelection::Negative.labels(grid);
    let mut labels = Vec::new();
    if branches.includes(Branch::Positive) {
        labels.extend_from_slice(&pos_labels);
    }
    if branches.includes(Branch::Negative) {
        labels.extend_from_slice(&neg_labels);
    }
    let mut evolvers: Vec<Evolver<'_>> =
        labels.iter().map(|&l| prop.evolver_for_label(l)).collect();

    let assemble = |time: f64, columns: Vec<Option<Vec<Complex64>>>| -> BogoliubovMatrix {
        let mut m = BogoliubovMatrix {
            time,
            n_z: n,
            u_pp: None,
            u_pn: None,
            u_np: None,
            u_nn: None,
        };
        let mut blocks = [
            Array2::<Complex64>::zeros((0, 0)),
            Array2::zeros((0, 0)),
            Array2::zeros((0, 0)),
            Array2::zeros((0, 0)),
        ];
        if branches.includes(Branch::Positive) {
            blocks[0] = Array2::zeros((n, n));
            blocks[2] = Array2::zeros((n, n));
        }
        if branches.includes(Branch::Negative) {
            blocks[1] = Array2::zeros((n, n));
            blocks[3] = Array2::zeros((n, n));
        }
        for (label, amp) in labels.iter().zip(columns) {
            let amp = amp.expect("every evolver reaches every snapshot");
            let (pos, neg) = prop.project(&amp);
            let col = grid.lattice_slot(label.momentum_index);
            let (top, bottom) = match label.branch {
                Branch::Positive => (0, 2),
                Branch::Negative => (1, 3),
            };
            for r in 0..n {
                blocks[top][(r, col)] = pos[r];
                blocks[bottom][(r, col)] = neg[r];
            }
        }
        let [pp, pn, np, nn] = blocks;
        if branches.includes(Branch::Positive) {
            m.u_pp = Some(pp);
            m.u_np = Some(np);
        }
        if branches.includes(Branch::Negative) {
            m.u_pn = Some(pn);
            m.u_nn = Some(nn);
        }
        m
    };

    let mut next = 0;
    if prop.snapshot_steps.first() == Some(&0) {
        let cols = evolvers.iter_mut().map(|e| e.take_initial()).collect();
        sink(assemble(times[0], cols))?;
        next = 1;
    }
    for _ in 0..prop.n_steps {
        let cols: Vec<Option<Vec<Complex64>>> =
            evolvers.par_iter_mut().map(|e| e.advance()).collect();
        if cols.first().is_some_and(|c| c.is_some()) {
            sink(assemble(times[next], cols))?;
            next += 1;
        }
    }
    Ok(())
}

/// Collects every snapshot in memory. Use [`bogoliubov_evolution_with`] with a
/// spilling sink (see [`crate::snapshot_io::SnapshotStore`]) for large grids.
pub fn bogoliubov_evolution(
    grid: &GridSpec,
    params: &WellParams,
    cfg: &PropagatorConfig,
    branches: BranchSelection,
) -> Result<Vec<BogoliubovMatrix>> {
    let mut out = Vec::new();
    bogoliubov_evolution_with(grid, params, cfg, branches, |m| {
        out.push(m);
        Ok(())
    })?;
    Ok(out)
}

/// Occupation reductions at one snapshot time.
///
/// `electron[p] = Σ_n |U_pn|²` and `positron[n] = Σ_p |U_np|²`, indexed in
/// ascending lattice order by the momentum of the free state they refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct Populations {
    pub time: f64,
    pub electron: Option<Vec<f64>>,
    pub positron: Option<Vec<f64>>,
    /// Largest column-norm defect `|1 - Σ|U|²|` seen among the evolved states.
    pub column_defect: f64,
}

impl Populations {
    pub fn from_matrix(m: &BogoliubovMatrix) -> Self {
        let row_sums = |a: &Array2<Complex64>| -> Vec<f64> {
            a.rows()
                .into_iter()
                .map(|r| r.iter().map(|z| z.norm_sqr()).sum())
                .collect()
        };
        Self {
            time: m.time,
            electron: m.u_pn.as_ref().map(row_sums),
            positron: m.u_np.as_ref().map(row_sums),
            column_defect: m.column_norm_defect(),
        }
    }
}

struct Partial {
    electron: Vec<Vec<f64>>,
    positron: Vec<Vec<f64>>,
    defect: Vec<f64>,
}

/// Evolves the selected basis states and returns only the occupation
/// reductions at each snapshot time. Memory use is independent of the
/// number of snapshots beyond `O(n_z)` per snapshot.
pub fn evolve_populations(
    grid: &GridSpec,
    params: &WellParams,
    cfg: &PropagatorConfig,
    branches: BranchSelection,
) -> Result<Vec<Populations>> {
    let prop = Propagator::new(grid, params, cfg)?;
    let times = prop.snapshot_times();
    let n = grid.n_z();
    let n_snap = times.len();
    let labels = branches.labels(grid);

    let run_chunk = |chunk: &[BasisLabel]| -> Partial {
        let mut part = Partial {
            electron: vec![vec![0.0; n]; n_snap],
            positron: vec![vec![0.0; n]; n_snap],
            defect: vec![0.0; n_snap],
        };
        for &label in chunk {
            let mut ev = prop.evolver_for_label(label);
            let mut k = 0;
            let record = |amp: Vec<Complex64>, k: usize, part: &mut Partial| {
                let (pos, neg) = prop.project(&amp);
                let (created, acc) = match label.branch {
                    Branch::Negative => (&pos, &mut part.electron[k]),
                    Branch::Positive => (&neg, &mut part.positron[k]),
                };
                for (a, z) in acc.iter_mut().zip(created) {
                    *a += z.norm_sqr();
                }
                let total: f64 = pos.iter().chain(&neg).map(|z| z.norm_sqr()).sum();
                part.defect[k] = part.defect[k].max((1.0 - total).abs());
            };
            if let Some(amp) = ev.take_initial() {
                record(amp, k, &mut part);
                k += 1;
            }
            for _ in 0..prop.n_steps {
                if let Some(amp) = ev.advance() {
                    record(amp, k, &mut part);
                    k += 1;
                }
            }
        }
        part
    };

    let mut electron = vec![vec![0.0; n]; n_snap];
    let mut positron = vec![vec![0.0; n]; n_snap];
    let mut defect = vec![0.0f64; n_snap];
    let chunks: Vec<&[BasisLabel]> = labels.chunks(CHUNK).collect();
    for wave in chunks.chunks(WAVE) {
        let partials: Vec<Partial> = wave.par_iter().map(|c| run_chunk(c)).collect();
        for part in partials {
            for k in 0..n_snap {
                for (a, b) in electron[k].iter_mut().zip(&part.electron[k]) {
                    *a += b;
                }
                for (a, b) in positron[k].iter_mut().zip(&part.positron[k]) {
                    *a += b;
                }
                defect[k] = defect[k].max(part.defect[k]);
            }
        }
    }

    let has_e = branches.includes(Branch::Negative);
    let has_p = branches.includes(Branch::Positive);
    Ok(times
        .into_iter()
        .zip(electron.into_iter().zip(positron))
        .zip(defect)
        .map(|((time, (e, p)), column_defect)| Populations {
            time,
            electron: has_e.then_some(e),
            positron: has_p.then_some(p),
            column_defect,
        })
        .collect())
}

/// Dense `2n_z × 2n_z` Hamiltonian in the position basis, ordered
/// `[upper components; lower components]`. Intended for small-grid checks.
pub fn dense_hamiltonian(grid: &GridSpec, params: &WellParams) -> Result<Array2<Complex64>> {
    let n = grid.n_z();
    let c = params.c;
    let potential = sampled_potential(grid, params)?;
    let mut h = Array2::<Complex64>::zeros((2 * n, 2 * n));
    let l = grid.box_length();
    let dz = grid.dz();
    // h0 = Σ_p |p⟩ h0(p) ⟨p| with ⟨z_k|p⟩ = e^{ipz_k} √(dz/L).
    for j in grid.momentum_indices() {
        let p = grid.momentum(j);
        let block = [[c * c, c * p], [c * p, -c * c]];
        let wave: Vec<Complex64> = (0..n)
            .map(|k| Complex64::from_polar((dz / l).sqrt(), p * grid.position(k)))
            .collect();
        for a in 0..n {
            for b in 0..n {
                let outer = wave[a] * wave[b].conj();
                for s in 0..2 {
                    for t in 0..2 {
                        if block[s][t] != 0.0 {
                            h[(s * n + a, t * n + b)] += outer * block[s][t];
                        }
                    }
                }
            }
        }
    }
    for k in 0..n {
        h[(k, k)] += potential[k];
        h[(n + k, n + k)] += potential[k];
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirac::{free_eigenstate, mat2_mul, SPEED_OF_LIGHT};
    use approx::assert_abs_diff_eq;

    fn well(v1: f64, v2: f64) -> WellParams {
        WellParams::new(v1, v2, 0.3 / SPEED_OF_LIGHT, 0.2, SPEED_OF_LIGHT).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(PropagatorConfig::new(1e-6, 10, vec![0.0, 5e-6, 1e-5]).is_ok());
        assert!(PropagatorConfig::new(1e-6, 10, vec![0.0, 5.5e-6]).is_err());
        assert!(PropagatorConfig::new(1e-6, 10, vec![2e-6, 1e-6]).is_err());
        assert!(PropagatorConfig::new(1e-6, 10, vec![2e-5]).is_err());
        assert!(PropagatorConfig::new(0.0, 10, vec![]).is_err());
        let u = PropagatorConfig::uniform(1e-6, 1e-5, 3).unwrap();
        assert_eq!(u.n_steps, 10);
        assert_eq!(u.snapshot_steps().unwrap(), vec![0, 3, 6, 9, 10]);
    }

    #[test]
    fn guards() {
        let g = GridSpec::new(64, 1.0).unwrap();
        let p = well(2.5, 0.25);
        let cfg = PropagatorConfig::new(1e-7, 20_000, vec![]).unwrap();
        assert!(matches!(
            Propagator::new(&g, &p, &cfg),
            Err(Error::LightCone { .. })
        ));
        let cfg = PropagatorConfig::new(1e-4, 1, vec![]).unwrap();
        assert!(matches!(
            Propagator::new(&g, &p, &cfg),
            Err(Error::StepTooLarge { .. })
        ));
        let sharp = WellParams::sharp(2.5, 0.25, 0.2).unwrap();
        let cfg = PropagatorConfig::new(1e-7, 1, vec![]).unwrap();
        assert!(matches!(
            Propagator::new(&g, &sharp, &cfg),
            Err(Error::SharpWall)
        ));
    }

    #[test]
    fn seam_ramp_closes_the_box() {
        let g = GridSpec::new(1024, 8.0).unwrap();
        let p = well(2.5, 0.25);
        let u = sampled_potential(&g, &p).unwrap();
        let c2 = p.c2();
        let at = |z: f64| u[((z - g.z_min()) / g.dz()).round() as usize] / c2;
        assert_abs_diff_eq!(at(-4.0), 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(u[1023] / c2, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(at(1.5), 2.25, epsilon = 1e-9);
        assert_abs_diff_eq!(at(-0.1), -0.25, epsilon = 1e-6);
        assert_abs_diff_eq!(at(-2.0), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn free_evolution_is_a_phase() {
        let g = GridSpec::new(64, 2.0).unwrap();
        let p = WellParams::new(0.0, 0.0, 0.01, 0.2, SPEED_OF_LIGHT).unwrap();
        let cfg = PropagatorConfig::new(1e-6, 200, vec![]).unwrap();
        for label in [
            BasisLabel::new(3, Branch::Positive),
            BasisLabel::new(-7, Branch::Negative),
            BasisLabel::new(-32, Branch::Positive),
        ] {
            let psi = free_eigenstate(label, &g, p.c).unwrap();
            let out = propagate(&psi, &p, &cfg).unwrap();
            let e = label.energy(&g, p.c);
            let phase = Complex64::from_polar(1.0, -e * cfg.total_time());
            for (a, b) in out.values().iter().zip(psi.values()) {
                assert_abs_diff_eq!((a[0] - phase * b[0]).norm(), 0.0, epsilon = 1e-9);
                assert_abs_diff_eq!((a[1] - phase * b[1]).norm(), 0.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn identity_at_time_zero() {
        let g = GridSpec::new(32, 2.0).unwrap();
        let cfg = PropagatorConfig::new(1e-6, 4, vec![0.0, 4e-6]).unwrap();
        let snaps =
            bogoliubov_evolution(&g, &well(2.5, 0.25), &cfg, BranchSelection::Both).unwrap();
        assert_eq!(snaps.len(), 2);
        let id = BogoliubovMatrix::identity(32, BranchSelection::Both);
        let s0 = &snaps[0];
        for (a, b) in [
            (&s0.u_pp, &id.u_pp),
            (&s0.u_pn, &id.u_pn),
            (&s0.u_np, &id.u_np),
            (&s0.u_nn, &id.u_nn),
        ] {
            let (a, b) = (a.as_ref().unwrap(), b.as_ref().unwrap());
            for (x, y) in a.iter().zip(b) {
                assert_abs_diff_eq!((x - y).norm(), 0.0, epsilon = 1e-15);
            }
        }
        assert_abs_diff_eq!(snaps[1].time, 4e-6, epsilon = 1e-18);
    }

    #[test]
    fn free_hamiltonian_creates_nothing() {
        let g = GridSpec::new(64, 2.0).unwrap();
        let p = WellParams::new(0.0, 0.0, 0.01, 0.2, SPEED_OF_LIGHT).unwrap();
        let cfg = PropagatorConfig::uniform(1e-6, 1e-4, 25).unwrap();
        for m in bogoliubov_evolution(&g, &p, &cfg, BranchSelection::Both).unwrap() {
            let worst = m
                .u_pn
                .as_ref()
                .unwrap()
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            assert!(worst <= 1e-10, "t = {}: |U_pn| = {worst}", m.time);
        }
    }

    #[test]
    fn reductions_agree_with_full_matrices() {
        let g = GridSpec::new(64, 2.0).unwrap();
        let p = well(2.5, 0.25);
        let cfg = PropagatorConfig::uniform(1e-6, 2e-4, 50).unwrap();
        let full = bogoliubov_evolution(&g, &p, &cfg, BranchSelection::Both).unwrap();
        let reduced = evolve_populations(&g, &p, &cfg, BranchSelection::Both).unwrap();
        assert_eq!(full.len(), reduced.len());
        for (m, r) in full.iter().zip(&reduced) {
            let from_full = Populations::from_matrix(m);
            for (a, b) in from_full
                .electron
                .unwrap()
                .iter()
                .zip(r.electron.as_ref().unwrap())
            {
                assert_abs_diff_eq!(a, b, epsilon = 1e-14);
            }
            for (a, b) in from_full
                .positron
                .unwrap()
                .iter()
                .zip(r.positron.as_ref().unwrap())
            {
                assert_abs_diff_eq!(a, b, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn half_steps_compose_to_full() {
        let h = kinetic_step_factor(120.0, 0.5e-6, SPEED_OF_LIGHT);
        let k = mat2_mul(&h, &h);
        let f = kinetic_step_factor(120.0, 1e-6, SPEED_OF_LIGHT);
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!((k[i][j] - f[i][j]).norm(), 0.0, epsilon = 1e-14);
            }
        }
    }
}
