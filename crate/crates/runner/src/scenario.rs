use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use pairwell_core::evolution::{Populations, Propagator};
use pairwell_core::observables::{
    population_spectrum, spectrum_peaks, NumberSeries, Species, SpectrumSeries,
};
use pairwell_core::resonance::{
    extrapolate_level, find_bound_states, find_resonances, fit_energy_vs_height,
    transmission_peaks, transmission_window, FitResult, ResonanceSolution,
};
use pairwell_core::{snapshot_io, Error, GridSpec, WellParams};

use crate::compare::enhancement_compare;
use crate::config::{ConfigErrors, Mode, Propagation, Scenario};
use crate::output::{
    grid_line, num, opt, sha256_bytes, well_line, write_table, write_table_to, Manifest,
};

/// Peaks below this fraction of the tallest bin are not reported.
const PEAK_FLOOR: f64 = 0.02;

#[derive(Debug)]
pub enum RunError {
    Config(ConfigErrors),
    Compute(Error),
    Io(std::io::Error),
}

impl RunError {
    /// 1 for anything rejected before compute, 2 for failures during it.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Compute(
                Error::Invalid { .. }
                | Error::SharpWall
                | Error::LightCone { .. }
                | Error::StepTooLarge { .. },
            ) => 1,
            RunError::Compute(_) | RunError::Io(_) => 2,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Compute(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "i/o: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Compute(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

impl From<ConfigErrors> for RunError {
    fn from(e: ConfigErrors) -> Self {
        RunError::Config(e)
    }
}

type Result<T> = std::result::Result<T, RunError>;

/// Parses, validates and runs the scenario at `config`, writing outputs and
/// `manifest.json` into `out`.
pub fn run_config_file(config: &Path, out: &Path) -> Result<Manifest> {
    let text = std::fs::read(config)?;
    let scenario = Scenario::from_toml(&String::from_utf8_lossy(&text))?;
    let start = Instant::now();
    std::fs::create_dir_all(out)?;
    let files = run_scenario(&scenario, out)?;
    let manifest = Manifest {
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        mode: scenario.mode.name().to_string(),
        config: config.display().to_string(),
        input_sha256: sha256_bytes(&text),
        threads: rayon::current_num_threads(),
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs: Manifest::entries(out, &files)?,
    };
    manifest.write(&out.join("manifest.json"))?;
    Ok(manifest)
}

/// Runs a validated scenario; returns the files written.
pub fn run_scenario(s: &Scenario, out: &Path) -> Result<Vec<PathBuf>> {
    if s.mode.is_cqft() {
        preflight(s)?;
    }
    let mut files = Vec::new();
    match s.mode {
        Mode::AnalyticLevels => analytic_levels(s, out, &mut files)?,
        Mode::FitExtrapolate => fit_extrapolate(s, out, &mut files)?,
        Mode::SymmetricAppendix => symmetric_appendix(s, out, &mut files)?,
        Mode::CqftSpectra => cqft_spectra(s, out, &mut files)?,
        Mode::CqftTimeseries => {
            let (grid, prop) = grid_and_propagation(s);
            let pops = evolve(&s.well, grid, prop, out, "", &mut files)?;
            timeseries_outputs(&s.well, grid, prop, &pops, out, "", &mut files)?;
        }
        Mode::EnhancementCompare => compare_runs(s, out, &mut files)?,
    }
    Ok(files)
}

fn grid_and_propagation(s: &Scenario) -> (&GridSpec, &Propagation) {
    (
        s.grid.as_ref().expect("validated"),
        s.propagation.as_ref().expect("validated"),
    )
}

fn wells(s: &Scenario) -> Vec<WellParams> {
    match s.mode {
        Mode::CqftSpectra => s.sweep_v2.iter().map(|&v2| s.well.with_v2(v2)).collect(),
        Mode::EnhancementCompare => {
            let c = s.compare.as_ref().expect("validated");
            [Some(s.well), c.well, c.step]
                .into_iter()
                .flatten()
                .collect()
        }
        _ => vec![s.well],
    }
}

/// Checks every propagation guard before any compute starts.
fn preflight(s: &Scenario) -> Result<()> {
    let (grid, prop) = grid_and_propagation(s);
    for w in wells(s) {
        w.validate()?;
        Propagator::new(grid, &w, &prop.config)?;
    }
    Ok(())
}

fn level_row(sol: &ResonanceSolution, e_fit: Option<f64>) -> Vec<String> {
    vec![
        sol.level_index.to_string(),
        opt(e_fit),
        num(sol.energy.re),
        num(sol.energy.im),
        sol.method.as_str().to_string(),
    ]
}

fn level_fits(s: &Scenario) -> Result<Vec<FitResult>> {
    let samples = s.analytic.samples();
    let mut fits = Vec::new();
    for level in 1.. {
        match fit_energy_vs_height(level, &s.well, &samples) {
            Ok(f) => fits.push(f),
            Err(Error::LevelLost { .. }) if level > 1 => break,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(fits)
}

const LEVEL_HEADER: [&str; 5] = ["level", "e_fit_c2", "re_e_c2", "im_e_c2", "method"];

fn analytic_levels(s: &Scenario, out: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    let (notes, rows) = level_table(s)?;
    let path = out.join("levels.csv");
    write_table(&path, &notes, &LEVEL_HEADER, rows)?;
    files.push(path);
    Ok(())
}

/// Writes the level table of `s` to `w` instead of a file.
pub fn write_levels<W: std::io::Write>(s: &Scenario, w: W) -> Result<()> {
    let (notes, rows) = level_table(s)?;
    write_table_to(w, &notes, &LEVEL_HEADER, rows)?;
    Ok(())
}

fn level_table(s: &Scenario) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let p = &s.well;
    let mut notes = vec![well_line(p)];
    let rows: Vec<Vec<String>> = if !p.v1_supercritical() {
        notes.push("method: real-axis scan and bisection".into());
        find_bound_states(p)?
            .iter()
            .rev()
            .map(|sol| level_row(sol, None))
            .collect()
    } else if p.is_symmetric() {
        notes.push("method: Newton continuation seeded by transmission peaks".into());
        let report = find_resonances(p, None)?;
        report
            .solutions
            .iter()
            .rev()
            .map(|sol| level_row(sol, None))
            .collect()
    } else {
        notes.push(format!(
            "method: Newton continuation seeded by linear fits over V1 in [{}, {}] c2 ({} samples)",
            s.analytic.fit_range.0, s.analytic.fit_range.1, s.analytic.fit_samples
        ));
        let fits = level_fits(s)?;
        let seeds: Vec<Complex64> = fits
            .iter()
            .map(|f| Complex64::new(extrapolate_level(f, p.v1), 0.0))
            .collect();
        let report = find_resonances(p, Some(&seeds))?;
        for u in &report.unconverged {
            notes.push(format!("unconverged seed: {u}"));
        }
        // Each root keeps the level of the seed it converged from.
        let mut rows = Vec::new();
        for (f, seed) in fits.iter().zip(&seeds) {
            if let Some(sol) = report.solutions.iter().min_by(|a, b| {
                (a.energy - seed)
                    .norm()
                    .total_cmp(&(b.energy - seed).norm())
            }) {
                let mut sol = *sol;
                sol.level_index = f.level_index;
                rows.push(level_row(&sol, Some(seed.re)));
            }
        }
        rows
    };
    Ok((notes, rows))
}

fn fit_extrapolate(s: &Scenario, out: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    let fits = level_fits(s)?;
    let notes = vec![
        well_line(&s.well),
        format!(
            "fit: E = a + b*V1 over {} uniform samples; extrapolated to V1 = {} c2",
            s.analytic.fit_samples, s.well.v1
        ),
    ];
    let path = out.join("fits.csv");
    write_table(
        &path,
        &notes,
        &[
            "level",
            "intercept_c2",
            "slope",
            "r",
            "v1_min_c2",
            "v1_max_c2",
            "e_fit_c2",
        ],
        fits.iter().map(|f| {
            vec![
                f.level_index.to_string(),
                num(f.intercept),
                num(f.slope),
                num(f.correlation),
                num(f.v1_range.0),
                num(f.v1_range.1),
                num(extrapolate_level(f, s.well.v1)),
            ]
        }),
    )?;
    files.push(path);

    let samples = s.analytic.samples();
    let mut header = vec!["v1_c2".to_string()];
    header.extend(fits.iter().map(|f| format!("level_{}_c2", f.level_index)));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let path = out.join("fit_tracks.csv");
    write_table(
        &path,
        &notes[..1],
        &header,
        samples.iter().enumerate().map(|(i, v)| {
            std::iter::once(num(*v))
                .chain(fits.iter().map(|f| num(f.energies[i])))
                .collect()
        }),
    )?;
    files.push(path);
    Ok(())
}

fn symmetric_appendix(s: &Scenario, out: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    let p = &s.well;
    let window = match s.analytic.window {
        Some(w) => w,
        None => transmission_window(p)?,
    };
    let peaks = transmission_peaks(p, window)?;
    let seeds: Vec<Complex64> = peaks
        .iter()
        .map(|pk| Complex64::new(pk.energy, pk.fwhm_half))
        .collect();
    let roots = find_resonances(p, Some(&seeds))?;
    let mut rows = Vec::new();
    // Levels count down from the highest transmission peak.
    for (k, (pk, seed)) in peaks.iter().zip(&seeds).rev().enumerate() {
        let root = roots.solutions.iter().min_by(|a, b| {
            (a.energy - seed)
                .norm()
                .total_cmp(&(b.energy - seed).norm())
        });
        let (re, im) = root.map_or((None, None), |r| (Some(r.energy.re), Some(r.energy.im)));
        let re_err = re.map(|re| 100.0 * (re - pk.energy).abs() / pk.energy.abs());
        let im_err = im.map(|im| 100.0 * (im - pk.fwhm_half).abs() / pk.fwhm_half);
        rows.push(vec![
            (k + 1).to_string(),
            opt(re),
            opt(im),
            num(pk.energy),
            num(pk.fwhm_half),
            opt(re_err),
            opt(im_err),
            pk.partial.to_string(),
        ]);
    }
    let path = out.join("symmetric_levels.csv");
    write_table(
        &path,
        &[
            well_line(p),
            format!(
                "transmission window: [{}, {}] c2; half width at T_peak/2",
                window.0, window.1
            ),
        ],
        &[
            "level",
            "re_e_boud_c2",
            "im_e_boud_c2",
            "e_tran_c2",
            "fwhm_half_c2",
            "re_rel_err_pct",
            "im_rel_err_pct",
            "partial",
        ],
        rows,
    )?;
    files.push(path);
    Ok(())
}

/// Evolves the basis for one well; with `store_matrices` the full overlap
/// blocks of every snapshot are also written as `PWU1` files.
fn evolve(
    well: &WellParams,
    grid: &GridSpec,
    prop: &Propagation,
    out: &Path,
    tag: &str,
    files: &mut Vec<PathBuf>,
) -> Result<Vec<Populations>> {
    if !prop.store_matrices {
        return Ok(pairwell_core::evolve_populations(
            grid,
            well,
            &prop.config,
            prop.branches,
        )?);
    }
    let dir = out.join(format!("snapshots{tag}"));
    std::fs::create_dir_all(&dir)?;
    let mut pops = Vec::new();
    let mut k = 0;
    pairwell_core::bogoliubov_evolution_with(grid, well, &prop.config, prop.branches, |m| {
        let path = dir.join(format!("snapshot_{k:05}.pwu"));
        snapshot_io::save(&path, &m)?;
        files.push(path);
        pops.push(Populations::from_matrix(&m));
        k += 1;
        Ok(())
    })?;
    Ok(pops)
}

fn spectrum_table(path: &Path, spec: &SpectrumSeries, notes: &[String]) -> std::io::Result<()> {
    let mut notes = notes.to_vec();
    notes.push(format!(
        "species: {}; t = {} au",
        spec.species.as_str(),
        spec.time
    ));
    write_table(
        path,
        &notes,
        &["E_over_c2", "N_E"],
        spec.energy
            .iter()
            .zip(&spec.values)
            .map(|(e, v)| vec![num(*e), num(*v)]),
    )
}

fn final_spectra(
    well: &WellParams,
    grid: &GridSpec,
    pops: &[Populations],
) -> Result<Vec<SpectrumSeries>> {
    let last = pops.last().ok_or(Error::EmptyWindow)?;
    let mut out = Vec::new();
    for species in [Species::Electron, Species::Positron] {
        match population_spectrum(last, species, grid, well.c) {
            Ok(s) => out.push(s),
            Err(Error::MissingBlock(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

fn cqft_spectra(s: &Scenario, out: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    let (grid, prop) = grid_and_propagation(s);
    for well in wells(s) {
        let pops = evolve(&well, grid, prop, out, &format!("_v2_{}", well.v2), files)?;
        let notes = [well_line(&well), grid_line(grid, &prop.config)];
        for spec in final_spectra(&well, grid, &pops)? {
            let path = out.join(format!(
                "spectrum_{}_v2_{}.csv",
                spec.species.as_str(),
                well.v2
            ));
            spectrum_table(&path, &spec, &notes)?;
            files.push(path);
        }
    }
    Ok(())
}

fn timeseries_outputs(
    well: &WellParams,
    grid: &GridSpec,
    prop: &Propagation,
    pops: &[Populations],
    out: &Path,
    tag: &str,
    files: &mut Vec<PathBuf>,
) -> Result<NumberSeries> {
    let series = NumberSeries::from_populations(pops, grid, well)?;
    let notes = vec![
        well_line(well),
        grid_line(grid, &prop.config),
        format!(
            "partition: continuum-continuum for positron E <= V1 - V2 - 1 = {} c2, bound-continuum above (threshold reconstruction)",
            well.v1 - well.v2 - 1.0
        ),
    ];
    let path = out.join(format!("numbers{tag}.csv"));
    write_table(
        &path,
        &notes,
        &["t", "N_e", "N_pos", "N_cc", "N_bc"],
        (0..series.len()).map(|i| {
            vec![
                num(series.times[i]),
                opt(series.electron[i]),
                opt(series.positron[i]),
                opt(series.cc[i]),
                opt(series.bc[i]),
            ]
        }),
    )?;
    files.push(path);

    let mut peak_rows = Vec::new();
    for spec in final_spectra(well, grid, pops)? {
        let path = out.join(format!("spectrum_{}{tag}.csv", spec.species.as_str()));
        spectrum_table(&path, &spec, &notes[..2])?;
        files.push(path);
        for pk in spectrum_peaks(&spec, PEAK_FLOOR) {
            let e_res = (spec.species == Species::Positron).then(|| well.v1 - well.v2 - pk.energy);
            peak_rows.push(vec![
                spec.species.as_str().to_string(),
                num(pk.energy),
                num(pk.height),
                opt(e_res),
            ]);
        }
    }
    let path = out.join(format!("peaks{tag}.csv"));
    write_table(
        &path,
        &notes[..2],
        &["species", "E_peak_c2", "height", "E_res_c2"],
        peak_rows,
    )?;
    files.push(path);
    Ok(series)
}

fn compare_runs(s: &Scenario, out: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    let (grid, prop) = grid_and_propagation(s);
    let cmp = s.compare.as_ref().expect("validated");
    let mut run = |well: &WellParams, tag: &str| -> Result<NumberSeries> {
        let pops = evolve(well, grid, prop, out, tag, files)?;
        timeseries_outputs(well, grid, prop, &pops, out, tag, files)
    };
    let a = run(&s.well, "_asym")?;
    let b = match &cmp.well {
        Some(w) => run(w, "_well")?,
        None => a.clone(),
    };
    let c = cmp.step.as_ref().map(|w| run(w, "_step")).transpose()?;
    let r = enhancement_compare(&a, &b, c.as_ref(), cmp.window)?;
    let path = out.join("compare.csv");
    let label = |w: &Option<WellParams>| {
        w.map(|p| format!("v1={} c2, v2={} c2", p.v1, p.v2))
            .unwrap_or_else(|| "absent".into())
    };
    write_table(
        &path,
        &[
            format!("asymmetric: v1={} c2, v2={} c2", s.well.v1, s.well.v2),
            format!("well-only surrogate: {}", label(&cmp.well)),
            format!("step-only: {}", label(&cmp.step)),
            grid_line(grid, &prop.config),
            format!(
                "growth window: [{}, {}] au; positron channel",
                cmp.window.0, cmp.window.1
            ),
        ],
        &["gamma_a", "gamma_b", "gamma_c", "gamma_b_plus_c", "verdict"],
        [vec![
            num(r.gamma_a),
            num(r.gamma_b),
            num(r.gamma_c),
            num(r.sum_parts()),
            r.verdict.as_str().to_string(),
        ]],
    )?;
    files.push(path);
    Ok(())
}
