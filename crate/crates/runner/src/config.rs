//! Scenario files.
//!
//! TOML with one table per concern. Every physical value is a string with an
//! explicit unit: energies `"2.5 c2"` (or `"… au"`), lengths `"0.2 au"` or
//! `"0.3 /c"` (meaning 0.3/c a.u.), times `"1e-6 au"`.
//!
//! ```toml
//! mode = "cqft_timeseries"
//!
//! [well]
//! v1 = "2.5 c2"
//! v2 = "0.25 c2"
//! d = "0.2 au"
//! w = "0.3 /c"
//!
//! [grid]
//! n_z = 1024
//! box_length = "8 au"
//!
//! [propagation]
//! dt = "1.5e-6 au"
//! t_end = "0.01 au"
//! snapshot_every = 100
//! ```

use std::fmt;

use pairwell_core::{BranchSelection, GridSpec, PropagatorConfig, WellParams, SPEED_OF_LIGHT};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    AnalyticLevels,
    SymmetricAppendix,
    FitExtrapolate,
    CqftSpectra,
    CqftTimeseries,
    EnhancementCompare,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::AnalyticLevels => "analytic_levels",
            Mode::SymmetricAppendix => "symmetric_appendix",
            Mode::FitExtrapolate => "fit_extrapolate",
            Mode::CqftSpectra => "cqft_spectra",
            Mode::CqftTimeseries => "cqft_timeseries",
            Mode::EnhancementCompare => "enhancement_compare",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            Mode::AnalyticLevels,
            Mode::SymmetricAppendix,
            Mode::FitExtrapolate,
            Mode::CqftSpectra,
            Mode::CqftTimeseries,
            Mode::EnhancementCompare,
        ]
        .into_iter()
        .find(|m| m.name() == s)
    }

    pub fn is_cqft(self) -> bool {
        matches!(
            self,
            Mode::CqftSpectra | Mode::CqftTimeseries | Mode::EnhancementCompare
        )
    }
}

/// All problems found in a config, one line per field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid scenario:")?;
        for e in &self.0 {
            writeln!(f, "  {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    mode: Option<String>,
    well: Option<RawWell>,
    grid: Option<RawGrid>,
    propagation: Option<RawPropagation>,
    analytic: Option<RawAnalytic>,
    sweep: Option<RawSweep>,
    compare: Option<RawCompare>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWell {
    v1: Option<String>,
    v2: Option<String>,
    d: Option<String>,
    w: Option<String>,
    c: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    n_z: Option<usize>,
    box_length: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPropagation {
    dt: Option<String>,
    t_end: Option<String>,
    snapshot_every: Option<usize>,
    branches: Option<String>,
    store_matrices: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnalytic {
    fit_samples: Option<usize>,
    fit_range: Option<[String; 2]>,
    window: Option<[String; 2]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    v2: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCompare {
    well: Option<RawHeights>,
    step: Option<RawHeights>,
    window: Option<[String; 2]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHeights {
    v1: Option<String>,
    v2: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub config: PropagatorConfig,
    pub branches: BranchSelection,
    pub store_matrices: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticOptions {
    pub fit_samples: usize,
    pub fit_range: (f64, f64),
    /// Energy window for transmission scans (c²); defaults to the overlap window.
    pub window: Option<(f64, f64)>,
}

impl Default for AnalyticOptions {
    fn default() -> Self {
        Self {
            fit_samples: pairwell_core::resonance::FIT_SAMPLES,
            fit_range: pairwell_core::resonance::FIT_RANGE,
            window: None,
        }
    }
}

impl AnalyticOptions {
    pub fn samples(&self) -> Vec<f64> {
        let (a, b) = self.fit_range;
        let n = self.fit_samples;
        (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Compare {
    /// Well-only surrogate.
    pub well: Option<WellParams>,
    /// Step-only configuration.
    pub step: Option<WellParams>,
    /// Time window for the growth-rate fits (a.u.).
    pub window: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub mode: Mode,
    pub well: WellParams,
    pub grid: Option<GridSpec>,
    pub propagation: Option<Propagation>,
    pub analytic: AnalyticOptions,
    /// V₂ values (c²) for `cqft_spectra`; defaults to the well's own V₂.
    pub sweep_v2: Vec<f64>,
    pub compare: Option<Compare>,
}

#[derive(Clone, Copy)]
enum Kind {
    Energy,
    Length,
    Time,
}

/// Parses `"<number> <unit>"`.
fn quantity(text: &str, kind: Kind, c: f64) -> Result<f64, String> {
    let text = text.trim();
    let split = text
        .find(|ch: char| ch.is_whitespace() || ch == '/')
        .ok_or_else(|| format!("`{text}` has no unit"))?;
    let (num, unit) = text.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("`{num}` is not a number"))?;
    if !value.is_finite() {
        return Err(format!("`{num}` is not finite"));
    }
    let unit: String = unit.chars().filter(|ch| !ch.is_whitespace()).collect();
    match (kind, unit.as_str()) {
        (Kind::Energy, "c2" | "c^2") => Ok(value),
        (Kind::Energy, "au") => Ok(value / (c * c)),
        (Kind::Length, "au") | (Kind::Time, "au") => Ok(value),
        (Kind::Length, "/c") => Ok(value / c),
        (Kind::Energy, u) => Err(format!("unit `{u}` is not an energy unit (c2, au)")),
        (Kind::Length, u) => Err(format!("unit `{u}` is not a length unit (au, /c)")),
        (Kind::Time, u) => Err(format!("unit `{u}` is not a time unit (au)")),
    }
}

struct Collector {
    errors: Vec<String>,
    c: f64,
}

impl Collector {
    fn get(&mut self, field: &str, raw: Option<&String>, kind: Kind) -> Option<f64> {
        match raw {
            None => {
                self.errors.push(format!("{field}: missing"));
                None
            }
            Some(s) => self.parse(field, s, kind),
        }
    }

    fn parse(&mut self, field: &str, raw: &str, kind: Kind) -> Option<f64> {
        match quantity(raw, kind, self.c) {
            Ok(v) => Some(v),
            Err(e) => {
                self.errors.push(format!("{field}: {e}"));
                None
            }
        }
    }

    fn pair(&mut self, field: &str, raw: &[String; 2], kind: Kind) -> Option<(f64, f64)> {
        let a = self.parse(&format!("{field}[0]"), &raw[0], kind);
        let b = self.parse(&format!("{field}[1]"), &raw[1], kind);
        let (a, b) = (a?, b?);
        if a >= b {
            self.errors
                .push(format!("{field}: lower bound must be below upper"));
            return None;
        }
        Some((a, b))
    }

    fn check<T>(&mut self, field: &str, r: pairwell_core::Result<T>) -> Option<T> {
        r.map_err(|e| self.errors.push(format!("{field}: {e}")))
            .ok()
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ConfigErrors> {
        let raw: RawScenario =
            toml::from_str(text).map_err(|e| ConfigErrors(vec![format!("syntax: {e}")]))?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawScenario) -> Result<Self, ConfigErrors> {
        let mut col = Collector {
            errors: Vec::new(),
            c: SPEED_OF_LIGHT,
        };
        let mode = match raw.mode.as_deref() {
            None => {
                col.errors.push("mode: missing".into());
                None
            }
            Some(m) => {
                let parsed = Mode::parse(m);
                if parsed.is_none() {
                    col.errors.push(format!("mode: unknown mode `{m}`"));
                }
                parsed
            }
        };

        let well_raw = raw.well.unwrap_or_default();
        if let Some(c) = &well_raw.c {
            if let Some(v) = col.parse("well.c", c, Kind::Length) {
                col.c = v;
            }
        }
        let v1 = col.get("well.v1", well_raw.v1.as_ref(), Kind::Energy);
        let v2 = col.get("well.v2", well_raw.v2.as_ref(), Kind::Energy);
        let d = col.get("well.d", well_raw.d.as_ref(), Kind::Length);
        let cqft = mode.is_some_and(Mode::is_cqft);
        let w = match &well_raw.w {
            Some(s) => col.parse("well.w", s, Kind::Length),
            None if cqft => {
                col.errors
                    .push("well.w: missing (grid modes need a smooth well)".into());
                None
            }
            None => Some(0.0),
        };
        let well = match (v1, v2, d, w) {
            (Some(v1), Some(v2), Some(d), Some(w)) => {
                col.check("well", WellParams::new(v1, v2, w, d, col.c))
            }
            _ => None,
        };
        if cqft && well.is_some_and(|p| p.w == 0.0) {
            col.errors
                .push("well.w: grid modes need w > 0 (a sharp wall cannot be sampled)".into());
        }

        let mut grid = None;
        let mut propagation = None;
        if cqft {
            let g = raw.grid.unwrap_or_default();
            let n = g.n_z;
            if n.is_none() {
                col.errors.push("grid.n_z: missing".into());
            }
            let l = col.get("grid.box_length", g.box_length.as_ref(), Kind::Length);
            if let (Some(n), Some(l)) = (n, l) {
                grid = col.check("grid", GridSpec::new(n, l));
            }

            let p = raw.propagation.unwrap_or_default();
            let dt = col.get("propagation.dt", p.dt.as_ref(), Kind::Time);
            let t_end = col.get("propagation.t_end", p.t_end.as_ref(), Kind::Time);
            let every = p.snapshot_every.unwrap_or(1);
            if every == 0 {
                col.errors
                    .push("propagation.snapshot_every: must be ≥ 1".into());
            }
            let branches = match p.branches.as_deref() {
                None => Some(match mode {
                    Some(Mode::CqftSpectra) | Some(Mode::EnhancementCompare) => {
                        BranchSelection::Positive
                    }
                    _ => BranchSelection::Both,
                }),
                Some("negative") => Some(BranchSelection::Negative),
                Some("positive") => Some(BranchSelection::Positive),
                Some("both") => Some(BranchSelection::Both),
                Some(other) => {
                    col.errors.push(format!(
                        "propagation.branches: `{other}` (expected negative, positive or both)"
                    ));
                    None
                }
            };
            if let (Some(dt), Some(t_end), Some(branches)) = (dt, t_end, branches) {
                if let Some(cfg) = col.check(
                    "propagation",
                    PropagatorConfig::uniform(dt, t_end, every.max(1)),
                ) {
                    if (cfg.total_time() - t_end).abs() > 1e-9 * t_end {
                        col.errors.push(format!(
                            "propagation.t_end: {t_end} is not a multiple of dt = {dt}"
                        ));
                    }
                    propagation = Some(Propagation {
                        config: cfg,
                        branches,
                        store_matrices: p.store_matrices.unwrap_or(false),
                    });
                }
            }
        } else {
            if raw.grid.is_some() {
                col.errors.push("grid: only used by cqft modes".into());
            }
            if raw.propagation.is_some() {
                col.errors
                    .push("propagation: only used by cqft modes".into());
            }
        }

        let mut analytic = AnalyticOptions::default();
        if let Some(a) = raw.analytic {
            if let Some(n) = a.fit_samples {
                if n < 10 {
                    col.errors
                        .push(format!("analytic.fit_samples: {n} < 10 samples"));
                }
                analytic.fit_samples = n;
            }
            if let Some(r) = &a.fit_range {
                if let Some(r) = col.pair("analytic.fit_range", r, Kind::Energy) {
                    analytic.fit_range = r;
                }
            }
            if let Some(w) = &a.window {
                analytic.window = col.pair("analytic.window", w, Kind::Energy);
            }
        }

        let mut sweep_v2 = Vec::new();
        if let Some(s) = raw.sweep {
            if mode != Some(Mode::CqftSpectra) {
                col.errors.push("sweep: only used by cqft_spectra".into());
            }
            for (i, v) in s.v2.unwrap_or_default().iter().enumerate() {
                if let Some(v) = col.parse(&format!("sweep.v2[{i}]"), v, Kind::Energy) {
                    sweep_v2.push(v);
                }
            }
        }
        if sweep_v2.is_empty() {
            if let Some(p) = well {
                sweep_v2.push(p.v2);
            }
        }

        let mut compare = None;
        if mode == Some(Mode::EnhancementCompare) {
            let cmp = raw.compare.unwrap_or_default();
            let mut heights = |name: &str, h: Option<RawHeights>| -> Option<WellParams> {
                let h = h?;
                let v1 = col.get(&format!("compare.{name}.v1"), h.v1.as_ref(), Kind::Energy);
                let v2 = col.get(&format!("compare.{name}.v2"), h.v2.as_ref(), Kind::Energy);
                let base = well?;
                col.check("compare", WellParams::new(v1?, v2?, base.w, base.d, base.c))
            };
            let w = heights("well", cmp.well);
            let s = heights("step", cmp.step);
            let window = match &cmp.window {
                Some(r) => col.pair("compare.window", r, Kind::Time),
                None => {
                    col.errors.push("compare.window: missing".into());
                    None
                }
            };
            if let Some(window) = window {
                compare = Some(Compare {
                    well: w,
                    step: s,
                    window,
                });
            }
        } else if raw.compare.is_some() {
            col.errors
                .push("compare: only used by enhancement_compare".into());
        }

        if let (Some(Mode::SymmetricAppendix), Some(p)) = (mode, well) {
            if !p.is_symmetric() {
                col.errors
                    .push("well: symmetric_appendix needs v1 = v2".into());
            }
        }
        if let (Some(Mode::FitExtrapolate), Some(p)) = (mode, well) {
            if p.v1_supercritical() && p.v2_supercritical() {
                col.errors
                    .push("well.v2: fits need a subcritical V2".into());
            }
        }

        if !col.errors.is_empty() {
            return Err(ConfigErrors(col.errors));
        }
        Ok(Scenario {
            mode: mode.expect("checked"),
            well: well.expect("checked"),
            grid,
            propagation,
            analytic,
            sweep_v2,
            compare,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn units() {
        let c = SPEED_OF_LIGHT;
        assert_eq!(quantity("2.5 c2", Kind::Energy, c).unwrap(), 2.5);
        assert_eq!(quantity("0.3 /c", Kind::Length, c).unwrap(), 0.3 / c);
        assert_eq!(quantity("10/c", Kind::Length, c).unwrap(), 10.0 / c);
        assert_eq!(quantity("1e-6 au", Kind::Time, c).unwrap(), 1e-6);
        assert!((quantity("18778.865 au", Kind::Energy, c).unwrap() - 1.0).abs() < 1e-6);
        assert!(quantity("2.5", Kind::Energy, c).is_err());
        assert!(quantity("2.5 au", Kind::Energy, c).is_ok());
        assert!(quantity("0.2 c2", Kind::Length, c).is_err());
        assert!(quantity("abc au", Kind::Time, c).is_err());
    }

    #[test]
    fn empty_config_names_missing_fields() {
        let err = Scenario::from_toml("").unwrap_err();
        let text = err.to_string();
        for field in ["mode", "well.v1", "well.v2", "well.d"] {
            assert!(text.contains(field), "{text}");
        }
    }

    #[test]
    fn analytic_scenario() {
        let s = Scenario::from_toml(
            r#"
            mode = "analytic_levels"
            [well]
            v1 = "2.5 c2"
            v2 = "0.25 c2"
            d = "0.2 au"
            "#,
        )
        .unwrap();
        assert_eq!(s.mode, Mode::AnalyticLevels);
        assert_eq!(s.well.w, 0.0);
        assert!(s.grid.is_none());
    }

    #[test]
    fn cqft_scenario_and_guards_in_config() {
        let base = r#"
            mode = "cqft_timeseries"
            [well]
            v1 = "2.5 c2"
            v2 = "0.25 c2"
            d = "0.2 au"
            w = "0.3 /c"
            [grid]
            n_z = 256
            box_length = "8 au"
            [propagation]
            dt = "1e-6 au"
            t_end = "1e-4 au"
            snapshot_every = 10
        "#;
        let s = Scenario::from_toml(base).unwrap();
        assert_eq!(s.propagation.as_ref().unwrap().config.n_steps, 100);
        assert_eq!(s.propagation.unwrap().branches, BranchSelection::Both);

        let bad = base
            .replace("n_z = 256", "n_z = 300")
            .replace("\"0.3 /c\"", "\"0 au\"");
        let err = Scenario::from_toml(&bad).unwrap_err().0;
        assert!(err.iter().any(|e| e.starts_with("grid")));
        assert!(err.iter().any(|e| e.starts_with("well.w")));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Scenario::from_toml("mode = \"analytic_levels\"\nbogus = 1").is_err());
    }
}
