//! Scenario files.
//!
//! Flat `key = value` lines grouped under `[pv]`, `[converter]`,
//! `[controller]`, `[sim]` and any number of `[env]` sections. `#` starts a
//! comment. Every key is optional; omitted keys take the defaults below.
//!
//! ```text
//! [pv]
//! params = cell        # cell | module
//! i_ph = 3.31
//! i_01 = 1.9795e-10
//! r_s = 0.01
//! r_sh = 150
//! n_s = 36
//!
//! [converter]
//! r_d = 1000
//!
//! [controller]
//! controller = flc     # flc | po | ic
//! k = 500
//!
//! [sim]
//! duration = 0.5
//! v_pv0 = 10
//!
//! [env]
//! start = 0.3
//! i_ph = 2.0
//! ```
//!
//! With `params = cell` the electrical values are per cell and are scaled
//! by `n_s`, `n_p`; with `params = module` they are taken as terminal
//! values. `[env]` photocurrents are always module-level.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::control::{BaselineConfig, ControllerGains, ControllerKind, OuterLoopConfig};
use crate::converter::{ConverterParams, PlantState};
use crate::pv_model::{scale_to_module, CellParams, DiodeModel, PVModuleParams};
use crate::{Error, Result};

/// Photocurrent and temperature applied from `start` onwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvSegment {
    pub start: f64,
    pub i_ph: f64,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub pv: PVModuleParams,
    pub converter: ConverterParams,
    pub controller: ControllerKind,
    pub gains: ControllerGains,
    pub outer: OuterLoopConfig,
    pub baseline: BaselineConfig,
    pub initial_state: PlantState,
    pub duration: f64,
    /// Time-ordered, first segment starts at 0.
    pub environment: Vec<EnvSegment>,
    pub seed: u64,
    pub output_decimation: usize,
    /// Integration steps per switching period.
    pub substeps: usize,
}

impl Default for ScenarioConfig {
    /// Kyocera module, default converter with parasitics, FLC controller,
    /// `v_pv(0) = 10 V`, `v_c(0) = 0`, `i_L(0) = 0.1 A`, 0.5 s.
    fn default() -> Self {
        let pv = PVModuleParams::kyocera();
        ScenarioConfig {
            pv,
            converter: ConverterParams::default(),
            controller: ControllerKind::Flc,
            gains: ControllerGains::default(),
            outer: OuterLoopConfig::default(),
            baseline: BaselineConfig::default(),
            initial_state: PlantState::new(10.0, 0.0, 0.1),
            duration: 0.5,
            environment: vec![EnvSegment {
                start: 0.0,
                i_ph: pv.i_ph,
                temperature: pv.temperature,
            }],
            seed: 0,
            output_decimation: 10,
            substeps: 10,
        }
    }
}

impl ScenarioConfig {
    /// Integration step `Ts/substeps`.
    pub fn dt(&self) -> f64 {
        self.converter.t_s / self.substeps as f64
    }

    /// Module parameters in force at time `t`.
    pub fn pv_at(&self, t: f64) -> PVModuleParams {
        let seg = self.segment_at(t);
        self.pv.with_photocurrent(seg.i_ph).with_temperature(seg.temperature)
    }

    pub fn segment_at(&self, t: f64) -> EnvSegment {
        let idx = self.environment.partition_point(|s| s.start <= t);
        self.environment[idx.saturating_sub(1)]
    }

    pub fn validate(&self) -> Result<()> {
        self.pv.validate()?;
        self.converter.validate()?;
        self.gains.validate()?;
        self.outer.validate(self.converter.t_s)?;
        if !(self.baseline.dv.is_finite() && self.baseline.dv > 0.0) {
            return Err(Error::validation("dv", "must be finite and > 0"));
        }
        if !(self.baseline.ic_threshold.is_finite() && self.baseline.ic_threshold >= 0.0) {
            return Err(Error::validation("ic_threshold", "must be finite and >= 0"));
        }
        if !self.initial_state.is_finite() {
            return Err(Error::validation("initial_state", "must be finite"));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::validation("duration", "must be finite and > 0"));
        }
        if self.output_decimation == 0 {
            return Err(Error::validation("output_decimation", "must be >= 1"));
        }
        if self.substeps == 0 {
            return Err(Error::validation("substeps", "must be >= 1"));
        }
        match self.environment.first() {
            Some(s) if s.start == 0.0 => {}
            _ => return Err(Error::validation("env.start", "the first segment must start at 0")),
        }
        for w in self.environment.windows(2) {
            if !(w[1].start > w[0].start) {
                return Err(Error::validation("env.start", "segments must be strictly time-ordered"));
            }
        }
        for s in &self.environment {
            if !(s.i_ph.is_finite() && s.i_ph >= 0.0) {
                return Err(Error::validation("env.i_ph", "must be finite and >= 0"));
            }
            if !(s.temperature.is_finite() && s.temperature > 0.0) {
                return Err(Error::validation("env.temperature", "must be > 0 K"));
            }
        }
        Ok(())
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text, path)
}

/// Parses scenario text; `origin` only labels diagnostics.
pub fn parse_scenario(text: &str, origin: &Path) -> Result<ScenarioConfig> {
    let sections = split_sections(text, origin)?;
    let mut cfg = ScenarioConfig::default();
    let mut pv_section = None;
    let mut env_sections = Vec::new();
    let mut seen = HashMap::new();

    for section in &sections {
        if section.name != "env" {
            if let Some(first) = seen.insert(section.name.clone(), section.line) {
                return Err(parse_error(
                    origin,
                    section.line,
                    format!("duplicate section [{}] (first at line {first})", section.name),
                ));
            }
        }
        let mut r = SectionReader::new(section, origin);
        match section.name.as_str() {
            "pv" => pv_section = Some(section),
            "converter" => {
                let c = &mut cfg.converter;
                r.f64("c", &mut c.c)?;
                r.f64("l", &mut c.l)?;
                r.f64("c_pv", &mut c.c_pv)?;
                r.f64("r", &mut c.r)?;
                r.f64("r_c", &mut c.r_c)?;
                r.f64("r_l", &mut c.r_l)?;
                r.f64("r_on", &mut c.r_on)?;
                r.f64("r_d", &mut c.r_d)?;
                r.f64("v_d", &mut c.v_d)?;
                r.f64("t_s", &mut c.t_s)?;
                r.finish()?;
            }
            "controller" => {
                r.parsed("controller", &mut cfg.controller)?;
                r.f64("k", &mut cfg.gains.k)?;
                r.f64("i_l_min", &mut cfg.gains.i_l_min)?;
                r.f64("d_min", &mut cfg.gains.d_min)?;
                r.f64("d_max", &mut cfg.gains.d_max)?;
                r.f64("soft_start_duty", &mut cfg.gains.soft_start_duty)?;
                r.parsed("step_mode", &mut cfg.outer.step_mode)?;
                r.f64("delta_r", &mut cfg.outer.delta_r)?;
                r.f64("delta_g", &mut cfg.outer.delta_g)?;
                r.f64("kappa_r", &mut cfg.outer.kappa_r)?;
                r.f64("kappa_g", &mut cfg.outer.kappa_g)?;
                r.f64("update_period", &mut cfg.outer.update_period)?;
                r.f64("convergence_eps", &mut cfg.outer.convergence_eps)?;
                r.f64("dv", &mut cfg.baseline.dv)?;
                r.f64("ic_threshold", &mut cfg.baseline.ic_threshold)?;
                r.finish()?;
            }
            "sim" => {
                r.f64("duration", &mut cfg.duration)?;
                r.f64("v_pv0", &mut cfg.initial_state.v_pv)?;
                r.f64("v_c0", &mut cfg.initial_state.v_c)?;
                r.f64("i_l0", &mut cfg.initial_state.i_l)?;
                r.parsed("seed", &mut cfg.seed)?;
                r.parsed("output_decimation", &mut cfg.output_decimation)?;
                r.parsed("substeps", &mut cfg.substeps)?;
                r.finish()?;
            }
            "env" => env_sections.push(section),
            other => {
                return Err(parse_error(
                    origin,
                    section.line,
                    format!("unknown section [{other}]; expected pv, converter, controller, sim or env"),
                ))
            }
        }
    }

    if let Some(section) = pv_section {
        cfg.pv = read_pv(section, origin)?;
    }

    cfg.environment.clear();
    let mut current = EnvSegment {
        start: 0.0,
        i_ph: cfg.pv.i_ph,
        temperature: cfg.pv.temperature,
    };
    for section in env_sections {
        let mut r = SectionReader::new(section, origin);
        r.f64("start", &mut current.start)?;
        r.f64("i_ph", &mut current.i_ph)?;
        r.f64("temperature", &mut current.temperature)?;
        r.finish()?;
        if cfg.environment.is_empty() && current.start > 0.0 {
            cfg.environment.push(EnvSegment {
                start: 0.0,
                i_ph: cfg.pv.i_ph,
                temperature: cfg.pv.temperature,
            });
        }
        cfg.environment.push(current);
    }
    if cfg.environment.is_empty() {
        cfg.environment.push(current);
    }

    cfg.validate()?;
    Ok(cfg)
}

fn read_pv(section: &Section, origin: &Path) -> Result<PVModuleParams> {
    let mut r = SectionReader::new(section, origin);
    let mut level = String::from("cell");
    r.parsed("params", &mut level)?;
    let mut model = DiodeModel::OneDiode;
    r.parsed("model", &mut model)?;
    let mut cell = CellParams::kyocera();
    let mut i_02 = f64::NAN;
    r.f64("i_ph", &mut cell.i_ph)?;
    r.f64("i_01", &mut cell.i_01)?;
    r.f64("i_02", &mut i_02)?;
    r.f64("r_s", &mut cell.r_s)?;
    r.f64("r_sh", &mut cell.r_sh)?;
    r.f64("n1", &mut cell.n1)?;
    r.f64("n2", &mut cell.n2)?;
    r.f64("temperature", &mut cell.temperature)?;
    let (mut n_s, mut n_p) = (36u32, 1u32);
    r.parsed("n_s", &mut n_s)?;
    r.parsed("n_p", &mut n_p)?;
    r.finish()?;

    if model != DiodeModel::OneDiode {
        return Err(Error::validation(
            "model",
            "the converter plant uses the one-diode model",
        ));
    }
    if !i_02.is_nan() {
        cell.i_02 = Some(i_02);
    }
    if n_s == 0 {
        return Err(Error::validation("n_s", "must be >= 1"));
    }
    if n_p == 0 {
        return Err(Error::validation("n_p", "must be >= 1"));
    }
    let pv = match level.as_str() {
        "cell" => {
            cell.validate()?;
            scale_to_module(&cell, n_s, n_p)
        }
        "module" => PVModuleParams::from_module_values(
            cell.i_ph,
            cell.i_01,
            cell.i_02,
            cell.r_s,
            cell.r_sh,
            cell.n1,
            cell.n2,
            cell.temperature,
            n_s,
            n_p,
        ),
        other => {
            return Err(Error::validation(
                "params",
                format!("expected cell | module, got `{other}`"),
            ))
        }
    };
    pv.validate()?;
    Ok(pv)
}

fn parse_error(origin: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: origin.to_path_buf(),
        line,
        message: message.into(),
    }
}

struct Entry {
    key: String,
    value: String,
    line: usize,
}

struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

fn split_sections(text: &str, origin: &Path) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| parse_error(origin, line, "unterminated section header"))?
                .trim();
            if name.is_empty() {
                return Err(parse_error(origin, line, "empty section name"));
            }
            sections.push(Section {
                name: name.to_string(),
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| parse_error(origin, line, format!("expected `key = value`, got `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(parse_error(origin, line, "missing key"));
        }
        if value.is_empty() {
            return Err(parse_error(origin, line, format!("missing value for `{key}`")));
        }
        let section = sections
            .last_mut()
            .ok_or_else(|| parse_error(origin, line, format!("`{key}` appears before any section header")))?;
        if let Some(prev) = section.entries.iter().find(|e| e.key == key) {
            return Err(parse_error(
                origin,
                line,
                format!("duplicate key `{key}` (first at line {})", prev.line),
            ));
        }
        section.entries.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
            line,
        });
    }
    Ok(sections)
}

struct SectionReader<'a> {
    section: &'a Section,
    origin: &'a Path,
    used: Vec<bool>,
}

impl<'a> SectionReader<'a> {
    fn new(section: &'a Section, origin: &'a Path) -> Self {
        SectionReader {
            section,
            origin,
            used: vec![false; section.entries.len()],
        }
    }

    fn parsed<T>(&mut self, key: &str, slot: &mut T) -> Result<()>
    where
        T: std::str::FromStr,
    {
        let Some(idx) = self.section.entries.iter().position(|e| e.key == key) else {
            return Ok(());
        };
        self.used[idx] = true;
        let entry = &self.section.entries[idx];
        *slot = entry.value.parse().map_err(|_| {
            parse_error(
                self.origin,
                entry.line,
                format!("cannot parse `{}` as the value of `{key}`", entry.value),
            )
        })?;
        Ok(())
    }

    fn f64(&mut self, key: &str, slot: &mut f64) -> Result<()> {
        self.parsed(key, slot)
    }

    fn finish(self) -> Result<()> {
        match self.used.iter().position(|u| !u) {
            None => Ok(()),
            Some(idx) => {
                let entry = &self.section.entries[idx];
                Err(parse_error(
                    self.origin,
                    entry.line,
                    format!("unknown key `{}` in [{}]", entry.key, self.section.name),
                ))
            }
        }
    }
}

/// Scenario files shipped with the crate, by file name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("kyocera_v10.scn", include_str!("../../scenarios/kyocera_v10.scn")),
    ("kyocera_v20.scn", include_str!("../../scenarios/kyocera_v20.scn")),
    ("kyocera_step.scn", include_str!("../../scenarios/kyocera_step.scn")),
];

/// Parses a bundled scenario by file name.
pub fn bundled(name: &str) -> Result<ScenarioConfig> {
    let (_, text) = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::validation("scenario", format!("no bundled scenario named `{name}`")))?;
    parse_scenario(text, &PathBuf::from(name))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ScenarioConfig> {
        parse_scenario(text, Path::new("test.scn"))
    }

    #[test]
    fn bundled_v10_matches_reference_setup() {
        let cfg = bundled("kyocera_v10.scn").unwrap();
        assert_eq!(cfg.initial_state.v_pv, 10.0);
        let c = cfg.converter;
        assert_eq!((c.r_c, c.r_l, c.r_on, c.r_d), (1.0, 1.0, 1.0, 1000.0));
        assert_eq!(cfg.pv, PVModuleParams::kyocera());
        assert_eq!(cfg.controller, ControllerKind::Flc);
    }

    #[test]
    fn bundled_files_all_parse() {
        for (name, _) in BUNDLED {
            bundled(name).unwrap();
        }
        let step = bundled("kyocera_step.scn").unwrap();
        assert_eq!(step.environment.len(), 2);
        assert_eq!(step.environment[1].i_ph, 2.0);
    }

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(parse("").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn omitted_diode_drop_defaults() {
        let cfg = parse("[converter]\nr_d = 1000\n").unwrap();
        assert_eq!(cfg.converter.v_d, 0.7);
    }

    #[test]
    fn negative_duration_names_field() {
        let err = parse("[sim]\nduration = -1\n").unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "duration"), "{err}");
    }

    #[test]
    fn unknown_key_has_line() {
        let err = parse("[sim]\nduration = 1\n\n[converter]\nbogus = 3\n").unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 5);
                assert!(message.contains("bogus"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn malformed_lines() {
        for (text, line) in [
            ("[sim\n", 1),
            ("duration = 1\n", 1),
            ("[sim]\nduration 1\n", 2),
            ("[sim]\nduration = abc\n", 2),
            ("[sim]\nduration = 1\nduration = 2\n", 3),
            ("[sim]\n[sim]\n", 2),
            ("[weather]\n", 1),
        ] {
            match parse(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn module_level_values() {
        let cfg = parse("[pv]\nparams = module\nr_s = 0.36\nr_sh = 5400\n").unwrap();
        assert_eq!(cfg.pv.r_s, 0.36);
        assert_eq!(cfg.pv.r_sh, 5400.0);
        assert!((cfg.pv.v_t - PVModuleParams::kyocera().v_t).abs() < 1e-15);
    }

    #[test]
    fn environment_segments() {
        let cfg = parse("[env]\nstart = 0.2\ni_ph = 2\n[env]\nstart = 0.4\ntemperature = 310\n").unwrap();
        assert_eq!(cfg.environment.len(), 3);
        assert_eq!(cfg.environment[0].start, 0.0);
        assert_eq!(cfg.environment[2].i_ph, 2.0);
        assert_eq!(cfg.environment[2].temperature, 310.0);
        assert_eq!(cfg.segment_at(0.1).i_ph, 3.31);
        assert_eq!(cfg.segment_at(0.2).i_ph, 2.0);
        assert_eq!(cfg.pv_at(0.5).temperature, 310.0);

        let err = parse("[env]\nstart = 0.4\n[env]\nstart = 0.2\n").unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "env.start"));
    }

    #[test]
    fn comments_and_whitespace() {
        let cfg = parse("# header\n  [sim]  \n  duration   =  0.25  # short\n").unwrap();
        assert_eq!(cfg.duration, 0.25);
    }
}
