//! Run configuration: embedded presets and a flat TOML format whose keys
//! override a preset one at a time.
//!
//! ```toml
//! preset = "iii"
//! n_zeta = 768
//! probes = [1.5]
//! ```

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, MIN_N_EPS, MIN_N_ZETA};
use crate::model::{Potential, PotentialKind, RelaxationKind, RelaxationModel};
use crate::solver::{Scenario, SolverSettings};
use crate::transport::{Incident, TrappedClosure};

/// One row of the reference case table, with its reference rate fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Preset {
    pub id: &'static str,
    pub potential: PotentialKind,
    pub relaxation: RelaxationKind,
    pub t_inf: f64,
    pub v_inf: f64,
    pub reference_a: f64,
    pub reference_b: f64,
}

const ALG4: RelaxationKind = RelaxationKind::Algebraic { nu: 4.0 };

pub const PRESETS: [Preset; 8] = [
    Preset {
        id: "i",
        potential: PotentialKind::Lj12_6,
        relaxation: RelaxationKind::Algebraic { nu: 7.0 },
        t_inf: 1.0,
        v_inf: -0.5,
        reference_a: 0.06556,
        reference_b: -1.127,
    },
    Preset {
        id: "ii",
        potential: PotentialKind::Lj12_6,
        relaxation: RelaxationKind::Exponential,
        t_inf: 1.0,
        v_inf: -0.5,
        reference_a: 0.06226,
        reference_b: -1.221,
    },
    Preset {
        id: "iii",
        potential: PotentialKind::Lj9_3,
        relaxation: ALG4,
        t_inf: 1.0,
        v_inf: -0.5,
        reference_a: 0.08827,
        reference_b: -0.7568,
    },
    Preset {
        id: "iv",
        potential: PotentialKind::Lj9_3,
        relaxation: RelaxationKind::Exponential,
        t_inf: 1.0,
        v_inf: -0.5,
        reference_a: 0.08193,
        reference_b: -0.9159,
    },
    Preset {
        id: "v",
        potential: PotentialKind::Lj9_3,
        relaxation: ALG4,
        t_inf: 1.0,
        v_inf: 0.5,
        reference_a: 0.08827,
        reference_b: -1.932,
    },
    Preset {
        id: "vi",
        potential: PotentialKind::Lj9_3,
        relaxation: ALG4,
        t_inf: 0.6,
        v_inf: 0.0,
        reference_a: 0.08827,
        reference_b: -1.466,
    },
    Preset {
        id: "vii",
        potential: PotentialKind::Lj9_3,
        relaxation: ALG4,
        t_inf: 0.6,
        v_inf: -0.5,
        reference_a: 0.08827,
        reference_b: -0.8125,
    },
    Preset {
        id: "viii",
        potential: PotentialKind::Lj9_3,
        relaxation: ALG4,
        t_inf: 1.0,
        v_inf: 0.0,
        reference_a: 0.08827,
        reference_b: -1.266,
    },
];

/// Looks a preset up by its roman numeral, case-insensitively.
pub fn preset(id: &str) -> Option<&'static Preset> {
    let id = id.trim().to_ascii_lowercase();
    PRESETS.iter().find(|p| p.id == id)
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub preset: Option<String>,
    pub potential: PotentialKind,
    pub kappa: f64,
    pub relaxation: RelaxationKind,
    pub kappa_tau: f64,
    pub sigma: f64,
    pub t_inf: f64,
    pub v_inf: f64,
    pub n_eps: usize,
    pub n_zeta: usize,
    pub eps_max: f64,
    pub zeta_max: f64,
    pub tol: f64,
    /// Target relative accuracy of `n(zeta_min)` under grid refinement.
    pub disc_tol: f64,
    pub k_max: usize,
    pub k_min: usize,
    pub closure: TrappedClosure,
    pub out: PathBuf,
    pub probes: Vec<f64>,
    pub cuts: Vec<f64>,
    /// Also solve from the equilibrium start and compare.
    pub check_uniqueness: bool,
}

impl Default for ScenarioConfig {
    /// Equilibrium input on the 9-3 potential with the default grid.
    fn default() -> Self {
        let s = SolverSettings::default();
        ScenarioConfig {
            name: "custom".into(),
            preset: None,
            potential: PotentialKind::Lj9_3,
            kappa: 1.0,
            relaxation: ALG4,
            kappa_tau: 1.0,
            sigma: 1.0,
            t_inf: 1.0,
            v_inf: 0.0,
            n_eps: 256,
            n_zeta: 1024,
            eps_max: 20.0,
            zeta_max: 50.0,
            tol: s.tol,
            disc_tol: 1e-6,
            k_max: s.k_max,
            k_min: s.k_min,
            closure: s.closure,
            out: PathBuf::from("out"),
            probes: Vec::new(),
            cuts: Vec::new(),
            check_uniqueness: false,
        }
    }
}

const KEYS: &[&str] = &[
    "preset",
    "name",
    "potential",
    "kappa",
    "relaxation",
    "kappa_tau",
    "sigma",
    "nu",
    "t_inf",
    "v_inf",
    "n_eps",
    "n_zeta",
    "eps_max",
    "zeta_max",
    "tol",
    "disc_tol",
    "k_max",
    "k_min",
    "closure",
    "out",
    "probes",
    "cuts",
    "check_uniqueness",
];

fn get_f64(t: &toml::Table, key: &str) -> Result<Option<f64>> {
    match t.get(key) {
        None => Ok(None),
        Some(toml::Value::Float(x)) => Ok(Some(*x)),
        Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
        Some(v) => Err(Error::config(key, format!("expected a number, found {}", v.type_str()))),
    }
}

fn get_usize(t: &toml::Table, key: &str) -> Result<Option<usize>> {
    match t.get(key) {
        None => Ok(None),
        Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
        Some(v) => Err(Error::config(key, format!("expected a nonnegative integer, found {v}"))),
    }
}

fn get_str<'a>(t: &'a toml::Table, key: &str) -> Result<Option<&'a str>> {
    match t.get(key) {
        None => Ok(None),
        Some(toml::Value::String(s)) => Ok(Some(s)),
        Some(v) => Err(Error::config(key, format!("expected a string, found {}", v.type_str()))),
    }
}

fn get_list(t: &toml::Table, key: &str) -> Result<Option<Vec<f64>>> {
    let Some(v) = t.get(key) else { return Ok(None) };
    let bad = || Error::config(key, "expected a number or an array of numbers");
    let items: Vec<&toml::Value> = match v {
        toml::Value::Array(a) => a.iter().collect(),
        other => vec![other],
    };
    items
        .into_iter()
        .map(|x| match x {
            toml::Value::Float(f) => Ok(*f),
            toml::Value::Integer(i) => Ok(*i as f64),
            _ => Err(bad()),
        })
        .collect::<Result<Vec<f64>>>()
        .map(Some)
}

impl ScenarioConfig {
    pub fn from_preset(id: &str) -> Result<Self> {
        let p =
            preset(id).ok_or_else(|| Error::config("preset", format!("unknown preset `{id}`, expected i to viii")))?;
        Ok(ScenarioConfig {
            name: format!("preset_{}", p.id),
            preset: Some(p.id.to_string()),
            potential: p.potential,
            relaxation: p.relaxation,
            t_inf: p.t_inf,
            v_inf: p.v_inf,
            ..Default::default()
        })
    }

    /// Reference rate fit of the preset, if any.
    pub fn reference(&self) -> Option<&'static Preset> {
        self.preset.as_deref().and_then(preset)
    }

    /// Parses a config text.  A `preset` key, or `base` when absent, supplies
    /// every value the text does not set.
    pub fn parse(text: &str, base: Option<ScenarioConfig>) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            let key = e.message().split('`').nth(1).unwrap_or("<syntax>").to_string();
            Error::Config {
                key,
                msg: e.message().trim().to_string(),
            }
        })?;
        if let Some(k) = table.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::config(k, "unknown key"));
        }
        let mut cfg = match get_str(&table, "preset")? {
            Some(id) => ScenarioConfig::from_preset(id)?,
            None => base.unwrap_or_default(),
        };
        cfg.apply(&table)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, base: Option<ScenarioConfig>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, base)
    }

    fn apply(&mut self, t: &toml::Table) -> Result<()> {
        if let Some(s) = get_str(t, "name")? {
            self.name = s.to_string();
        }
        if let Some(s) = get_str(t, "potential")? {
            self.potential = match s.to_ascii_lowercase().replace(['-', ' ', ','], "_").as_str() {
                "lj12_6" => PotentialKind::Lj12_6,
                "lj9_3" => PotentialKind::Lj9_3,
                _ => {
                    return Err(Error::config(
                        "potential",
                        format!("unknown potential `{s}`, expected lj12_6 or lj9_3"),
                    ))
                }
            };
        }
        if let Some(s) = get_str(t, "relaxation")? {
            self.relaxation = match s.to_ascii_lowercase().as_str() {
                "algebraic" => match self.relaxation {
                    k @ RelaxationKind::Algebraic { .. } => k,
                    RelaxationKind::Exponential => ALG4,
                },
                "exponential" => RelaxationKind::Exponential,
                _ => {
                    return Err(Error::config(
                        "relaxation",
                        format!("unknown relaxation `{s}`, expected algebraic or exponential"),
                    ))
                }
            };
        }
        if let Some(nu) = get_f64(t, "nu")? {
            match self.relaxation {
                RelaxationKind::Algebraic { .. } => self.relaxation = RelaxationKind::Algebraic { nu },
                RelaxationKind::Exponential => {
                    return Err(Error::config("nu", "only meaningful for the algebraic relaxation time"))
                }
            }
        }
        macro_rules! set {
            ($get:ident, $($key:ident),+) => {
                $( if let Some(v) = $get(t, stringify!($key))? { self.$key = v; } )+
            };
        }
        set!(get_f64, kappa, kappa_tau, sigma, t_inf, v_inf, eps_max, zeta_max, tol, disc_tol);
        set!(get_usize, n_eps, n_zeta, k_max, k_min);
        if let Some(s) = get_str(t, "closure")? {
            self.closure = match s {
                "lagged" => TrappedClosure::Lagged,
                "closed_form" => TrappedClosure::ClosedForm,
                _ => {
                    return Err(Error::config(
                        "closure",
                        format!("unknown closure `{s}`, expected lagged or closed_form"),
                    ))
                }
            };
        }
        if let Some(s) = get_str(t, "out")? {
            self.out = PathBuf::from(s);
        }
        if let Some(v) = get_list(t, "probes")? {
            self.probes = v;
        }
        if let Some(v) = get_list(t, "cuts")? {
            self.cuts = v;
        }
        match t.get("check_uniqueness") {
            None => {}
            Some(toml::Value::Boolean(b)) => self.check_uniqueness = *b,
            Some(_) => return Err(Error::config("check_uniqueness", "expected true or false")),
        }
        Ok(())
    }

    /// Checks every value, naming the first offending key.
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be a positive finite number, got {v}")))
            }
        };
        positive("kappa", self.kappa)?;
        positive("kappa_tau", self.kappa_tau)?;
        positive("sigma", self.sigma)?;
        if let RelaxationKind::Algebraic { nu } = self.relaxation {
            if !(nu.is_finite() && nu > 1.0) {
                return Err(Error::config("nu", format!("must exceed 1, got {nu}")));
            }
        }
        positive("t_inf", self.t_inf)?;
        if !self.v_inf.is_finite() {
            return Err(Error::config("v_inf", "must be finite"));
        }
        if self.n_eps < MIN_N_EPS {
            return Err(Error::config("n_eps", format!("must be at least {MIN_N_EPS}")));
        }
        if self.n_zeta < MIN_N_ZETA {
            return Err(Error::config("n_zeta", format!("must be at least {MIN_N_ZETA}")));
        }
        positive("eps_max", self.eps_max)?;
        positive("zeta_max", self.zeta_max)?;
        if self.zeta_max <= 3.0 {
            return Err(Error::config(
                "zeta_max",
                "must lie beyond the potential well (greater than 3)",
            ));
        }
        positive("tol", self.tol)?;
        positive("disc_tol", self.disc_tol)?;
        if self.k_max == 0 {
            return Err(Error::config("k_max", "must be at least 1"));
        }
        for (key, list) in [("probes", &self.probes), ("cuts", &self.cuts)] {
            if let Some(z) = list
                .iter()
                .find(|z| !(z.is_finite() && **z > 0.0 && **z <= self.zeta_max))
            {
                return Err(Error::config(key, format!("position {z} is outside (0, zeta_max]")));
            }
        }
        Ok(())
    }

    /// Builds the solver scenario.  Probe and cut positions become grid nodes.
    pub fn scenario(&self) -> Result<Scenario> {
        self.validate()?;
        let as_config = |e: Error| match e {
            Error::Parameter { key, msg } => Error::Config { key, msg },
            other => other,
        };
        let potential = Potential::new(self.potential, self.kappa).map_err(as_config)?;
        let relaxation = match self.relaxation {
            RelaxationKind::Algebraic { nu } => RelaxationModel::algebraic(self.kappa_tau, self.sigma, nu),
            RelaxationKind::Exponential => RelaxationModel::exponential(self.kappa_tau, self.sigma),
        }
        .map_err(as_config)?;
        let mut anchors = self.probes.clone();
        anchors.extend(&self.cuts);
        let grid = GridSpec::new(self.n_eps, self.n_zeta, self.eps_max, self.zeta_max).with_anchors(&anchors);
        let settings = SolverSettings {
            tol: self.tol,
            k_max: self.k_max,
            k_min: self.k_min,
            closure: self.closure,
            extra_probes: self.probes.clone(),
            ..Default::default()
        };
        Ok(Scenario {
            name: self.name.clone(),
            potential,
            relaxation,
            incident: Incident::ShiftedMaxwellian {
                t_inf: self.t_inf,
                v_inf: self.v_inf,
            },
            grid,
            settings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_the_case_table() {
        let iii = ScenarioConfig::from_preset("iii").unwrap();
        assert_eq!(iii.potential, PotentialKind::Lj9_3);
        assert_eq!(iii.relaxation, RelaxationKind::Algebraic { nu: 4.0 });
        assert_eq!((iii.t_inf, iii.v_inf), (1.0, -0.5));
        assert_eq!((iii.kappa, iii.kappa_tau, iii.sigma), (1.0, 1.0, 1.0));
        let i = preset("I").unwrap();
        assert_eq!(i.relaxation, RelaxationKind::Algebraic { nu: 7.0 });
        assert_eq!(preset("ii").unwrap().relaxation, RelaxationKind::Exponential);
        assert_eq!(
            (preset("vii").unwrap().t_inf, preset("vii").unwrap().v_inf),
            (0.6, -0.5)
        );
        assert!(preset("ix").is_none());
    }

    #[test]
    fn keys_override_a_preset() {
        let c = ScenarioConfig::parse("preset = \"v\"\nn_zeta = 512\nprobes = 1.5\nnu = 5", None).unwrap();
        assert_eq!(c.v_inf, 0.5);
        assert_eq!(c.n_zeta, 512);
        assert_eq!(c.probes, vec![1.5]);
        assert_eq!(c.relaxation, RelaxationKind::Algebraic { nu: 5.0 });
    }

    #[test]
    fn errors_name_the_key() {
        let key = |text: &str| match ScenarioConfig::parse(text, None) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected a config error, got {other:?}"),
        };
        assert_eq!(key("t_inf = -1"), "t_inf");
        assert_eq!(key("n_zeta = 10"), "n_zeta");
        assert_eq!(key("potential = \"morse\""), "potential");
        assert_eq!(key("bogus = 1"), "bogus");
        assert_eq!(key("tol = \"small\""), "tol");
        assert_eq!(key("preset = \"ix\""), "preset");
        assert_eq!(key("relaxation = \"exponential\"\nnu = 3"), "nu");
        assert_eq!(key("cuts = [100.0]"), "cuts");
    }

    #[test]
    fn scenario_anchors_probes_and_cuts() {
        let mut c = ScenarioConfig::from_preset("i").unwrap();
        c.probes = vec![1.122];
        c.cuts = vec![2.0];
        let s = c.scenario().unwrap();
        assert!(s.grid.anchors.contains(&1.122) && s.grid.anchors.contains(&2.0));
        assert_eq!(s.settings.extra_probes, vec![1.122]);
    }
}
