//! Experiment configuration shared by the command-line front end and the
//! Python bindings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::barrier::MAX_NODES;
use crate::error::{Error, Result};
use crate::flow::FlowConfig;
use crate::io::sha256_hex;
use crate::model::{CohomologyClass, LagrangianModel, ModelSpec};
use crate::occupation::GridParams;
use crate::tiered::ScanParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRef {
    /// One of `flat`, `flat1`, `pendulum`, `pendulum-product`.
    Builtin(String),
    File(PathBuf),
    Inline(ModelSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub barrier: f64,
    pub aubry: f64,
    /// Rank threshold for `S₊ − S₋`.
    pub green: f64,
    pub energy_slice: f64,
    pub chain_epsilon: f64,
    /// Distance to the Aubry lift below which a radial tangent is tested.
    pub radial: f64,
    /// Discretization slack on grid-computed quantities.
    pub grid: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            barrier: 1e-3,
            aubry: 1e-3,
            green: 1e-2,
            energy_slice: 0.05,
            chain_epsilon: 0.15,
            radial: 1e-6,
            grid: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelRef,
    /// Points per axis; a power of two.
    pub grid: usize,
    /// Kernel time step `δ`.
    pub step: f64,
    pub v_max: Option<f64>,
    /// Single class; falls back to the origin.
    pub w: Option<Vec<f64>>,
    pub w_box: f64,
    pub w_res: usize,
    /// Peierls window `[T₀, T₁]`.
    pub window: [f64; 2],
    pub tolerances: Tolerances,
    /// Energy level of the slice in `tiered`.
    pub energy: f64,
    /// Start point `(x, p)` for `green` and `orbit`.
    pub start_x: Option<Vec<f64>>,
    pub start_p: Option<Vec<f64>>,
    /// Period guess for `orbit`, loop duration for the radial probe.
    pub period: f64,
    pub t_cap: f64,
    pub integration_step: f64,
    pub output: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelRef::Builtin("flat".into()),
            grid: 32,
            step: 0.1,
            v_max: None,
            w: None,
            w_box: 1.0,
            w_res: 5,
            window: [4.0, 64.0],
            tolerances: Tolerances::default(),
            energy: 0.5,
            start_x: None,
            start_p: None,
            period: 1.0,
            t_cap: 50.0,
            integration_step: 1e-3,
            output: PathBuf::from("weakkam-out"),
            seed: 0,
        }
    }
}

fn field_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        message: message.into(),
    }
}

fn positive(field: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(field_err(field, format!("must be positive and finite, got {x}")))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| field_err("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn resolve_model(&self) -> Result<LagrangianModel> {
        let model = match &self.model {
            ModelRef::Builtin(name) => LagrangianModel::builtin(name),
            ModelRef::File(path) => LagrangianModel::load(path),
            ModelRef::Inline(spec) => LagrangianModel::from_spec(spec),
        };
        model.map_err(|e| field_err("model", e.to_string()))
    }

    /// Field-level checks; also resolves the model to check dimensions.
    pub fn validate(&self) -> Result<LagrangianModel> {
        if self.grid < 2 || !self.grid.is_power_of_two() {
            return Err(field_err("grid", format!("must be a power of two ≥ 2, got {}", self.grid)));
        }
        positive("step", self.step)?;
        if let Some(v) = self.v_max {
            positive("v_max", v)?;
        }
        if !(self.w_box.is_finite() && self.w_box >= 0.0) {
            return Err(field_err("w_box", "must be finite and non-negative"));
        }
        if self.w_res == 0 {
            return Err(field_err("w_res", "must be at least 1"));
        }
        let [t0, t1] = self.window;
        positive("window", t0)?;
        if !(t1 > t0 && t1.is_finite()) {
            return Err(field_err("window", format!("needs 0 < T₀ < T₁, got [{t0}, {t1}]")));
        }
        let t = &self.tolerances;
        for (name, x) in [
            ("tolerances.barrier", t.barrier),
            ("tolerances.aubry", t.aubry),
            ("tolerances.green", t.green),
            ("tolerances.energy_slice", t.energy_slice),
            ("tolerances.chain_epsilon", t.chain_epsilon),
            ("tolerances.radial", t.radial),
            ("tolerances.grid", t.grid),
        ] {
            positive(name, x)?;
        }
        if !self.energy.is_finite() {
            return Err(field_err("energy", "must be finite"));
        }
        positive("period", self.period)?;
        positive("t_cap", self.t_cap)?;
        positive("integration_step", self.integration_step)?;
        let model = self.resolve_model()?;
        let n = model.dim();
        let nodes = (self.grid as u128).pow(n as u32);
        if nodes > MAX_NODES as u128 {
            return Err(field_err(
                "grid",
                format!("{}^{n} nodes exceed the limit of {MAX_NODES}", self.grid),
            ));
        }
        for (name, v) in [("w", &self.w), ("start_x", &self.start_x), ("start_p", &self.start_p)] {
            if let Some(v) = v {
                if v.len() != n {
                    return Err(field_err(name, format!("has {} entries, model dimension is {n}", v.len())));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(field_err(name, "entries must be finite"));
                }
            }
        }
        Ok(model)
    }

    pub fn grid_params(&self) -> GridParams {
        GridParams {
            resolution: self.grid,
            step: self.step,
            v_max: self.v_max,
        }
    }

    pub fn scan_params(&self) -> ScanParams {
        let mut s = ScanParams::new(self.grid_params());
        s.window = (self.window[0], self.window[1]);
        s.barrier_tol = self.tolerances.barrier;
        s.aubry_tol = self.tolerances.aubry;
        s
    }

    pub fn flow(&self) -> FlowConfig {
        FlowConfig::with_step(self.integration_step)
    }

    pub fn class(&self, dim: usize) -> CohomologyClass {
        self.w
            .clone()
            .map_or_else(|| CohomologyClass::zero(dim), CohomologyClass::new)
    }

    /// SHA-256 of the compact JSON echo.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        sha256_hex(text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_of(e: Error) -> String {
        match e {
            Error::Config { field, .. } => field,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn defaults_validate() {
        let m = ExperimentConfig::default().validate().unwrap();
        assert_eq!(m.dim(), 2);
    }

    #[test]
    fn field_level_errors() {
        let bad_grid = ExperimentConfig {
            grid: 24,
            ..Default::default()
        };
        assert_eq!(field_of(bad_grid.validate().unwrap_err()), "grid");

        let mut bad_tol = ExperimentConfig::default();
        bad_tol.tolerances.aubry = 0.0;
        assert_eq!(field_of(bad_tol.validate().unwrap_err()), "tolerances.aubry");

        let bad_w = ExperimentConfig {
            w: Some(vec![1.0]),
            ..Default::default()
        };
        assert_eq!(field_of(bad_w.validate().unwrap_err()), "w");

        let too_big = ExperimentConfig {
            grid: 128,
            ..Default::default()
        };
        assert_eq!(field_of(too_big.validate().unwrap_err()), "grid");

        let unknown = ExperimentConfig {
            model: ModelRef::Builtin("torus9".into()),
            ..Default::default()
        };
        assert_eq!(field_of(unknown.validate().unwrap_err()), "model");
    }

    #[test]
    fn json_round_trip_and_unknown_fields() {
        let c = ExperimentConfig {
            model: ModelRef::Builtin("pendulum".into()),
            grid: 64,
            w: Some(vec![0.0]),
            ..Default::default()
        };
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), c);
        let partial = ExperimentConfig::from_json(r#"{"grid": 16, "model": {"builtin": "pendulum"}}"#).unwrap();
        assert_eq!(partial.grid, 16);
        assert_eq!(partial.step, 0.1);
        assert_eq!(field_of(ExperimentConfig::from_json(r#"{"grdi": 16}"#).unwrap_err()), "config");
        assert_eq!(c.hash(), c.clone().hash());
        assert_ne!(c.hash(), ExperimentConfig::default().hash());
    }
}
