//! Model files accepted by `--model`.

use nalgebra::DMatrix;
use predcp::rng::normal_matrix;
use predcp::{LinearModelSpec, Network, NetworkSpec, ObservationModel};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

const INPUT_STREAM: u64 = 0x494e_5055_5453;
const MODULE_STREAM: u64 = 0x4d4f_4455_4c45;

/// Network inputs, either listed row by row or drawn from `N(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Inputs {
    Rows(Vec<Vec<f64>>),
    Random { rows: usize, seed: u64 },
}

impl Inputs {
    pub fn matrix(&self, cols: usize) -> CliResult<DMatrix<f64>> {
        match self {
            Inputs::Random { rows, seed } => Ok(normal_matrix(*rows, cols, *seed, &[INPUT_STREAM])),
            Inputs::Rows(rows) => {
                if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
                    return Err(CliError::Input(format!(
                        "input row {bad} has {} columns, expected {cols}",
                        rows[bad].len()
                    )));
                }
                Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
            }
        }
    }
}

fn default_observation() -> ObservationModel {
    ObservationModel::Gaussian { sigma_y: 1.0 }
}

/// A network with its weight seed, observation model and evaluation inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkModel {
    pub network: NetworkSpec,
    #[serde(default)]
    pub weights_seed: u64,
    #[serde(default = "default_observation")]
    pub observation: ObservationModel,
    pub inputs: Inputs,
}

impl NetworkModel {
    pub fn build(&self) -> CliResult<(Network, DMatrix<f64>)> {
        let net = Network::from_seed(self.network.clone(), self.weights_seed)?;
        self.observation.validate(self.network.output_dim)?;
        let x = self.inputs.matrix(self.network.input_dim)?;
        Ok((net, x))
    }

    pub fn set_sigma_y(&mut self, sigma: f64) -> CliResult<()> {
        match &mut self.observation {
            ObservationModel::Gaussian { sigma_y } => {
                *sigma_y = sigma;
                Ok(())
            }
            ObservationModel::Categorical { .. } => Err(CliError::Input(
                "--sigma-y applies only to Gaussian observations".into(),
            )),
        }
    }
}

/// Either model kind; a file with a `network` key is a network model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Model {
    Network(NetworkModel),
    Linear(LinearModelSpec),
}

/// Module weights for the modular prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Modules {
    /// One matrix per module, each given as a list of rows.
    Explicit(Vec<Vec<Vec<f64>>>),
    /// Gaussian modules with widths `dims`, entries `N(0, 1 / fan_in)`.
    Random { dims: Vec<usize>, seed: u64 },
}

type Matrices = Vec<DMatrix<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaModel {
    pub modules: Modules,
    pub tasks: Vec<Inputs>,
}

impl MetaModel {
    /// The module matrices and the task input batches.
    pub fn build(&self) -> CliResult<(Matrices, Matrices)> {
        let modules: Vec<DMatrix<f64>> = match &self.modules {
            Modules::Explicit(ms) => ms
                .iter()
                .enumerate()
                .map(|(k, rows)| {
                    let cols = rows.first().map_or(0, Vec::len);
                    if rows.iter().any(|r| r.len() != cols) {
                        return Err(CliError::Input(format!("module {k} is ragged")));
                    }
                    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
                })
                .collect::<CliResult<_>>()?,
            Modules::Random { dims, seed } => {
                if dims.len() < 2 {
                    return Err(CliError::Input("random modules need at least two widths".into()));
                }
                dims.windows(2)
                    .enumerate()
                    .map(|(k, w)| normal_matrix(w[0], w[1], *seed, &[MODULE_STREAM, k as u64]) / (w[0] as f64).sqrt())
                    .collect()
            }
        };
        let cols = modules.first().map_or(0, |m| m.nrows());
        let tasks = self.tasks.iter().map(|t| t.matrix(cols)).collect::<CliResult<_>>()?;
        Ok((modules, tasks))
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}
