use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use grabnel_core::acquisition::{AcquisitionConfig, PerturbationKind};
use grabnel_core::attack::{AttackConfig, Attacker, GeneticConfig};
use grabnel_core::graph::{ConstraintMode, ConstraintSet};
use grabnel_core::harness::{Campaign, Normalisation};
use grabnel_core::surrogate::SurrogateConfig;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackerArg {
    Grabnel,
    Random,
    SequentialRandom,
    Genetic,
    GrabnelNoSequential,
}

impl From<AttackerArg> for Attacker {
    fn from(a: AttackerArg) -> Self {
        match a {
            AttackerArg::Grabnel => Attacker::Grabnel,
            AttackerArg::Random => Attacker::Random,
            AttackerArg::SequentialRandom => Attacker::SequentialRandom,
            AttackerArg::Genetic => Attacker::Genetic,
            AttackerArg::GrabnelNoSequential => Attacker::GrabnelNoSequential,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Flip,
    Rewire,
    Swap,
    Inject,
}

impl From<ModeArg> for PerturbationKind {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Flip => PerturbationKind::Flip,
            ModeArg::Rewire => PerturbationKind::Rewire,
            ModeArg::Swap => PerturbationKind::Swap,
            ModeArg::Inject => PerturbationKind::Inject,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
pub enum ConstraintArg {
    #[serde(rename = "none")]
    None,
    #[value(name = "2hop")]
    #[serde(rename = "2hop")]
    TwoHop,
    #[value(name = "2hop-rewire")]
    #[serde(rename = "2hop-rewire")]
    TwoHopRewire,
    #[serde(rename = "preserve-components")]
    PreserveComponents,
}

impl From<ConstraintArg> for ConstraintMode {
    fn from(c: ConstraintArg) -> Self {
        match c {
            ConstraintArg::None => ConstraintMode::None,
            ConstraintArg::TwoHop => ConstraintMode::TwoHop,
            ConstraintArg::TwoHopRewire => ConstraintMode::TwoHopRewire,
            ConstraintArg::PreserveComponents => ConstraintMode::PreserveComponents,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalisationArg {
    Raw,
    PerNode,
    PerNodeSquared,
}

impl From<NormalisationArg> for Normalisation {
    fn from(n: NormalisationArg) -> Self {
        match n {
            NormalisationArg::Raw => Normalisation::Raw,
            NormalisationArg::PerNode => Normalisation::PerNode,
            NormalisationArg::PerNodeSquared => Normalisation::PerNodeSquared,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreKindArg {
    Probabilities,
    Logits,
}

/// Options of `attack`. Every field may also come from the `--config` file,
/// using the flag name as key; flags given on the command line win.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct AttackArgs {
    /// JSON file supplying any of these options.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Dataset JSON file or TU-format directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for traces, `asr.csv` and `summary.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// In-process victim weights.
    #[arg(long, group = "victim")]
    pub weights: Option<PathBuf>,
    /// External victim program speaking the line protocol on stdio.
    #[arg(long, group = "victim")]
    pub victim_cmd: Option<String>,
    /// Argument for `--victim-cmd`; repeatable.
    #[arg(long, allow_hyphen_values = true)]
    pub victim_arg: Option<Vec<String>>,
    /// External victim listening on TCP.
    #[arg(long, group = "victim")]
    pub victim_tcp: Option<String>,
    #[arg(long, value_enum)]
    pub score_kind: Option<ScoreKindArg>,
    /// Seconds to wait for each external reply.
    #[arg(long)]
    pub timeout: Option<f64>,

    #[arg(long, value_enum)]
    pub attacker: Option<AttackerArg>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub constraint: Option<ConstraintArg>,
    #[arg(long)]
    pub budget_ratio: Option<f64>,
    #[arg(long)]
    pub query_multiplier: Option<usize>,
    #[arg(long)]
    pub query_cap: Option<usize>,
    /// Fixed edit budget, replacing the one derived from `--budget-ratio`.
    #[arg(long)]
    pub edit_budget: Option<usize>,
    /// Fixed query budget, replacing `--query-multiplier` times the edit budget.
    #[arg(long)]
    pub query_budget: Option<usize>,
    #[arg(long)]
    pub target_class: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_init: Option<usize>,
    #[arg(long)]
    pub wl_levels: Option<usize>,
    #[arg(long)]
    pub max_injected_fraction: Option<f64>,
    #[arg(long)]
    pub max_edges_per_injected_node: Option<usize>,

    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Attack at most this many eligible graphs.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Restrict the campaign to these graph indices instead of the test split.
    #[arg(long, value_delimiter = ',')]
    pub graphs: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub normalisation: Option<NormalisationArg>,

    #[arg(skip)]
    pub acquisition: Option<AcquisitionConfig>,
    #[arg(skip)]
    pub surrogate: Option<SurrogateConfig>,
    #[arg(skip)]
    pub genetic: Option<GeneticConfig>,
}

macro_rules! overlay {
    ($flags:expr, $file:expr, $($field:ident),* $(,)?) => {
        AttackArgs {
            config: $flags.config,
            $($field: $flags.$field.or($file.$field),)*
        }
    };
}

impl AttackArgs {
    /// Fills options missing from the command line with those of the config file.
    pub fn resolve(self) -> Result<Self, CliError> {
        let Some(path) = self.config.clone() else { return Ok(self) };
        let mut file = read_config(&path)?;
        // A victim on the command line replaces any kind of victim in the file.
        if self.weights.is_some() || self.victim_cmd.is_some() || self.victim_tcp.is_some() {
            file.weights = None;
            file.victim_cmd = None;
            file.victim_tcp = None;
        }
        Ok(overlay!(
            self,
            file,
            data,
            out,
            weights,
            victim_cmd,
            victim_arg,
            victim_tcp,
            score_kind,
            timeout,
            attacker,
            mode,
            constraint,
            budget_ratio,
            query_multiplier,
            query_cap,
            edit_budget,
            query_budget,
            target_class,
            seed,
            n_init,
            wl_levels,
            max_injected_fraction,
            max_edges_per_injected_node,
            workers,
            limit,
            graphs,
            normalisation,
            acquisition,
            surrogate,
            genetic,
        ))
    }

    pub fn campaign(&self) -> Campaign {
        let d = AttackConfig::default();
        let mode = self.mode.map_or(PerturbationKind::Flip, Into::into);
        let mut constraints = ConstraintSet::new(self.constraint.map_or(ConstraintMode::None, Into::into));
        if let Some(f) = self.max_injected_fraction {
            constraints.max_injected_fraction = f;
        }
        constraints.max_edges_per_injected_node = self.max_edges_per_injected_node;
        let config = AttackConfig {
            mode,
            constraints,
            budget_ratio: self.budget_ratio.unwrap_or(d.budget_ratio),
            query_multiplier: self.query_multiplier.unwrap_or(d.query_multiplier),
            query_cap: self.query_cap.unwrap_or(d.query_cap),
            edit_budget: self.edit_budget,
            query_budget: self.query_budget,
            n_init: self.n_init.unwrap_or(d.n_init),
            target: self.target_class,
            seed: self.seed.unwrap_or(d.seed),
            wl_levels: self.wl_levels.unwrap_or(d.wl_levels),
            acquisition: self.acquisition.clone().unwrap_or(d.acquisition),
            surrogate: self.surrogate.unwrap_or(d.surrogate),
            genetic: self.genetic.clone().unwrap_or(d.genetic),
            ..d
        };
        let default_norm =
            if mode == PerturbationKind::Inject { Normalisation::PerNode } else { Normalisation::PerNodeSquared };
        Campaign {
            attacker: self.attacker.map_or(Attacker::Grabnel, Into::into),
            config,
            normalisation: self.normalisation.map_or(default_norm, Into::into),
            workers: self.workers.unwrap_or(0),
            graphs: self.graphs.clone(),
            limit: self.limit,
        }
    }
}

fn read_config(path: &Path) -> Result<AttackArgs, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|e| CliError::Config { path: path.to_path_buf(), message: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"seed": 5, "query-cap": 99, "constraint": "2hop", "attacker": "genetic"}"#).unwrap();
        let flags = AttackArgs { config: Some(path), seed: Some(8), ..Default::default() };
        let merged = flags.resolve().unwrap();
        assert_eq!(merged.seed, Some(8));
        assert_eq!(merged.query_cap, Some(99));
        let c = merged.campaign();
        assert_eq!(c.config.constraints.mode, ConstraintMode::TwoHop);
        assert_eq!(c.attacker, Attacker::Genetic);
        assert_eq!(c.config.seed, 8);
    }

    #[test]
    fn victim_flag_replaces_file_victim() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"weights": "w.json", "score-kind": "logits"}"#).unwrap();
        let flags = AttackArgs { config: Some(path), victim_tcp: Some("127.0.0.1:9".into()), ..Default::default() };
        let merged = flags.resolve().unwrap();
        assert_eq!(merged.weights, None);
        assert_eq!(merged.victim_tcp.as_deref(), Some("127.0.0.1:9"));
        assert_eq!(merged.score_kind, Some(ScoreKindArg::Logits));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"sed": 5}"#).unwrap();
        let flags = AttackArgs { config: Some(path), ..Default::default() };
        assert!(matches!(flags.resolve(), Err(CliError::Config { .. })));
    }

    #[test]
    fn inject_mode_defaults_to_per_node_curves() {
        let args = AttackArgs { mode: Some(ModeArg::Inject), ..Default::default() };
        assert_eq!(args.campaign().normalisation, Normalisation::PerNode);
        assert_eq!(AttackArgs::default().campaign().normalisation, Normalisation::PerNodeSquared);
    }
}
