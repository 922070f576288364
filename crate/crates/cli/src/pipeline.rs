//! Reading recordings and turning them into regression blocks.

use std::fs::File;
use std::path::{Path, PathBuf};

use causal_patterns::io::{read_table, Table};
use causal_patterns::preprocess::{
    apply_document, build_regression_blocks, feature, EmbeddingSpec, PreprocessDocument,
};
use causal_patterns::RegressionDataset;
use clap::Args;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::{pick, FileConfig};
use crate::exit::{CliResult, InputContext};

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// Comma-separated cause (driver) columns [default: x].
    #[arg(long, value_delimiter = ',')]
    pub cause_columns: Option<Vec<String>>,
    /// Comma-separated effect (response) columns [default: y].
    #[arg(long, value_delimiter = ',')]
    pub effect_columns: Option<Vec<String>>,
    /// Use every column starting with this prefix as a cause column.
    #[arg(long, conflicts_with = "cause_columns")]
    pub cause_prefix: Option<String>,
    /// Use every column starting with this prefix as an effect column.
    #[arg(long, conflicts_with = "effect_columns")]
    pub effect_prefix: Option<String>,
    /// Replace each series by [position, velocity] before embedding.
    #[arg(long)]
    pub features: bool,
    /// Lag d of the most recent embedded frame [default: 1].
    #[arg(long)]
    pub delay: Option<usize>,
    /// Spacing s between embedded frames [default: 1].
    #[arg(long)]
    pub stride: Option<usize>,
    /// Embedding window tau; tau / s frames are stacked [default: 1].
    #[arg(long)]
    pub window: Option<usize>,
    /// Cumulative explained-variance ratio kept by each block's PCA [default: 1.0].
    #[arg(long)]
    pub pca_ratio: Option<f64>,
}

/// Column choice and preprocessing, stored next to a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineDocument {
    pub cause_columns: Vec<String>,
    pub effect_columns: Vec<String>,
    pub features: bool,
    pub preprocess: PreprocessDocument,
}

impl PipelineDocument {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).input_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).input_context(|| format!("parsing {}", path.display()))
    }

    /// Input rows consumed before the first regression sample.
    pub fn row_offset(&self) -> usize {
        self.preprocess.first_time + usize::from(self.features)
    }
}

/// A recording turned into regression blocks.
pub struct Prepared {
    pub table: Table,
    pub dataset: RegressionDataset,
    pub document: PipelineDocument,
}

impl Prepared {
    /// Input row of regression sample `n`.
    pub fn input_row(&self, n: usize) -> usize {
        self.document.row_offset() + n
    }

    /// Per-sample labels from an integer column of the input, aligned to
    /// the regression samples.
    pub fn aligned_labels(&self, column: &str) -> CliResult<Vec<usize>> {
        let labels = self
            .table
            .label_column(column)
            .input_context(|| format!("reading labels from '{column}'"))?;
        Ok((0..self.dataset.len()).map(|n| labels[self.input_row(n)]).collect())
    }
}

pub fn read_input(path: &Path) -> CliResult<Table> {
    let file = File::open(path).input_context(|| format!("opening {}", path.display()))?;
    read_table(file).input_context(|| format!("reading {}", path.display()))
}

fn resolve_columns(
    table: &Table,
    list: Option<Vec<String>>,
    prefix: Option<String>,
    default: &str,
    role: &str,
) -> CliResult<Vec<String>> {
    let columns = match (list, prefix) {
        (Some(list), _) => list,
        (None, Some(prefix)) => table.prefixed(&prefix),
        (None, None) => vec![default.to_string()],
    };
    if columns.is_empty() {
        return Err(crate::exit::CliError::input(anyhow::anyhow!(
            "no {role} columns selected"
        )));
    }
    Ok(columns)
}

fn series(table: &Table, columns: &[String], features: bool) -> CliResult<DMatrix<f64>> {
    let m = table
        .select(columns)
        .input_context(|| "selecting columns".to_string())?;
    if features {
        feature(&m).input_context(|| "computing position/velocity features".to_string())
    } else {
        Ok(m)
    }
}

/// Builds fresh regression blocks, resolving options against the config file.
pub fn prepare(args: &InputArgs, file: &FileConfig) -> CliResult<Prepared> {
    let table = read_input(&args.input)?;
    let cause_columns = resolve_columns(
        &table,
        args.cause_columns.clone().or(file.cause_columns.clone()),
        args.cause_prefix.clone().or(file.cause_prefix.clone()),
        "x",
        "cause",
    )?;
    let effect_columns = resolve_columns(
        &table,
        args.effect_columns.clone().or(file.effect_columns.clone()),
        args.effect_prefix.clone().or(file.effect_prefix.clone()),
        "y",
        "effect",
    )?;
    let features = args.features || file.features.unwrap_or(false);
    let spec = EmbeddingSpec::new(
        pick(args.delay, file.delay, 1),
        pick(args.stride, file.stride, 1),
        pick(args.window, file.window, 1),
    )
    .input_context(|| "embedding parameters".to_string())?;
    let ratio = pick(args.pca_ratio, file.pca_ratio, 1.0);

    let cause = series(&table, &cause_columns, features)?;
    let effect = series(&table, &effect_columns, features)?;
    let blocks = build_regression_blocks(&effect, &cause, &spec, ratio)
        .input_context(|| "building regression blocks".to_string())?;
    let document = PipelineDocument {
        cause_columns,
        effect_columns,
        features,
        preprocess: blocks.document(spec, ratio),
    };
    Ok(Prepared {
        table,
        dataset: blocks.dataset,
        document,
    })
}

/// Re-applies a stored preprocessing to a recording.
pub fn prepare_with(input: &Path, document: PipelineDocument) -> CliResult<Prepared> {
    let table = read_input(input)?;
    let cause = series(&table, &document.cause_columns, document.features)?;
    let effect = series(&table, &document.effect_columns, document.features)?;
    let dataset = apply_document(&document.preprocess, &effect, &cause)
        .input_context(|| "applying stored preprocessing".to_string())?;
    Ok(Prepared {
        table,
        dataset,
        document,
    })
}
