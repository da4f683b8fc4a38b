//! Plain-text dataset cache.
//!
//! ```text
//! fairgan-dataset 1
//! feature_dim,joint_cardinality,rows
//! 2,2,1000
//! x0,x1,label,id
//! ...
//! ```
//!
//! Floats are written in Rust's shortest round-trip decimal form, so a
//! read after a write reproduces every bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetPair, LabeledSample};
use crate::error::{Error, Result};

const MAGIC: &str = "fairgan-dataset 1";

pub fn encode_samples(samples: &[LabeledSample], joint_cardinality: usize) -> Result<String> {
    let dim = samples.first().map_or(0, |s| s.features.len());
    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "feature_dim,joint_cardinality,rows").unwrap();
    writeln!(out, "{dim},{joint_cardinality},{}", samples.len()).unwrap();
    for s in samples {
        if s.features.len() != dim {
            return Err(Error::shape(format!(
                "sample {} has a different feature dimension",
                s.id
            )));
        }
        if s.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("features of sample {}", s.id)));
        }
        for v in &s.features {
            write!(out, "{v},").unwrap();
        }
        writeln!(out, "{},{}", s.joint_label, s.id).unwrap();
    }
    Ok(out)
}

/// Parses a dataset file, returning the samples and the joint cardinality.
pub fn decode_samples(text: &str) -> Result<(Vec<LabeledSample>, usize)> {
    let bad = |msg: String| Error::DatasetFormat(msg);
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(bad(format!("missing '{MAGIC}' header")));
    }
    lines
        .next()
        .ok_or_else(|| bad("missing column header".into()))?;
    let dims = lines
        .next()
        .ok_or_else(|| bad("missing dimension line".into()))?;
    let dims: Vec<usize> = dims
        .split(',')
        .map(|f| f.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| bad(format!("dimension line: {e}")))?;
    let [dim, k, rows] = dims[..] else {
        return Err(bad("dimension line needs three fields".into()));
    };
    let mut samples = Vec::with_capacity(rows);
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 2 {
            return Err(bad(format!(
                "row {i} has {} fields, expected {}",
                fields.len(),
                dim + 2
            )));
        }
        let features = fields[..dim]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("row {i}: {e}")))?;
        let joint_label: usize = fields[dim]
            .parse()
            .map_err(|e| bad(format!("row {i} label: {e}")))?;
        let id: u64 = fields[dim + 1]
            .parse()
            .map_err(|e| bad(format!("row {i} id: {e}")))?;
        if joint_label >= k {
            return Err(bad(format!(
                "row {i} label {joint_label} out of range for {k} classes"
            )));
        }
        samples.push(LabeledSample {
            id,
            features,
            joint_label,
        });
    }
    if samples.len() != rows {
        return Err(bad(format!(
            "expected {rows} rows, found {}",
            samples.len()
        )));
    }
    Ok((samples, k))
}

pub fn write_samples(
    path: &Path,
    samples: &[LabeledSample],
    joint_cardinality: usize,
) -> Result<()> {
    fs::write(path, encode_samples(samples, joint_cardinality)?)?;
    Ok(())
}

pub fn read_samples(path: &Path) -> Result<(Vec<LabeledSample>, usize)> {
    decode_samples(&fs::read_to_string(path)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct PairMeta {
    bias_vector: Vec<f64>,
    perc: f64,
}

pub const BIAS_FILE: &str = "d_bias.csv";
pub const REF_FILE: &str = "d_ref.csv";
pub const HOLDOUT_FILE: &str = "eval_holdout.csv";
pub const PAIR_META_FILE: &str = "pair.toml";

/// Writes the three splits and their metadata into `dir`.
pub fn save_pair(pair: &DatasetPair, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let k = pair.joint_cardinality();
    write_samples(&dir.join(BIAS_FILE), &pair.d_bias, k)?;
    write_samples(&dir.join(REF_FILE), &pair.d_ref, k)?;
    write_samples(&dir.join(HOLDOUT_FILE), &pair.eval_holdout, k)?;
    let meta = PairMeta {
        bias_vector: pair.bias_vector.clone(),
        perc: pair.perc,
    };
    let text = toml::to_string(&meta).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(dir.join(PAIR_META_FILE), text)?;
    Ok(())
}

pub fn load_pair(dir: &Path) -> Result<DatasetPair> {
    let meta: PairMeta = toml::from_str(&fs::read_to_string(dir.join(PAIR_META_FILE))?)
        .map_err(|e| Error::DatasetFormat(e.to_string()))?;
    let (d_bias, _) = read_samples(&dir.join(BIAS_FILE))?;
    let (d_ref, _) = read_samples(&dir.join(REF_FILE))?;
    let (eval_holdout, _) = read_samples(&dir.join(HOLDOUT_FILE))?;
    Ok(DatasetPair {
        d_bias,
        d_ref,
        eval_holdout,
        bias_vector: meta.bias_vector,
        perc: meta.perc,
    })
}
