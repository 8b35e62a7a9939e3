//! Benchmark and adversary instance generators.
//!
//! Specs are written as `key=value` pairs, one per line or whitespace
//! separated, e.g. `kind=random-unit-columns m=8 t=100 seed=3`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm2, Matrix, RngHandle};
use crate::rounding::make_planted;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InstanceKind {
    Identity {
        t: usize,
    },
    /// `m × t`, columns uniform on the unit sphere.
    RandomUnitColumns {
        m: usize,
        t: usize,
    },
    /// `m × n` i.i.d. `N(0, scale²)`.
    GaussianDense {
        m: usize,
        n: usize,
        scale: f64,
    },
    NumberBalancingRow {
        n: usize,
    },
    Planted {
        m: usize,
        n: usize,
    },
    FromFile {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    #[serde(flatten)]
    pub kind: InstanceKind,
    pub seed: u64,
}

impl InstanceSpec {
    pub fn new(kind: InstanceKind, seed: u64) -> Self {
        InstanceSpec { kind, seed }
    }

    /// Parses `key=value` pairs separated by whitespace or newlines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("");
            for tok in line.split_whitespace() {
                let (k, v) =
                    tok.split_once('=').ok_or_else(|| Error::BadSpec(format!("expected key=value, got {tok:?}")))?;
                if kv.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                    return Err(Error::BadSpec(format!("duplicate key {k:?}")));
                }
            }
        }
        Self::from_pairs(&kv)
    }

    pub fn from_pairs(kv: &BTreeMap<String, String>) -> Result<Self> {
        let kind_name = kv.get("kind").ok_or_else(|| Error::BadSpec("missing kind".into()))?;
        let usize_of = |k: &str| -> Result<usize> {
            kv.get(k)
                .ok_or_else(|| Error::BadSpec(format!("{kind_name} needs {k}")))?
                .parse()
                .map_err(|_| Error::BadSpec(format!("{k} must be a non-negative integer")))
        };
        let allowed: &[&str] = match kind_name.as_str() {
            "identity" => &["t"],
            "random-unit-columns" => &["m", "t"],
            "gaussian-dense" => &["m", "n", "scale"],
            "number-balancing-row" => &["n"],
            "planted" => &["m", "n"],
            "from-file" => &["path"],
            other => return Err(Error::BadSpec(format!("unknown kind {other:?}"))),
        };
        if let Some(k) = kv.keys().find(|k| !matches!(k.as_str(), "kind" | "seed") && !allowed.contains(&k.as_str())) {
            return Err(Error::BadSpec(format!("unexpected key {k:?} for {kind_name}")));
        }
        let kind = match kind_name.as_str() {
            "identity" => InstanceKind::Identity { t: usize_of("t")? },
            "random-unit-columns" => InstanceKind::RandomUnitColumns { m: usize_of("m")?, t: usize_of("t")? },
            "gaussian-dense" => {
                let scale = match kv.get("scale") {
                    Some(s) => s.parse().map_err(|_| Error::BadSpec("scale must be a number".into()))?,
                    None => 1.0,
                };
                InstanceKind::GaussianDense { m: usize_of("m")?, n: usize_of("n")?, scale }
            }
            "number-balancing-row" => InstanceKind::NumberBalancingRow { n: usize_of("n")? },
            "planted" => InstanceKind::Planted { m: usize_of("m")?, n: usize_of("n")? },
            _ => InstanceKind::FromFile {
                path: kv.get("path").ok_or_else(|| Error::BadSpec("from-file needs path".into()))?.into(),
            },
        };
        let seed = match kv.get("seed") {
            Some(s) => s.parse().map_err(|_| Error::BadSpec("seed must be a u64".into()))?,
            None => 0,
        };
        Ok(InstanceSpec { kind, seed })
    }
}

pub fn gen(spec: &InstanceSpec) -> Result<Matrix> {
    let mut rng = RngHandle::new(spec.seed, 0);
    match &spec.kind {
        InstanceKind::Identity { t } => Ok(Matrix::identity(*t)),
        InstanceKind::RandomUnitColumns { m, t } => {
            if *m == 0 {
                return Err(Error::BadSpec("unit columns need m >= 1".into()));
            }
            if *t == 0 {
                return Ok(Matrix::zeros(*m, 0));
            }
            let cols: Vec<Vec<f64>> = (0..*t).map(|_| rng.unit_vector(*m)).collect();
            Matrix::from_columns(&cols)
        }
        InstanceKind::GaussianDense { m, n, scale } => {
            if !scale.is_finite() || *scale < 0.0 {
                return Err(Error::BadSpec(format!("bad scale {scale}")));
            }
            Matrix::from_vec(*m, *n, rng.normals(m * n).into_iter().map(|x| x * scale).collect())
        }
        InstanceKind::NumberBalancingRow { n } => Matrix::from_vec(1, *n, rng.normals(*n)),
        InstanceKind::Planted { m, n } => make_planted(*m, *n, &mut rng).map(|p| p.a).map_err(|e| match e {
            Error::BadN(n) => Error::BadSpec(format!("planted needs n ≡ 2 mod 4 and n >= 6, got {n}")),
            e => e,
        }),
        InstanceKind::FromFile { path } => Matrix::read_file(path),
    }
}

/// Rescales every column of norm above 1 to norm exactly 1; other columns are untouched.
pub fn komlos_normalize(a: &Matrix) -> Matrix {
    let mut out = a.clone();
    for j in 0..a.cols() {
        let norm = norm2(&a.column(j));
        if norm > 1.0 {
            for i in 0..a.rows() {
                out[(i, j)] = a[(i, j)] / norm;
            }
        }
    }
    out
}
