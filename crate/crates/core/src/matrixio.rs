//! Data model, matrix serialization and run configuration.
//!
//! The binary matrix format is the ASCII magic `RNDY`, the row and column
//! counts as little-endian `u64`, then `rows * cols` little-endian IEEE-754
//! doubles in row-major order.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RNDY";
const HEADER_LEN: usize = 4 + 8 + 8;

/// Paired snapshot matrices: column `i` of `y` is the state one lag after column `i` of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotData {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub lag: f64,
    pub system_label: String,
}

impl SnapshotData {
    pub fn new(
        x: DMatrix<f64>,
        y: DMatrix<f64>,
        lag: f64,
        system_label: impl Into<String>,
    ) -> Result<Self> {
        if x.shape() != y.shape() {
            return Err(Error::Dimension(format!(
                "X is {}x{} but Y is {}x{}",
                x.nrows(),
                x.ncols(),
                y.nrows(),
                y.ncols()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::Dimension("state dimension must be positive".into()));
        }
        if x.ncols() < 2 {
            return Err(Error::Dimension(format!(
                "at least 2 snapshot pairs required, got {}",
                x.ncols()
            )));
        }
        if !(lag.is_finite() && lag > 0.0) {
            return Err(Error::Contract(format!("lag must be positive, got {lag}")));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Contract("snapshot data contains non-finite entries".into()));
        }
        Ok(Self {
            x,
            y,
            lag,
            system_label: system_label.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Gaussian,
}

impl Activation {
    /// Number of activation-specific entries at the front of the omega vector.
    pub fn n_params(self) -> usize {
        match self {
            Activation::Tanh | Activation::Relu => 0,
            Activation::Gaussian => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    SelfAdjoint,
    NonSelfAdjoint,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "self_adjoint" => Ok(Mode::SelfAdjoint),
            "non_self_adjoint" => Ok(Mode::NonSelfAdjoint),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

fn default_fd_step() -> f64 {
    1e-4
}

/// Run configuration. On disk this is a flat JSON object; unknown keys are rejected.
///
/// `omega_init` is laid out as `[activation params..., weight scale, bias scale]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub omega_init: Vec<f64>,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub rel_loss_tol: f64,
    pub pinv_rel_tol: f64,
    pub n_outputs: usize,
    pub mode: Mode,
    /// Relative finite-difference step for the loss gradient.
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    /// Maximize only the top `n_outputs` eigenvalues instead of the full trace.
    #[serde(default)]
    pub partial_trace: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            layer_sizes: vec![100],
            activation: Activation::Tanh,
            omega_init: vec![1.0, 1.0],
            learning_rate: 0.1,
            max_epochs: 100,
            rel_loss_tol: 1e-6,
            pinv_rel_tol: 1e-8,
            n_outputs: 5,
            mode: Mode::SelfAdjoint,
            fd_step: default_fd_step(),
            partial_trace: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.layer_sizes.is_empty() || self.layer_sizes.contains(&0) {
            return fail("layer_sizes must be a non-empty list of positive integers".into());
        }
        let n_features = *self.layer_sizes.last().unwrap();
        if self.n_outputs == 0 || self.n_outputs > n_features {
            return fail(format!(
                "n_outputs must be in 1..={n_features}, got {}",
                self.n_outputs
            ));
        }
        let expected = self.activation.n_params() + 2;
        if self.omega_init.len() != expected {
            return fail(format!(
                "omega_init for {:?} needs {expected} entries, got {}",
                self.activation,
                self.omega_init.len()
            ));
        }
        if self.omega_init.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return fail(format!(
                "all omega_init entries must be positive, got {:?}",
                self.omega_init
            ));
        }
        if self.max_epochs == 0 {
            return fail("max_epochs = 0: at least one epoch required".into());
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("rel_loss_tol", self.rel_loss_tol),
            ("pinv_rel_tol", self.pinv_rel_tol),
            ("fd_step", self.fd_step),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Encodes a matrix into the binary `RNDY` layout.
pub fn encode_matrix(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

/// Decodes the binary `RNDY` layout; `origin` is only used in error messages.
pub fn decode_matrix(bytes: &[u8], origin: &Path) -> Result<DMatrix<f64>> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format {
            path: origin.to_path_buf(),
            reason: "missing RNDY magic".into(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Length {
            path: origin.to_path_buf(),
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let rows = u64::from_le_bytes(bytes[4..12].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER_LEN as u64))
        .ok_or_else(|| Error::Format {
            path: origin.to_path_buf(),
            reason: format!("header dimensions {rows}x{cols} overflow"),
        })?;
    if bytes.len() as u64 != expected {
        return Err(Error::Length {
            path: origin.to_path_buf(),
            expected,
            found: bytes.len() as u64,
        });
    }
    let (rows, cols) = (rows as usize, cols as usize);
    let payload = &bytes[HEADER_LEN..];
    Ok(DMatrix::from_fn(rows, cols, |i, j| {
        let at = 8 * (i * cols + j);
        f64::from_le_bytes(payload[at..at + 8].try_into().unwrap())
    }))
}

pub fn write_matrix(m: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode_matrix(m))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes, path)
}

/// Renders one CSV row per matrix row. Values use the shortest decimal form that
/// parses back to the same double.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format_float(m[(i, j)]));
        }
        out.push('\n');
    }
    out
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    let mag = v.abs();
    if mag != 0.0 && !(1e-5..1e16).contains(&mag) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub fn export_csv(m: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, matrix_to_csv(m)).map_err(|e| Error::io(path, e))
}

/// Parses a headerless numeric CSV written by [`export_csv`].
pub fn parse_csv(text: &str, origin: &Path) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| tok.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format {
                path: origin.to_path_buf(),
                reason: format!("line {}: {e}", lineno + 1),
            })?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Format {
                    path: origin.to_path_buf(),
                    reason: format!("line {} has {} fields, expected {}", lineno + 1, row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn import_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn smallest_matrix_is_28_bytes() {
        let bytes = encode_matrix(&DMatrix::zeros(1, 1));
        assert_eq!(bytes.len(), 28);
        assert_eq!(&bytes[..4], b"RNDY");
        assert_eq!(u64::from_le_bytes(bytes[4..12].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 1);
        assert_eq!(&bytes[20..], &[0u8; 8]);
    }

    #[test]
    fn identity_payload_is_row_major() {
        let bytes = encode_matrix(&DMatrix::identity(2, 2));
        assert_eq!(bytes.len(), 52);
        let payload: Vec<f64> = bytes[20..]
            .chunks(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(payload, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn row_major_order_for_rectangular() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let bytes = encode_matrix(&m);
        let second = f64::from_le_bytes(bytes[28..36].try_into().unwrap());
        assert_eq!(second, 2.0);
    }

    #[test]
    fn bad_magic_is_a_format_error() {
        let mut bytes = encode_matrix(&DMatrix::zeros(2, 3));
        bytes[..4].copy_from_slice(b"XXXX");
        let err = decode_matrix(&bytes, Path::new("m.bin")).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }

    #[test]
    fn truncated_payload_is_a_length_error() {
        let bytes = encode_matrix(&DMatrix::zeros(2, 3));
        let err = decode_matrix(&bytes[..bytes.len() - 3], Path::new("m.bin")).unwrap_err();
        assert!(matches!(err, Error::Length { expected: 68, found: 65, .. }), "{err}");
    }

    #[test]
    fn file_round_trip_of_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.bin");
        write_matrix(&DMatrix::zeros(2, 3), &path).unwrap();
        assert_eq!(read_matrix(&path).unwrap(), DMatrix::<f64>::zeros(2, 3));
    }

    #[test]
    fn write_error_names_the_path() {
        let err = write_matrix(&DMatrix::zeros(1, 1), "/nonexistent-dir/m.bin").unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/m.bin"));
    }

    #[test]
    fn csv_examples() {
        assert_eq!(matrix_to_csv(&DMatrix::from_element(1, 1, 1.5)), "1.5\n");
        assert_eq!(matrix_to_csv(&DMatrix::identity(2, 2)), "1,0\n0,1\n");
    }

    #[test]
    fn snapshot_data_rejects_mismatched_shapes() {
        let err = SnapshotData::new(DMatrix::zeros(1, 3), DMatrix::zeros(1, 4), 1.0, "t");
        assert!(matches!(err, Err(Error::Dimension(_))));
        let err = SnapshotData::new(DMatrix::zeros(1, 1), DMatrix::zeros(1, 1), 1.0, "t");
        assert!(matches!(err, Err(Error::Dimension(_))));
        let mut x = DMatrix::zeros(1, 3);
        x[(0, 1)] = f64::NAN;
        let err = SnapshotData::new(x, DMatrix::zeros(1, 3), 1.0, "t");
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let mut v = serde_json::to_value(RunConfig::default()).unwrap();
        v["learnig_rate"] = serde_json::json!(0.5);
        let err = RunConfig::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("learnig_rate"), "{err}");
    }

    #[test]
    fn config_validation() {
        let ok = RunConfig::default();
        assert!(ok.validate().is_ok());
        let cfg = RunConfig { max_epochs: 0, ..ok.clone() };
        assert!(cfg.validate().unwrap_err().to_string().contains("at least one epoch"));
        let cfg = RunConfig { n_outputs: 101, ..ok.clone() };
        assert!(cfg.validate().is_err());
        let cfg = RunConfig { omega_init: vec![1.0, 0.0], ..ok.clone() };
        assert!(cfg.validate().is_err());
        let cfg = RunConfig { activation: Activation::Gaussian, ..ok.clone() };
        assert!(cfg.validate().is_err());
        let cfg = RunConfig {
            activation: Activation::Gaussian,
            omega_init: vec![1.0, 1.0, 1.0],
            ..ok
        };
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn config_json_round_trip_and_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let cfg = RunConfig { mode: Mode::NonSelfAdjoint, ..RunConfig::default() };
        cfg.save(&path).unwrap();
        assert_eq!(RunConfig::load(&path).unwrap(), cfg);

        let mut v = serde_json::to_value(&cfg).unwrap();
        v.as_object_mut().unwrap().remove("fd_step");
        v.as_object_mut().unwrap().remove("partial_trace");
        let back = RunConfig::from_json(&v.to_string()).unwrap();
        assert_eq!(back.fd_step, 1e-4);
        assert_eq!(v["mode"], "non_self_adjoint");
    }

    fn finite_matrix() -> impl Strategy<Value = DMatrix<f64>> {
        (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
            proptest::collection::vec(
                prop_oneof![
                    any::<f64>().prop_filter("finite", |v| v.is_finite()),
                    -1e3f64..1e3,
                ],
                r * c,
            )
            .prop_map(move |v| DMatrix::from_vec(r, c, v))
        })
    }

    proptest! {
        #[test]
        fn binary_round_trip_is_bit_exact(m in finite_matrix()) {
            let back = decode_matrix(&encode_matrix(&m), Path::new("mem")).unwrap();
            prop_assert_eq!(back.shape(), m.shape());
            for (a, b) in back.iter().zip(m.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }

        #[test]
        fn csv_round_trip_is_exact(m in finite_matrix()) {
            let back = parse_csv(&matrix_to_csv(&m), Path::new("mem")).unwrap();
            prop_assert_eq!(back.shape(), m.shape());
            for (a, b) in back.iter().zip(m.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
