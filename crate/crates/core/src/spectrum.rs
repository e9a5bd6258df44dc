//! Eigenvalue spectra of input covariances.
//!
//! A [`Spectrum`] is always strictly positive and sorted descending, so
//! `lambda(1)` is the largest eigenvalue. Indices are 1-based throughout the
//! crate wherever they name a principal component.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{MmiError, Result};

/// Relative tolerance on `|a_ij - a_ji|` accepted as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// A covariance is rejected when `min_eig <= PD_RATIO * max_eig`.
pub const PD_RATIO: f64 = 1e-12;

/// Descending, strictly positive eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Spectrum {
    values: Vec<f64>,
}

impl Spectrum {
    /// Validates and sorts `values` descending.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(MmiError::InvalidParameter("spectrum is empty".into()));
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(MmiError::NonPositiveEigenvalue {
                index: index + 1,
                value,
            });
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The `k`-th largest eigenvalue, `k` starting at 1.
    pub fn lambda(&self, k: usize) -> Result<f64> {
        if k == 0 || k > self.len() {
            return Err(MmiError::IndexOutOfRange {
                index: k,
                max: self.len(),
            });
        }
        Ok(self.values[k - 1])
    }

    /// The `n` largest eigenvalues.
    pub fn top(&self, n: usize) -> Result<Spectrum> {
        if n == 0 || n > self.len() {
            return Err(MmiError::IndexOutOfRange {
                index: n,
                max: self.len(),
            });
        }
        Ok(Spectrum {
            values: self.values[..n].to_vec(),
        })
    }

    /// Every eigenvalue multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Spectrum> {
        Spectrum::new(self.values.iter().map(|v| v * c).collect())
    }

    pub fn trace(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `diag(values)` as a covariance matrix.
    pub fn to_diagonal_covariance(&self) -> CovarianceMatrix {
        let n = self.len();
        let matrix = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.values));
        CovarianceMatrix {
            matrix,
            eigen: Eigendecomposition {
                spectrum: self.clone(),
                vectors: DMatrix::identity(n, n),
            },
        }
    }
}

/// Eigenvalues sorted descending together with matching unit eigenvectors
/// stored as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigendecomposition {
    pub spectrum: Spectrum,
    pub vectors: DMatrix<f64>,
}

impl Eigendecomposition {
    /// `U diag(λ) Uᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(
            self.spectrum.values(),
        ));
        &self.vectors * d * self.vectors.transpose()
    }
}

/// A symmetric positive definite `N0 x N0` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    matrix: DMatrix<f64>,
    eigen: Eigendecomposition,
}

impl CovarianceMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(MmiError::DimensionMismatch(format!(
                "covariance must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(MmiError::InvalidParameter(
                "covariance has non-finite entries".into(),
            ));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        let asymmetry = (&matrix - matrix.transpose()).amax() / scale;
        if asymmetry > SYMMETRY_TOL {
            return Err(MmiError::NotSymmetric { asymmetry });
        }
        let symmetric = (&matrix + matrix.transpose()) * 0.5;
        let eigen = decompose(symmetric)?;
        Ok(Self { matrix, eigen })
    }

    pub fn from_row_slice(n: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(MmiError::DimensionMismatch(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(n, n, entries))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn eigen(&self) -> &Eigendecomposition {
        &self.eigen
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }
}

fn decompose(symmetric: DMatrix<f64>) -> Result<Eigendecomposition> {
    let n = symmetric.nrows();
    let SymmetricEigen { eigenvectors, .. } = symmetric.clone().symmetric_eigen();
    // nalgebra can hand back close eigenvalues in a different order than
    // their vectors, so each value is recomputed from its own vector.
    let eigenvalues: Vec<f64> = eigenvectors
        .column_iter()
        .map(|v| v.dot(&(&symmetric * v)))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]));

    let max_eigenvalue = eigenvalues[order[0]];
    let min_eigenvalue = eigenvalues[order[n - 1]];
    if max_eigenvalue <= 0.0 || min_eigenvalue <= PD_RATIO * max_eigenvalue {
        return Err(MmiError::NotPositiveDefinite {
            min_eigenvalue,
            max_eigenvalue,
        });
    }

    let values = order.iter().map(|&i| eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eigenvectors[(r, order[c])]);
    Ok(Eigendecomposition {
        spectrum: Spectrum { values },
        vectors,
    })
}

/// All eigenvalues of `cov`, descending.
pub fn eigvals_from_covariance(cov: &CovarianceMatrix) -> Spectrum {
    cov.eigen.spectrum.clone()
}

/// Block-diagonal covariance made of `repetitions` copies of `block`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCovariance {
    block: CovarianceMatrix,
    repetitions: usize,
}

impl BlockCovariance {
    pub fn new(block: CovarianceMatrix, repetitions: usize) -> Result<Self> {
        if repetitions == 0 {
            return Err(MmiError::InvalidParameter(
                "block repetitions must be positive".into(),
            ));
        }
        Ok(Self { block, repetitions })
    }

    /// Splits an `n0`-dimensional input into `n0 / n_b` blocks.
    pub fn for_input(block: CovarianceMatrix, n0: usize) -> Result<Self> {
        let n_b = block.dim();
        if n0 == 0 || !n0.is_multiple_of(n_b) {
            return Err(MmiError::DimensionMismatch(format!(
                "block size {n_b} does not divide input dimension {n0}"
            )));
        }
        Self::new(block, n0 / n_b)
    }

    pub fn block(&self) -> &CovarianceMatrix {
        &self.block
    }

    pub fn repetitions(&self) -> usize {
        self.repetitions
    }

    pub fn block_size(&self) -> usize {
        self.block.dim()
    }

    pub fn input_dim(&self) -> usize {
        self.block_size() * self.repetitions
    }

    /// The full `N0 x N0` block-diagonal matrix.
    pub fn full(&self) -> CovarianceMatrix {
        let nb = self.block_size();
        let n0 = self.input_dim();
        let mut matrix = DMatrix::zeros(n0, n0);
        let mut vectors = DMatrix::zeros(n0, n0);
        let mut values = Vec::with_capacity(n0);
        for r in 0..self.repetitions {
            matrix
                .view_mut((r * nb, r * nb), (nb, nb))
                .copy_from(self.block.matrix());
        }
        // Eigenpairs of the full matrix are the block's, repeated per block;
        // interleave so the result stays sorted.
        let eig = self.block.eigen();
        let mut col = 0;
        for k in 0..nb {
            for r in 0..self.repetitions {
                values.push(eig.spectrum.values[k]);
                vectors
                    .view_mut((r * nb, col), (nb, 1))
                    .copy_from(&eig.vectors.column(k));
                col += 1;
            }
        }
        CovarianceMatrix {
            matrix,
            eigen: Eigendecomposition {
                spectrum: Spectrum { values },
                vectors,
            },
        }
    }
}

/// Parametric eigenvalue models.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumModel {
    /// `λ_i = exp(-rate (i - 1))`
    ExpDecay {
        rate: f64,
    },
    /// `λ_i = 1 / i`
    Harmonic,
    Explicit(Vec<f64>),
}

/// Evaluates `model` for `n` components (ignored for explicit lists, whose
/// length must match `n` when `n > 0`).
pub fn model_spectrum(model: &SpectrumModel, n: usize) -> Result<Spectrum> {
    match model {
        SpectrumModel::ExpDecay { rate } => {
            if !(rate.is_finite() && *rate > 0.0) {
                return Err(MmiError::InvalidParameter(format!(
                    "decay rate must be positive, got {rate}"
                )));
            }
            check_len(n)?;
            Spectrum::new((1..=n).map(|i| (-rate * (i - 1) as f64).exp()).collect())
        }
        SpectrumModel::Harmonic => {
            check_len(n)?;
            Spectrum::new((1..=n).map(|i| 1.0 / i as f64).collect())
        }
        SpectrumModel::Explicit(values) => {
            if n != 0 && n != values.len() {
                return Err(MmiError::DimensionMismatch(format!(
                    "explicit spectrum has {} values but n = {n}",
                    values.len()
                )));
            }
            Spectrum::new(values.clone())
        }
    }
}

fn check_len(n: usize) -> Result<()> {
    if n == 0 {
        return Err(MmiError::InvalidParameter(
            "spectrum length must be at least 1".into(),
        ));
    }
    Ok(())
}

/// JSON form: `{"kind": "exp_decay"|"harmonic"|"explicit", "rate": .., "n": .., "values": [..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumDoc {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default)]
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl SpectrumDoc {
    pub fn model(&self) -> Result<SpectrumModel> {
        match self.kind.as_str() {
            "exp_decay" => Ok(SpectrumModel::ExpDecay {
                rate: self
                    .rate
                    .ok_or_else(|| MmiError::Parse("exp_decay spectrum needs a \"rate\"".into()))?,
            }),
            "harmonic" => Ok(SpectrumModel::Harmonic),
            "explicit" => Ok(SpectrumModel::Explicit(self.values.clone().ok_or_else(
                || MmiError::Parse("explicit spectrum needs \"values\"".into()),
            )?)),
            other => Err(MmiError::Parse(format!("unknown spectrum kind {other:?}"))),
        }
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        model_spectrum(&self.model()?, self.n)
    }
}

pub fn parse_spectrum_json(text: &str) -> Result<Spectrum> {
    let doc: SpectrumDoc =
        serde_json::from_str(text).map_err(|e| MmiError::Parse(e.to_string()))?;
    doc.spectrum()
}

/// Parses a square numeric grid, one matrix row per CSV record, no header.
pub fn parse_covariance_csv(text: &str) -> Result<CovarianceMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| MmiError::Parse(e.to_string()))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, field)| {
                field.parse::<f64>().map_err(|_| {
                    MmiError::Parse(format!(
                        "row {}, column {}: {field:?} is not a number",
                        r + 1,
                        c + 1
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(MmiError::Parse("covariance CSV is empty".into()));
    }
    if let Some((r, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != n) {
        return Err(MmiError::DimensionMismatch(format!(
            "row {} has {} entries, expected {n}",
            r + 1,
            row.len()
        )));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    CovarianceMatrix::from_row_slice(n, &flat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_has_unit_spectrum() {
        let cov = CovarianceMatrix::new(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(eigvals_from_covariance(&cov).values(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_is_sorted_descending() {
        let cov = CovarianceMatrix::from_row_slice(2, &[1.0, 0.0, 0.0, 2.0]).unwrap();
        let s = eigvals_from_covariance(&cov);
        assert_relative_eq!(s.values()[0], 2.0, max_relative = 1e-14);
        assert_relative_eq!(s.values()[1], 1.0, max_relative = 1e-14);
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        let err = CovarianceMatrix::from_row_slice(2, &[1.0, 0.5, 0.4, 1.0]).unwrap_err();
        assert!(matches!(err, MmiError::NotSymmetric { .. }));
        let err = CovarianceMatrix::from_row_slice(2, &[1.0, 2.0, 2.0, 1.0]).unwrap_err();
        assert!(matches!(err, MmiError::NotPositiveDefinite { .. }));
        // singular to within the ratio threshold
        let err = CovarianceMatrix::from_row_slice(2, &[1.0, 1.0, 1.0, 1.0]).unwrap_err();
        assert!(matches!(err, MmiError::NotPositiveDefinite { .. }));
    }

    #[test]
    fn model_spectra() {
        let s = model_spectrum(&SpectrumModel::ExpDecay { rate: 0.1 }, 1).unwrap();
        assert_eq!(s.values(), &[1.0]);

        let s = model_spectrum(&SpectrumModel::Harmonic, 3).unwrap();
        assert_relative_eq!(s.values()[0], 1.0);
        assert_relative_eq!(s.values()[1], 0.5);
        assert_relative_eq!(s.values()[2], 1.0 / 3.0);

        let s = model_spectrum(&SpectrumModel::ExpDecay { rate: 0.1 }, 100).unwrap();
        assert_relative_eq!(
            s.lambda(100).unwrap(),
            5.017468205617528e-5,
            max_relative = 1e-12
        );

        let err = model_spectrum(&SpectrumModel::Explicit(vec![1.0, 0.0]), 0).unwrap_err();
        assert!(matches!(
            err,
            MmiError::NonPositiveEigenvalue { index: 2, .. }
        ));
        let s = model_spectrum(&SpectrumModel::Explicit(vec![1.0, 3.0, 2.0]), 3).unwrap();
        assert_eq!(s.values(), &[3.0, 2.0, 1.0]);
    }

    #[test]
    fn lambda_is_one_based() {
        let s = Spectrum::new(vec![4.0, 2.0]).unwrap();
        assert_eq!(s.lambda(1).unwrap(), 4.0);
        assert!(matches!(
            s.lambda(0),
            Err(MmiError::IndexOutOfRange { index: 0, max: 2 })
        ));
        assert!(s.lambda(3).is_err());
    }

    #[test]
    fn block_covariance_full_matrix() {
        let block = CovarianceMatrix::from_row_slice(2, &[2.0, 0.5, 0.5, 1.0]).unwrap();
        let bc = BlockCovariance::for_input(block.clone(), 6).unwrap();
        assert_eq!(bc.repetitions(), 3);
        let full = bc.full();
        assert_eq!(full.dim(), 6);
        assert_eq!(full.matrix()[(2, 3)], 0.5);
        assert_eq!(full.matrix()[(1, 2)], 0.0);
        let direct = CovarianceMatrix::new(full.matrix().clone()).unwrap();
        for (a, b) in full
            .eigen()
            .spectrum
            .values()
            .iter()
            .zip(direct.eigen().spectrum.values())
        {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
        assert_relative_eq!(
            full.eigen().reconstruct(),
            full.matrix().clone(),
            epsilon = 1e-12
        );
        assert!(BlockCovariance::for_input(block, 5).is_err());
    }

    #[test]
    fn parses_spectrum_json() {
        let s = parse_spectrum_json(r#"{"kind":"harmonic","n":4}"#).unwrap();
        assert_eq!(s.len(), 4);
        let s = parse_spectrum_json(r#"{"kind":"explicit","values":[1,2]}"#).unwrap();
        assert_eq!(s.values(), &[2.0, 1.0]);
        assert!(parse_spectrum_json(r#"{"kind":"exp_decay","n":4}"#).is_err());
        assert!(parse_spectrum_json(r#"{"kind":"bogus","n":4}"#).is_err());
        assert!(parse_spectrum_json("not json").is_err());
    }

    #[test]
    fn parses_covariance_csv() {
        let cov = parse_covariance_csv("2, 0.5\n0.5, 1\n").unwrap();
        assert_eq!(cov.dim(), 2);
        assert!(matches!(
            parse_covariance_csv("1,0\n0\n"),
            Err(MmiError::DimensionMismatch(_))
        ));
        assert!(matches!(
            parse_covariance_csv("1,x\n0,1\n"),
            Err(MmiError::Parse(_))
        ));
        assert!(parse_covariance_csv("").is_err());
    }
}
