//! Problem instances: dictionaries, sparse codes, stimuli and recovery metrics.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::squared_norm;

/// Tolerance on atom norms.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-12;

/// NMSE reported for an exact recovery, in place of minus infinity.
pub const NMSE_FLOOR_DB: f64 = -300.0;

/// Default success threshold in dB. Recovery succeeds when NMSE is strictly below it.
pub const SUCCESS_THRESHOLD_DB: f64 = -15.0;

/// Ground truth of the three-neuron demonstration.
pub const DEMO_TRUTH: [f64; 3] = [0.4792, 0.0, 0.9754];

/// An `m × n` dictionary with unit-norm columns (atoms), `m <= n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: Array2<f64>,
}

impl Dictionary {
    /// Wraps `atoms`, checking the shape and that every column has unit norm.
    pub fn new(atoms: Array2<f64>) -> Result<Self> {
        let (m, n) = atoms.dim();
        check_shape(m, n)?;
        for (i, col) in atoms.axis_iter(Axis(1)).enumerate() {
            let norm = squared_norm(col).sqrt();
            if norm.is_nan() || (norm - 1.0).abs() >= UNIT_NORM_TOLERANCE {
                return Err(Error::Parameter(format!(
                    "atom {i} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(Dictionary { atoms })
    }

    /// Scales every column of `atoms` to unit norm.
    pub fn normalized(mut atoms: Array2<f64>) -> Result<Self> {
        let (m, n) = atoms.dim();
        check_shape(m, n)?;
        for (i, mut col) in atoms.axis_iter_mut(Axis(1)).enumerate() {
            let norm = squared_norm(col.view()).sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::Parameter(format!("atom {i} cannot be normalized")));
            }
            col /= norm;
        }
        Ok(Dictionary { atoms })
    }

    pub fn atoms(&self) -> ArrayView2<'_, f64> {
        self.atoms.view()
    }

    pub fn m(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn n(&self) -> usize {
        self.atoms.ncols()
    }

    /// Largest deviation of an atom norm from one.
    pub fn max_norm_deviation(&self) -> f64 {
        self.atoms
            .axis_iter(Axis(1))
            .map(|c| (squared_norm(c).sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn check_shape(m: usize, n: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::Dimension(format!(
            "dictionary must be non-empty, got {m}x{n}"
        )));
    }
    if m > n {
        return Err(Error::Dimension(format!(
            "dictionary must have m <= n, got {m}x{n}"
        )));
    }
    Ok(())
}

/// White Gaussian measurement noise at a fixed signal-to-noise ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub seed: u64,
}

/// A recovery instance with the quantities the solvers consume precomputed.
#[derive(Debug, Clone)]
pub struct Problem {
    dictionary: Dictionary,
    stimulus: Array1<f64>,
    bias: Array1<f64>,
    gram: Array2<f64>,
    lateral: Array2<f64>,
    truth: Option<Array1<f64>>,
}

impl Problem {
    pub fn new(
        dictionary: Dictionary,
        stimulus: Array1<f64>,
        truth: Option<Array1<f64>>,
    ) -> Result<Self> {
        if stimulus.len() != dictionary.m() {
            return Err(Error::Dimension(format!(
                "stimulus has length {}, dictionary has {} rows",
                stimulus.len(),
                dictionary.m()
            )));
        }
        if let Some(t) = &truth {
            check_code(t.view(), dictionary.n())?;
        }
        let phi = dictionary.atoms();
        let bias = phi.t().dot(&stimulus);
        let mut gram = phi.t().dot(&phi);
        // exact symmetry; the product is symmetric only up to rounding
        let n = gram.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (gram[[i, j]] + gram[[j, i]]);
                gram[[i, j]] = v;
                gram[[j, i]] = v;
            }
        }
        let mut lateral = gram.clone();
        lateral.diag_mut().fill(0.0);
        Ok(Problem {
            dictionary,
            stimulus,
            bias,
            gram,
            lateral,
            truth,
        })
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    pub fn stimulus(&self) -> ArrayView1<'_, f64> {
        self.stimulus.view()
    }

    /// `Φᵀs`, the feed-forward drive of every neuron.
    pub fn bias(&self) -> ArrayView1<'_, f64> {
        self.bias.view()
    }

    /// `ΦᵀΦ`, diagonal included.
    pub fn gram(&self) -> &Array2<f64> {
        &self.gram
    }

    /// `ΦᵀΦ` with a zero diagonal: the lateral inhibition weights.
    pub fn lateral(&self) -> &Array2<f64> {
        &self.lateral
    }

    pub fn truth(&self) -> Option<ArrayView1<'_, f64>> {
        self.truth.as_ref().map(|t| t.view())
    }

    pub fn n(&self) -> usize {
        self.dictionary.n()
    }

    pub fn m(&self) -> usize {
        self.dictionary.m()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ProblemDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ProblemDocument = serde_json::from_str(text)?;
        doc.try_into()
    }
}

/// Serialized form of a [`Problem`]. The dictionary is stored row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDocument {
    pub m: usize,
    pub n: usize,
    pub dictionary: Vec<f64>,
    pub stimulus: Vec<f64>,
    #[serde(default)]
    pub truth: Option<Vec<f64>>,
}

impl From<&Problem> for ProblemDocument {
    fn from(p: &Problem) -> Self {
        ProblemDocument {
            m: p.m(),
            n: p.n(),
            dictionary: p.dictionary.atoms.iter().copied().collect(),
            stimulus: p.stimulus.to_vec(),
            truth: p.truth.as_ref().map(|t| t.to_vec()),
        }
    }
}

impl TryFrom<ProblemDocument> for Problem {
    type Error = Error;

    fn try_from(doc: ProblemDocument) -> Result<Self> {
        let atoms = Array2::from_shape_vec((doc.m, doc.n), doc.dictionary)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        Problem::new(
            Dictionary::new(atoms)?,
            Array1::from(doc.stimulus),
            doc.truth.map(Array1::from),
        )
    }
}

fn check_code(code: ArrayView1<'_, f64>, n: usize) -> Result<()> {
    if code.len() != n {
        return Err(Error::Dimension(format!(
            "code has length {}, dictionary has {n} atoms",
            code.len()
        )));
    }
    if let Some(&v) = code.iter().find(|v| **v < 0.0 || !v.is_finite()) {
        return Err(Error::Domain {
            what: "code entry",
            value: v,
        });
    }
    Ok(())
}

/// Gaussian i.i.d. entries, columns scaled to unit norm.
pub fn make_dictionary(m: usize, n: usize, seed: u64) -> Result<Dictionary> {
    check_shape(m, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let atoms = Array2::from_shape_simple_fn((m, n), || rng.sample::<f64, _>(StandardNormal));
    Dictionary::normalized(atoms)
}

/// Number of nonzeros for a given sparsity fraction.
pub fn support_size(n: usize, sparsity: f64) -> Result<usize> {
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(Error::Parameter(format!(
            "sparsity must lie in (0, 1], got {sparsity}"
        )));
    }
    if n == 0 {
        return Err(Error::Dimension("code length must be positive".into()));
    }
    Ok(((sparsity * n as f64).round() as usize).clamp(1, n))
}

/// Non-negative code with `round(sparsity·n)` nonzeros at uniformly chosen
/// positions and amplitudes uniform on `(0, 1)`.
pub fn make_sparse_code(n: usize, sparsity: f64, seed: u64) -> Result<Array1<f64>> {
    let k = support_size(n, sparsity)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut code = Array1::zeros(n);
    let mut positions = index::sample(&mut rng, n, k).into_vec();
    positions.sort_unstable();
    for i in positions {
        code[i] = rng.sample::<f64, _>(Open01);
    }
    Ok(code)
}

/// Builds a code from explicit values, e.g. [`DEMO_TRUTH`].
pub fn sparse_code_from(values: &[f64]) -> Result<Array1<f64>> {
    let code = Array1::from(values.to_vec());
    check_code(code.view(), values.len())?;
    Ok(code)
}

/// `s = Φ·code`, optionally plus white Gaussian noise at exactly `snr_db`.
pub fn synthesize(dict: &Dictionary, code: &Array1<f64>, noise: Option<NoiseSpec>) -> Result<Problem> {
    check_code(code.view(), dict.n())?;
    let clean = dict.atoms().dot(code);
    let stimulus = match noise {
        None => clean,
        Some(spec) => {
            if !spec.snr_db.is_finite() {
                return Err(Error::Parameter(format!(
                    "snr_db must be finite, got {}",
                    spec.snr_db
                )));
            }
            let signal_power = squared_norm(clean.view());
            if signal_power == 0.0 {
                return Err(Error::UndefinedMetric(
                    "SNR is undefined for a zero signal".into(),
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let raw = Array1::from_shape_simple_fn(dict.m(), || rng.sample::<f64, _>(StandardNormal));
            let raw_power = squared_norm(raw.view());
            let target = signal_power / 10f64.powf(spec.snr_db / 10.0);
            clean + raw * (target / raw_power).sqrt()
        }
    };
    Problem::new(dict.clone(), stimulus, Some(code.clone()))
}

/// `10·log10(‖truth − estimate‖² / ‖truth‖²)`, floored at [`NMSE_FLOOR_DB`].
pub fn nmse(estimate: ArrayView1<'_, f64>, truth: ArrayView1<'_, f64>) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "estimate has length {}, truth has {}",
            estimate.len(),
            truth.len()
        )));
    }
    // same summation order as the numerator, so a zero estimate gives exactly 0 dB
    let denom: f64 = truth.iter().map(|t| t * t).sum();
    if denom == 0.0 {
        return Err(Error::UndefinedMetric("NMSE of an all-zero truth".into()));
    }
    let num: f64 = estimate
        .iter()
        .zip(truth.iter())
        .map(|(e, t)| (t - e) * (t - e))
        .sum();
    if num == 0.0 {
        return Ok(NMSE_FLOOR_DB);
    }
    Ok((10.0 * (num / denom).log10()).max(NMSE_FLOOR_DB))
}

pub fn success(estimate: ArrayView1<'_, f64>, truth: ArrayView1<'_, f64>, threshold_db: f64) -> Result<bool> {
    Ok(nmse(estimate, truth)? < threshold_db)
}

/// Realized SNR of a noisy stimulus relative to the clean signal `Φ·truth`.
pub fn realized_snr_db(problem: &Problem) -> Option<f64> {
    let truth = problem.truth()?;
    let clean = problem.dictionary().atoms().dot(&truth);
    let noise = &problem.stimulus() - &clean;
    Some(10.0 * (squared_norm(clean.view()) / squared_norm(noise.view())).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn scalar_dictionary_is_plus_or_minus_one() {
        for seed in 0..8 {
            let d = make_dictionary(1, 1, seed).unwrap();
            assert_eq!(d.atoms()[[0, 0]].abs(), 1.0);
        }
    }

    #[test]
    fn large_dictionary_has_unit_atoms() {
        let d = make_dictionary(100, 200, 7).unwrap();
        assert_eq!((d.m(), d.n()), (100, 200));
        assert!(d.max_norm_deviation() < UNIT_NORM_TOLERANCE);
    }

    #[test]
    fn dictionary_is_deterministic() {
        assert_eq!(make_dictionary(2, 3, 1).unwrap(), make_dictionary(2, 3, 1).unwrap());
        assert_ne!(make_dictionary(2, 3, 1).unwrap(), make_dictionary(2, 3, 2).unwrap());
    }

    #[test]
    fn dictionary_shape_errors() {
        assert!(matches!(make_dictionary(0, 3, 0), Err(Error::Dimension(_))));
        assert!(matches!(make_dictionary(3, 0, 0), Err(Error::Dimension(_))));
        assert!(matches!(make_dictionary(4, 3, 0), Err(Error::Dimension(_))));
        assert!(Dictionary::new(array![[2.0]]).is_err());
    }

    #[test]
    fn sparse_code_support_sizes() {
        let c = make_sparse_code(200, 0.15, 3).unwrap();
        assert_eq!(c.iter().filter(|v| **v != 0.0).count(), 30);
        let c = make_sparse_code(10, 0.1, 3).unwrap();
        let nz: Vec<f64> = c.iter().copied().filter(|v| *v != 0.0).collect();
        assert_eq!(nz.len(), 1);
        assert!(nz[0] > 0.0 && nz[0] < 1.0);
        assert!(make_sparse_code(10, 0.0, 0).is_err());
        assert!(make_sparse_code(10, 1.5, 0).is_err());
    }

    #[test]
    fn demo_code_override() {
        let c = sparse_code_from(&DEMO_TRUTH).unwrap();
        assert_eq!(c.to_vec(), vec![0.4792, 0.0, 0.9754]);
        assert!(sparse_code_from(&[0.1, -0.2]).is_err());
    }

    #[test]
    fn noiseless_synthesis_is_exact() {
        let d = make_dictionary(5, 8, 11).unwrap();
        let c = make_sparse_code(8, 0.25, 12).unwrap();
        let p = synthesize(&d, &c, None).unwrap();
        assert_eq!(p.stimulus().to_owned(), d.atoms().dot(&c));
        for i in 0..8 {
            let expected = d.atoms().column(i).dot(&p.stimulus());
            assert!((p.bias()[i] - expected).abs() < 1e-12);
        }
        for i in 0..8 {
            assert_eq!(p.lateral()[[i, i]], 0.0);
            assert!((p.gram()[[i, i]] - 1.0).abs() < 1e-12);
            for j in 0..8 {
                assert_eq!(p.gram()[[i, j]], p.gram()[[j, i]]);
                if i != j {
                    assert_eq!(p.gram()[[i, j]], p.lateral()[[i, j]]);
                }
            }
        }
    }

    #[test]
    fn noisy_synthesis_hits_requested_snr() {
        let d = make_dictionary(100, 200, 4).unwrap();
        let c = make_sparse_code(200, 0.15, 5).unwrap();
        for snr in [0.0, 10.0, 20.0, 35.5] {
            let p = synthesize(&d, &c, Some(NoiseSpec { snr_db: snr, seed: 6 })).unwrap();
            assert!((realized_snr_db(&p).unwrap() - snr).abs() < 0.01);
        }
    }

    #[test]
    fn zero_signal_with_noise_is_rejected() {
        let d = make_dictionary(3, 4, 0).unwrap();
        let zero = Array1::zeros(4);
        let r = synthesize(&d, &zero, Some(NoiseSpec { snr_db: 20.0, seed: 0 }));
        assert!(matches!(r, Err(Error::UndefinedMetric(_))));
        assert!(synthesize(&d, &Array1::zeros(3), None).is_err());
    }

    #[test]
    fn nmse_reference_values() {
        let t = array![0.4792, 0.0, 0.9754];
        assert_eq!(nmse(t.view(), t.view()).unwrap(), NMSE_FLOOR_DB);
        assert_eq!(nmse(Array1::zeros(3).view(), t.view()).unwrap(), 0.0);
        assert!(matches!(
            nmse(t.view(), Array1::zeros(3).view()),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(nmse(t.view(), Array1::zeros(2).view()).is_err());
    }

    #[test]
    fn success_threshold_is_strict() {
        let t = array![1.0, 0.0];
        assert!(success(t.view(), t.view(), SUCCESS_THRESHOLD_DB).unwrap());
        assert!(!success(Array1::zeros(2).view(), t.view(), SUCCESS_THRESHOLD_DB).unwrap());
        // NMSE of exactly -10 dB is not below -10 dB
        let e = array![1.0 - 0.1f64.sqrt(), 0.0];
        let v = nmse(e.view(), t.view()).unwrap();
        assert!(!success(e.view(), t.view(), v).unwrap());
    }

    #[test]
    fn json_round_trip() {
        let d = make_dictionary(4, 6, 9).unwrap();
        let c = make_sparse_code(6, 0.5, 9).unwrap();
        let p = synthesize(&d, &c, Some(NoiseSpec { snr_db: 15.0, seed: 1 })).unwrap();
        let q = Problem::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(q.dictionary(), p.dictionary());
        assert_eq!(q.stimulus(), p.stimulus());
        assert_eq!(q.truth(), p.truth());
        assert!(Problem::from_json(r#"{"m":1,"n":1,"dictionary":[1.0],"stimulus":[1.0],"extra":1}"#).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn nmse_of_scaled_truth(c in -3.0f64..3.0, seed in 0u64..1000) {
                prop_assume!((c - 1.0).abs() > 1e-6);
                let t = make_sparse_code(12, 0.5, seed).unwrap();
                let est = &t * c;
                let got = nmse(est.view(), t.view()).unwrap();
                let expected = 10.0 * ((c - 1.0) * (c - 1.0)).log10();
                prop_assert!((got - expected).abs() < 1e-9);
            }

            #[test]
            fn generated_atoms_are_unit(m in 1usize..12, extra in 0usize..12, seed in any::<u64>()) {
                let d = make_dictionary(m, m + extra, seed).unwrap();
                prop_assert!(d.max_norm_deviation() < UNIT_NORM_TOLERANCE);
            }
        }
    }
}
