use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::{sigmoid, Scalar};

use super::tfidf::{SparseVector, TfidfConfig, TfidfVectorizer};
use super::{check_both_classes, Example, ModelError, Prediction};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// L2 regularisation strength.
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            lambda: 1e-3,
            epochs: 20,
            seed: 0,
        }
    }
}

/// Linear decision function `w . x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSvm<T> {
    pub weights: Vec<T>,
    pub bias: T,
}

impl<T: Scalar> LinearSvm<T> {
    pub fn decision(&self, x: &SparseVector<T>) -> T {
        x.dot_dense(&self.weights) + self.bias
    }

    /// Primal hinge-loss SVM by stochastic subgradient descent with step 1/(lambda t) on the
    /// weights and projection onto the ball of radius 1/sqrt(lambda). The bias is not
    /// regularised and moves by 1/sqrt(t) on margin violations. Examples are visited in a
    /// freshly shuffled order every epoch.
    pub fn train(
        data: &[(SparseVector<T>, bool)],
        dim: usize,
        config: &SvmConfig,
    ) -> Result<Self, ModelError> {
        if !(config.lambda > 0.0 && config.lambda.is_finite()) {
            return Err(ModelError::Config(format!(
                "lambda must be positive, got {}",
                config.lambda
            )));
        }
        if data.is_empty() {
            return Err(ModelError::EmptyTrainingSet);
        }
        let positives = data.iter().filter(|(_, y)| *y).count();
        if positives == 0 {
            return Err(ModelError::SingleClass("negative"));
        }
        if positives == data.len() {
            return Err(ModelError::SingleClass("positive"));
        }
        let lambda = T::from_f64_lossy(config.lambda);
        let radius = T::one() / lambda.sqrt();
        // w = scale * v, so the per-step shrink costs O(1)
        let mut v = vec![T::zero(); dim];
        let mut scale = T::one();
        let mut sq = T::zero();
        let mut bias = T::zero();
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut t = 0usize;
        let tiny = T::from_f64_lossy(1e-9);
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            for &k in &order {
                t += 1;
                let tt = T::from_usize_lossy(t);
                let (x, label) = &data[k];
                let y = if *label { T::one() } else { -T::one() };
                let score = scale * x.dot_dense(&v) + bias;
                let eta = T::one() / (lambda * tt);
                scale *= T::one() - T::one() / tt;
                if scale == T::zero() {
                    v.iter_mut().for_each(|w| *w = T::zero());
                    sq = T::zero();
                    scale = T::one();
                }
                if y * score < T::one() {
                    let a = eta * y / scale;
                    for (&i, &xi) in x.indices.iter().zip(&x.values) {
                        sq += (a + a) * v[i] * xi + a * a * xi * xi;
                        v[i] += a * xi;
                    }
                    bias += y / tt.sqrt();
                }
                let norm = scale * sq.max(T::zero()).sqrt();
                if norm > radius {
                    scale *= radius / norm;
                }
                if scale < tiny {
                    v.iter_mut().for_each(|w| *w *= scale);
                    sq = v.iter().fold(T::zero(), |acc, &w| acc + w * w);
                    scale = T::one();
                }
            }
        }
        v.iter_mut().for_each(|w| *w *= scale);
        Ok(LinearSvm { weights: v, bias })
    }
}

/// TF-IDF features followed by a linear SVM.
#[derive(Clone, Debug, PartialEq)]
pub struct TfidfSvm<T> {
    pub vectorizer: TfidfVectorizer<T>,
    pub svm: LinearSvm<T>,
    pub config: SvmConfig,
}

impl<T: Scalar> TfidfSvm<T> {
    pub fn train(
        examples: &[Example],
        tfidf: TfidfConfig,
        config: SvmConfig,
    ) -> Result<Self, ModelError> {
        check_both_classes(examples)?;
        let mut vectorizer = TfidfVectorizer::new(tfidf);
        let docs: Vec<&[String]> = examples.iter().map(|e| e.tokens.as_slice()).collect();
        vectorizer.fit(&docs);
        let data = examples
            .iter()
            .map(|e| Ok((vectorizer.transform(&e.tokens)?, e.label)))
            .collect::<Result<Vec<_>, ModelError>>()?;
        let svm = LinearSvm::train(&data, vectorizer.dim(), &config)?;
        Ok(TfidfSvm {
            vectorizer,
            svm,
            config,
        })
    }

    pub fn decision<S: AsRef<str>>(&self, tokens: &[S]) -> T {
        let x = self
            .vectorizer
            .transform(tokens)
            .expect("a trained model holds a fitted vectorizer");
        self.svm.decision(&x)
    }

    /// The label is the sign of the decision value (ties positive); the probability is its
    /// logistic transform, which is monotone but not calibrated.
    pub fn predict<S: AsRef<str>>(&self, tokens: &[S]) -> Prediction {
        let score = self.decision(tokens);
        Prediction {
            probability: sigmoid(score).to_f64_lossy(),
            label: score >= T::zero(),
        }
    }
}
