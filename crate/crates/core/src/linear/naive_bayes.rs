use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureRow};

/// Multinomial Naive Bayes over term counts. Class index 0 is FAKE, 1 is REAL.
#[derive(Clone, Debug, PartialEq)]
pub struct NaiveBayesModel {
    pub log_priors: [f64; 2],
    /// Row-major `2 x V` log likelihoods.
    pub log_likelihoods: Vec<f64>,
    pub alpha: f64,
}

fn class_index(label: Label) -> usize {
    match label {
        Label::Fake => 0,
        Label::Real => 1,
    }
}

/// θ(t,c) = (count(t,c) + α) / (count(·,c) + α·V), stored as logs.
pub fn nb_fit(x: &FeatureMatrix, y: &[Label], alpha: f64) -> Result<NaiveBayesModel> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::domain(format!("smoothing alpha must be positive, got {alpha}")));
    }
    super::check_two_classes(x, y)?;
    let v = x.dim();
    let mut counts = vec![0.0; 2 * v];
    let mut class_n = [0usize; 2];
    for (row, &label) in x.rows().zip(y) {
        let c = class_index(label);
        class_n[c] += 1;
        let mut bad = None;
        row.for_each(|t, value| {
            if value < 0.0 {
                bad = Some(value);
            }
            counts[c * v + t] += value;
        });
        if let Some(value) = bad {
            return Err(Error::domain(format!(
                "naive Bayes needs nonnegative counts, found {value}"
            )));
        }
    }
    let n = y.len() as f64;
    let log_priors = [(class_n[0] as f64 / n).ln(), (class_n[1] as f64 / n).ln()];
    let mut log_likelihoods = vec![0.0; 2 * v];
    for c in 0..2 {
        let row = &counts[c * v..(c + 1) * v];
        let denom = (row.iter().sum::<f64>() + alpha * v as f64).ln();
        for t in 0..v {
            log_likelihoods[c * v + t] = (row[t] + alpha).ln() - denom;
        }
    }
    Ok(NaiveBayesModel {
        log_priors,
        log_likelihoods,
        alpha,
    })
}

impl NaiveBayesModel {
    pub fn dim(&self) -> usize {
        self.log_likelihoods.len() / 2
    }

    /// Unnormalized joint log scores `[fake, real]`.
    pub fn log_scores(&self, x: FeatureRow<'_>) -> Result<[f64; 2]> {
        x.check_dim(self.dim())?;
        let v = self.dim();
        let mut scores = self.log_priors;
        x.for_each(|t, count| {
            scores[0] += count * self.log_likelihoods[t];
            scores[1] += count * self.log_likelihoods[v + t];
        });
        Ok(scores)
    }
}

/// Label and posterior `[P(fake|x), P(real|x)]`. Ties go to REAL.
pub fn nb_predict(model: &NaiveBayesModel, x: FeatureRow<'_>) -> Result<(Label, [f64; 2])> {
    let [fake, real] = model.log_scores(x)?;
    let m = fake.max(real);
    let (ef, er) = ((fake - m).exp(), (real - m).exp());
    let z = ef + er;
    let posterior = [ef / z, er / z];
    let label = if fake > real { Label::Fake } else { Label::Real };
    Ok((label, posterior))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::SparseVector;

    /// Bag-of-words count rows over a fixed token list.
    fn counts(vocab: &[&str], text: &str) -> Vec<f64> {
        let mut row = vec![0.0; vocab.len()];
        for t in text.split_whitespace() {
            if let Some(i) = vocab.iter().position(|v| v == &t) {
                row[i] += 1.0;
            }
        }
        row
    }

    const VOCAB: [&str; 6] = ["cheap", "cure", "miracle", "cdc", "reports", "deaths"];

    fn toy() -> (FeatureMatrix, Vec<Label>) {
        let x = FeatureMatrix::from_rows(vec![
            counts(&VOCAB, "cheap cure miracle"),
            counts(&VOCAB, "cdc reports deaths"),
        ])
        .unwrap();
        (x, vec![Label::Fake, Label::Real])
    }

    /// Direct Bayes: P(c) Π θ^count, no logs.
    fn brute_force_posterior(x: &FeatureMatrix, y: &[Label], alpha: f64, doc: &[f64]) -> [f64; 2] {
        let v = x.dim();
        let mut joint = [0.0; 2];
        for (c, label) in Label::ALL.iter().enumerate() {
            let members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == *label).collect();
            let prior = members.len() as f64 / y.len() as f64;
            let mut tc = vec![0.0; v];
            for &i in &members {
                for (t, slot) in tc.iter_mut().enumerate() {
                    *slot += x.row(i).value(t);
                }
            }
            let total: f64 = tc.iter().sum();
            let mut p = prior;
            for t in 0..v {
                let theta = (tc[t] + alpha) / (total + alpha * v as f64);
                for _ in 0..doc[t] as usize {
                    p *= theta;
                }
            }
            joint[c] = p;
        }
        let z = joint[0] + joint[1];
        [joint[0] / z, joint[1] / z]
    }

    #[test]
    fn toy_corpus_matches_brute_force() {
        let (x, y) = toy();
        let m = nb_fit(&x, &y, 1.0).unwrap();
        let doc = counts(&VOCAB, "cheap cure");
        let (label, post) = nb_predict(&m, (&doc).into()).unwrap();
        assert_eq!(label, Label::Fake);
        let oracle = brute_force_posterior(&x, &y, 1.0, &doc);
        // θ_fake = 2/9 each, θ_real = 1/9 each: posterior 4/5.
        assert!((oracle[0] - 0.8).abs() < 1e-15);
        assert!((post[0] - oracle[0]).abs() < 1e-12 && (post[1] - oracle[1]).abs() < 1e-12);
    }

    #[test]
    fn parameters_are_normalized() {
        let (x, y) = toy();
        let m = nb_fit(&x, &y, 0.5).unwrap();
        assert!((m.log_priors.iter().map(|p| p.exp()).sum::<f64>() - 1.0).abs() < 1e-12);
        for c in 0..2 {
            let s: f64 = m.log_likelihoods[c * 6..(c + 1) * 6].iter().map(|l| l.exp()).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn huge_alpha_returns_to_priors() {
        let x = FeatureMatrix::from_rows(vec![
            counts(&VOCAB, "cheap cure miracle"),
            counts(&VOCAB, "cheap miracle"),
            counts(&VOCAB, "cdc reports deaths"),
        ])
        .unwrap();
        let y = vec![Label::Fake, Label::Fake, Label::Real];
        let m = nb_fit(&x, &y, 1e6).unwrap();
        let (_, post) = nb_predict(&m, (&counts(&VOCAB, "cheap cure")).into()).unwrap();
        assert!((post[0] - 2.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn zero_vector_uses_priors_and_ties_go_real() {
        let x = FeatureMatrix::from_rows(vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let m = nb_fit(&x, &[Label::Fake, Label::Fake, Label::Real], 1.0).unwrap();
        let zero = SparseVector::zeros(2);
        assert_eq!(nb_predict(&m, (&zero).into()).unwrap().0, Label::Fake);
        let (x, y) = toy();
        let m = nb_fit(&x, &y, 1.0).unwrap();
        let zero = SparseVector::zeros(6);
        let (label, post) = nb_predict(&m, (&zero).into()).unwrap();
        assert_eq!((label, post), (Label::Real, [0.5, 0.5]));
    }

    #[test]
    fn rejects_bad_inputs() {
        let (x, _) = toy();
        assert!(nb_fit(&x, &[Label::Fake, Label::Fake], 1.0).is_err());
        let (x, y) = toy();
        assert!(nb_fit(&x, &y, 0.0).is_err());
        assert!(nb_fit(&x, &y, -1.0).is_err());
        let m = nb_fit(&x, &y, 1.0).unwrap();
        assert!(nb_predict(&m, (&vec![1.0]).into()).is_err());
    }

    #[test]
    fn count_scaling_invariance_with_equal_priors() {
        let x = FeatureMatrix::from_rows(vec![
            counts(&VOCAB, "cheap cure miracle cdc"),
            counts(&VOCAB, "cdc reports deaths cheap deaths"),
        ])
        .unwrap();
        let m = nb_fit(&x, &[Label::Fake, Label::Real], 1.0).unwrap();
        for text in ["cheap", "deaths cdc", "cure reports", "miracle deaths deaths"] {
            let base = counts(&VOCAB, text);
            let expected = nb_predict(&m, (&base).into()).unwrap().0;
            for k in [1.0, 2.0, 5.0] {
                let scaled: Vec<f64> = base.iter().map(|c| c * k).collect();
                assert_eq!(nb_predict(&m, (&scaled).into()).unwrap().0, expected);
            }
        }
    }
}
