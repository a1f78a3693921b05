//! Finite-difference checks of the analytic gradients on built-in fixtures.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Label;
use crate::encoder::{Batch, EncoderConfig, EncoderModel};
use crate::error::Result;
use crate::features::FeatureMatrix;
use crate::fixtures;
use crate::linear::{logreg_gradient, logreg_objective};

pub const ENCODER_THRESHOLD: f64 = 1e-4;
pub const LOGREG_THRESHOLD: f64 = 1e-6;
const ENCODER_STEP: f64 = 1e-4;
const LOGREG_STEP: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, 1e-6)`. The floor keeps entries whose true
/// gradient is zero (such as attention key biases, which cancel in the
/// softmax) from turning roundoff into large ratios.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockResult {
    pub suite: &'static str,
    pub block: String,
    pub max_relative_error: f64,
    pub threshold: f64,
}

impl BlockResult {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.threshold
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradcheckReport {
    pub blocks: Vec<BlockResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(BlockResult::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &BlockResult> {
        self.blocks.iter().filter(|b| !b.passed())
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.blocks.iter().map(|b| b.block.len()).max().unwrap_or(5);
        for b in &self.blocks {
            writeln!(
                f,
                "{:<8} {:<width$}  max_rel {:.3e}  threshold {:.0e}  {}",
                b.suite,
                b.block,
                b.max_relative_error,
                b.threshold,
                if b.passed() { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// `corrupt` names a block whose analytic gradient is perturbed before the
/// comparison, to exercise the failure path.
#[derive(Clone, Debug, Default)]
pub struct GradcheckOptions {
    pub corrupt: Option<String>,
}

fn corrupt(grad: &mut [f64]) {
    grad.iter_mut().for_each(|g| *g = *g * 1.01 + 1e-3);
}

fn logreg_fixture() -> (FeatureMatrix, Vec<Label>, Vec<f64>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<Vec<f64>> = (0..20)
        .map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let y = rows.iter().map(|r| Label::from_score(r[0] - r[2] + 0.3)).collect();
    let w = (0..5).map(|_| rng.random_range(-0.5..0.5)).collect();
    (
        FeatureMatrix::from_rows(rows).expect("fixture is well formed"),
        y,
        w,
        0.2,
    )
}

fn check_logreg(opts: &GradcheckOptions, out: &mut Vec<BlockResult>) {
    let (x, y, w, b) = logreg_fixture();
    let lambda = 0.1;
    let (mut gw, gb) = logreg_gradient(&w, b, &x, &y, lambda);
    let mut gb = [gb];
    let h = LOGREG_STEP;
    let f = |w: &[f64], b: f64| logreg_objective(w, b, &x, &y, lambda);
    if opts.corrupt.as_deref() == Some("logreg.weights") {
        corrupt(&mut gw);
    }
    if opts.corrupt.as_deref() == Some("logreg.bias") {
        corrupt(&mut gb);
    }
    let mut worst = 0.0f64;
    for j in 0..w.len() {
        let mut wp = w.clone();
        wp[j] += h;
        let mut wm = w.clone();
        wm[j] -= h;
        worst = worst.max(relative_error(gw[j], (f(&wp, b) - f(&wm, b)) / (2.0 * h)));
    }
    out.push(BlockResult {
        suite: "logreg",
        block: "logreg.weights".into(),
        max_relative_error: worst,
        threshold: LOGREG_THRESHOLD,
    });
    let num = (f(&w, b + h) - f(&w, b - h)) / (2.0 * h);
    out.push(BlockResult {
        suite: "logreg",
        block: "logreg.bias".into(),
        max_relative_error: relative_error(gb[0], num),
        threshold: LOGREG_THRESHOLD,
    });
}

/// Small encoder in 64-bit arithmetic, checked on a two-example batch.
pub fn encoder_fixture() -> (EncoderModel, Batch) {
    let config = EncoderConfig {
        vocab_size: 7,
        d_model: 8,
        heads: 2,
        layers: 2,
        d_ff: 12,
        max_len: 8,
        init_std: 0.5,
        seed: 3,
    };
    let model = EncoderModel::new(config).expect("fixture config is valid");
    let (seqs, labels) = fixtures::gradcheck_sequences(7);
    (model, Batch::new(&seqs, &labels).expect("fixture batch is valid"))
}

fn check_encoder(opts: &GradcheckOptions, out: &mut Vec<BlockResult>) -> Result<()> {
    let (model, batch) = encoder_fixture();
    let (_, mut grad) = model.loss_and_grad(&batch)?;
    let h = ENCODER_STEP;
    for block in model.layout().blocks.clone() {
        let range = block.offset..block.offset + block.len;
        if opts.corrupt.as_deref() == Some(block.name.as_str()) {
            corrupt(&mut grad[range.clone()]);
        }
        let mut worst = 0.0f64;
        let mut probe = model.clone();
        for i in range {
            let orig = probe.params()[i];
            probe.params_mut()[i] = orig + h;
            let plus = probe.loss(&batch)?;
            probe.params_mut()[i] = orig - h;
            let minus = probe.loss(&batch)?;
            probe.params_mut()[i] = orig;
            worst = worst.max(relative_error(grad[i], (plus - minus) / (2.0 * h)));
        }
        out.push(BlockResult {
            suite: "encoder",
            block: block.name,
            max_relative_error: worst,
            threshold: ENCODER_THRESHOLD,
        });
    }
    Ok(())
}

pub fn run_gradcheck(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let mut blocks = Vec::new();
    check_logreg(opts, &mut blocks);
    check_encoder(opts, &mut blocks)?;
    Ok(GradcheckReport { blocks })
}
