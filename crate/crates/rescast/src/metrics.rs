//! Forecast error metrics: MAE, MSE, RMSE, MAPE and mean-normalized RMSE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which scale the evaluated values were on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Raw,
    Normalized,
}

impl std::fmt::Display for Scale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scale::Raw => write!(f, "raw"),
            Scale::Normalized => write!(f, "normalized"),
        }
    }
}

/// The five error metrics plus bookkeeping. `mape_percent` is absent when
/// every term was excluded by the epsilon guard; `nrmse_mean` is absent when
/// the actuals' mean is within epsilon of zero. `mape_excluded` counts the
/// terms skipped because |actual| fell below the epsilon guard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    pub mape_percent: Option<f64>,
    pub nrmse_mean: Option<f64>,
    pub n: usize,
    pub mape_excluded: usize,
    pub runtime_seconds: Option<f64>,
    pub model_name: String,
    pub scale: Scale,
}

impl EvaluationReport {
    pub fn with_model_name(mut self, name: &str) -> Self {
        self.model_name = name.to_string();
        self
    }

    pub fn with_runtime(mut self, seconds: f64) -> Self {
        self.runtime_seconds = Some(seconds);
        self
    }

    pub fn with_scale(mut self, scale: Scale) -> Self {
        self.scale = scale;
        self
    }

    /// Single CSV row in the fixed column order
    /// `mae,mse,rmse,mape_percent,nrmse_mean,n,runtime_seconds,model_name,scale`.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "mae,mse,rmse,mape_percent,nrmse_mean,n,runtime_seconds,model_name,scale\n{},{},{},{},{},{},{},{},{}\n",
            self.mae,
            self.mse,
            self.rmse,
            opt(self.mape_percent),
            opt(self.nrmse_mean),
            self.n,
            opt(self.runtime_seconds),
            self.model_name,
            self.scale,
        )
    }
}

/// Compute all five metrics. MAPE terms with |actual| < `mape_epsilon` are
/// excluded and counted; NRMSE is reported as absent when |mean(actuals)|
/// < `mape_epsilon`.
pub fn evaluate(actuals: &[f64], predictions: &[f64], mape_epsilon: f64) -> Result<EvaluationReport> {
    if actuals.len() != predictions.len() {
        return Err(Error::Shape(format!(
            "{} actuals vs {} predictions",
            actuals.len(),
            predictions.len()
        )));
    }
    if actuals.is_empty() {
        return Err(Error::EmptySeries("cannot evaluate empty sequences".into()));
    }
    if let Some(v) = actuals.iter().chain(predictions).find(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(format!("evaluation value {v}")));
    }

    let n = actuals.len() as f64;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut mape_sum = 0.0;
    let mut mape_terms = 0usize;
    let mut actual_sum = 0.0;
    for (&y, &y_hat) in actuals.iter().zip(predictions) {
        let err = y - y_hat;
        abs_sum += err.abs();
        sq_sum += err * err;
        actual_sum += y;
        if y.abs() >= mape_epsilon {
            mape_sum += (err / y).abs();
            mape_terms += 1;
        }
    }

    let mae = abs_sum / n;
    let mse = sq_sum / n;
    let rmse = mse.sqrt();
    let mean = actual_sum / n;
    let mape_percent = (mape_terms > 0).then(|| 100.0 * mape_sum / mape_terms as f64);
    let nrmse_mean = (mean.abs() >= mape_epsilon).then(|| rmse / mean);

    Ok(EvaluationReport {
        mae,
        mse,
        rmse,
        mape_percent,
        nrmse_mean,
        n: actuals.len(),
        mape_excluded: actuals.len() - mape_terms,
        runtime_seconds: None,
        model_name: String::new(),
        scale: Scale::Raw,
    })
}
