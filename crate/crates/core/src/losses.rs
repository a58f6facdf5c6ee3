//! Bradley-Terry style pairwise losses and the regression MSE loss.
//!
//! All pairwise losses are functions of the reward gap
//! `delta = r(x, y_chosen) - r(x, y_rejected)` and, for the margin-aware
//! variants, the annotated preference magnitude `m`:
//!
//! ```text
//! regular: -ln sigmoid(delta)
//! margin:  -ln sigmoid(delta - m)
//! scaled:  -m ln sigmoid(delta)
//! ```
//!
//! `-ln sigmoid(z)` is evaluated as `softplus(-z)`, which stays finite for
//! any finite input.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Loss value and its derivative with respect to the reward gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub dloss_ddelta: f64,
}

pub fn loss_regular_bt(delta_r: f64) -> LossGrad {
    LossGrad { loss: softplus(-delta_r), dloss_ddelta: -sigmoid(-delta_r) }
}

pub fn loss_margin_bt(delta_r: f64, m: f64) -> LossGrad {
    let z = delta_r - m;
    LossGrad { loss: softplus(-z), dloss_ddelta: -sigmoid(-z) }
}

pub fn loss_scaled_bt(delta_r: f64, m: f64) -> LossGrad {
    LossGrad { loss: m * softplus(-delta_r), dloss_ddelta: -m * sigmoid(-delta_r) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BtVariant {
    Regular,
    Margin,
    Scaled,
}

impl BtVariant {
    pub const ALL: [BtVariant; 3] = [BtVariant::Regular, BtVariant::Margin, BtVariant::Scaled];

    pub fn eval(self, delta_r: f64, m: f64) -> LossGrad {
        match self {
            BtVariant::Regular => loss_regular_bt(delta_r),
            BtVariant::Margin => loss_margin_bt(delta_r, m),
            BtVariant::Scaled => loss_scaled_bt(delta_r, m),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BtVariant::Regular => "Regular Bradley-Terry",
            BtVariant::Margin => "Margin Bradley-Terry",
            BtVariant::Scaled => "Scaled Bradley-Terry",
        }
    }
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn loss_regression_mse(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch { expected: pred.len(), actual: target.len() });
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("mse over zero outputs".into()));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let e = p - t;
            loss += e * e;
            2.0 * e / n
        })
        .collect();
    Ok((loss / n, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub delta_r: f64,
    pub m: f64,
}

/// Four correct and four incorrect predictions, each at margin 1 and 3.
pub const DEFAULT_SCENARIOS: [Scenario; 8] = [
    Scenario { delta_r: 3.0, m: 1.0 },
    Scenario { delta_r: 3.0, m: 3.0 },
    Scenario { delta_r: 1.0, m: 1.0 },
    Scenario { delta_r: 1.0, m: 3.0 },
    Scenario { delta_r: -1.0, m: 1.0 },
    Scenario { delta_r: -1.0, m: 3.0 },
    Scenario { delta_r: -3.0, m: 1.0 },
    Scenario { delta_r: -3.0, m: 3.0 },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub variant: BtVariant,
    pub losses: Vec<f64>,
    pub average: f64,
}

/// Loss of every BT variant at every scenario, one row per variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTable {
    pub scenarios: Vec<Scenario>,
    pub rows: Vec<LossRow>,
}

pub fn table5(scenarios: &[Scenario]) -> LossTable {
    let rows = BtVariant::ALL
        .iter()
        .map(|&variant| {
            let losses: Vec<f64> = scenarios.iter().map(|s| variant.eval(s.delta_r, s.m).loss).collect();
            let average =
                if losses.is_empty() { 0.0 } else { losses.iter().sum::<f64>() / losses.len() as f64 };
            LossRow { variant, losses, average }
        })
        .collect();
    LossTable { scenarios: scenarios.to_vec(), rows }
}

impl LossTable {
    pub fn row(&self, variant: BtVariant) -> &LossRow {
        self.rows.iter().find(|r| r.variant == variant).expect("every variant has a row")
    }

    /// Fixed-width text rendering, four decimals per cell.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<24}", "Predicted Reward Gap");
        for s in &self.scenarios {
            let _ = write!(out, " {:>8}", format!("dr={}", s.delta_r));
        }
        out.push_str(&format!(" {:>9}\n", ""));
        let _ = write!(out, "{:<24}", "Human Annotated Margin");
        for s in &self.scenarios {
            let _ = write!(out, " {:>8}", format!("m={}", s.m));
        }
        out.push_str(&format!(" {:>9}\n", "Avg. Loss"));
        for row in &self.rows {
            let _ = write!(out, "{:<24}", row.variant.label());
            for l in &row.losses {
                let _ = write!(out, " {l:>8.4}");
            }
            let _ = writeln!(out, " {:>9.4}", row.average);
        }
        out
    }
}
