use std::collections::HashSet;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::verbalizer::{format_weight, FactorRecord};

/// Tolerance on the weights summing to 100.
pub const WEIGHT_SUM_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Position {
    pub security: String,
    pub ticker: String,
    /// Percent of portfolio value.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PortfolioError {
    #[error("portfolio has no positions")]
    Empty,
    #[error("duplicate ticker {0}")]
    DuplicateTicker(String),
    #[error("weight of {ticker} is {weight}, expected a value in [0, 100]")]
    WeightOutOfRange { ticker: String, weight: f64 },
    #[error("weights sum to {0}, expected 100")]
    WeightSum(f64),
    #[error("portfolio JSON: {0}")]
    Parse(String),
}

/// The holdings pinned at the top of every agent prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPortfolio", into = "RawPortfolio")]
pub struct Portfolio {
    positions: Vec<Position>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPortfolio {
    positions: Vec<Position>,
}

impl TryFrom<RawPortfolio> for Portfolio {
    type Error = PortfolioError;

    fn try_from(raw: RawPortfolio) -> Result<Self, Self::Error> {
        Portfolio::new(raw.positions)
    }
}

impl From<Portfolio> for RawPortfolio {
    fn from(p: Portfolio) -> Self {
        RawPortfolio { positions: p.positions }
    }
}

impl Portfolio {
    pub fn new(positions: Vec<Position>) -> Result<Self, PortfolioError> {
        if positions.is_empty() {
            return Err(PortfolioError::Empty);
        }
        let mut seen = HashSet::new();
        for p in &positions {
            if !seen.insert(p.ticker.as_str()) {
                return Err(PortfolioError::DuplicateTicker(p.ticker.clone()));
            }
            if !(0.0..=100.0).contains(&p.weight) {
                return Err(PortfolioError::WeightOutOfRange {
                    ticker: p.ticker.clone(),
                    weight: p.weight,
                });
            }
        }
        let total: f64 = positions.iter().map(|p| p.weight).sum();
        if (total - 100.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(PortfolioError::WeightSum(total));
        }
        Ok(Portfolio { positions })
    }

    pub fn from_json<R: Read>(reader: R) -> Result<Self, PortfolioError> {
        serde_json::from_reader(reader).map_err(|e| PortfolioError::Parse(e.to_string()))
    }

    pub fn from_factor_records(records: &[FactorRecord]) -> Result<Self, PortfolioError> {
        Self::new(
            records
                .iter()
                .map(|r| Position {
                    security: r.security_name.clone(),
                    ticker: r.ticker.clone(),
                    weight: r.weight,
                })
                .collect(),
        )
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Plain-text summary used as the first prompt message.
    pub fn digest(&self) -> String {
        let mut s = format!(
            "Portfolio under analysis: {} positions, weights in percent of total portfolio value.",
            self.positions.len()
        );
        for (i, p) in self.positions.iter().enumerate() {
            s.push_str(&format!("\n{}. {} ({}): {}%", i + 1, p.security, p.ticker, format_weight(p.weight)));
        }
        s
    }
}
