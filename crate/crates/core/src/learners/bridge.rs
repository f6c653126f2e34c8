//! HTTP client for an external PFN server.
//!
//! Wire protocol (JSON over HTTP):
//!
//! * `POST {endpoint}/v1/predict` with
//!   `{"train_x": [[f64]], "train_y": [int], "test_x": [[f64]], "k": int}`,
//!   answered by `{"probs": [[f64]]}` or `{"error": "..."}`.
//! * `GET {endpoint}/v1/health` answered by
//!   `{"status": "ok", "max_context": int, "max_classes": int, ...}`.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Context, ContextPredictor, ProbMatrix};
use crate::error::Result;

/// Rows whose sum is within this distance of 1 are renormalized; anything
/// further off is rejected.
pub const BRIDGE_ROW_TOL: f64 = 1e-6;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_millis(30_000);
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BridgeError {
    #[error("bridge request timed out")]
    Timeout,
    #[error("bridge transport failure: {0}")]
    Transport(String),
    #[error("bridge returned an error (HTTP {status}): {message}")]
    Remote { status: u16, message: String },
    #[error("malformed bridge response: {0}")]
    Malformed(String),
    #[error("bridge row {row} sums to {sum}, outside tolerance {BRIDGE_ROW_TOL}")]
    NotStochastic { row: usize, sum: f64 },
}

impl BridgeError {
    /// Network-level failures that may succeed on retry.
    pub fn is_retryable(&self) -> bool {
        matches!(self, BridgeError::Timeout | BridgeError::Transport(_))
    }
}

impl From<ureq::Error> for BridgeError {
    fn from(e: ureq::Error) -> Self {
        match e {
            ureq::Error::Timeout(_) => BridgeError::Timeout,
            ureq::Error::Json(e) => BridgeError::Malformed(e.to_string()),
            other => BridgeError::Transport(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub train_x: Vec<Vec<f64>>,
    pub train_y: Vec<usize>,
    pub test_x: Vec<Vec<f64>>,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub max_context: usize,
    pub max_classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeConfig {
    /// Base URL, e.g. `http://127.0.0.1:8765`.
    pub endpoint: String,
    #[serde(with = "millis")]
    pub timeout: Duration,
    pub max_in_flight: usize,
}

impl BridgeConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout: DEFAULT_TIMEOUT,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        }
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// Counting semaphore bounding concurrent requests.
struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Permits {
    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct BridgePredictor {
    config: BridgeConfig,
    agent: ureq::Agent,
    permits: Permits,
}

impl std::fmt::Debug for BridgePredictor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgePredictor").field("config", &self.config).finish()
    }
}

impl BridgePredictor {
    pub fn new(config: BridgeConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let permits = Permits {
            free: Mutex::new(config.max_in_flight.max(1)),
            cv: Condvar::new(),
        };
        Self { config, agent, permits }
    }

    pub fn config(&self) -> &BridgeConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.config.endpoint.trim_end_matches('/'))
    }

    pub fn health(&self) -> Result<HealthResponse, BridgeError> {
        let _permit = self.permits.acquire();
        let mut resp = self.agent.get(&self.url("/v1/health")).call()?;
        let status = resp.status().as_u16();
        let body: serde_json::Value = resp.body_mut().read_json()?;
        if status != 200 {
            return Err(remote_error(status, &body));
        }
        serde_json::from_value(body).map_err(|e| BridgeError::Malformed(e.to_string()))
    }

    /// Sends one predict request and validates the returned matrix.
    pub fn request(&self, req: &PredictRequest) -> Result<Array2<f64>, BridgeError> {
        let _permit = self.permits.acquire();
        let mut resp = self.agent.post(&self.url("/v1/predict")).send_json(req)?;
        let status = resp.status().as_u16();
        let body: serde_json::Value = resp.body_mut().read_json().map_err(|e| match e {
            ureq::Error::Timeout(_) => BridgeError::Timeout,
            other => BridgeError::Malformed(format!("HTTP {status}: {other}")),
        })?;
        if status != 200 || body.get("error").is_some() {
            return Err(remote_error(status, &body));
        }
        parse_probs(&body, req.test_x.len(), req.k)
    }
}

fn remote_error(status: u16, body: &serde_json::Value) -> BridgeError {
    match body.get("error").and_then(|e| e.as_str()) {
        Some(message) => BridgeError::Remote {
            status,
            message: message.to_string(),
        },
        None => BridgeError::Malformed(format!("HTTP {status} without an error message")),
    }
}

/// Checks shape, renormalizes rows within [`BRIDGE_ROW_TOL`] and rejects the rest.
pub fn parse_probs(body: &serde_json::Value, m: usize, k: usize) -> Result<Array2<f64>, BridgeError> {
    let rows = body
        .get("probs")
        .and_then(|p| p.as_array())
        .ok_or_else(|| BridgeError::Malformed("missing \"probs\" array".into()))?;
    if rows.len() != m {
        return Err(BridgeError::Malformed(format!(
            "expected {m} probability rows, got {}",
            rows.len()
        )));
    }
    let mut out = Array2::<f64>::zeros((m, k));
    for (i, row) in rows.iter().enumerate() {
        let row = row
            .as_array()
            .ok_or_else(|| BridgeError::Malformed(format!("row {i} is not an array")))?;
        if row.len() != k {
            return Err(BridgeError::Malformed(format!(
                "row {i} has {} entries, expected {k}",
                row.len()
            )));
        }
        let mut sum = 0.0;
        for (j, v) in row.iter().enumerate() {
            let p = v
                .as_f64()
                .filter(|p| p.is_finite() && *p >= 0.0)
                .ok_or_else(|| BridgeError::Malformed(format!("row {i} entry {j} is not a nonnegative number")))?;
            out[[i, j]] = p;
            sum += p;
        }
        if (sum - 1.0).abs() > BRIDGE_ROW_TOL {
            return Err(BridgeError::NotStochastic { row: i, sum });
        }
        out.row_mut(i).mapv_inplace(|p| p / sum);
    }
    Ok(out)
}

fn to_rows(x: ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
    x.rows().into_iter().map(|r| r.to_vec()).collect()
}

impl ContextPredictor for BridgePredictor {
    fn predict(&self, context: &Context, queries: ArrayView2<'_, f64>, num_classes: usize) -> Result<ProbMatrix> {
        let req = PredictRequest {
            train_x: to_rows(context.features()),
            train_y: context.labels().to_vec(),
            test_x: to_rows(queries),
            k: num_classes,
        };
        let probs = self.request(&req)?;
        Ok(ProbMatrix::from_raw(probs))
    }
}
