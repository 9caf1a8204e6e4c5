//! Remote noise-prediction adapter.
//!
//! `POST {base}/predict_noise` with
//! `{"latent": <b64 f32 LE C-order>, "shape": [c, h, w], "timestep": t, "text": "...", "is_null": bool}`
//! and a response carrying `{"latent", "shape"}` in the same encoding.
//! Pixel-space runs additionally use `POST {base}/encode` (`{"image": <b64 png>}`
//! to a latent) and `POST {base}/decode` (latent to `{"image": <b64 png>}`).

use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use crate::backend::{Condition, ScoreBackend};
use crate::error::{GasError, Result};
use crate::latent::{LatentGrid, LatentShape};

/// Latent payload as it travels on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireLatent {
    pub latent: String,
    pub shape: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictNoiseRequest {
    pub latent: String,
    pub shape: [usize; 3],
    pub timestep: usize,
    pub text: String,
    pub is_null: bool,
}

/// Encodes a latent as base64 of little-endian `f32` values in C order.
pub fn encode_latent(grid: &LatentGrid) -> WireLatent {
    let mut bytes = Vec::with_capacity(grid.shape().len() * 4);
    for v in grid.array().iter() {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let s = grid.shape();
    WireLatent {
        latent: STANDARD.encode(bytes),
        shape: [s.channels, s.height, s.width],
    }
}

pub fn decode_latent(wire: &WireLatent) -> Result<LatentGrid> {
    let bytes = STANDARD
        .decode(wire.latent.as_bytes())
        .map_err(|e| GasError::invalid(format!("latent payload is not base64: {e}")))?;
    let shape = LatentShape::new(wire.shape[0], wire.shape[1], wire.shape[2]);
    if bytes.len() != shape.len() * 4 {
        return Err(GasError::invalid(format!(
            "latent payload has {} bytes, shape {shape} needs {}",
            bytes.len(),
            shape.len() * 4
        )));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    LatentGrid::from_vec(shape, values)
}

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    pub base_url: String,
    pub max_attempts: u32,
    pub timeout: Duration,
    pub retry_backoff: Duration,
}

impl HttpBackendConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            max_attempts: 3,
            timeout: Duration::from_secs(60),
            retry_backoff: Duration::from_millis(200),
        }
    }
}

/// Noise predictor served over HTTP. The underlying client pools
/// connections, so one instance can be shared between jobs.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    config: HttpBackendConfig,
    client: Client,
}

#[derive(Deserialize)]
struct ImagePayload {
    image: String,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self> {
        if config.max_attempts == 0 {
            return Err(GasError::Config("max_attempts must be at least 1".into()));
        }
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| GasError::Config(format!("cannot build HTTP client: {e}")))?;
        Ok(Self { config, client })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{path}", self.config.base_url.trim_end_matches('/'))
    }

    /// POSTs `body` and decodes a JSON response, retrying transport errors and
    /// 5xx statuses. `on_404` maps a not-found response to a domain error.
    fn post<B: Serialize, R: for<'de> Deserialize<'de>>(
        &self,
        path: &str,
        body: &B,
        on_404: impl Fn() -> GasError,
    ) -> Result<R> {
        let url = self.url(path);
        let mut last = String::new();
        for attempt in 1..=self.config.max_attempts {
            if attempt > 1 {
                std::thread::sleep(self.config.retry_backoff * (attempt - 1));
            }
            match self.client.post(&url).json(body).send() {
                Ok(resp) if resp.status().is_success() => {
                    return resp.json::<R>().map_err(|e| GasError::Backend {
                        message: format!("malformed response from {url}: {e}"),
                        attempts: attempt,
                    });
                }
                Ok(resp) if resp.status() == StatusCode::NOT_FOUND => return Err(on_404()),
                Ok(resp) if resp.status().is_server_error() => {
                    last = format!("{url} returned {}", resp.status());
                }
                Ok(resp) => {
                    return Err(GasError::Backend {
                        message: format!("{url} returned {}", resp.status()),
                        attempts: attempt,
                    });
                }
                Err(e) => last = format!("{url}: {e}"),
            }
        }
        Err(GasError::Backend {
            message: last,
            attempts: self.config.max_attempts,
        })
    }

    pub fn encode_image(&self, png: &[u8]) -> Result<LatentGrid> {
        let body = serde_json::json!({ "image": STANDARD.encode(png) });
        let wire: WireLatent = self.post("encode", &body, || GasError::Backend {
            message: "backend does not support /encode".into(),
            attempts: 1,
        })?;
        decode_latent(&wire)
    }

    pub fn decode_latent(&self, latent: &LatentGrid) -> Result<Vec<u8>> {
        let payload: ImagePayload =
            self.post("decode", &encode_latent(latent), || GasError::Backend {
                message: "backend does not support /decode".into(),
                attempts: 1,
            })?;
        STANDARD
            .decode(payload.image.as_bytes())
            .map_err(|e| GasError::Backend {
                message: format!("decoded image is not base64: {e}"),
                attempts: 1,
            })
    }
}

impl ScoreBackend for HttpBackend {
    fn predict_noise(&self, z_t: &LatentGrid, t: usize, cond: &Condition) -> Result<LatentGrid> {
        let wire = encode_latent(z_t);
        let body = PredictNoiseRequest {
            latent: wire.latent,
            shape: wire.shape,
            timestep: t,
            text: cond.text().to_string(),
            is_null: cond.is_null(),
        };
        let resp: WireLatent = self.post("predict_noise", &body, || {
            GasError::ConditionNotFound(cond.text().to_string())
        })?;
        decode_latent(&resp).map_err(|e| GasError::Backend {
            message: e.to_string(),
            attempts: 1,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_encoding_is_f32_le_c_order() {
        let g = LatentGrid::from_vec(LatentShape::new(1, 1, 2), vec![1.0, -2.5]).unwrap();
        let w = encode_latent(&g);
        let bytes = STANDARD.decode(&w.latent).unwrap();
        assert_eq!(&bytes[..4], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[4..], &(-2.5f32).to_le_bytes());
        assert_eq!(w.shape, [1, 1, 2]);
        assert_eq!(decode_latent(&w).unwrap(), g);
    }

    #[test]
    fn decode_rejects_wrong_length() {
        let w = WireLatent {
            latent: STANDARD.encode([0u8; 6]),
            shape: [1, 1, 2],
        };
        assert!(decode_latent(&w).is_err());
    }

    #[test]
    fn unreachable_endpoint_reports_attempts() {
        let mut cfg = HttpBackendConfig::new("http://127.0.0.1:9");
        cfg.max_attempts = 2;
        cfg.retry_backoff = Duration::from_millis(1);
        cfg.timeout = Duration::from_secs(2);
        let backend = HttpBackend::new(cfg).unwrap();
        let z = LatentGrid::zeros(LatentShape::new(1, 1, 1));
        match backend.predict_noise(&z, 0, &Condition::null()) {
            Err(GasError::Backend { attempts, .. }) => assert_eq!(attempts, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
