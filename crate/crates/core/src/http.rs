//! Blocking JSON POST with bounded exponential-backoff retries.

use std::time::Duration;

use serde_json::Value;

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

#[derive(Debug)]
pub enum HttpFailure {
    /// Retryable failures persisted through every attempt.
    Exhausted { attempts: u32, message: String },
    /// Non-retryable rejection (4xx other than 429, or an unreadable body).
    Rejected(String),
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(300)))
        .build()
        .into()
}

pub fn post_json(
    url: &str,
    bearer: Option<&str>,
    body: &Value,
    policy: &RetryPolicy,
) -> Result<Value, HttpFailure> {
    let agent = agent();
    let mut backoff = policy.initial_backoff;
    let mut last = String::new();
    for attempt in 1..=policy.max_attempts {
        let mut req = agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = bearer {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        match req.send_json(body) {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                let text = resp.body_mut().read_to_string().unwrap_or_default();
                if (200..300).contains(&status) {
                    return serde_json::from_str(&text).map_err(|e| {
                        HttpFailure::Rejected(format!("invalid JSON from {url}: {e}"))
                    });
                }
                last = format!("HTTP {status} from {url}: {}", truncate(&text, 300));
                if status != 429 && status < 500 {
                    return Err(HttpFailure::Rejected(last));
                }
            }
            Err(e) => last = format!("{url}: {e}"),
        }
        log::warn!("attempt {attempt}/{} failed: {last}", policy.max_attempts);
        if attempt < policy.max_attempts {
            std::thread::sleep(backoff);
            backoff *= 2;
        }
    }
    Err(HttpFailure::Exhausted {
        attempts: policy.max_attempts,
        message: last,
    })
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}
