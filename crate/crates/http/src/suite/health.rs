//! Health-check polling.

use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// Attempt and time limits for [`poll_health`]. Whichever limit is reached
/// first ends polling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthPolicy {
    pub interval: Duration,
    pub max_attempts: u32,
    pub total_timeout: Duration,
    pub request_timeout: Duration,
}

impl Default for HealthPolicy {
    fn default() -> Self {
        HealthPolicy {
            interval: Duration::from_secs(5),
            max_attempts: 24,
            total_timeout: Duration::from_secs(120),
            request_timeout: Duration::from_secs(5),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthOutcome {
    pub healthy: bool,
    pub attempts: u32,
}

/// Polls `GET {api_base}/health-check` until it answers 200.
pub fn poll_health(api_base: &str, policy: &HealthPolicy) -> HealthOutcome {
    poll_until(api_base, policy, || false)
}

/// As [`poll_health`], but gives up early once `abort` returns true (for
/// example when the server process has exited).
pub fn poll_until(
    api_base: &str,
    policy: &HealthPolicy,
    mut abort: impl FnMut() -> bool,
) -> HealthOutcome {
    let url = format!("{}/health-check", api_base.trim_end_matches('/'));
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(policy.request_timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let deadline = Instant::now() + policy.total_timeout;
    let mut attempts = 0;
    while attempts < policy.max_attempts.max(1) {
        attempts += 1;
        if let Ok(resp) = agent.get(&url).call() {
            if resp.status().as_u16() == 200 {
                return HealthOutcome {
                    healthy: true,
                    attempts,
                };
            }
        }
        let now = Instant::now();
        if attempts >= policy.max_attempts || now + policy.interval > deadline || abort() {
            break;
        }
        thread::sleep(policy.interval);
    }
    HealthOutcome {
        healthy: false,
        attempts,
    }
}
