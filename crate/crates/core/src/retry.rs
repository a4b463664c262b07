use serde::{Deserialize, Serialize};
use std::time::Duration;

/// Exponential backoff for idempotent remote calls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub attempts: u32,
    #[serde(with = "millis")]
    pub initial_backoff: Duration,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_millis(500),
            multiplier: 2.0,
        }
    }
}

/// Outcome of a single attempt.
pub enum Attempt<T, E> {
    Done(T),
    Retry(E),
    Fail(E),
}

impl RetryPolicy {
    pub fn no_wait(attempts: u32) -> Self {
        Self {
            attempts,
            initial_backoff: Duration::ZERO,
            multiplier: 1.0,
        }
    }

    pub fn backoff(&self, attempt: u32) -> Duration {
        self.initial_backoff
            .mul_f64(self.multiplier.powi(attempt.saturating_sub(1) as i32))
    }

    /// Runs `op` until it succeeds, fails permanently, or attempts run out.
    /// Returns the last error and the number of attempts made.
    pub fn run<T, E>(&self, mut op: impl FnMut(u32) -> Attempt<T, E>) -> Result<T, (E, u32)> {
        let attempts = self.attempts.max(1);
        let mut attempt = 1;
        loop {
            match op(attempt) {
                Attempt::Done(value) => return Ok(value),
                Attempt::Fail(err) => return Err((err, attempt)),
                Attempt::Retry(err) if attempt >= attempts => return Err((err, attempt)),
                Attempt::Retry(_) => {
                    std::thread::sleep(self.backoff(attempt));
                    attempt += 1;
                }
            }
        }
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}
