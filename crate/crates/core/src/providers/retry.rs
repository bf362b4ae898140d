//! Deadline and retry wrapper shared by all live providers.

use std::future::Future;
use std::time::Duration;

use async_trait::async_trait;

use super::{
    ChatProvider, ChatRequest, EmbeddingProvider, SpeechAudio, SpeechProvider, SpeechRequest,
    TranscriptionProvider, VisionProvider, VisionRequest,
};
use crate::embedding::Embedding;
use crate::error::ProviderError;

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    /// Delay before retry `i`; the last entry repeats if there are more retries.
    pub backoff: Vec<Duration>,
    /// Per-attempt deadline.
    pub deadline: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            backoff: vec![
                Duration::from_millis(500),
                Duration::from_secs(2),
                Duration::from_secs(8),
            ],
            deadline: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            ..Self::default()
        }
    }

    fn delay(&self, retry: u32) -> Duration {
        self.backoff
            .get(retry as usize)
            .or(self.backoff.last())
            .copied()
            .unwrap_or_default()
    }
}

/// Runs `op` under the policy: each attempt is bounded by the deadline,
/// retryable failures are retried with backoff, anything else returns at once.
pub async fn with_retry<T, F, Fut>(policy: &RetryPolicy, mut op: F) -> Result<T, ProviderError>
where
    F: FnMut() -> Fut,
    Fut: Future<Output = Result<T, ProviderError>>,
{
    let mut retry = 0;
    loop {
        let outcome = match tokio::time::timeout(policy.deadline, op()).await {
            Ok(r) => r,
            Err(_) => Err(ProviderError::timeout(format!(
                "no response within {:?}",
                policy.deadline
            ))),
        };
        match outcome {
            Ok(v) => return Ok(v),
            Err(e) if e.retryable() && retry < policy.max_retries => {
                tracing::warn!(error = %e, retry = retry + 1, "provider call failed, retrying");
                tokio::time::sleep(policy.delay(retry)).await;
                retry += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Wraps any provider with [`with_retry`].
#[derive(Debug, Clone)]
pub struct Retrying<P> {
    inner: P,
    policy: RetryPolicy,
}

impl<P> Retrying<P> {
    pub fn new(inner: P, policy: RetryPolicy) -> Self {
        Self { inner, policy }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

#[async_trait]
impl<P: VisionProvider> VisionProvider for Retrying<P> {
    async fn describe_image(&self, req: &VisionRequest) -> Result<String, ProviderError> {
        with_retry(&self.policy, || self.inner.describe_image(req)).await
    }
}

#[async_trait]
impl<P: EmbeddingProvider> EmbeddingProvider for Retrying<P> {
    async fn embed_image(&self, req: &VisionRequest) -> Result<Embedding, ProviderError> {
        with_retry(&self.policy, || self.inner.embed_image(req)).await
    }

    async fn embed_text(&self, text: &str) -> Result<Embedding, ProviderError> {
        with_retry(&self.policy, || self.inner.embed_text(text)).await
    }
}

#[async_trait]
impl<P: ChatProvider> ChatProvider for Retrying<P> {
    async fn chat(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        with_retry(&self.policy, || self.inner.chat(req)).await
    }
}

#[async_trait]
impl<P: SpeechProvider> SpeechProvider for Retrying<P> {
    async fn synthesize_speech(&self, req: &SpeechRequest) -> Result<SpeechAudio, ProviderError> {
        with_retry(&self.policy, || self.inner.synthesize_speech(req)).await
    }
}

#[async_trait]
impl<P: TranscriptionProvider> TranscriptionProvider for Retrying<P> {
    async fn transcribe(&self, audio: &[u8]) -> Result<String, ProviderError> {
        with_retry(&self.policy, || self.inner.transcribe(audio)).await
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ProviderErrorKind;
    use crate::providers::{ChatMessage, ResponseSchema};
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    /// Fails with the queued errors in order, then answers "ok".
    struct Flaky {
        errors: Mutex<Vec<ProviderError>>,
        calls: AtomicUsize,
    }

    impl Flaky {
        fn new(mut errors: Vec<ProviderError>) -> Self {
            errors.reverse();
            Self {
                errors: Mutex::new(errors),
                calls: AtomicUsize::new(0),
            }
        }
    }

    #[async_trait]
    impl ChatProvider for Flaky {
        async fn chat(&self, _req: &ChatRequest) -> Result<String, ProviderError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            match self.errors.lock().unwrap().pop() {
                Some(e) => Err(e),
                None => Ok("ok".into()),
            }
        }
    }

    struct Hang;

    #[async_trait]
    impl ChatProvider for Hang {
        async fn chat(&self, _req: &ChatRequest) -> Result<String, ProviderError> {
            std::future::pending().await
        }
    }

    fn req() -> ChatRequest {
        ChatRequest {
            system_prompt: String::new(),
            messages: vec![ChatMessage::user("hi")],
            response_schema: ResponseSchema::FreeText,
        }
    }

    fn err(kind: ProviderErrorKind) -> ProviderError {
        ProviderError::new(kind, "x")
    }

    #[test]
    fn retryable_kinds() {
        use ProviderErrorKind::*;
        for k in [Timeout, RateLimited, Unavailable] {
            assert!(err(k).retryable());
        }
        for k in [AuthFailure, MalformedResponse] {
            assert!(!err(k).retryable());
        }
    }

    #[tokio::test(start_paused = true)]
    async fn retryable_errors_retry_then_succeed() {
        let p = Retrying::new(
            Flaky::new(vec![
                err(ProviderErrorKind::Timeout),
                err(ProviderErrorKind::RateLimited),
            ]),
            RetryPolicy::default(),
        );
        let start = tokio::time::Instant::now();
        assert_eq!(p.chat(&req()).await.unwrap(), "ok");
        assert_eq!(p.inner().calls.load(Ordering::SeqCst), 3);
        assert_eq!(start.elapsed(), Duration::from_millis(2500));
    }

    #[tokio::test(start_paused = true)]
    async fn retries_are_capped() {
        let p = Retrying::new(
            Flaky::new(vec![err(ProviderErrorKind::Unavailable); 10]),
            RetryPolicy::default(),
        );
        let e = p.chat(&req()).await.unwrap_err();
        assert_eq!(e.kind, ProviderErrorKind::Unavailable);
        assert_eq!(p.inner().calls.load(Ordering::SeqCst), 4);
    }

    #[tokio::test(start_paused = true)]
    async fn non_retryable_surfaces_immediately() {
        let p = Retrying::new(
            Flaky::new(vec![err(ProviderErrorKind::AuthFailure)]),
            RetryPolicy::default(),
        );
        let e = p.chat(&req()).await.unwrap_err();
        assert_eq!(e.kind, ProviderErrorKind::AuthFailure);
        assert_eq!(p.inner().calls.load(Ordering::SeqCst), 1);
    }

    #[tokio::test(start_paused = true)]
    async fn hanging_call_times_out() {
        let p = Retrying::new(Hang, RetryPolicy::none());
        let start = tokio::time::Instant::now();
        let e = p.chat(&req()).await.unwrap_err();
        assert_eq!(e.kind, ProviderErrorKind::Timeout);
        assert_eq!(start.elapsed(), Duration::from_secs(30));
    }
}
