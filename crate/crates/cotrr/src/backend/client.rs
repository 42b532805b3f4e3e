use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use cotrr_core::{cache_key, BackendError, ChatBackend, ChatRequest, ChatResponse};

use super::{DiskCache, RetryPolicy, Transport, TransportError};

pub const DEFAULT_PARALLELISM: usize = 8;

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
pub struct Semaphore {
    free: Mutex<usize>,
    released: Condvar,
}

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Self {
            free: Mutex::new(permits.max(1)),
            released: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("semaphore poisoned");
        while *free == 0 {
            free = self.released.wait(free).expect("semaphore poisoned");
        }
        *free -= 1;
        Permit(self)
    }
}

pub struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("semaphore poisoned") += 1;
        self.0.released.notify_one();
    }
}

type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

/// [`ChatBackend`] over a [`Transport`], adding the response cache, retry
/// with backoff, and a bound on concurrent requests.
pub struct Client<T> {
    transport: T,
    cache: Option<DiskCache>,
    retry: RetryPolicy,
    parallelism: usize,
    limiter: Semaphore,
    sleep: Sleeper,
    network_calls: AtomicU64,
    cache_hits: AtomicU64,
}

impl<T: Transport> Client<T> {
    pub fn new(transport: T) -> Self {
        Self {
            transport,
            cache: None,
            retry: RetryPolicy::default(),
            parallelism: DEFAULT_PARALLELISM,
            limiter: Semaphore::new(DEFAULT_PARALLELISM),
            sleep: Arc::new(std::thread::sleep),
            network_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        }
    }

    pub fn with_cache(mut self, cache: DiskCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.parallelism = parallelism.max(1);
        self.limiter = Semaphore::new(self.parallelism);
        self
    }

    /// Replaces the backoff sleep, e.g. with a no-op in tests.
    pub fn with_sleep(mut self, sleep: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Arc::new(sleep);
        self
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn cache(&self) -> Option<&DiskCache> {
        self.cache.as_ref()
    }

    /// Round trips attempted through the transport (retries included).
    pub fn network_calls(&self) -> u64 {
        self.network_calls.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits.load(Ordering::Relaxed)
    }

    fn send_with_retry(&self, request: &ChatRequest) -> Result<(String, u32), BackendError> {
        let _permit = self.limiter.acquire();
        let mut rng = rand::rng();
        let max = self.retry.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.network_calls.fetch_add(1, Ordering::Relaxed);
            match self.transport.send(request) {
                Ok(text) if text.is_empty() => {
                    return Err(BackendError::Malformed("empty completion text".into()));
                }
                Ok(text) => return Ok((text, attempt)),
                Err(e) if e.is_transient() && attempt < max => {
                    (self.sleep)(self.retry.delay(attempt, &mut rng));
                }
                Err(e) if e.is_transient() => {
                    return Err(BackendError::RetriesExhausted {
                        attempts: attempt,
                        last: e.to_string(),
                    });
                }
                Err(TransportError::Status { status, body }) => {
                    return Err(BackendError::Protocol { status, body });
                }
                Err(TransportError::Malformed(m)) => return Err(BackendError::Malformed(m)),
                Err(TransportError::ScriptExhausted { served }) => {
                    return Err(BackendError::ScriptExhausted { served });
                }
                Err(e) => return Err(BackendError::Transport(e.to_string())),
            }
        }
    }
}

impl<T: Transport> ChatBackend for Client<T> {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let key = cache_key(request);
        if let Some(entry) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            if !entry.text.is_empty() {
                self.cache_hits.fetch_add(1, Ordering::Relaxed);
                return Ok(ChatResponse {
                    text: entry.text,
                    from_cache: true,
                    attempts: 1,
                });
            }
        }
        let (text, attempts) = self.send_with_retry(request)?;
        if let Some(cache) = &self.cache {
            // A failed cache write only costs a future re-request.
            let _ = cache.put(&key, &request.model, &text);
        }
        Ok(ChatResponse {
            text,
            from_cache: false,
            attempts,
        })
    }

    /// Runs the batch on up to `parallelism` worker threads. Results are
    /// positional regardless of completion order.
    fn chat_batch(&self, requests: &[ChatRequest]) -> Vec<Result<ChatResponse, BackendError>> {
        if requests.len() <= 1 || self.parallelism == 1 {
            return requests.iter().map(|r| self.chat(r)).collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<ChatResponse, BackendError>>>> =
            requests.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..self.parallelism.min(requests.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(request) = requests.get(i) else { break };
                    let result = self.chat(request);
                    *slots[i].lock().expect("slot poisoned") = Some(result);
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.into_inner().expect("slot poisoned").expect("every slot filled"))
            .collect()
    }
}
