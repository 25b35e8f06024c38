use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One proposal returned by an external Say adapter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalCandidate {
    pub text: String,
    pub logprob: f64,
    #[serde(default)]
    pub token_logprobs: Vec<f64>,
}

impl ExternalCandidate {
    pub fn probability(&self) -> f64 {
        self.logprob.exp()
    }

    pub fn token_probabilities(&self) -> Vec<f64> {
        self.token_logprobs.iter().map(|l| l.exp()).collect()
    }
}

#[derive(Serialize)]
struct Request<'a> {
    goal: &'a str,
    init_obs: &'a str,
    history: &'a [&'a str],
    m: usize,
}

#[derive(Deserialize)]
struct Response {
    candidates: Vec<ExternalCandidate>,
}

/// Client for a proposer speaking newline-delimited JSON over TCP. Each
/// request opens its own connection.
#[derive(Clone, Debug)]
pub struct ExternalSay {
    pub endpoint: String,
    pub timeout: Duration,
}

impl ExternalSay {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout: Duration::from_secs(30),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn address(&self) -> &str {
        self.endpoint.strip_prefix("tcp://").unwrap_or(&self.endpoint)
    }

    /// Sends one request and returns the adapter's candidates verbatim.
    pub fn propose(&self, goal: &str, init_obs: &str, history: &[&str], m: usize) -> Result<Vec<ExternalCandidate>> {
        let fail = |what: &str, e: &dyn std::fmt::Display| Error::Adapter(format!("{} {what}: {e}", self.endpoint));
        let addr = self
            .address()
            .to_socket_addrs()
            .map_err(|e| fail("resolve", &e))?
            .next()
            .ok_or_else(|| Error::Adapter(format!("{} resolves to no address", self.endpoint)))?;
        let stream = TcpStream::connect_timeout(&addr, self.timeout).map_err(|e| fail("connect", &e))?;
        stream
            .set_read_timeout(Some(self.timeout))
            .map_err(|e| fail("configure", &e))?;
        stream
            .set_write_timeout(Some(self.timeout))
            .map_err(|e| fail("configure", &e))?;

        let mut line = serde_json::to_string(&Request {
            goal,
            init_obs,
            history,
            m,
        })?;
        line.push('\n');
        (&stream).write_all(line.as_bytes()).map_err(|e| fail("write", &e))?;

        let mut reply = String::new();
        BufReader::new(&stream)
            .read_line(&mut reply)
            .map_err(|e| fail("read", &e))?;
        let response: Response = serde_json::from_str(reply.trim_end()).map_err(|e| fail("malformed response", &e))?;
        if response.candidates.len() > m {
            return Err(Error::Adapter(format!(
                "{} returned {} candidates for m = {m}",
                self.endpoint,
                response.candidates.len()
            )));
        }
        if let Some(c) = response.candidates.iter().find(|c| !(c.logprob <= 0.0)) {
            return Err(Error::Adapter(format!(
                "{}: bad logprob {} for `{}`",
                self.endpoint, c.logprob, c.text
            )));
        }
        Ok(response.candidates)
    }
}
