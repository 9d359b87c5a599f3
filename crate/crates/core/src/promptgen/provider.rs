use std::path::{Path, PathBuf};
use std::time::Duration;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{BankSource, ClassDescriptions, DescriptionBank};
use crate::dataset::ClassCatalog;
use crate::error::{Error, Result};

pub const ENV_REQUEST_TEMPLATE: &str = "Given a phrase describing an action, generate four different scene appearance descriptions that are most suitable for performing the action. Action: {action}";
pub const CHAR_REQUEST_TEMPLATE: &str = "Given a phrase describing an action, generate 16 different descriptions of the physical features of a person who is suitable for that action. Action: {action}";

/// Bearer token for the HTTP provider; the only setting read from the environment.
pub const TOKEN_ENV_VAR: &str = "SYNTHCURATE_PROVIDER_TOKEN";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptionKind {
    Env,
    Char,
}

impl DescriptionKind {
    pub fn request_prompt(self, class_name: &str) -> String {
        let template = match self {
            DescriptionKind::Env => ENV_REQUEST_TEMPLATE,
            DescriptionKind::Char => CHAR_REQUEST_TEMPLATE,
        };
        template.replace("{action}", class_name)
    }
}

pub trait DescriptionProvider {
    fn name(&self) -> String;

    /// Raw descriptions for one class; may contain duplicates.
    fn request(&self, class_name: &str, kind: DescriptionKind, count: usize)
        -> Result<Vec<String>>;
}

/// Returns exactly `count` unique, non-empty descriptions in provider order.
pub fn fetch_descriptions(
    provider: &dyn DescriptionProvider,
    class_name: &str,
    kind: DescriptionKind,
    count: usize,
) -> Result<Vec<String>> {
    let raw = provider.request(class_name, kind, count)?;
    let mut unique: Vec<String> = Vec::with_capacity(count);
    for d in raw {
        let d = d.trim().to_string();
        if !d.is_empty() && !unique.contains(&d) {
            unique.push(d);
        }
    }
    if unique.len() < count {
        return Err(Error::InsufficientDescriptions {
            wanted: count,
            got: unique.len(),
        });
    }
    unique.truncate(count);
    Ok(unique)
}

/// Builds a bank for every catalog class, in catalog order.
pub fn fetch_bank(
    provider: &dyn DescriptionProvider,
    catalog: &ClassCatalog,
    env_count: usize,
    char_count: usize,
) -> Result<DescriptionBank> {
    let mut classes = IndexMap::new();
    for name in catalog.names() {
        let env = if env_count > 0 {
            fetch_descriptions(provider, name, DescriptionKind::Env, env_count)?
        } else {
            Vec::new()
        };
        let char = if char_count > 0 {
            fetch_descriptions(provider, name, DescriptionKind::Char, char_count)?
        } else {
            Vec::new()
        };
        classes.insert(name.clone(), ClassDescriptions { env, char });
    }
    Ok(DescriptionBank {
        classes,
        source: BankSource::Provider(provider.name()),
    })
}

/// Serves descriptions from a bank file; never touches the network.
#[derive(Debug, Clone)]
pub struct FileProvider {
    path: PathBuf,
    bank: DescriptionBank,
}

impl FileProvider {
    pub fn open(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.to_path_buf(),
            bank: DescriptionBank::load(path)?,
        })
    }
}

impl DescriptionProvider for FileProvider {
    fn name(&self) -> String {
        format!("file:{}", self.path.display())
    }

    fn request(&self, class_name: &str, kind: DescriptionKind, _count: usize) -> Result<Vec<String>> {
        let desc = self
            .bank
            .classes
            .get(class_name)
            .ok_or_else(|| Error::ClassNotInBank(class_name.to_string()))?;
        Ok(match kind {
            DescriptionKind::Env => desc.env.clone(),
            DescriptionKind::Char => desc.char.clone(),
        })
    }
}

#[derive(Serialize)]
struct HttpRequest<'a> {
    prompt: &'a str,
    count: usize,
}

#[derive(Deserialize)]
struct HttpResponse {
    descriptions: Vec<String>,
}

/// JSON-over-HTTP: POST `{prompt, count}`, expects `{descriptions: [..]}`.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    endpoint: String,
    token: Option<String>,
    timeout: Duration,
}

impl HttpProvider {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        Self {
            endpoint: endpoint.into(),
            token: std::env::var(TOKEN_ENV_VAR).ok().filter(|t| !t.is_empty()),
            timeout,
        }
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }
}

impl DescriptionProvider for HttpProvider {
    fn name(&self) -> String {
        format!("http:{}", self.endpoint)
    }

    fn request(&self, class_name: &str, kind: DescriptionKind, count: usize) -> Result<Vec<String>> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let prompt = kind.request_prompt(class_name);
        let mut req = agent
            .post(&self.endpoint)
            .header("Content-Type", "application/json");
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let body = serde_json::to_string(&HttpRequest {
            prompt: &prompt,
            count,
        })?;
        let mut resp = req
            .send(body.as_str())
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => {
                    Error::Provider(format!("timeout after {:?} ({})", self.timeout, self.endpoint))
                }
                e => Error::Provider(format!("{}: {e}", self.endpoint)),
            })?;
        let parsed: HttpResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| Error::Provider(format!("malformed response: {e}")))?;
        Ok(parsed.descriptions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::thread;

    fn bank_file(dir: &Path) -> PathBuf {
        let p = dir.join("bank.json");
        std::fs::write(
            &p,
            r#"{"brush hair": {"env": ["bathroom", "bedroom", "salon", "porch"], "char": ["a"]}}"#,
        )
        .unwrap();
        p
    }

    #[test]
    fn file_provider_passes_through_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let fp = FileProvider::open(&bank_file(dir.path())).unwrap();
        let got = fetch_descriptions(&fp, "brush hair", DescriptionKind::Env, 4).unwrap();
        assert_eq!(got, ["bathroom", "bedroom", "salon", "porch"]);
        let err = fetch_descriptions(&fp, "cartwheel", DescriptionKind::Env, 4).unwrap_err();
        assert!(err.to_string().contains("class not in bank"));
        let err = fetch_descriptions(&fp, "brush hair", DescriptionKind::Char, 2).unwrap_err();
        assert!(err.to_string().contains("insufficient descriptions"));
    }

    #[test]
    fn request_prompt_carries_class_name() {
        let p = DescriptionKind::Char.request_prompt("brush hair");
        assert!(p.starts_with("Given a phrase describing an action, generate 16"));
        assert!(p.ends_with("brush hair"));
    }

    /// One-shot HTTP server answering with `body`; returns the request it saw.
    fn serve_once(body: &'static str) -> (String, thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/describe", listener.local_addr().unwrap());
        let handle = thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut head = String::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut payload = vec![0; len];
            reader.read_exact(&mut payload).unwrap();
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                body.len(),
                body
            )
            .unwrap();
            head + &String::from_utf8(payload).unwrap()
        });
        (url, handle)
    }

    #[test]
    fn http_provider_round_trip() {
        let (url, handle) = serve_once(r#"{"descriptions": ["a", "b", "b", "c", "d"]}"#);
        let hp = HttpProvider::new(url, Duration::from_secs(5)).with_token(Some("s3cret".into()));
        let got = fetch_descriptions(&hp, "brush hair", DescriptionKind::Env, 4).unwrap();
        assert_eq!(got, ["a", "b", "c", "d"]);
        let seen = handle.join().unwrap();
        assert!(seen.contains("Bearer s3cret"));
        assert!(seen.contains(r#""count":4"#));
        assert!(seen.contains("Action: brush hair"));
    }

    #[test]
    fn http_provider_insufficient() {
        let (url, handle) = serve_once(r#"{"descriptions": ["a", "b", "c", "a"]}"#);
        let hp = HttpProvider::new(url, Duration::from_secs(5));
        let err = fetch_descriptions(&hp, "x", DescriptionKind::Env, 4).unwrap_err();
        assert!(err.to_string().contains("insufficient descriptions"));
        handle.join().unwrap();
    }

    #[test]
    fn http_provider_malformed() {
        let (url, handle) = serve_once(r#"{"text": "nope"}"#);
        let hp = HttpProvider::new(url, Duration::from_secs(5));
        let err = fetch_descriptions(&hp, "x", DescriptionKind::Env, 1).unwrap_err();
        assert!(err.to_string().contains("malformed"));
        handle.join().unwrap();
    }
}
