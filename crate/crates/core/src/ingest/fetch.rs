//! Cached retrieval of RDB records over HTTP.
//!
//! Responses are cached verbatim under a content hash of the request, so a
//! repeated fetch never touches the network. Network access goes through the
//! [`Transport`] trait; passing no transport means offline (cache only).

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use sha2::{Digest, Sha256};

use super::IngestError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchRequest {
    pub site: String,
    pub codes: Vec<String>,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl FetchRequest {
    /// Expands `{site}`, `{codes}`, `{start}` and `{end}` in `template`.
    pub fn url(&self, template: &str) -> String {
        template
            .replace("{site}", &self.site)
            .replace("{codes}", &self.codes.join(","))
            .replace("{start}", &self.start.format("%Y-%m-%d").to_string())
            .replace("{end}", &self.end.format("%Y-%m-%d").to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

pub trait Transport {
    /// One blocking GET.
    fn get(&self, url: &str) -> Result<HttpResponse, IngestError>;
}

/// Hex SHA-256 of the request key (site, codes, date range).
pub fn cache_key(req: &FetchRequest) -> String {
    let mut h = Sha256::new();
    h.update(req.site.as_bytes());
    h.update(b"\n");
    h.update(req.codes.join(",").as_bytes());
    h.update(b"\n");
    h.update(req.start.format("%Y-%m-%d").to_string().as_bytes());
    h.update(b"\n");
    h.update(req.end.format("%Y-%m-%d").to_string().as_bytes());
    hex::encode(h.finalize())
}

fn cache_path(cache_dir: &Path, req: &FetchRequest) -> PathBuf {
    cache_dir.join(format!("{}.rdb", cache_key(req)))
}

pub fn fetch_remote(
    req: &FetchRequest,
    url_template: &str,
    cache_dir: &Path,
    transport: Option<&dyn Transport>,
) -> Result<Vec<u8>, IngestError> {
    let path = cache_path(cache_dir, req);
    if let Ok(bytes) = fs::read(&path) {
        return Ok(bytes);
    }
    let transport = transport.ok_or_else(|| {
        IngestError::NetworkUnavailable(format!("offline and no cache entry at {}", path.display()))
    })?;
    let resp = transport.get(&req.url(url_template))?;
    if !(200..300).contains(&resp.status) {
        return Err(IngestError::HttpStatus(resp.status));
    }
    write_atomically(&path, &resp.body)?;
    Ok(resp.body)
}

fn write_atomically(path: &Path, bytes: &[u8]) -> Result<(), IngestError> {
    let fail = |e: std::io::Error| IngestError::CacheWriteFailed(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(fail)?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(fail)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        fail(e)
    })
}

/// Blocking HTTP transport backed by `ureq`.
#[cfg(feature = "http")]
#[derive(Debug, Default)]
pub struct UreqTransport;

#[cfg(feature = "http")]
impl Transport for UreqTransport {
    fn get(&self, url: &str) -> Result<HttpResponse, IngestError> {
        match ureq::get(url).call() {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                let body = resp
                    .body_mut()
                    .read_to_vec()
                    .map_err(|e| IngestError::NetworkUnavailable(e.to_string()))?;
                Ok(HttpResponse { status, body })
            }
            Err(ureq::Error::StatusCode(code)) => Ok(HttpResponse {
                status: code,
                body: Vec::new(),
            }),
            Err(e) => Err(IngestError::NetworkUnavailable(e.to_string())),
        }
    }
}
