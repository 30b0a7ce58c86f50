//! HTTP service behind the box-correction editor.
//!
//! Pages are the images found directly under the root directory; a page's
//! id is its file stem and its box file is `<id>.box` next to it. The
//! service is meant for a single local user and has no authentication.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Mutex;

use glyphforge::boxfile::{parse_box_file, write_box_file, BoxPage, BoxRecord};
use glyphforge::raster::{self, io};
use glyphforge::recognize::{propose_boxes, RecognizeParams};

const IMAGE_EXTENSIONS: [&str; 6] = ["png", "tif", "tiff", "pgm", "pbm", "ppm"];

pub struct AppState {
    pub root: PathBuf,
    pub tessdata: PathBuf,
    pub lang: String,
    pub dpi: u32,
    pub invert: bool,
    pub params: RecognizeParams,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl AppState {
    pub fn new(root: PathBuf, tessdata: PathBuf, lang: String, dpi: u32, invert: bool, params: RecognizeParams) -> Self {
        Self {
            root,
            tessdata,
            lang,
            dpi,
            invert,
            params,
            locks: Mutex::new(HashMap::new()),
        }
    }

    async fn page_lock(&self, id: &str) -> Arc<Mutex<()>> {
        self.locks.lock().await.entry(id.to_string()).or_default().clone()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PageEntry {
    pub id: String,
    pub image: String,
    pub has_boxes: bool,
}

struct Page {
    image: PathBuf,
    boxes: PathBuf,
}

fn list_pages(root: &Path) -> std::io::Result<Vec<(PageEntry, Page)>> {
    let mut found: Vec<PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    found.sort();
    let mut pages: Vec<(PageEntry, Page)> = Vec::new();
    for image in found {
        let (Some(id), Some(name)) = (image.file_stem().and_then(|s| s.to_str()), image.file_name().and_then(|s| s.to_str())) else {
            continue;
        };
        if pages.iter().any(|(e, _)| e.id == id) {
            continue;
        }
        let boxes = root.join(format!("{id}.box"));
        pages.push((
            PageEntry { id: id.to_string(), image: name.to_string(), has_boxes: boxes.is_file() },
            Page { image: image.clone(), boxes },
        ));
    }
    Ok(pages)
}

fn find_page(root: &Path, id: &str) -> Result<Page, ApiError> {
    list_pages(root)
        .map_err(|e| ApiError::internal("io", e.to_string()))?
        .into_iter()
        .find(|(e, _)| e.id == id)
        .map(|(_, p)| p)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_page", format!("no page with id {id:?}")))
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    reason: String,
    index: Option<usize>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, reason: impl Into<String>) -> Self {
        Self { status, code, reason: reason.into(), index: None }
    }

    fn bad_request(code: &'static str, reason: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, reason)
    }

    fn internal(code: &'static str, reason: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, code, reason)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code, "reason": self.reason });
        if let Some(i) = self.index {
            body["index"] = json!(i);
        }
        (self.status, Json(body)).into_response()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordList {
    pub records: Vec<BoxRecord>,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/pages", get(pages))
        .route("/api/pages/{id}/image", get(image))
        .route("/api/pages/{id}/boxes", get(get_boxes).put(put_boxes))
        .route("/api/pages/{id}/autobox", post(autobox))
        .with_state(state)
}

async fn pages(State(state): State<Arc<AppState>>) -> Result<Json<serde_json::Value>, ApiError> {
    let entries: Vec<PageEntry> = list_pages(&state.root)
        .map_err(|e| ApiError::internal("io", e.to_string()))?
        .into_iter()
        .map(|(e, _)| e)
        .collect();
    Ok(Json(json!({ "pages": entries })))
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref() {
        Some("png") => "image/png",
        Some("tif" | "tiff") => "image/tiff",
        _ => "image/x-portable-anymap",
    }
}

async fn image(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let page = find_page(&state.root, &id)?;
    let bytes = tokio::fs::read(&page.image).await.map_err(|e| ApiError::internal("io", e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, content_type(&page.image))], bytes).into_response())
}

fn read_boxes(path: &Path) -> Result<BoxPage, ApiError> {
    match std::fs::read(path) {
        Ok(bytes) => parse_box_file(&bytes).map_err(|e| ApiError::internal("corrupt_box_file", e.to_string())),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(BoxPage::default()),
        Err(e) => Err(ApiError::internal("io", e.to_string())),
    }
}

async fn get_boxes(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<RecordList>, ApiError> {
    let page = find_page(&state.root, &id)?;
    let lock = state.page_lock(&id).await;
    let _guard = lock.lock().await;
    Ok(Json(RecordList { records: read_boxes(&page.boxes)?.records }))
}

fn image_size(path: &Path) -> Result<(u32, u32), ApiError> {
    let decoded = io::load_page(path).map_err(|e| ApiError::internal("unreadable_image", e.to_string()))?;
    Ok((decoded.gray.width, decoded.gray.height))
}

fn validate(records: &[BoxRecord], width: u32, height: u32) -> Result<(), ApiError> {
    for (i, r) in records.iter().enumerate() {
        let fail = |code, reason: String| ApiError { index: Some(i), ..ApiError::bad_request(code, reason) };
        r.validate().map_err(|reason| fail("invalid_record", reason))?;
        if r.right > width || r.top > height {
            return Err(fail(
                "out_of_bounds",
                format!("box ({}, {}, {}, {}) exceeds the {width}x{height} image", r.left, r.bottom, r.right, r.top),
            ));
        }
    }
    Ok(())
}

async fn put_boxes(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<RecordList>, ApiError> {
    let page = find_page(&state.root, &id)?;
    let list: RecordList = serde_json::from_slice(&body).map_err(|e| ApiError::bad_request("malformed_body", e.to_string()))?;
    let (width, height) = image_size(&page.image)?;
    validate(&list.records, width, height)?;
    let box_page = BoxPage::new(list.records);
    let bytes = write_box_file(&box_page).map_err(|e| ApiError::bad_request("invalid_record", e.to_string()))?;

    let lock = state.page_lock(&id).await;
    let _guard = lock.lock().await;
    let dir = page.boxes.parent().unwrap_or(&state.root).to_path_buf();
    let target = page.boxes.clone();
    tokio::task::spawn_blocking(move || -> std::io::Result<()> {
        use std::io::Write;
        let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
        tmp.write_all(&bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(&target).map_err(|e| e.error)?;
        Ok(())
    })
    .await
    .map_err(|e| ApiError::internal("io", e.to_string()))?
    .map_err(|e| ApiError::internal("io", e.to_string()))?;
    Ok(Json(RecordList { records: box_page.records }))
}

async fn autobox(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<RecordList>, ApiError> {
    let page = find_page(&state.root, &id)?;
    let decoded = io::load_page(&page.image).map_err(|e| ApiError::internal("unreadable_image", e.to_string()))?;
    let dpi = decoded.dpi.unwrap_or(state.dpi);
    let bitmap = raster::binarize(&decoded.gray, dpi, state.invert).map_err(|e| ApiError::internal("raster", e.to_string()))?;
    let bundle = crate::load_optional_bundle(&state.tessdata, &state.lang)
        .map_err(|e| ApiError::internal("bundle", e.to_string()))?;
    let proposal = propose_boxes(&bitmap, bundle.as_ref(), &state.params)
        .map_err(|e| ApiError::internal("recognize", e.to_string()))?;
    Ok(Json(RecordList { records: proposal.records }))
}
