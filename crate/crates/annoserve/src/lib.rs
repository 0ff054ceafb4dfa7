//! HTTP/JSON service for the annotation UI.
//!
//! The dataset root holds `images/` and `labels/` side by side, plus an
//! optional `data.yaml` whose `names` become the class list. Label edits are
//! written atomically in the standard label format; every image carries an
//! in-memory revision that a client can pass back as `base_revision` to make a
//! write conditional.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/api/classes` | class table |
//! | GET | `/api/images` | ids, dimensions, labeled flag |
//! | GET | `/api/images/{id}` | image bytes |
//! | GET | `/api/labels/{id}` | `{image_id, annotations, revision}` |
//! | PUT | `/api/labels/{id}` | `{annotations, base_revision?}` |
//! | GET | `/api/progress` | labeled / unlabeled counts |

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use detkit::dataset::validate::IMAGE_EXTENSIONS;
use detkit::fsutil::write_atomic;
use detkit::labelfmt::{
    default_class_table, emit_label_file, parse_label_file_with, ClassEntry, ClassTable, DatasetDescriptor,
    ParseOptions, BOX_FIELDS,
};
use detkit::{Annotation, NormBox};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;
use tokio::sync::Mutex;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: cannot read image size: {message}")]
    Image { path: PathBuf, message: String },
    #[error("images `{0}` share one id")]
    DuplicateId(String),
    #[error("data.yaml: {0}")]
    Descriptor(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct ImageInfo {
    pub id: String,
    pub file: String,
    pub width: u32,
    pub height: u32,
}

struct Slot {
    info: ImageInfo,
    path: PathBuf,
    revision: AtomicU64,
    write_lock: Mutex<()>,
}

pub struct AppState {
    labels_dir: PathBuf,
    classes: ClassTable,
    images: BTreeMap<String, Slot>,
}

impl AppState {
    /// Scans the dataset root once; image sizes are cached from here on.
    pub fn load(root: &Path) -> Result<AppState, ServeError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| ServeError::Io { path, source }
        };
        let descriptor = root.join("data.yaml");
        let classes = if descriptor.is_file() {
            let text = std::fs::read_to_string(&descriptor).map_err(io(&descriptor))?;
            DatasetDescriptor::parse(&text)
                .map_err(|e| ServeError::Descriptor(e.to_string()))?
                .class_table()
                .map_err(|e| ServeError::Descriptor(e.to_string()))?
        } else {
            default_class_table()
        };

        let images_dir = root.join("images");
        let labels_dir = root.join("labels");
        std::fs::create_dir_all(&labels_dir).map_err(io(&labels_dir))?;
        let mut images = BTreeMap::new();
        let mut entries: Vec<PathBuf> = std::fs::read_dir(&images_dir)
            .map_err(io(&images_dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .and_then(|e| e.to_str())
                        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            })
            .collect();
        entries.sort();
        for path in entries {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let (width, height) = image::image_dimensions(&path).map_err(|e| ServeError::Image {
                path: path.clone(),
                message: e.to_string(),
            })?;
            let file = path
                .file_name()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            if images.contains_key(&id) {
                return Err(ServeError::DuplicateId(id));
            }
            images.insert(
                id.clone(),
                Slot {
                    info: ImageInfo {
                        id,
                        file,
                        width,
                        height,
                    },
                    path,
                    revision: AtomicU64::new(0),
                    write_lock: Mutex::new(()),
                },
            );
        }
        Ok(AppState {
            labels_dir,
            classes,
            images,
        })
    }

    fn label_path(&self, id: &str) -> PathBuf {
        self.labels_dir.join(format!("{id}.txt"))
    }

    fn labeled(&self, id: &str) -> bool {
        self.label_path(id).is_file()
    }
}

/// A JSON error body: `{"error": ..., "details": [...]}`.
#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({ "error": message.into() }),
        }
    }

    fn not_found(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, format!("unknown image `{id}`"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Serialize)]
struct LabelDocument {
    image_id: String,
    annotations: Vec<Annotation>,
    revision: u64,
}

type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/api/classes", get(classes))
        .route("/api/images", get(list_images))
        .route("/api/images/{id}", get(image_bytes))
        .route("/api/labels/{id}", get(get_labels).put(put_labels))
        .route("/api/progress", get(progress))
        .with_state(state)
}

pub async fn serve(root: &Path, addr: SocketAddr) -> Result<(), ServeError> {
    let state = Arc::new(AppState::load(root)?);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Io {
            path: PathBuf::from(addr.to_string()),
            source,
        })?;
    axum::serve(listener, router(state))
        .await
        .map_err(|source| ServeError::Io {
            path: PathBuf::from(addr.to_string()),
            source,
        })
}

async fn classes(State(state): State<Shared>) -> Json<Vec<ClassEntry>> {
    Json(state.classes.entries().to_vec())
}

#[derive(Serialize)]
struct ImageRow<'a> {
    #[serde(flatten)]
    info: &'a ImageInfo,
    labeled: bool,
}

async fn list_images(State(state): State<Shared>) -> Response {
    let rows: Vec<ImageRow> = state
        .images
        .values()
        .map(|s| ImageRow {
            info: &s.info,
            labeled: state.labeled(&s.info.id),
        })
        .collect();
    Json(rows).into_response()
}

fn content_type(file: &str) -> &'static str {
    match file.rsplit('.').next().map(str::to_ascii_lowercase).as_deref() {
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("png") => "image/png",
        Some("bmp") => "image/bmp",
        Some("webp") => "image/webp",
        Some("tif") => "image/tiff",
        _ => "application/octet-stream",
    }
}

async fn image_bytes(State(state): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let slot = state.images.get(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let bytes = tokio::fs::read(&slot.path)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, content_type(&slot.info.file))], bytes).into_response())
}

fn read_labels(state: &AppState, id: &str) -> Result<Vec<Annotation>, ApiError> {
    let path = state.label_path(id);
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())),
    };
    let opts = ParseOptions::strict().with_class_count(state.classes.len());
    parse_label_file_with(&text, &opts)
        .map(|p| p.annotations)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("label file for `{id}`: {e}")))
}

async fn get_labels(State(state): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let slot = state.images.get(&id).ok_or_else(|| ApiError::not_found(&id))?;
    // read the revision first so a concurrent write can only make it stale
    let revision = slot.revision.load(Ordering::Acquire);
    let annotations = read_labels(&state, &id)?;
    Ok(Json(LabelDocument {
        image_id: id,
        annotations,
        revision,
    })
    .into_response())
}

/// Checks a PUT body field by field; the range rules are those of the label
/// format itself.
pub fn validate_put_body(body: &Value, class_count: usize) -> Result<(Vec<Annotation>, Option<u64>), Vec<FieldError>> {
    let mut errors = Vec::new();
    let mut err = |path: String, message: &str| {
        errors.push(FieldError {
            path,
            message: message.to_string(),
        })
    };
    let Some(obj) = body.as_object() else {
        err(String::new(), "body must be a JSON object");
        return Err(errors);
    };
    let base_revision = match obj.get("base_revision") {
        None | Some(Value::Null) => None,
        Some(v) => match v.as_u64() {
            Some(r) => Some(r),
            None => {
                err("base_revision".into(), "must be a non-negative integer");
                None
            }
        },
    };
    let Some(items) = obj.get("annotations").and_then(Value::as_array) else {
        err("annotations".into(), "must be a list");
        return Err(errors);
    };
    let mut annotations = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let at = format!("annotations[{i}]");
        let class_id = match item.get("class_id").map(|v| v.as_u64()) {
            Some(Some(c)) if (c as usize) < class_count => Some(c as usize),
            Some(Some(c)) => {
                err(
                    format!("{at}.class_id"),
                    &format!("class {c} is outside 0..{class_count}"),
                );
                None
            }
            _ => {
                err(format!("{at}.class_id"), "must be a non-negative integer");
                None
            }
        };
        let Some(bbox) = item.get("box").and_then(Value::as_object) else {
            err(format!("{at}.box"), "must be an object with cx, cy, w, h");
            continue;
        };
        let mut fields = [0.0; 4];
        let mut ok = class_id.is_some();
        for (k, name) in BOX_FIELDS.iter().enumerate() {
            let path = format!("{at}.box.{name}");
            let Some(v) = bbox.get(*name).and_then(Value::as_f64) else {
                err(path, "must be a number");
                ok = false;
                continue;
            };
            // probe the single field against an otherwise valid box
            let mut probe = [0.5; 4];
            probe[k] = v;
            if let Err(e) = NormBox::new(probe[0], probe[1], probe[2], probe[3]) {
                err(path, &e.to_string());
                ok = false;
            }
            fields[k] = v;
        }
        if ok {
            if let (Some(c), Ok(b)) = (class_id, NormBox::new(fields[0], fields[1], fields[2], fields[3])) {
                annotations.push(Annotation::new(c, b));
            }
        }
    }
    if errors.is_empty() {
        Ok((annotations, base_revision))
    } else {
        Err(errors)
    }
}

async fn put_labels(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let slot = state.images.get(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let value: Value = serde_json::from_slice(&body).map_err(|e| ApiError {
        status: StatusCode::UNPROCESSABLE_ENTITY,
        body: json!({ "error": "body is not valid JSON", "details": [{ "path": "", "message": e.to_string() }] }),
    })?;
    let (annotations, base_revision) = validate_put_body(&value, state.classes.len()).map_err(|details| ApiError {
        status: StatusCode::UNPROCESSABLE_ENTITY,
        body: json!({ "error": "invalid annotations", "details": details }),
    })?;
    let text = emit_label_file(&annotations).map_err(|e| ApiError {
        status: StatusCode::UNPROCESSABLE_ENTITY,
        body: json!({ "error": "invalid annotations", "details": [{ "path": format!("annotations[{}]", e.line - 1), "message": e.source.to_string() }] }),
    })?;

    let _guard = slot.write_lock.lock().await;
    let current = slot.revision.load(Ordering::Acquire);
    if let Some(base) = base_revision {
        if base != current {
            return Err(ApiError {
                status: StatusCode::CONFLICT,
                body: json!({ "error": "stale revision", "base_revision": base, "current_revision": current }),
            });
        }
    }
    let path = state.label_path(&id);
    tokio::task::spawn_blocking(move || write_atomic(&path, text.as_bytes()))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let revision = current + 1;
    slot.revision.store(revision, Ordering::Release);
    Ok(Json(LabelDocument {
        image_id: id,
        annotations,
        revision,
    })
    .into_response())
}

async fn progress(State(state): State<Shared>) -> Json<Value> {
    let total = state.images.len();
    let labeled = state.images.keys().filter(|id| state.labeled(id)).count();
    Json(json!({ "total": total, "labeled": labeled, "unlabeled": total - labeled }))
}
