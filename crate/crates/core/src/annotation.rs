//! Backend for manual error annotation of generated definitions.
//!
//! Endpoints (all JSON):
//!
//! | method | path          | body / result                                   |
//! |--------|---------------|-------------------------------------------------|
//! | GET    | `/tasks`      | tasks with a `labeled` flag, pending first      |
//! | GET    | `/tasks/{id}` | one task plus its effective labels              |
//! | POST   | `/labels`     | [`LabelInput`] → stored [`AnnotationLabel`]      |
//! | GET    | `/report`     | [`SharesReport`]                                |
//! | GET    | `/export`     | effective labels as JSON-lines                  |

use std::collections::{BTreeMap, HashMap};
use std::fs::OpenOptions;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::corpus::DatasetSplit;
use crate::formats::Prediction;
use crate::harness::{GoldItem, Share};
use crate::metrics::detect_circularity;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("no predictions to sample from")]
    EmptyPredictions,
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("duplicate task id {0:?}")]
    DuplicateTask(String),
    #[error("{path}:{line}: {reason}")]
    CorruptStore { path: String, line: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: String,
    pub word: String,
    pub sense_id: String,
    pub predicted_definition: String,
    pub gold_definition: Option<String>,
    pub usage: Option<String>,
    pub model_tag: String,
    /// Automatic circularity verdict, shown as a pre-fill.
    pub auto_circular: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationLabel {
    pub task_id: String,
    pub fluency_issue: bool,
    pub adequacy_issue: bool,
    #[serde(default)]
    pub circular_override: Option<bool>,
    pub annotator: String,
    pub timestamp: String,
}

/// Draws `n` predictions (all of them when `n == 0`) with a seeded shuffle.
/// Task ids are `{model_tag}-{index:05}` where `index` is the prediction's
/// position in the input.
pub fn sample_tasks(
    predictions: &[Prediction],
    gold: &[GoldItem],
    n: usize,
    seed: u64,
    model_tag: &str,
    stem_min: usize,
) -> Result<Vec<AnnotationTask>, AnnotationError> {
    if predictions.is_empty() {
        return Err(AnnotationError::EmptyPredictions);
    }
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    if n != 0 {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        order.truncate(n.min(predictions.len()));
    }
    let gold_by_key: HashMap<(&str, &str), &str> = gold
        .iter()
        .map(|g| ((g.word.as_str(), g.sense_id.as_str()), g.definition.as_str()))
        .collect();
    Ok(order
        .into_iter()
        .map(|i| {
            let p = &predictions[i];
            AnnotationTask {
                task_id: format!("{model_tag}-{i:05}"),
                word: p.word.clone(),
                sense_id: p.sense_id.clone(),
                predicted_definition: p.definition.clone(),
                gold_definition: gold_by_key.get(&p.key()).map(|d| (*d).to_owned()),
                usage: None,
                model_tag: model_tag.to_owned(),
                auto_circular: detect_circularity(&p.definition, &p.word, stem_min),
            }
        })
        .collect())
}

/// Fills `usage` with the first usage of each task's sense in `split`.
pub fn attach_usages(tasks: &mut [AnnotationTask], split: &DatasetSplit) {
    let mut first: HashMap<(&str, &str), &str> = HashMap::new();
    for r in &split.records {
        first
            .entry((r.word.as_str(), r.sense_id.as_str()))
            .or_insert(r.usage.as_str());
    }
    for t in tasks {
        if t.usage.is_none() {
            t.usage = first
                .get(&(t.word.as_str(), t.sense_id.as_str()))
                .map(|u| (*u).to_owned());
        }
    }
}

/// Writes tasks as JSON-lines.
pub fn write_tasks(tasks: &[AnnotationTask], path: &Path) -> Result<(), AnnotationError> {
    let mut body = String::new();
    for t in tasks {
        body.push_str(&serde_json::to_string(t).expect("task serializes"));
        body.push('\n');
    }
    std::fs::write(path, body).map_err(|source| AnnotationError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_tasks(path: &Path) -> Result<Vec<AnnotationTask>, AnnotationError> {
    let body = std::fs::read_to_string(path).map_err(|source| AnnotationError::Io {
        path: path.display().to_string(),
        source,
    })?;
    body.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| AnnotationError::CorruptStore {
                path: path.display().to_string(),
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Reduces a label log to the effective labels: the last one per
/// `(task_id, annotator)`, ordered by when that last write happened.
pub fn effective_labels(log: &[AnnotationLabel]) -> Vec<AnnotationLabel> {
    let mut last: HashMap<(&str, &str), usize> = HashMap::new();
    for (i, l) in log.iter().enumerate() {
        last.insert((l.task_id.as_str(), l.annotator.as_str()), i);
    }
    let mut idx: Vec<usize> = last.into_values().collect();
    idx.sort_unstable();
    idx.into_iter().map(|i| log[i].clone()).collect()
}

/// Append-only JSON-lines label log.
#[derive(Debug)]
pub struct LabelStore {
    path: Option<PathBuf>,
    log: Vec<AnnotationLabel>,
}

impl LabelStore {
    pub fn in_memory() -> Self {
        LabelStore {
            path: None,
            log: Vec::new(),
        }
    }

    /// Opens (or creates) a store and replays its log. A torn final line
    /// (no trailing newline, unparsable) is cut off with a warning; a bad
    /// line elsewhere is an error.
    pub fn open(path: &Path) -> Result<Self, AnnotationError> {
        let io = |source| AnnotationError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut log = Vec::new();
        if path.exists() {
            let body = std::fs::read_to_string(path).map_err(io)?;
            let mut offset = 0;
            for (i, line) in body.split_inclusive('\n').enumerate() {
                let complete = line.ends_with('\n');
                if !line.trim().is_empty() {
                    match serde_json::from_str(line.trim_end()) {
                        Ok(label) => log.push(label),
                        Err(e) if !complete => {
                            log::warn!("{}:{}: dropping truncated label ({e})", path.display(), i + 1);
                            OpenOptions::new()
                                .write(true)
                                .open(path)
                                .and_then(|f| f.set_len(offset as u64))
                                .map_err(io)?;
                            break;
                        }
                        Err(e) => {
                            return Err(AnnotationError::CorruptStore {
                                path: path.display().to_string(),
                                line: i + 1,
                                reason: e.to_string(),
                            })
                        }
                    }
                }
                offset += line.len();
                if !complete {
                    std::fs::OpenOptions::new()
                        .append(true)
                        .open(path)
                        .and_then(|mut f| f.write_all(b"\n"))
                        .map_err(io)?;
                }
            }
        }
        Ok(LabelStore {
            path: Some(path.to_owned()),
            log,
        })
    }

    pub fn append(&mut self, label: AnnotationLabel) -> Result<(), AnnotationError> {
        if let Some(path) = &self.path {
            let io = |source| AnnotationError::Io {
                path: path.display().to_string(),
                source,
            };
            let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
            let mut line = serde_json::to_string(&label).expect("label serializes");
            line.push('\n');
            file.write_all(line.as_bytes()).map_err(io)?;
            file.flush().map_err(io)?;
        }
        self.log.push(label);
        Ok(())
    }

    pub fn log(&self) -> &[AnnotationLabel] {
        &self.log
    }

    pub fn effective(&self) -> Vec<AnnotationLabel> {
        effective_labels(&self.log)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelShares {
    pub tasks: usize,
    pub labeled: usize,
    pub fluency: Option<Share>,
    pub adequacy: Option<Share>,
    /// Automatic verdicts with human overrides applied.
    pub circularity: Option<Share>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharesReport {
    pub models: BTreeMap<String, ModelShares>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Per-model shares over labeled tasks. With several annotators on one task
/// the most recent label decides.
pub fn compute_shares(labels: &[AnnotationLabel], tasks: &[AnnotationTask]) -> SharesReport {
    let by_id: HashMap<&str, &AnnotationTask> = tasks.iter().map(|t| (t.task_id.as_str(), t)).collect();
    let mut warnings = Vec::new();
    let mut latest: HashMap<&str, &AnnotationLabel> = HashMap::new();
    for l in labels {
        if by_id.contains_key(l.task_id.as_str()) {
            latest.insert(l.task_id.as_str(), l);
        } else {
            warnings.push(format!("label for unknown task {:?} ignored", l.task_id));
        }
    }
    let mut models: BTreeMap<String, ModelShares> = BTreeMap::new();
    let mut counts: BTreeMap<&str, [usize; 4]> = BTreeMap::new();
    for t in tasks {
        let c = counts.entry(t.model_tag.as_str()).or_default();
        let Some(l) = latest.get(t.task_id.as_str()) else {
            continue;
        };
        c[0] += 1;
        c[1] += usize::from(l.fluency_issue);
        c[2] += usize::from(l.adequacy_issue);
        c[3] += usize::from(l.circular_override.unwrap_or(t.auto_circular));
    }
    for (tag, [labeled, fluency, adequacy, circular]) in counts {
        models.insert(
            tag.to_owned(),
            ModelShares {
                tasks: tasks.iter().filter(|t| t.model_tag == tag).count(),
                labeled,
                fluency: Share::new(fluency, labeled),
                adequacy: Share::new(adequacy, labeled),
                circularity: Share::new(circular, labeled),
            },
        );
    }
    SharesReport { models, warnings }
}

/// Tasks plus the label store behind a running service.
pub struct Session {
    tasks: Vec<AnnotationTask>,
    index: HashMap<String, usize>,
    store: Mutex<LabelStore>,
}

impl Session {
    pub fn new(tasks: Vec<AnnotationTask>, store: LabelStore) -> Result<Self, AnnotationError> {
        let mut index = HashMap::new();
        for (i, t) in tasks.iter().enumerate() {
            if index.insert(t.task_id.clone(), i).is_some() {
                return Err(AnnotationError::DuplicateTask(t.task_id.clone()));
            }
        }
        Ok(Session {
            tasks,
            index,
            store: Mutex::new(store),
        })
    }

    pub fn tasks(&self) -> &[AnnotationTask] {
        &self.tasks
    }

    pub fn labels(&self) -> Vec<AnnotationLabel> {
        self.store.lock().expect("label store poisoned").effective()
    }

    pub fn submit(&self, input: LabelInput) -> Result<AnnotationLabel, AnnotationError> {
        if !self.index.contains_key(&input.task_id) {
            return Err(AnnotationError::UnknownTask(input.task_id));
        }
        let label = AnnotationLabel {
            task_id: input.task_id,
            fluency_issue: input.fluency_issue,
            adequacy_issue: input.adequacy_issue,
            circular_override: input.circular_override,
            annotator: input.annotator.unwrap_or_else(|| "anonymous".into()),
            timestamp: input
                .timestamp
                .unwrap_or_else(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
        };
        self.store.lock().expect("label store poisoned").append(label.clone())?;
        Ok(label)
    }

    pub fn report(&self) -> SharesReport {
        compute_shares(&self.labels(), &self.tasks)
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct LabelInput {
    pub task_id: String,
    #[serde(default)]
    pub fluency_issue: bool,
    #[serde(default)]
    pub adequacy_issue: bool,
    #[serde(default)]
    pub circular_override: Option<bool>,
    #[serde(default)]
    pub annotator: Option<String>,
    #[serde(default)]
    pub timestamp: Option<String>,
}

#[derive(Serialize)]
struct TaskView<'a> {
    #[serde(flatten)]
    task: &'a AnnotationTask,
    labeled: bool,
}

fn error_response(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

async fn list_tasks(State(s): State<Arc<Session>>) -> Response {
    let labeled: std::collections::HashSet<String> = s.labels().into_iter().map(|l| l.task_id).collect();
    let (done, pending): (Vec<_>, Vec<_>) = s
        .tasks
        .iter()
        .map(|t| TaskView {
            task: t,
            labeled: labeled.contains(&t.task_id),
        })
        .partition(|v| v.labeled);
    let all: Vec<TaskView> = pending.into_iter().chain(done).collect();
    Json(all).into_response()
}

async fn get_task(State(s): State<Arc<Session>>, UrlPath(id): UrlPath<String>) -> Response {
    let Some(&i) = s.index.get(&id) else {
        return error_response(StatusCode::NOT_FOUND, format!("unknown task {id:?}"));
    };
    let labels: Vec<AnnotationLabel> = s.labels().into_iter().filter(|l| l.task_id == id).collect();
    Json(json!({ "task": s.tasks[i], "labels": labels, "labeled": !labels.is_empty() })).into_response()
}

async fn post_label(State(s): State<Arc<Session>>, Json(input): Json<LabelInput>) -> Response {
    match s.submit(input) {
        Ok(label) => (StatusCode::CREATED, Json(label)).into_response(),
        Err(e @ AnnotationError::UnknownTask(_)) => error_response(StatusCode::NOT_FOUND, e.to_string()),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn get_report(State(s): State<Arc<Session>>) -> Response {
    Json(s.report()).into_response()
}

async fn export(State(s): State<Arc<Session>>) -> Response {
    let mut body = String::new();
    for l in s.labels() {
        body.push_str(&serde_json::to_string(&l).expect("label serializes"));
        body.push('\n');
    }
    ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
}

async fn cors(req: Request, next: Next) -> Response {
    let mut resp = if req.method() == Method::OPTIONS {
        StatusCode::NO_CONTENT.into_response()
    } else {
        next.run(req).await
    };
    let h = resp.headers_mut();
    h.insert(header::ACCESS_CONTROL_ALLOW_ORIGIN, HeaderValue::from_static("*"));
    h.insert(
        header::ACCESS_CONTROL_ALLOW_METHODS,
        HeaderValue::from_static("GET, POST, OPTIONS"),
    );
    h.insert(
        header::ACCESS_CONTROL_ALLOW_HEADERS,
        HeaderValue::from_static("content-type"),
    );
    resp
}

pub fn router(session: Arc<Session>) -> Router {
    Router::new()
        .route("/tasks", get(list_tasks))
        .route("/tasks/{id}", get(get_task))
        .route("/labels", post(post_label))
        .route("/report", get(get_report))
        .route("/export", get(export))
        .layer(middleware::from_fn(cors))
        .with_state(session)
}

/// Binds `host:port`, reporting an occupied port as [`AnnotationError::PortInUse`].
pub async fn bind(host: &str, port: u16) -> Result<tokio::net::TcpListener, AnnotationError> {
    let addr = format!("{host}:{port}");
    tokio::net::TcpListener::bind(&addr).await.map_err(|source| {
        if source.kind() == std::io::ErrorKind::AddrInUse {
            AnnotationError::PortInUse(port)
        } else {
            AnnotationError::Io { path: addr, source }
        }
    })
}

/// Serves until Ctrl-C.
pub async fn serve(session: Arc<Session>, listener: tokio::net::TcpListener) -> Result<(), AnnotationError> {
    let addr: Option<SocketAddr> = listener.local_addr().ok();
    if let Some(a) = addr {
        log::info!("annotation service listening on http://{a}");
    }
    axum::serve(listener, router(session))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|source| AnnotationError::Io {
            path: "<server>".into(),
            source,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preds(n: usize) -> Vec<Prediction> {
        (0..n)
            .map(|i| Prediction {
                word: format!("w{i}"),
                sense_id: format!("w{i}_1"),
                definition: format!("definition {i}"),
            })
            .collect()
    }

    fn label(task: &str, fluency: bool, adequacy: bool, annotator: &str) -> AnnotationLabel {
        AnnotationLabel {
            task_id: task.into(),
            fluency_issue: fluency,
            adequacy_issue: adequacy,
            circular_override: None,
            annotator: annotator.into(),
            timestamp: "2024-05-01T10:00:00Z".into(),
        }
    }

    #[test]
    fn sampling() {
        let p = preds(26);
        let all = sample_tasks(&p, &[], 0, 1, "m", 4).unwrap();
        assert_eq!(all.len(), 26);
        assert_eq!(all[3].task_id, "m-00003");

        let p = preds(50);
        let a = sample_tasks(&p, &[], 30, 7, "m", 4).unwrap();
        let b = sample_tasks(&p, &[], 30, 7, "m", 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 30);
        let c = sample_tasks(&p, &[], 30, 8, "m", 4).unwrap();
        assert_ne!(a, c);

        let p = preds(32);
        let mut ids: Vec<_> = sample_tasks(&p, &[], 32, 3, "m", 4)
            .unwrap()
            .into_iter()
            .map(|t| t.task_id)
            .collect();
        ids.sort();
        assert_eq!(ids.len(), 32);
        ids.dedup();
        assert_eq!(ids.len(), 32);

        assert!(matches!(
            sample_tasks(&[], &[], 1, 0, "m", 4),
            Err(AnnotationError::EmptyPredictions)
        ));
    }

    #[test]
    fn gold_and_circularity_prefill() {
        let p = vec![Prediction {
            word: "table".into(),
            sense_id: "t1".into(),
            definition: "a table is a sort of a table".into(),
        }];
        let g = vec![GoldItem {
            word: "table".into(),
            sense_id: "t1".into(),
            definition: "furniture".into(),
        }];
        let t = sample_tasks(&p, &g, 0, 0, "x", 4).unwrap();
        assert!(t[0].auto_circular);
        assert_eq!(t[0].gold_definition.as_deref(), Some("furniture"));
    }

    #[test]
    fn shares() {
        let tasks = sample_tasks(&preds(32), &[], 0, 0, "ru", 4).unwrap();
        let none = compute_shares(&[], &tasks);
        let m = &none.models["ru"];
        assert_eq!((m.tasks, m.labeled), (32, 0));
        assert!(m.fluency.is_none() && m.adequacy.is_none() && m.circularity.is_none());

        let labels: Vec<_> = tasks
            .iter()
            .enumerate()
            .map(|(i, t)| label(&t.task_id, false, i < 13, "a"))
            .collect();
        let r = compute_shares(&labels, &tasks);
        assert_eq!(r.models["ru"].adequacy.as_ref().unwrap().display, "40.6");
        assert_eq!(r.models["ru"].circularity.as_ref().unwrap().count, 0);

        let mut labels = labels;
        labels[0].circular_override = Some(true);
        let r = compute_shares(&labels, &tasks);
        assert_eq!(r.models["ru"].circularity.as_ref().unwrap().count, 1);
    }

    #[test]
    fn last_write_wins() {
        let log = vec![
            label("t1", true, false, "a"),
            label("t2", false, false, "a"),
            label("t1", false, false, "a"),
        ];
        let eff = effective_labels(&log);
        assert_eq!(eff.len(), 2);
        assert_eq!(eff[0].task_id, "t2");
        assert!(!eff[1].fluency_issue);
    }

    #[test]
    fn store_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.jsonl");
        let tasks = sample_tasks(&preds(30), &[], 0, 0, "fi", 4).unwrap();
        {
            let mut store = LabelStore::open(&path).unwrap();
            for (i, t) in tasks.iter().enumerate() {
                store.append(label(&t.task_id, i < 2, false, "a")).unwrap();
            }
        }
        let mut body = std::fs::read_to_string(&path).unwrap();
        body.push_str("{\"task_id\":\"fi-0");
        std::fs::write(&path, body).unwrap();
        let mut store = LabelStore::open(&path).unwrap();
        let r = compute_shares(&store.effective(), &tasks);
        assert_eq!(r.models["fi"].fluency.as_ref().unwrap().display_precise, "6.67");

        store.append(label(&tasks[2].task_id, true, false, "a")).unwrap();
        let replayed = LabelStore::open(&path).unwrap();
        assert_eq!(replayed.log().len(), 31);
        let r = compute_shares(&replayed.effective(), &tasks);
        assert_eq!(r.models["fi"].fluency.as_ref().unwrap().count, 3);
    }
}
