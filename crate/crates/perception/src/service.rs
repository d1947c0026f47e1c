use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::study::{ImageRole, Study, GROUND_TRUTH};
use crate::votes::{compute_stats, replay_log, StatsReport, VoteLog, VoteRecord};
use crate::{hex_digest, Result, API_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    /// 1-based position within the session.
    pub index: usize,
    pub total: usize,
    pub input_url: String,
    pub truth_url: String,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionResponse {
    pub v: u32,
    pub session: String,
    pub done: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub question: Option<Question>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResponse {
    pub v: u32,
    pub session: String,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRequest {
    #[serde(default = "default_version")]
    pub v: u32,
    pub session: String,
    pub question: String,
    pub choice: String,
}

fn default_version() -> u32 {
    API_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteAck {
    pub v: u32,
    pub question: String,
    /// False when the question already had a vote; the earlier vote stands.
    pub recorded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub v: u32,
    pub error: String,
}

#[derive(Debug)]
struct IssuedQuestion {
    sample: usize,
    index: usize,
    /// Candidate id -> choice name (model or ground truth).
    candidates: Vec<(String, String)>,
}

#[derive(Debug)]
struct Session {
    rng: ChaCha8Rng,
    unseen: Vec<usize>,
    issued: Vec<String>,
    questions: HashMap<String, IssuedQuestion>,
}

#[derive(Debug)]
struct Votes {
    log: VoteLog,
    records: Vec<VoteRecord>,
    answered: HashMap<String, usize>,
}

#[derive(Debug)]
struct Inner {
    study: Study,
    sessions: Mutex<HashMap<String, Session>>,
    votes: Mutex<Votes>,
}

/// Shared service state. Votes already in the log are replayed on startup.
#[derive(Debug, Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

fn seed_from(parts: &[&str]) -> u64 {
    u64::from_str_radix(&hex_digest(parts)[..16], 16).expect("hex")
}

impl AppState {
    pub fn new(study: Study, vote_log: impl AsRef<Path>) -> Result<AppState> {
        let records = replay_log(&vote_log)?;
        let answered = records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.question.clone(), i))
            .collect();
        let log = VoteLog::open(vote_log)?;
        Ok(AppState {
            inner: Arc::new(Inner {
                study,
                sessions: Mutex::new(HashMap::new()),
                votes: Mutex::new(Votes {
                    log,
                    records,
                    answered,
                }),
            }),
        })
    }

    pub fn study(&self) -> &Study {
        &self.inner.study
    }

    pub fn create_session(&self) -> SessionResponse {
        let id = format!("{:032x}", rand::rng().random::<u128>());
        let session = Session {
            rng: ChaCha8Rng::seed_from_u64(seed_from(&[&id, "order"])),
            unseen: (0..self.inner.study.len()).collect(),
            issued: Vec::new(),
            questions: HashMap::new(),
        };
        self.inner.sessions.lock().unwrap().insert(id.clone(), session);
        SessionResponse {
            v: API_VERSION,
            session: id,
            total: self.inner.study.len(),
        }
    }

    fn render(&self, session: &str, qid: &str, q: &IssuedQuestion) -> QuestionResponse {
        let study = &self.inner.study;
        let candidates = q
            .candidates
            .iter()
            .map(|(cid, name)| {
                let role = if name == GROUND_TRUTH {
                    ImageRole::Truth
                } else {
                    ImageRole::Output(name.clone())
                };
                Candidate {
                    id: cid.clone(),
                    url: study.image_url(q.sample, &role),
                }
            })
            .collect();
        QuestionResponse {
            v: API_VERSION,
            session: session.to_string(),
            done: false,
            question: Some(Question {
                id: qid.to_string(),
                index: q.index,
                total: study.len(),
                input_url: study.image_url(q.sample, &ImageRole::Input),
                truth_url: study.image_url(q.sample, &ImageRole::Truth),
                candidates,
            }),
        }
    }

    /// Issues the next unseen sample, or re-renders an issued question when
    /// `question` is given. `None` means the session does not exist.
    pub fn question(&self, session: &str, question: Option<&str>) -> Option<std::result::Result<QuestionResponse, String>> {
        let mut sessions = self.inner.sessions.lock().unwrap();
        let s = sessions.get_mut(session)?;
        if let Some(qid) = question {
            return Some(match s.questions.get(qid) {
                Some(q) => Ok(self.render(session, qid, q)),
                None => Err(format!("question {qid:?} was not issued to this session")),
            });
        }
        if s.unseen.is_empty() {
            return Some(Ok(QuestionResponse {
                v: API_VERSION,
                session: session.to_string(),
                done: true,
                question: None,
            }));
        }
        let pick = s.rng.random_range(0..s.unseen.len());
        let sample = s.unseen.swap_remove(pick);
        let index = s.issued.len() + 1;
        let qid = format!("{session}-{index}");
        let mut choices = self.inner.study.choices();
        let mut rng = ChaCha8Rng::seed_from_u64(seed_from(&[session, &qid]));
        choices.shuffle(&mut rng);
        let candidates = choices
            .into_iter()
            .enumerate()
            .map(|(i, name)| (format!("c{}", i + 1), name))
            .collect();
        let q = IssuedQuestion {
            sample,
            index,
            candidates,
        };
        let resp = self.render(session, &qid, &q);
        s.issued.push(qid.clone());
        s.questions.insert(qid, q);
        Some(Ok(resp))
    }

    pub fn vote(&self, req: &VoteRequest) -> std::result::Result<VoteAck, (StatusCode, String)> {
        if req.v != API_VERSION {
            return Err((StatusCode::BAD_REQUEST, format!("unsupported version {}", req.v)));
        }
        let (sample, model) = {
            let sessions = self.inner.sessions.lock().unwrap();
            let s = sessions
                .get(&req.session)
                .ok_or((StatusCode::NOT_FOUND, "unknown session".to_string()))?;
            let q = s
                .questions
                .get(&req.question)
                .ok_or((StatusCode::NOT_FOUND, "unknown question".to_string()))?;
            let model = q
                .candidates
                .iter()
                .find(|(cid, _)| *cid == req.choice)
                .map(|(_, m)| m.clone())
                .ok_or((StatusCode::BAD_REQUEST, format!("unknown choice {:?}", req.choice)))?;
            (self.inner.study.config.samples[q.sample].id.clone(), model)
        };
        let mut votes = self.inner.votes.lock().unwrap();
        if votes.answered.contains_key(&req.question) {
            return Ok(VoteAck {
                v: API_VERSION,
                question: req.question.clone(),
                recorded: false,
            });
        }
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        let rec = VoteRecord {
            v: API_VERSION,
            session: req.session.clone(),
            question: req.question.clone(),
            sample,
            model,
            timestamp,
        };
        votes
            .log
            .append(&rec)
            .map_err(|e| (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        let n = votes.records.len();
        votes.answered.insert(rec.question.clone(), n);
        votes.records.push(rec);
        Ok(VoteAck {
            v: API_VERSION,
            question: req.question.clone(),
            recorded: true,
        })
    }

    pub fn stats(&self) -> StatsReport {
        let records = self.inner.votes.lock().unwrap().records.clone();
        let study = &self.inner.study;
        compute_stats(&study.config.dataset, &study.choices(), &records)
    }
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (
        status,
        Json(ErrorBody {
            v: API_VERSION,
            error: msg.into(),
        }),
    )
        .into_response()
}

async fn create_session(State(state): State<AppState>) -> Json<SessionResponse> {
    Json(state.create_session())
}

#[derive(Debug, Deserialize)]
struct QuestionQuery {
    session: String,
    question: Option<String>,
}

async fn next_question(State(state): State<AppState>, Query(q): Query<QuestionQuery>) -> Response {
    match state.question(&q.session, q.question.as_deref()) {
        None => error(StatusCode::NOT_FOUND, "unknown session"),
        Some(Err(msg)) => error(StatusCode::NOT_FOUND, msg),
        Some(Ok(resp)) => Json(resp).into_response(),
    }
}

async fn submit_vote(State(state): State<AppState>, Json(req): Json<VoteRequest>) -> Response {
    match state.vote(&req) {
        Ok(ack) if ack.recorded => Json(ack).into_response(),
        Ok(ack) => (StatusCode::CONFLICT, Json(ack)).into_response(),
        Err((status, msg)) => error(status, msg),
    }
}

async fn stats(State(state): State<AppState>) -> Json<StatsReport> {
    Json(state.stats())
}

async fn image(State(state): State<AppState>, UrlPath(token): UrlPath<String>) -> Response {
    let Some(path) = state.study().image_path(&token) else {
        return error(StatusCode::NOT_FOUND, "no such image");
    };
    let mime = match path.extension().and_then(|e| e.to_str()) {
        Some("jpg") | Some("jpeg") => "image/jpeg",
        _ => "image/png",
    };
    match tokio::fs::read(path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, mime)], bytes).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/session", post(create_session))
        .route("/api/question", get(next_question))
        .route("/api/vote", post(submit_vote))
        .route("/api/stats", get(stats))
        .route("/images/{token}", get(image))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
