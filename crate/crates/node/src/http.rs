//! The staff API and the inter-node endpoint, plus the loop that pushes
//! outbound messages to peers.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration as StdDuration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Duration, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use interlend_core::clock::Timestamp;
use interlend_core::ids::{LibraryId, RequestId, UserId};
use interlend_core::ledger::{FillRateMode, Period};
use interlend_core::request::{Actor, Panel, RSRequest, Role, UnfulfilReason, TRANSITIONS};

use crate::config::PeerEntry;
use crate::error::NodeError;
use crate::node::{FulfilOptions, NewRequest, Node, OperatorAction, SendOptions, SupplyOptions};
use crate::wire::{WireAck, WireMessage};

/// A [`NodeError`] rendered as `{"error": {"code", "message"}}`.
#[derive(Debug)]
pub struct ApiError(pub NodeError);

impl<E: Into<NodeError>> From<E> for ApiError {
    fn from(e: E) -> Self {
        ApiError(e.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = json!({ "error": { "code": self.0.code(), "message": self.0.to_string() } });
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

type Shared = Arc<Node>;

/// Parses a JSON body; an empty body means the defaults.
fn body<T: DeserializeOwned + Default>(bytes: &Bytes) -> ApiResult<T> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    required(bytes)
}

fn required<T: DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| ApiError(NodeError::BadRequest(format!("request body: {e}"))))
}

fn actor(node: &Node, headers: &HeaderMap) -> ApiResult<Actor> {
    let token = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim);
    Ok(Actor::User(node.authenticate(token)?))
}

pub fn router(node: Shared) -> Router {
    Router::new()
        .route("/libraries", post(register_library))
        .route("/auth/token", post(issue_token))
        .route("/operators", post(manage_operators))
        .route("/requests", post(create_request))
        .route("/requests/{id}", get(get_request))
        .route("/requests/{id}/{action}", post(request_action))
        .route("/panels/{side}/{name}", get(panel))
        .route("/stats", get(stats))
        .route("/ledger/report", get(ledger_report))
        .route("/packages/{id}", get(download_package))
        .route("/alerts", get(alerts))
        .route("/wire", post(wire))
        .route("/transitions", get(transitions))
        .with_state(node)
}

#[derive(Deserialize)]
struct Registration {
    #[serde(flatten)]
    peer: PeerEntry,
    #[serde(default)]
    local: bool,
}

async fn register_library(State(node): State<Shared>, headers: HeaderMap, bytes: Bytes) -> ApiResult<Response> {
    let who = actor(&node, &headers)?;
    let reg: Registration = required(&bytes)?;
    let id = reg.peer.id().clone();
    node.register_library(&who, reg.peer, reg.local)?;
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))).into_response())
}

#[derive(Deserialize)]
struct Credentials {
    user: UserId,
    secret: String,
}

async fn issue_token(State(node): State<Shared>, bytes: Bytes) -> ApiResult<Json<serde_json::Value>> {
    let c: Credentials = required(&bytes)?;
    let (token, expires_at) = node.issue_token(&c.user, &c.secret)?;
    Ok(Json(json!({ "token": token, "expires_at": expires_at })))
}

#[derive(Deserialize)]
struct OperatorChange {
    #[serde(default)]
    library: Option<LibraryId>,
    action: OperatorAction,
    user: UserId,
    #[serde(default)]
    roles: BTreeSet<Role>,
}

async fn manage_operators(State(node): State<Shared>, headers: HeaderMap, bytes: Bytes) -> ApiResult<Json<serde_json::Value>> {
    let who = actor(&node, &headers)?;
    let c: OperatorChange = required(&bytes)?;
    let library = c.library.unwrap_or_else(|| node.id().clone());
    let secret = node.manage_operators(&who, &library, c.action, &c.user, c.roles)?;
    Ok(Json(json!({ "user": c.user, "library": library, "secret": secret })))
}

async fn create_request(State(node): State<Shared>, headers: HeaderMap, bytes: Bytes) -> ApiResult<Response> {
    let who = actor(&node, &headers)?;
    let input: NewRequest = required(&bytes)?;
    let req = node.create_request(input, &who)?;
    Ok((StatusCode::CREATED, Json(req)).into_response())
}

/// Readable by anyone with a role at a library party to the request.
fn visible(node: &Node, who: &Actor, req: &RSRequest) -> ApiResult<()> {
    let involved = req.lenders_involved();
    let parties = std::iter::once(&req.requester_library)
        .chain(req.current_lender.iter())
        .chain(req.supplied_by.iter())
        .chain(involved.iter());
    let mut last = None;
    for lib in parties {
        match node.require_member(who, lib) {
            Ok(()) if node.hosts(lib) => return Ok(()),
            Ok(()) => {}
            Err(e) => last = Some(e),
        }
    }
    Err(ApiError(last.unwrap_or_else(|| NodeError::Forbidden(format!("no role at a library party to {}", req.id)))))
}

async fn get_request(State(node): State<Shared>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<Json<RSRequest>> {
    let who = actor(&node, &headers)?;
    let req = node.request(&RequestId::new(id))?;
    visible(&node, &who, &req)?;
    Ok(Json(req))
}

#[derive(Default, Deserialize)]
struct LenderBody {
    #[serde(default)]
    lender: Option<LibraryId>,
}

#[derive(Deserialize)]
struct UnfulfilBody {
    #[serde(default)]
    lender: Option<LibraryId>,
    reason: UnfulfilReason,
}

#[derive(Deserialize)]
struct CancelDecisionBody {
    #[serde(default)]
    lender: Option<LibraryId>,
    approve: bool,
}

#[derive(Default, Deserialize)]
struct SupplyBody {
    #[serde(default)]
    lender: Option<LibraryId>,
    #[serde(flatten)]
    opts: SupplyOptions,
}

#[derive(Default, Deserialize)]
struct FulfilBody {
    #[serde(default)]
    lender: Option<LibraryId>,
    #[serde(flatten)]
    opts: FulfilOptions,
}

#[derive(Default, Deserialize)]
struct ReceiveBody {
    #[serde(default)]
    barcode: Option<String>,
}

#[derive(Deserialize)]
struct LoanBody {
    patron_group: String,
}

#[derive(Deserialize)]
struct NoteBody {
    text: String,
}

fn reply<T: Serialize>(value: T) -> ApiResult<Response> {
    Ok(Json(value).into_response())
}

async fn request_action(
    State(node): State<Shared>,
    headers: HeaderMap,
    Path((id, action)): Path<(String, String)>,
    bytes: Bytes,
) -> ApiResult<Response> {
    let who = actor(&node, &headers)?;
    let id = RequestId::new(id);
    let n = &node;
    match action.as_str() {
        "precheck" => {
            let advice = n.precheck(&id, &who)?;
            reply(json!({ "advice": advice, "request": n.request(&id)? }))
        }
        "send" => reply(n.send(&id, body::<SendOptions>(&bytes)?, &who)?),
        "send-all" => reply(n.send_all(&id, &who)?),
        "accept" => reply(n.accept(&id, body::<LenderBody>(&bytes)?.lender, &who)?),
        "unfulfil" => {
            let b: UnfulfilBody = required(&bytes)?;
            reply(n.unfulfil(&id, b.lender, b.reason, &who)?)
        }
        "reiterate" => reply(n.reiterate(&id, &who)?),
        "archive" => reply(n.archive(&id, &who)?),
        "cancel" => reply(n.request_cancel(&id, &who)?),
        "cancel-decision" => {
            let b: CancelDecisionBody = required(&bytes)?;
            reply(n.decide_cancel(&id, b.lender, b.approve, &who)?)
        }
        "check-supply" => {
            let b: SupplyBody = body(&bytes)?;
            let (outcome, decision) = n.check_supply(&id, b.lender, &b.opts, &who)?;
            reply(json!({ "outcome": outcome, "decision": decision }))
        }
        "fulfil" => {
            let b: FulfilBody = body(&bytes)?;
            reply(n.fulfil(&id, b.lender, b.opts, &who)?)
        }
        "receive" => reply(n.receive(&id, body::<ReceiveBody>(&bytes)?.barcode, &who)?),
        "loan" => {
            let b: LoanBody = required(&bytes)?;
            reply(n.loan(&id, &b.patron_group, &who)?)
        }
        "return" => reply(n.return_from_patron(&id, &who)?),
        "quarantine-release" => reply(n.release_quarantine(&id, &who)?),
        "return-to-lender" => reply(n.return_to_lender(&id, &who)?),
        "complete" => reply(n.complete(&id, body::<LenderBody>(&bytes)?.lender, &who)?),
        "annotate" => {
            let b: NoteBody = required(&bytes)?;
            reply(n.annotate(&id, &b.text, &who)?)
        }
        other => Err(ApiError(NodeError::NotFound(format!("no action {other}")))),
    }
}

#[derive(Deserialize)]
struct LibraryQuery {
    #[serde(default)]
    library: Option<LibraryId>,
}

fn panel_of(side: &str, name: &str) -> Option<Panel> {
    Some(match (side, name) {
        ("borrowing", "new") => Panel::BorrowingNew,
        ("borrowing", "pending") => Panel::BorrowingPending,
        ("borrowing", "archive") => Panel::BorrowingArchive,
        ("lending", "pending") => Panel::LendingPending,
        ("lending", "orphaned") => Panel::LendingOrphaned,
        ("lending", "archive") => Panel::LendingArchive,
        _ => return None,
    })
}

async fn panel(
    State(node): State<Shared>,
    headers: HeaderMap,
    Path((side, name)): Path<(String, String)>,
    Query(q): Query<LibraryQuery>,
) -> ApiResult<Response> {
    let who = actor(&node, &headers)?;
    let panel = panel_of(&side, &name).ok_or_else(|| NodeError::NotFound(format!("no panel {side}/{name}")))?;
    let library = q.library.unwrap_or_else(|| node.id().clone());
    node.require_member(&who, &library)?;
    reply(node.panel(&library, panel))
}

#[derive(Deserialize)]
struct WindowQuery {
    #[serde(default)]
    library: Option<LibraryId>,
    #[serde(default)]
    mode: Option<FillRateMode>,
    #[serde(default)]
    start: Option<DateTime<Utc>>,
    #[serde(default)]
    end: Option<DateTime<Utc>>,
}

impl WindowQuery {
    /// Everything up to now when the bounds are absent.
    fn bounds(&self, now: Timestamp) -> ApiResult<(Timestamp, Timestamp)> {
        let start = self.start.unwrap_or(DateTime::UNIX_EPOCH);
        let end = self.end.unwrap_or(now + Duration::seconds(1));
        if end <= start {
            return Err(ApiError(NodeError::BadRequest("end must be after start".into())));
        }
        Ok((start, end))
    }
}

async fn stats(State(node): State<Shared>, headers: HeaderMap, Query(q): Query<WindowQuery>) -> ApiResult<Response> {
    let who = actor(&node, &headers)?;
    let library = q.library.clone().unwrap_or_else(|| node.id().clone());
    node.require_member(&who, &library)?;
    let (start, end) = q.bounds(node.now())?;
    reply(node.stats(&library, q.mode.unwrap_or(FillRateMode::OfTotal), start, end))
}

async fn ledger_report(State(node): State<Shared>, headers: HeaderMap, Query(q): Query<WindowQuery>) -> ApiResult<Response> {
    let who = actor(&node, &headers)?;
    node.require_member(&who, &node.id().clone())?;
    let (start, end) = q.bounds(node.now())?;
    reply(node.ledger_report(Period { start, end }))
}

async fn download_package(State(node): State<Shared>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<Response> {
    let who = actor(&node, &headers)?;
    reply(node.download_package(&id, &who)?)
}

async fn alerts(State(node): State<Shared>, headers: HeaderMap, Query(q): Query<LibraryQuery>) -> ApiResult<Response> {
    let who = actor(&node, &headers)?;
    let library = q.library.unwrap_or_else(|| node.id().clone());
    node.require_member(&who, &library)?;
    reply(node.alerts().into_iter().filter(|a| a.library == library).collect::<Vec<_>>())
}

fn ack_status(ack: &WireAck) -> StatusCode {
    match ack.code.as_deref() {
        None => StatusCode::OK,
        Some("SchemaViolation") => StatusCode::BAD_REQUEST,
        Some("Forbidden") => StatusCode::FORBIDDEN,
        Some("UnknownCorrelation" | "UnknownRequest") => StatusCode::NOT_FOUND,
        Some(_) => StatusCode::CONFLICT,
    }
}

async fn wire(State(node): State<Shared>, bytes: Bytes) -> ApiResult<Response> {
    let msg: WireMessage =
        serde_json::from_slice(&bytes).map_err(|e| NodeError::SchemaViolation(format!("envelope: {e}")))?;
    let ack = node.handle_wire(&msg)?;
    Ok((ack_status(&ack), Json(ack)).into_response())
}

async fn transitions() -> Json<serde_json::Value> {
    Json(json!({ "transitions": TRANSITIONS }))
}

/// Posts every undelivered message to its recipient's `/wire` endpoint.
/// Unreachable peers keep their messages for the next round.
pub async fn dispatch_once(node: &Node, client: &reqwest::Client) -> usize {
    let mut delivered = 0;
    for msg in node.outbox() {
        let Some(base) = node.peer_url(&msg.recipient) else {
            continue;
        };
        let url = format!("{}/wire", base.trim_end_matches('/'));
        let ack = match client.post(&url).json(&msg).send().await {
            Ok(resp) => resp.json::<WireAck>().await,
            Err(e) => {
                tracing::debug!(peer = %msg.recipient, error = %e, "peer unreachable");
                continue;
            }
        };
        match ack {
            Ok(ack) => match node.acknowledge(ack) {
                Ok(()) => delivered += 1,
                Err(e) => tracing::error!(error = %e, "could not record acknowledgement"),
            },
            Err(e) => tracing::warn!(peer = %msg.recipient, error = %e, "unreadable acknowledgement"),
        }
    }
    delivered
}

/// Serves the API until ctrl-c, pushing outbound messages and running
/// housekeeping in the background.
pub async fn serve(node: Shared) -> Result<(), NodeError> {
    let listener = tokio::net::TcpListener::bind(&node.config().listen).await?;
    tracing::info!(node = %node.id(), addr = %node.config().listen, "listening");

    let bg = node.clone();
    let background = tokio::spawn(async move {
        let client = reqwest::Client::builder().timeout(StdDuration::from_secs(10)).build().expect("http client");
        let mut wire_tick = tokio::time::interval(StdDuration::from_secs(2));
        let mut house_tick = tokio::time::interval(StdDuration::from_secs(600));
        loop {
            tokio::select! {
                _ = wire_tick.tick() => {
                    dispatch_once(&bg, &client).await;
                }
                _ = house_tick.tick() => {
                    if let Err(e) = bg.housekeeping() {
                        tracing::error!(error = %e, "housekeeping failed");
                    }
                }
            }
        }
    });

    let served = axum::serve(listener, router(node.clone()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await;
    background.abort();
    if let Err(e) = node.write_snapshot() {
        tracing::warn!(error = %e, "snapshot not written");
    }
    served.map_err(NodeError::from)
}
