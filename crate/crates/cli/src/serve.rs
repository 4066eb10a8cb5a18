//! HTTP and WebSocket service: one guidance session per connection.
//!
//! The server owns all guidance logic. Clients send poses; the session turns
//! them into pulses, voice and state messages, and a short drain timer sends
//! each pulse when its start time comes round on the session clock.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::header;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;
use tokio::net::TcpListener;
use tokio::time::MissedTickBehavior;
use tower_http::services::ServeDir;
use wayguide_core::fsm::{GuidanceMode, GuidanceParams};
use wayguide_core::map::{search_destinations, MapDocument, Poi, RouteFile};
use wayguide_core::scheduler::{Clock, WallClock};
use wayguide_core::session::GuidanceSession;
use wayguide_core::trace::TraceEvent;
use wayguide_core::{Point, Pose};

use crate::protocol::{ClientMsg, ServerMsg};

const DRAIN_PERIOD: Duration = Duration::from_millis(15);

pub struct App {
    pub map: MapDocument,
    pub params: GuidanceParams,
    /// Directory of static UI files served at `/`.
    pub assets: Option<PathBuf>,
}

pub fn router(app: App) -> Router {
    let assets = app.assets.clone();
    let router = Router::new()
        .route("/ws", get(upgrade))
        .route("/api/map", get(map_json))
        .route("/api/destinations", get(destinations))
        .with_state(Arc::new(app));
    match assets {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router,
    }
}

pub async fn serve(listener: TcpListener, app: App) -> std::io::Result<()> {
    axum::serve(listener, router(app)).await
}

async fn map_json(State(app): State<Arc<App>>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], app.map.to_json()).into_response()
}

#[derive(Deserialize)]
struct DestinationQuery {
    #[serde(default)]
    q: String,
    /// Comma-separated POI ids, most recent first.
    #[serde(default)]
    recent: String,
}

async fn destinations(
    State(app): State<Arc<App>>,
    Query(query): Query<DestinationQuery>,
) -> Json<Vec<Poi>> {
    let recents: Vec<String> = query
        .recent
        .split(',')
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    Json(
        search_destinations(&app.map, &query.q, &recents)
            .into_iter()
            .cloned()
            .collect(),
    )
}

async fn upgrade(ws: WebSocketUpgrade, State(app): State<Arc<App>>) -> Response {
    ws.on_upgrade(move |socket| connection(socket, app))
}

struct Live {
    session: GuidanceSession,
    clock: WallClock,
    last_t: f64,
}

impl Live {
    /// Session time never runs behind the poses already fed.
    fn now(&self) -> f64 {
        self.clock.now().max(self.last_t)
    }
}

async fn connection(mut socket: WebSocket, app: Arc<App>) {
    let mut live: Option<Live> = None;
    let mut tick = tokio::time::interval(DRAIN_PERIOD);
    tick.set_missed_tick_behavior(MissedTickBehavior::Skip);
    loop {
        let out = tokio::select! {
            msg = socket.recv() => match msg {
                Some(Ok(Message::Text(text))) => handle(&app, &mut live, text.as_str()),
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                Some(Ok(_)) => continue,
            },
            _ = tick.tick() => match live.as_mut() {
                Some(l) if !l.session.is_arrived() => {
                    let now = l.now();
                    match l.session.drain(now) {
                        Ok(events) => to_messages(events),
                        Err(e) => vec![ServerMsg::error(e)],
                    }
                }
                _ => continue,
            },
        };
        for m in out {
            if socket.send(Message::Text(m.to_json().into())).await.is_err() {
                return;
            }
        }
    }
}

fn to_messages(events: Vec<TraceEvent>) -> Vec<ServerMsg> {
    events.into_iter().filter_map(ServerMsg::from_event).collect()
}

fn handle(app: &App, live: &mut Option<Live>, text: &str) -> Vec<ServerMsg> {
    let msg = match serde_json::from_str::<ClientMsg>(text) {
        Ok(m) => m,
        Err(e) => return vec![ServerMsg::error(format!("unreadable message: {e}"))],
    };
    match msg {
        ClientMsg::Start {
            from,
            to,
            mode,
            voice,
        } => match start(app, &from, &to, &mode, voice) {
            Ok((l, out)) => {
                *live = Some(l);
                out
            }
            Err(e) => vec![ServerMsg::error(e)],
        },
        ClientMsg::Pose {
            t,
            x,
            y,
            floor,
            heading,
        } => {
            let Some(l) = live.as_mut() else {
                return vec![ServerMsg::error("no session; send start first")];
            };
            if l.session.is_arrived() {
                return vec![ServerMsg::error("destination already reached; send start or stop")];
            }
            let t = t.unwrap_or_else(|| l.now());
            if !(t >= l.last_t) {
                return vec![ServerMsg::error(format!(
                    "pose time {t} is before the previous pose at {}",
                    l.last_t
                ))];
            }
            let pose = match Pose::new(Point::new(x, y, floor), heading, t) {
                Ok(p) => p,
                Err(e) => return vec![ServerMsg::error(e)],
            };
            match l.session.feed(&pose) {
                Ok(events) => {
                    l.last_t = t;
                    to_messages(events)
                }
                Err(e) => vec![ServerMsg::error(e)],
            }
        }
        ClientMsg::Stop => {
            *live = None;
            Vec::new()
        }
    }
}

fn start(
    app: &App,
    from: &str,
    to: &str,
    mode: &str,
    voice: bool,
) -> wayguide_core::Result<(Live, Vec<ServerMsg>)> {
    let route = app.map.route_between(from, to)?.clone();
    let mode = mode.parse::<GuidanceMode>()?.with_voice(voice);
    let mut out = vec![ServerMsg::Route(RouteFile::from(&route))];
    let (session, events) = GuidanceSession::start(route, mode, app.params.clone(), 0.0)?;
    out.extend(to_messages(events));
    let live = Live {
        session,
        clock: WallClock::new(0.0),
        last_t: 0.0,
    };
    Ok((live, out))
}
