//! In-memory Conduit API server.
//!
//! Runs on its own Tokio runtime in a background thread so synchronous
//! callers (tests, the harness, the CLI) can start and stop it freely.
//! Every request takes the store lock for its whole duration, so requests
//! are handled one at a time.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::{SocketAddr, TcpListener};
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::{Json, Router};
use serde_json::{json, Value};
use thiserror::Error;
use tokio::sync::oneshot;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind port {port}: {source}")]
    Bind {
        port: u16,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot start runtime: {0}")]
    Runtime(std::io::Error),
    #[error("unknown feature `{0}` (expected comments, favorites or profiles)")]
    UnknownFeature(String),
}

/// Feature groups that can be switched off to produce controlled failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Feature {
    Comments,
    Favorites,
    Profiles,
}

impl FromStr for Feature {
    type Err = ServerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "comments" => Ok(Feature::Comments),
            "favorites" => Ok(Feature::Favorites),
            "profiles" => Ok(Feature::Profiles),
            other => Err(ServerError::UnknownFeature(other.to_string())),
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Feature::Comments => "comments",
            Feature::Favorites => "favorites",
            Feature::Profiles => "profiles",
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct ServerOptions {
    pub disabled: BTreeSet<Feature>,
    /// When set, `POST /api/__reset` with header `X-Reset-Token: <token>`
    /// clears all data.
    pub reset_token: Option<String>,
    /// Interface to bind; defaults to 127.0.0.1.
    pub host: Option<String>,
}

/// A running server. Dropping the handle stops it.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn port(&self) -> u16 {
        self.addr.port()
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// `http://host:port`
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// `http://host:port/api`
    pub fn api_url(&self) -> String {
        format!("{}/api", self.base_url())
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    /// Blocks until the server stops.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Starts the server. Port 0 picks a free port.
pub fn serve(port: u16, options: ServerOptions) -> Result<ServerHandle, ServerError> {
    let host = options.host.clone().unwrap_or_else(|| "127.0.0.1".into());
    let listener = TcpListener::bind((host.as_str(), port))
        .map_err(|source| ServerError::Bind { port, source })?;
    listener
        .set_nonblocking(true)
        .map_err(|source| ServerError::Bind { port, source })?;
    let addr = listener
        .local_addr()
        .map_err(|source| ServerError::Bind { port, source })?;
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_io()
        .build()
        .map_err(ServerError::Runtime)?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = Router::new().fallback(dispatch).with_state(Arc::new(App {
        store: Mutex::new(Store::default()),
        options,
    }));
    let thread = std::thread::Builder::new()
        .name(format!("conduit-{}", addr.port()))
        .spawn(move || {
            runtime.block_on(async move {
                let listener = match tokio::net::TcpListener::from_std(listener) {
                    Ok(l) => l,
                    Err(_) => return,
                };
                let _ = axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        })
        .map_err(ServerError::Runtime)?;
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

struct App {
    store: Mutex<Store>,
    options: ServerOptions,
}

#[derive(Default)]
struct Store {
    users: Vec<User>,
    tokens: BTreeMap<String, usize>,
    follows: BTreeSet<(usize, usize)>,
    articles: Vec<Article>,
    comments: Vec<Comment>,
    clock: u64,
    next_comment_id: u64,
}

struct User {
    id: usize,
    username: String,
    email: String,
    password: String,
    bio: Option<String>,
    image: Option<String>,
}

struct Article {
    slug: String,
    title: String,
    description: String,
    body: String,
    tags: Vec<String>,
    author: usize,
    created: u64,
    updated: u64,
    favorited_by: BTreeSet<usize>,
}

struct Comment {
    id: u64,
    article_slug: String,
    author: usize,
    body: String,
    created: u64,
    updated: u64,
}

type Reply = (StatusCode, Value);

fn error(status: StatusCode, message: &str) -> Reply {
    (status, json!({"errors": {"body": [message]}}))
}

fn not_found() -> Reply {
    error(StatusCode::NOT_FOUND, "not found")
}

fn unauthorized() -> Reply {
    error(
        StatusCode::UNAUTHORIZED,
        "missing or invalid authorization token",
    )
}

fn unprocessable(message: &str) -> Reply {
    error(StatusCode::UNPROCESSABLE_ENTITY, message)
}

/// Milliseconds after 2024-01-01T00:00:00Z rendered as ISO-8601.
fn timestamp(tick: u64) -> String {
    let ms = tick % 1000;
    let secs = tick / 1000;
    let (h, m, s) = ((secs / 3600) % 24, (secs / 60) % 60, secs % 60);
    // Days since 2024-01-01, converted with the civil-from-days algorithm.
    let z = (secs / 86_400) as i64 + 19_723 + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = doy - (153 * mp + 2) / 5 + 1;
    let month = if mp < 10 { mp + 3 } else { mp - 9 };
    let year = yoe + era * 400 + i64::from(month <= 2);
    format!("{year:04}-{month:02}-{day:02}T{h:02}:{m:02}:{s:02}.{ms:03}Z")
}

fn slugify(title: &str) -> String {
    let mut slug = String::new();
    for ch in title.chars().flat_map(char::to_lowercase) {
        if ch.is_ascii_alphanumeric() {
            slug.push(ch);
        } else if !slug.ends_with('-') && !slug.is_empty() {
            slug.push('-');
        }
    }
    while slug.ends_with('-') {
        slug.pop();
    }
    if slug.is_empty() {
        slug.push_str("article");
    }
    slug
}

fn str_field<'a>(obj: &'a Value, key: &str) -> Option<&'a str> {
    obj.get(key).and_then(Value::as_str)
}

impl Store {
    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    fn user_by_name(&self, username: &str) -> Option<&User> {
        self.users.iter().find(|u| u.username == username)
    }

    fn issue_token(&mut self, user: usize) -> String {
        let n = self.tokens.len() + 1;
        let token = format!("cdt.{user:04x}.{n:08x}");
        self.tokens.insert(token.clone(), user);
        token
    }

    fn user_json(&self, user: usize, token: &str) -> Value {
        let u = &self.users[user];
        json!({"user": {
            "email": u.email,
            "token": token,
            "username": u.username,
            "bio": u.bio,
            "image": u.image,
        }})
    }

    fn profile_json(&self, user: usize, viewer: Option<usize>) -> Value {
        let u = &self.users[user];
        json!({
            "username": u.username,
            "bio": u.bio,
            "image": u.image,
            "following": viewer.is_some_and(|v| self.follows.contains(&(v, user))),
        })
    }

    fn article_json(&self, idx: usize, viewer: Option<usize>) -> Value {
        let a = &self.articles[idx];
        json!({
            "slug": a.slug,
            "title": a.title,
            "description": a.description,
            "body": a.body,
            "tagList": a.tags,
            "createdAt": timestamp(a.created),
            "updatedAt": timestamp(a.updated),
            "favorited": viewer.is_some_and(|v| a.favorited_by.contains(&v)),
            "favoritesCount": a.favorited_by.len(),
            "author": self.profile_json(a.author, viewer),
        })
    }

    fn comment_json(&self, c: &Comment, viewer: Option<usize>) -> Value {
        json!({
            "id": c.id,
            "createdAt": timestamp(c.created),
            "updatedAt": timestamp(c.updated),
            "body": c.body,
            "author": self.profile_json(c.author, viewer),
        })
    }

    fn article_index(&self, slug: &str) -> Option<usize> {
        self.articles.iter().position(|a| a.slug == slug)
    }

    fn unique_slug(&self, title: &str, skip: Option<usize>) -> String {
        let base = slugify(title);
        let taken = |s: &str| {
            self.articles
                .iter()
                .enumerate()
                .any(|(i, a)| Some(i) != skip && a.slug == s)
        };
        if !taken(&base) {
            return base;
        }
        (2..)
            .map(|n| format!("{base}-{n}"))
            .find(|s| !taken(s))
            .expect("unbounded counter")
    }
}

struct Ctx<'a> {
    store: &'a mut Store,
    viewer: Option<usize>,
    query: BTreeMap<String, String>,
    body: Option<Value>,
}

impl Ctx<'_> {
    fn require_user(&self) -> Result<usize, Reply> {
        self.viewer.ok_or_else(unauthorized)
    }

    fn payload(&self, key: &str) -> Result<&Value, Reply> {
        self.body
            .as_ref()
            .and_then(|b| b.get(key))
            .filter(|v| v.is_object())
            .ok_or_else(|| unprocessable(&format!("request body must contain a `{key}` object")))
    }
}

fn parse_query(uri: &Uri) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for pair in uri
        .query()
        .unwrap_or("")
        .split('&')
        .filter(|p| !p.is_empty())
    {
        let (k, v) = pair.split_once('=').unwrap_or((pair, ""));
        out.insert(decode(k), decode(v));
    }
    out
}

fn decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'+' => out.push(b' '),
            b'%' if i + 2 < bytes.len() => {
                match s.get(i + 1..i + 3).map(|h| u8::from_str_radix(h, 16)) {
                    Some(Ok(b)) => {
                        out.push(b);
                        i += 2;
                    }
                    _ => out.push(b'%'),
                }
            }
            b => out.push(b),
        }
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

async fn dispatch(
    State(app): State<Arc<App>>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let (status, value) = handle(&app, &method, &uri, &headers, &body);
    (status, Json(value)).into_response()
}

fn handle(app: &App, method: &Method, uri: &Uri, headers: &HeaderMap, body: &Bytes) -> Reply {
    let path = uri.path().trim_end_matches('/');
    let Some(rest) = path.strip_prefix("/api") else {
        return not_found();
    };
    let segments: Vec<String> = rest
        .split('/')
        .filter(|s| !s.is_empty())
        .map(decode)
        .collect();
    let segs: Vec<&str> = segments.iter().map(String::as_str).collect();

    if segs == ["health-check"] && method == Method::GET {
        return (StatusCode::OK, json!({"status": "ok"}));
    }

    let mut store = app.store.lock().unwrap_or_else(|e| e.into_inner());

    if segs == ["__reset"] && method == Method::POST {
        let presented = headers.get("x-reset-token").and_then(|v| v.to_str().ok());
        return match (&app.options.reset_token, presented) {
            (Some(expected), Some(got)) if expected == got => {
                *store = Store::default();
                (StatusCode::OK, json!({}))
            }
            (Some(_), _) => unauthorized(),
            (None, _) => not_found(),
        };
    }

    let body = if body.is_empty() {
        None
    } else {
        match serde_json::from_slice::<Value>(body) {
            Ok(v) => Some(v),
            Err(_) => return unprocessable("request body is not valid JSON"),
        }
    };
    let token = headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Token "))
        .map(str::trim);
    let viewer = token.and_then(|t| store.tokens.get(t).copied());
    let mut ctx = Ctx {
        store: &mut store,
        viewer,
        query: parse_query(uri),
        body,
    };
    let disabled = |f: Feature| app.options.disabled.contains(&f);

    let result = match (method.clone(), segs.as_slice()) {
        (Method::POST, ["users"]) => register(&mut ctx),
        (Method::POST, ["users", "login"]) => login(&mut ctx),
        (Method::GET, ["user"]) => current_user(&mut ctx),
        (Method::PUT, ["user"]) => update_user(&mut ctx),
        (_, ["profiles", ..]) if disabled(Feature::Profiles) => Err(not_found()),
        (Method::GET, ["profiles", name]) => get_profile(&mut ctx, name),
        (Method::POST, ["profiles", name, "follow"]) => set_follow(&mut ctx, name, true),
        (Method::DELETE, ["profiles", name, "follow"]) => set_follow(&mut ctx, name, false),
        (Method::GET, ["articles"]) => list_articles(&mut ctx),
        (Method::GET, ["articles", "feed"]) => feed(&mut ctx),
        (Method::POST, ["articles"]) => create_article(&mut ctx),
        (Method::GET, ["articles", slug]) => get_article(&mut ctx, slug),
        (Method::PUT, ["articles", slug]) => update_article(&mut ctx, slug),
        (Method::DELETE, ["articles", slug]) => delete_article(&mut ctx, slug),
        (_, ["articles", _, "favorite"]) if disabled(Feature::Favorites) => Err(not_found()),
        (Method::POST, ["articles", slug, "favorite"]) => set_favorite(&mut ctx, slug, true),
        (Method::DELETE, ["articles", slug, "favorite"]) => set_favorite(&mut ctx, slug, false),
        (_, ["articles", _, "comments", ..]) if disabled(Feature::Comments) => Err(not_found()),
        (Method::GET, ["articles", slug, "comments"]) => list_comments(&mut ctx, slug),
        (Method::POST, ["articles", slug, "comments"]) => add_comment(&mut ctx, slug),
        (Method::DELETE, ["articles", slug, "comments", id]) => delete_comment(&mut ctx, slug, id),
        (Method::GET, ["tags"]) => Ok(tags(&ctx)),
        _ => Err(not_found()),
    };
    result.unwrap_or_else(|reply| reply)
}

type Outcome = Result<Reply, Reply>;

fn register(ctx: &mut Ctx<'_>) -> Outcome {
    let user = ctx.payload("user")?;
    let mut missing = Vec::new();
    let mut field = |k: &str| -> String {
        match str_field(user, k).map(str::trim).filter(|s| !s.is_empty()) {
            Some(v) => v.to_string(),
            None => {
                missing.push(k.to_string());
                String::new()
            }
        }
    };
    let (username, email, password) = (field("username"), field("email"), field("password"));
    if !missing.is_empty() {
        return Err(unprocessable(&format!(
            "{} can't be blank",
            missing.join(", ")
        )));
    }
    let store = &mut *ctx.store;
    if store.users.iter().any(|u| u.username == username) {
        return Err(unprocessable("username has already been taken"));
    }
    if store.users.iter().any(|u| u.email == email) {
        return Err(unprocessable("email has already been taken"));
    }
    let id = store.users.len();
    store.users.push(User {
        id,
        username,
        email,
        password,
        bio: None,
        image: None,
    });
    let token = store.issue_token(id);
    Ok((StatusCode::CREATED, store.user_json(id, &token)))
}

fn login(ctx: &mut Ctx<'_>) -> Outcome {
    let user = ctx.payload("user")?.clone();
    let (Some(email), Some(password)) = (str_field(&user, "email"), str_field(&user, "password"))
    else {
        return Err(unprocessable("email and password are required"));
    };
    let store = &mut *ctx.store;
    let found = store
        .users
        .iter()
        .find(|u| u.email == email && u.password == password)
        .map(|u| u.id);
    let Some(id) = found else {
        return Err(error(
            StatusCode::UNAUTHORIZED,
            "email or password is invalid",
        ));
    };
    let token = store.issue_token(id);
    Ok((StatusCode::OK, store.user_json(id, &token)))
}

fn token_for(store: &Store, user: usize) -> String {
    store
        .tokens
        .iter()
        .filter(|(_, &u)| u == user)
        .map(|(t, _)| t.clone())
        .next_back()
        .unwrap_or_default()
}

fn current_user(ctx: &mut Ctx<'_>) -> Outcome {
    let me = ctx.require_user()?;
    Ok((
        StatusCode::OK,
        ctx.store.user_json(me, &token_for(ctx.store, me)),
    ))
}

fn update_user(ctx: &mut Ctx<'_>) -> Outcome {
    let me = ctx.require_user()?;
    let changes = ctx.payload("user")?.clone();
    let store = &mut *ctx.store;
    if let Some(name) = str_field(&changes, "username") {
        if store.users.iter().any(|u| u.username == name && u.id != me) {
            return Err(unprocessable("username has already been taken"));
        }
    }
    if let Some(email) = str_field(&changes, "email") {
        if store.users.iter().any(|u| u.email == email && u.id != me) {
            return Err(unprocessable("email has already been taken"));
        }
    }
    let u = &mut store.users[me];
    if let Some(v) = str_field(&changes, "username") {
        u.username = v.to_string();
    }
    if let Some(v) = str_field(&changes, "email") {
        u.email = v.to_string();
    }
    if let Some(v) = str_field(&changes, "password") {
        u.password = v.to_string();
    }
    if let Some(v) = changes.get("bio") {
        u.bio = v.as_str().map(String::from);
    }
    if let Some(v) = changes.get("image") {
        u.image = v.as_str().map(String::from);
    }
    Ok((StatusCode::OK, store.user_json(me, &token_for(store, me))))
}

fn get_profile(ctx: &mut Ctx<'_>, name: &str) -> Outcome {
    let user = ctx.store.user_by_name(name).ok_or_else(not_found)?.id;
    Ok((
        StatusCode::OK,
        json!({"profile": ctx.store.profile_json(user, ctx.viewer)}),
    ))
}

fn set_follow(ctx: &mut Ctx<'_>, name: &str, follow: bool) -> Outcome {
    let me = ctx.require_user()?;
    let target = ctx.store.user_by_name(name).ok_or_else(not_found)?.id;
    if follow {
        ctx.store.follows.insert((me, target));
    } else {
        ctx.store.follows.remove(&(me, target));
    }
    Ok((
        StatusCode::OK,
        json!({"profile": ctx.store.profile_json(target, Some(me))}),
    ))
}

fn paginate(ctx: &Ctx<'_>, mut indices: Vec<usize>) -> Value {
    // Most recent first.
    indices.sort_by_key(|&i| std::cmp::Reverse(ctx.store.articles[i].created));
    let count = indices.len();
    let offset = ctx
        .query
        .get("offset")
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0);
    let limit = ctx
        .query
        .get("limit")
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(20);
    let articles: Vec<Value> = indices
        .into_iter()
        .skip(offset)
        .take(limit)
        .map(|i| ctx.store.article_json(i, ctx.viewer))
        .collect();
    json!({"articles": articles, "articlesCount": count})
}

fn list_articles(ctx: &mut Ctx<'_>) -> Outcome {
    let store = &*ctx.store;
    let tag = ctx.query.get("tag");
    let author = ctx
        .query
        .get("author")
        .map(|n| store.user_by_name(n).map(|u| u.id));
    let favorited = ctx
        .query
        .get("favorited")
        .map(|n| store.user_by_name(n).map(|u| u.id));
    let indices: Vec<usize> = store
        .articles
        .iter()
        .enumerate()
        .filter(|(_, a)| tag.is_none_or(|t| a.tags.contains(t)))
        .filter(|(_, a)| author.is_none_or(|id| id == Some(a.author)))
        .filter(|(_, a)| {
            favorited.is_none_or(|id| id.is_some_and(|id| a.favorited_by.contains(&id)))
        })
        .map(|(i, _)| i)
        .collect();
    Ok((StatusCode::OK, paginate(ctx, indices)))
}

fn feed(ctx: &mut Ctx<'_>) -> Outcome {
    let me = ctx.require_user()?;
    let store = &*ctx.store;
    let indices: Vec<usize> = store
        .articles
        .iter()
        .enumerate()
        .filter(|(_, a)| store.follows.contains(&(me, a.author)))
        .map(|(i, _)| i)
        .collect();
    Ok((StatusCode::OK, paginate(ctx, indices)))
}

fn create_article(ctx: &mut Ctx<'_>) -> Outcome {
    let me = ctx.require_user()?;
    let input = ctx.payload("article")?.clone();
    let mut missing = Vec::new();
    for key in ["title", "description", "body"] {
        if str_field(&input, key).is_none_or(|s| s.trim().is_empty()) {
            missing.push(key);
        }
    }
    if !missing.is_empty() {
        return Err(unprocessable(&format!(
            "{} can't be blank",
            missing.join(", ")
        )));
    }
    let tags: Vec<String> = match input.get("tagList") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => {
            let mut tags: Vec<String> = Vec::new();
            for t in items {
                let Some(t) = t.as_str() else {
                    return Err(unprocessable("tagList must contain strings"));
                };
                if !tags.iter().any(|x| x == t) {
                    tags.push(t.to_string());
                }
            }
            tags
        }
        Some(_) => return Err(unprocessable("tagList must be an array")),
    };
    let title = str_field(&input, "title").unwrap_or_default().to_string();
    let store = &mut *ctx.store;
    let slug = store.unique_slug(&title, None);
    let now = store.tick();
    store.articles.push(Article {
        slug,
        title,
        description: str_field(&input, "description")
            .unwrap_or_default()
            .to_string(),
        body: str_field(&input, "body").unwrap_or_default().to_string(),
        tags,
        author: me,
        created: now,
        updated: now,
        favorited_by: BTreeSet::new(),
    });
    let idx = store.articles.len() - 1;
    Ok((
        StatusCode::CREATED,
        json!({"article": store.article_json(idx, Some(me))}),
    ))
}

fn get_article(ctx: &mut Ctx<'_>, slug: &str) -> Outcome {
    let idx = ctx.store.article_index(slug).ok_or_else(not_found)?;
    Ok((
        StatusCode::OK,
        json!({"article": ctx.store.article_json(idx, ctx.viewer)}),
    ))
}

fn owned_article(ctx: &Ctx<'_>, slug: &str) -> Result<(usize, usize), Reply> {
    let me = ctx.require_user()?;
    let idx = ctx.store.article_index(slug).ok_or_else(not_found)?;
    if ctx.store.articles[idx].author != me {
        return Err(error(
            StatusCode::FORBIDDEN,
            "only the author may change this article",
        ));
    }
    Ok((me, idx))
}

fn update_article(ctx: &mut Ctx<'_>, slug: &str) -> Outcome {
    let (me, idx) = owned_article(ctx, slug)?;
    let changes = ctx.payload("article")?.clone();
    let store = &mut *ctx.store;
    let new_slug = str_field(&changes, "title").map(|t| store.unique_slug(t, Some(idx)));
    let now = store.tick();
    let old_slug = store.articles[idx].slug.clone();
    let a = &mut store.articles[idx];
    if let Some(t) = str_field(&changes, "title") {
        a.title = t.to_string();
    }
    if let Some(s) = new_slug {
        a.slug = s;
    }
    if let Some(d) = str_field(&changes, "description") {
        a.description = d.to_string();
    }
    if let Some(b) = str_field(&changes, "body") {
        a.body = b.to_string();
    }
    a.updated = now;
    let slug_now = a.slug.clone();
    for c in store
        .comments
        .iter_mut()
        .filter(|c| c.article_slug == old_slug)
    {
        c.article_slug = slug_now.clone();
    }
    Ok((
        StatusCode::OK,
        json!({"article": store.article_json(idx, Some(me))}),
    ))
}

fn delete_article(ctx: &mut Ctx<'_>, slug: &str) -> Outcome {
    let (_, idx) = owned_article(ctx, slug)?;
    let removed = ctx.store.articles.remove(idx);
    ctx.store
        .comments
        .retain(|c| c.article_slug != removed.slug);
    Ok((StatusCode::OK, json!({})))
}

fn set_favorite(ctx: &mut Ctx<'_>, slug: &str, on: bool) -> Outcome {
    let me = ctx.require_user()?;
    let idx = ctx.store.article_index(slug).ok_or_else(not_found)?;
    let a = &mut ctx.store.articles[idx];
    if on {
        a.favorited_by.insert(me);
    } else {
        a.favorited_by.remove(&me);
    }
    Ok((
        StatusCode::OK,
        json!({"article": ctx.store.article_json(idx, Some(me))}),
    ))
}

fn list_comments(ctx: &mut Ctx<'_>, slug: &str) -> Outcome {
    let idx = ctx.store.article_index(slug).ok_or_else(not_found)?;
    let slug = &ctx.store.articles[idx].slug;
    let comments: Vec<Value> = ctx
        .store
        .comments
        .iter()
        .filter(|c| &c.article_slug == slug)
        .map(|c| ctx.store.comment_json(c, ctx.viewer))
        .collect();
    Ok((StatusCode::OK, json!({"comments": comments})))
}

fn add_comment(ctx: &mut Ctx<'_>, slug: &str) -> Outcome {
    let me = ctx.require_user()?;
    let idx = ctx.store.article_index(slug).ok_or_else(not_found)?;
    let body = ctx
        .payload("comment")
        .ok()
        .and_then(|c| str_field(c, "body"))
        .filter(|b| !b.trim().is_empty())
        .ok_or_else(|| unprocessable("body can't be blank"))?
        .to_string();
    let store = &mut *ctx.store;
    store.next_comment_id += 1;
    let now = store.tick();
    let comment = Comment {
        id: store.next_comment_id,
        article_slug: store.articles[idx].slug.clone(),
        author: me,
        body,
        created: now,
        updated: now,
    };
    let value = store.comment_json(&comment, Some(me));
    store.comments.push(comment);
    Ok((StatusCode::CREATED, json!({"comment": value})))
}

fn delete_comment(ctx: &mut Ctx<'_>, slug: &str, id: &str) -> Outcome {
    let me = ctx.require_user()?;
    let idx = ctx.store.article_index(slug).ok_or_else(not_found)?;
    let id: u64 = id.parse().map_err(|_| not_found())?;
    let slug = ctx.store.articles[idx].slug.clone();
    let pos = ctx
        .store
        .comments
        .iter()
        .position(|c| c.id == id && c.article_slug == slug)
        .ok_or_else(not_found)?;
    if ctx.store.comments[pos].author != me {
        return Err(error(
            StatusCode::FORBIDDEN,
            "only the author may delete this comment",
        ));
    }
    ctx.store.comments.remove(pos);
    Ok((StatusCode::OK, json!({})))
}

fn tags(ctx: &Ctx<'_>) -> Reply {
    let mut tags: Vec<&str> = Vec::new();
    for a in &ctx.store.articles {
        for t in &a.tags {
            if !tags.contains(&t.as_str()) {
                tags.push(t);
            }
        }
    }
    (StatusCode::OK, json!({"tags": tags}))
}
