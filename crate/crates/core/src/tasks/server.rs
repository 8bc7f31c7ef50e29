//! Embedded fixture web server and its submission store.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::{StatusCode, Uri};
use axum::response::{Html, IntoResponse, Redirect, Response};
use axum::routing::get;
use axum::{Form, Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use super::data::{self, catalog_item, slug, ARTICLES, CATALOG, MENU};
use super::pages::{self, ListQuery};

/// Submissions recorded by the fixture pages, keyed by instance id.
#[derive(Debug, Clone, Default)]
pub struct Store {
    inner: Arc<Mutex<HashMap<String, Vec<Value>>>>,
}

impl Store {
    pub fn append(&self, id: &str, event: Value) {
        self.inner.lock().unwrap().entry(id.to_string()).or_default().push(event);
    }

    pub fn events(&self, id: &str) -> Vec<Value> {
        self.inner.lock().unwrap().get(id).cloned().unwrap_or_default()
    }

    /// Latest event of a kind for an instance.
    pub fn latest(&self, id: &str, kind: &str) -> Option<Value> {
        latest(&self.events(id), kind).cloned()
    }
}

pub fn latest<'a>(events: &'a [Value], kind: &str) -> Option<&'a Value> {
    events.iter().rev().find(|e| e["kind"] == kind)
}

/// Fetch an instance's events over HTTP, as validators do.
pub async fn fetch_store(base_url: &str, id: &str) -> Result<Vec<Value>, String> {
    let url = format!("{}/store/{id}", base_url.trim_end_matches('/'));
    let resp = reqwest::get(&url).await.map_err(|e| format!("GET {url}: {e}"))?;
    let body: Value = resp.json().await.map_err(|e| format!("GET {url}: {e}"))?;
    Ok(body["events"].as_array().cloned().unwrap_or_default())
}

/// A running fixture server. Dropping it stops the server.
pub struct FixtureServer {
    addr: SocketAddr,
    store: Store,
    shutdown: Option<oneshot::Sender<()>>,
    handle: Option<JoinHandle<()>>,
}

impl FixtureServer {
    /// Serve on an ephemeral localhost port.
    pub async fn start() -> std::io::Result<Self> {
        Self::bind("127.0.0.1:0".parse().unwrap()).await
    }

    pub async fn bind(addr: SocketAddr) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let store = Store::default();
        let app = router(store.clone());
        let (tx, rx) = oneshot::channel();
        let handle = tokio::spawn(async move {
            let serve = axum::serve(listener, app).with_graceful_shutdown(async {
                let _ = rx.await;
            });
            if let Err(e) = serve.await {
                tracing::error!("fixture server stopped: {e}");
            }
        });
        tracing::info!("fixture server listening on http://{addr}");
        Ok(Self {
            addr,
            store,
            shutdown: Some(tx),
            handle: Some(handle),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// Stop accepting connections and wait for the server task.
    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(h) = self.handle.take() {
            let _ = h.await;
        }
    }

    /// Serve until the process is interrupted.
    pub async fn wait(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.await;
        }
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

pub fn router(store: Store) -> Router {
    Router::new()
        .route("/", get(|| async { Html(pages::index()) }))
        .route("/store/:id", get(get_store).post(post_store))
        .route("/form/:id", get(form_page).post(form_submit))
        .route("/form/:id/done", get(form_done))
        .route("/list/:id", get(list_page))
        .route("/menu/:id", get(|Path(id): Path<String>| async move { Html(pages::menu(&id)) }))
        .route("/menu/:id/module/:app/:module", get(module_page))
        .route("/catalog/:id", get(|Path(id): Path<String>| async move { Html(pages::catalog(&id)) }))
        .route("/catalog/:id/item/:item", get(item_page))
        .route("/catalog/:id/cart", get(cart_page).post(cart_add))
        .route("/catalog/:id/order", axum::routing::post(place_order))
        .route("/catalog/:id/ordered", get(ordered_page))
        .route("/kb/:id", get(kb_page))
        .route("/kb/:id/article/:slug", get(article_page))
        .route("/dashboard/:id", get(dashboard_page))
        .route("/fixture/:name", get(fixture_page))
        .route("/fixture/:name/:id", get(fixture_page_with_id).post(form_submit_fixture))
        .fallback(|uri: Uri| async move { (StatusCode::NOT_FOUND, Html(pages::not_found(uri.path()))) })
        .with_state(store)
}

fn not_found(what: &str) -> Response {
    (StatusCode::NOT_FOUND, Html(pages::not_found(what))).into_response()
}

async fn get_store(State(store): State<Store>, Path(id): Path<String>) -> Json<Value> {
    Json(json!({ "id": id, "events": store.events(&id) }))
}

async fn post_store(State(store): State<Store>, Path(id): Path<String>, Json(event): Json<Value>) -> StatusCode {
    if !event.is_object() {
        return StatusCode::BAD_REQUEST;
    }
    store.append(&id, event);
    StatusCode::NO_CONTENT
}

async fn form_page(Path(id): Path<String>) -> Html<String> {
    Html(pages::user_form(&id))
}

fn record_form(store: &Store, id: &str, fields: HashMap<String, String>) {
    let fields: serde_json::Map<String, Value> = fields
        .into_iter()
        .map(|(k, v)| (k, Value::String(v.trim().to_string())))
        .collect();
    store.append(id, json!({ "kind": "form_submit", "fields": fields }));
}

async fn form_submit(
    State(store): State<Store>,
    Path(id): Path<String>,
    Form(fields): Form<HashMap<String, String>>,
) -> Redirect {
    record_form(&store, &id, fields);
    Redirect::to(&format!("/form/{id}/done"))
}

async fn form_done(Path(id): Path<String>) -> Html<String> {
    Html(pages::message(
        "User created",
        "The user record was saved.",
        Some((&format!("/form/{id}"), "Create another user")),
    ))
}

async fn list_page(
    State(store): State<Store>,
    Path(id): Path<String>,
    Query(raw): Query<HashMap<String, String>>,
) -> Html<String> {
    let q: ListQuery = serde_json::to_value(&raw)
        .and_then(serde_json::from_value)
        .unwrap_or_default();
    if raw.contains_key("applied") {
        let rows: Vec<String> = q.rows().iter().map(|r| r.number.clone()).collect();
        let filters: serde_json::Map<String, Value> = q
            .filters()
            .into_iter()
            .map(|(k, v)| (k.to_string(), Value::String(v.to_string())))
            .collect();
        let sort: Vec<Value> = q
            .sort()
            .into_iter()
            .map(|(f, d)| json!({ "field": f, "direction": d }))
            .collect();
        store.append(&id, json!({ "kind": "list_state", "filters": filters, "sort": sort, "rows": rows }));
    }
    Html(pages::incident_list(&id, &q))
}

async fn module_page(
    State(store): State<Store>,
    Path((id, app, module)): Path<(String, String, String)>,
) -> Response {
    let found = MENU.iter().find(|(a, _)| slug(a) == app).and_then(|(a, mods)| {
        mods.iter().find(|m| slug(m) == module).map(|m| (*a, *m))
    });
    let Some((app, module)) = found else {
        return not_found("menu module");
    };
    store.append(&id, json!({ "kind": "menu_visit", "app": app, "module": module }));
    Html(pages::module_page(&id, app, module)).into_response()
}

async fn item_page(Path((id, item)): Path<(String, String)>) -> Response {
    match CATALOG.iter().find(|c| slug(c.name) == item) {
        Some(c) => Html(pages::catalog_item(&id, c)).into_response(),
        None => not_found("catalog item"),
    }
}

/// Cart lines added since the last order.
fn cart_lines(store: &Store, id: &str) -> Vec<Value> {
    let events = store.events(id);
    let start = events.iter().rposition(|e| e["kind"] == "order").map_or(0, |i| i + 1);
    events[start..]
        .iter()
        .filter(|e| e["kind"] == "cart_add")
        .map(|e| json!({ "item": e["item"], "quantity": e["quantity"], "config": e["config"] }))
        .collect()
}

async fn cart_page(State(store): State<Store>, Path(id): Path<String>) -> Html<String> {
    Html(pages::cart(&id, &cart_lines(&store, &id)))
}

#[derive(Deserialize)]
struct CartForm {
    item: String,
    quantity: String,
    config: String,
}

async fn cart_add(State(store): State<Store>, Path(id): Path<String>, Form(f): Form<CartForm>) -> Response {
    let Some(item) = catalog_item(&f.item) else {
        return not_found("catalog item");
    };
    let quantity = match f.quantity.trim().parse::<u32>() {
        Ok(q) if q >= 1 => q,
        _ => {
            let back = format!("/catalog/{id}/item/{}", slug(item.name));
            let page = pages::message("Invalid quantity", "Quantity must be a positive whole number.", Some((&back, "Back to item")));
            return (StatusCode::BAD_REQUEST, Html(page)).into_response();
        }
    };
    if !item.configs.contains(&f.config.as_str()) {
        return (StatusCode::BAD_REQUEST, Html(pages::message("Invalid configuration", &f.config, None))).into_response();
    }
    store.append(
        &id,
        json!({ "kind": "cart_add", "item": item.name, "quantity": quantity, "config": f.config }),
    );
    Redirect::to(&format!("/catalog/{id}/cart")).into_response()
}

async fn place_order(State(store): State<Store>, Path(id): Path<String>) -> Redirect {
    let lines = cart_lines(&store, &id);
    if lines.is_empty() {
        return Redirect::to(&format!("/catalog/{id}/cart"));
    }
    store.append(&id, json!({ "kind": "order", "lines": lines }));
    Redirect::to(&format!("/catalog/{id}/ordered"))
}

async fn ordered_page(Path(id): Path<String>) -> Html<String> {
    Html(pages::message(
        "Order placed",
        "Your request has been submitted.",
        Some((&format!("/catalog/{id}"), "Back to catalog")),
    ))
}

#[derive(Deserialize)]
struct SearchQuery {
    q: Option<String>,
}

async fn kb_page(Path(id): Path<String>, Query(q): Query<SearchQuery>) -> Html<String> {
    Html(pages::knowledge_base(&id, q.q.as_deref()))
}

async fn article_page(Path((id, s)): Path<(String, String)>) -> Response {
    match (0..ARTICLES.len()).find(|&i| data::article_slug(i) == s) {
        Some(i) => Html(pages::article(&id, i)).into_response(),
        None => not_found("article"),
    }
}

/// Leading decimal digits of an instance id select the seeded content.
pub fn seed_of(id: &str) -> u64 {
    let digits: String = id.chars().take_while(char::is_ascii_digit).collect();
    digits.parse().unwrap_or(0)
}

async fn dashboard_page(Path(id): Path<String>) -> Html<String> {
    Html(pages::dashboard(seed_of(&id)))
}

async fn fixture_page(Path(name): Path<String>) -> Response {
    fixture_response(&name, "0")
}

async fn fixture_page_with_id(Path((name, id)): Path<(String, String)>) -> Response {
    fixture_response(&name, &id)
}

fn fixture_response(name: &str, id: &str) -> Response {
    match pages::fixture(name, id) {
        Some(html) => Html(html).into_response(),
        None => not_found(name),
    }
}

async fn form_submit_fixture(
    State(store): State<Store>,
    Path((name, id)): Path<(String, String)>,
    Form(fields): Form<HashMap<String, String>>,
) -> Response {
    if name != "form" {
        return not_found(&name);
    }
    record_form(&store, &id, fields);
    Html(pages::message("Submitted", "Thank you.", None)).into_response()
}
