//! HTML for the fixture server.

use std::fmt::Write;

use super::data::{
    self, article_slug, chart_values, incidents, slug, Incident, ARTICLES, CATALOG, CHARTS, COLUMNS,
    DEPARTMENTS, DEPARTMENT_DECOYS, GROUPS, MENU, PRIORITIES, STATES,
};

const CSS: &str = "\
body{font-family:sans-serif;margin:16px;color:#222}\
label{display:block;margin-top:8px}\
input,select,textarea{font-size:14px;padding:4px;min-width:200px}\
button{font-size:14px;padding:4px 12px;margin-top:8px;cursor:pointer}\
table{border-collapse:collapse;margin-top:12px}\
td,th{border:1px solid #ccc;padding:3px 8px;text-align:left}\
[role=tab][aria-selected=true]{font-weight:bold}\
[role=option]{cursor:pointer;padding:2px 6px}\
[role=option]:hover{background:#def}\
.bar{display:inline-block;height:16px;background:#3a7bd5;vertical-align:middle}\
.row{margin:4px 0}.row .label{display:inline-block;width:120px}\
nav ul{list-style:none;padding-left:16px}";

pub fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

pub fn layout(title: &str, body: &str) -> String {
    format!(
        "<!doctype html><html lang=\"en\"><head><meta charset=\"utf-8\"><title>{}</title>\
         <style>{CSS}</style></head><body>{body}</body></html>",
        esc(title)
    )
}

fn options<'a>(values: impl IntoIterator<Item = (&'a str, &'a str)>, selected: &str) -> String {
    let mut out = String::new();
    for (value, label) in values {
        let sel = if value == selected { " selected" } else { "" };
        let _ = write!(out, "<option value=\"{}\"{sel}>{}</option>", esc(value), esc(label));
    }
    out
}

pub fn index() -> String {
    let links = [
        ("/form/0", "User form"),
        ("/list/0", "Incident list"),
        ("/menu/0", "Application menu"),
        ("/catalog/0", "Service catalog"),
        ("/kb/0", "Knowledge base"),
        ("/dashboard/0", "Dashboard"),
    ];
    let mut body = String::from("<h1>Fixture server</h1><ul>");
    for (href, label) in links {
        let _ = write!(body, "<li><a href=\"{href}\">{label}</a></li>");
    }
    body.push_str("</ul>");
    layout("Fixture server", &body)
}

pub fn not_found(path: &str) -> String {
    layout("Not found", &format!("<h1>Not found</h1><p>No page at {}</p>", esc(path)))
}

pub fn message(title: &str, text: &str, back: Option<(&str, &str)>) -> String {
    let mut body = format!("<h1>{}</h1><p role=\"status\">{}</p>", esc(title), esc(text));
    if let Some((href, label)) = back {
        let _ = write!(body, "<p><a href=\"{}\">{}</a></p>", esc(href), esc(label));
    }
    layout(title, &body)
}

// ---- user form --------------------------------------------------------------

pub fn user_form(id: &str) -> String {
    let mut suggestions: Vec<&str> = DEPARTMENTS.iter().chain(DEPARTMENT_DECOYS).copied().collect();
    suggestions.sort_unstable();
    let suggestions = serde_json::to_string(&suggestions).unwrap();
    let id = esc(id);
    let body = format!(
        r#"<h1>New user</h1>
<div role="tablist" aria-label="User sections">
<button type="button" role="tab" id="tab-personal" aria-selected="true" aria-controls="panel-personal">Personal</button>
<button type="button" role="tab" id="tab-work" aria-selected="false" aria-controls="panel-work">Work</button>
</div>
<form method="post" action="/form/{id}">
<section role="tabpanel" id="panel-personal" aria-labelledby="tab-personal">
<label for="first_name">First name</label><input id="first_name" name="first_name" autocomplete="off">
<label for="last_name">Last name</label><input id="last_name" name="last_name" autocomplete="off">
<label for="email">Email</label><input id="email" name="email" type="email" autocomplete="off">
</section>
<section role="tabpanel" id="panel-work" aria-labelledby="tab-work" hidden>
<label for="department">Department</label>
<input id="department" role="combobox" aria-autocomplete="list" aria-expanded="false" aria-controls="department-options" autocomplete="off">
<input type="hidden" id="department_value" name="department">
<ul id="department-options" role="listbox" aria-label="Department suggestions" hidden></ul>
<label for="start_date">Start date</label><input id="start_date" name="start_date" type="date">
</section>
<button type="submit">Submit</button>
</form>
<script>
for (const tab of document.querySelectorAll('[role=tab]')) {{
  tab.addEventListener('click', () => {{
    for (const other of document.querySelectorAll('[role=tab]')) {{
      const on = other === tab;
      other.setAttribute('aria-selected', String(on));
      document.getElementById(other.getAttribute('aria-controls')).hidden = !on;
    }}
  }});
}}
const SUGGESTIONS = {suggestions};
const input = document.getElementById('department');
const hidden = document.getElementById('department_value');
const list = document.getElementById('department-options');
function close() {{
  list.innerHTML = '';
  list.hidden = true;
  input.setAttribute('aria-expanded', 'false');
}}
function choose(value) {{
  input.value = value;
  hidden.value = value;
  close();
}}
input.addEventListener('input', () => {{
  hidden.value = '';
  close();
  const q = input.value.trim().toLowerCase();
  if (!q) return;
  for (const s of SUGGESTIONS) {{
    if (!s.toLowerCase().includes(q)) continue;
    const li = document.createElement('li');
    li.setAttribute('role', 'option');
    li.textContent = s;
    li.addEventListener('mousedown', (e) => e.preventDefault());
    li.addEventListener('click', () => choose(s));
    list.appendChild(li);
  }}
  list.hidden = list.children.length === 0;
  input.setAttribute('aria-expanded', String(!list.hidden));
}});
input.addEventListener('change', () => {{
  const exact = SUGGESTIONS.find((s) => s.toLowerCase() === input.value.trim().toLowerCase());
  if (exact) choose(exact);
}});
</script>"#
    );
    layout("Create user", &body)
}

// ---- incident list ----------------------------------------------------------

/// Filter and sort settings of the list widget.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Deserialize, serde::Serialize)]
#[serde(default)]
pub struct ListQuery {
    pub priority: String,
    pub state: String,
    pub assignment_group: String,
    pub sort1: String,
    pub dir1: String,
    pub sort2: String,
    pub dir2: String,
}

impl ListQuery {
    pub fn filters(&self) -> Vec<(&'static str, &str)> {
        vec![
            ("priority", self.priority.as_str()),
            ("state", self.state.as_str()),
            ("assignment_group", self.assignment_group.as_str()),
        ]
    }

    /// Active sort keys as (column key, direction).
    pub fn sort(&self) -> Vec<(&str, &str)> {
        [(&self.sort1, &self.dir1), (&self.sort2, &self.dir2)]
            .into_iter()
            .filter(|(k, _)| !k.is_empty())
            .map(|(k, d)| (k.as_str(), if d.is_empty() { "ascending" } else { d.as_str() }))
            .collect()
    }

    pub fn rows(&self) -> Vec<Incident> {
        let mut rows: Vec<Incident> = incidents()
            .into_iter()
            .filter(|r| self.filters().iter().all(|(k, v)| v.is_empty() || r.field(k) == *v))
            .collect();
        let keys = self.sort();
        rows.sort_by(|a, b| {
            keys.iter()
                .map(|(k, d)| {
                    let o = a.field(k).cmp(b.field(k));
                    if *d == "descending" {
                        o.reverse()
                    } else {
                        o
                    }
                })
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        rows
    }
}

pub fn incident_list(id: &str, q: &ListQuery) -> String {
    let any = [("", "Any")];
    let none = [("", "None")];
    let choice = |pool: &'static [&'static str]| pool.iter().map(|v| (*v, *v));
    let sortable = COLUMNS
        .iter()
        .filter(|(_, label)| data::SORTABLE.contains(label))
        .map(|(k, l)| (*k, *l));
    let dirs = || data::DIRECTIONS.iter().map(|d| (*d, *d));
    let mut body = format!("<h1>Incidents</h1><form method=\"get\" action=\"/list/{}\">", esc(id));
    let _ = write!(
        body,
        "<fieldset><legend>Filter</legend>\
         <label for=\"priority\">Priority</label><select id=\"priority\" name=\"priority\">{}</select>\
         <label for=\"state\">State</label><select id=\"state\" name=\"state\">{}</select>\
         <label for=\"assignment_group\">Assignment group</label><select id=\"assignment_group\" name=\"assignment_group\">{}</select>\
         </fieldset>",
        options(any.into_iter().chain(choice(PRIORITIES)), &q.priority),
        options(any.into_iter().chain(choice(STATES)), &q.state),
        options(any.into_iter().chain(choice(GROUPS)), &q.assignment_group),
    );
    let _ = write!(
        body,
        "<fieldset><legend>Sort</legend>\
         <label for=\"sort1\">Sort by</label><select id=\"sort1\" name=\"sort1\">{}</select>\
         <label for=\"dir1\">Sort order</label><select id=\"dir1\" name=\"dir1\">{}</select>\
         <label for=\"sort2\">Then by</label><select id=\"sort2\" name=\"sort2\">{}</select>\
         <label for=\"dir2\">Then order</label><select id=\"dir2\" name=\"dir2\">{}</select>\
         </fieldset>",
        options(none.into_iter().chain(sortable.clone()), &q.sort1),
        options(dirs(), &q.dir1),
        options(none.into_iter().chain(sortable), &q.sort2),
        options(dirs(), &q.dir2),
    );
    body.push_str("<input type=\"hidden\" name=\"applied\" value=\"1\"><button type=\"submit\">Apply</button></form>");
    let rows = q.rows();
    let _ = write!(body, "<p role=\"status\">{} incidents</p><table><thead><tr>", rows.len());
    for (_, label) in COLUMNS {
        let _ = write!(body, "<th>{label}</th>");
    }
    body.push_str("</tr></thead><tbody>");
    for r in &rows {
        body.push_str("<tr>");
        for (k, _) in COLUMNS {
            let _ = write!(body, "<td>{}</td>", esc(r.field(k)));
        }
        body.push_str("</tr>");
    }
    body.push_str("</tbody></table>");
    layout("Incidents", &body)
}

// ---- application menu -------------------------------------------------------

pub fn menu(id: &str) -> String {
    let id = esc(id);
    let mut body = String::from("<h1>Application navigator</h1><nav aria-label=\"Applications\">");
    for (app, modules) in MENU {
        let s = slug(app);
        let _ = write!(
            body,
            "<div><button type=\"button\" data-app aria-expanded=\"false\" aria-controls=\"group-{s}\">{app}</button>\
             <ul id=\"group-{s}\" hidden>"
        );
        for m in *modules {
            let _ = write!(body, "<li><a href=\"/menu/{id}/module/{s}/{}\">{m}</a></li>", slug(m));
        }
        body.push_str("</ul></div>");
    }
    body.push_str(
        "</nav><script>\
         const apps = document.querySelectorAll('[data-app]');\
         for (const b of apps) {\
           b.addEventListener('click', () => {\
             const wasOpen = b.getAttribute('aria-expanded') === 'true';\
             for (const o of apps) {\
               o.setAttribute('aria-expanded', 'false');\
               document.getElementById(o.getAttribute('aria-controls')).hidden = true;\
             }\
             if (!wasOpen) {\
               b.setAttribute('aria-expanded', 'true');\
               document.getElementById(b.getAttribute('aria-controls')).hidden = false;\
             }\
           });\
         }\
         </script>",
    );
    layout("Application navigator", &body)
}

pub fn module_page(id: &str, app: &str, module: &str) -> String {
    let body = format!(
        "<h1>{} : {}</h1><p>You are viewing the {} module of the {} application.</p>\
         <p><a href=\"/menu/{}\">Back to navigator</a></p>",
        esc(app),
        esc(module),
        esc(module),
        esc(app),
        esc(id)
    );
    layout(&format!("{app} - {module}"), &body)
}

// ---- service catalog ----------------------------------------------------------

pub fn catalog(id: &str) -> String {
    let id = esc(id);
    let mut body = String::from("<h1>Service catalog</h1><ul>");
    for item in CATALOG {
        let _ = write!(
            body,
            "<li><a href=\"/catalog/{id}/item/{}\">{}</a> {}</li>",
            slug(item.name),
            item.name,
            esc(item.description)
        );
    }
    let _ = write!(body, "</ul><p><a href=\"/catalog/{id}/cart\">View cart</a></p>");
    layout("Service catalog", &body)
}

pub fn catalog_item(id: &str, item: &data::CatalogItem) -> String {
    let id = esc(id);
    let configs = options(item.configs.iter().map(|c| (*c, *c)), item.configs[0]);
    let body = format!(
        "<h1>{name}</h1><p>{desc}</p>\
         <form method=\"post\" action=\"/catalog/{id}/cart\">\
         <input type=\"hidden\" name=\"item\" value=\"{name}\">\
         <label for=\"quantity\">Quantity</label><input id=\"quantity\" name=\"quantity\" type=\"number\" min=\"1\" max=\"20\" value=\"1\">\
         <label for=\"config\">{label}</label><select id=\"config\" name=\"config\">{configs}</select>\
         <button type=\"submit\">Add to cart</button></form>\
         <p><a href=\"/catalog/{id}\">Back to catalog</a></p>",
        name = esc(item.name),
        desc = esc(item.description),
        label = esc(item.config_label),
    );
    layout(item.name, &body)
}

pub fn cart(id: &str, lines: &[serde_json::Value]) -> String {
    let id = esc(id);
    let mut body = String::from("<h1>Shopping cart</h1>");
    if lines.is_empty() {
        body.push_str("<p role=\"status\">Your cart is empty.</p>");
    } else {
        body.push_str("<table><thead><tr><th>Item</th><th>Configuration</th><th>Quantity</th></tr></thead><tbody>");
        for l in lines {
            let _ = write!(
                body,
                "<tr><td>{}</td><td>{}</td><td>{}</td></tr>",
                esc(l["item"].as_str().unwrap_or_default()),
                esc(l["config"].as_str().unwrap_or_default()),
                l["quantity"]
            );
        }
        let _ = write!(
            body,
            "</tbody></table><form method=\"post\" action=\"/catalog/{id}/order\"><button type=\"submit\">Place order</button></form>"
        );
    }
    let _ = write!(body, "<p><a href=\"/catalog/{id}\">Continue shopping</a></p>");
    layout("Shopping cart", &body)
}

// ---- knowledge base -----------------------------------------------------------

fn article_matches(index: usize, query: &str) -> bool {
    let a = &ARTICLES[index];
    let hay = format!("{} {} {}", a.title, a.keywords, a.body.join(" ")).to_lowercase();
    query
        .split_whitespace()
        .map(str::to_lowercase)
        .any(|w| hay.contains(&w))
}

pub fn knowledge_base(id: &str, query: Option<&str>) -> String {
    let id = esc(id);
    let q = query.unwrap_or_default().trim();
    let mut body = format!(
        "<h1>Knowledge base</h1><form method=\"get\" action=\"/kb/{id}\" role=\"search\">\
         <label for=\"q\">Search knowledge base</label><input id=\"q\" name=\"q\" type=\"search\" value=\"{}\">\
         <button type=\"submit\">Search</button></form>",
        esc(q)
    );
    if q.is_empty() {
        body.push_str("<p>Enter a search term to find articles.</p>");
    } else {
        let hits: Vec<usize> = (0..ARTICLES.len()).filter(|&i| article_matches(i, q)).collect();
        let _ = write!(body, "<p role=\"status\">{} results</p><ul>", hits.len());
        for i in hits {
            let _ = write!(
                body,
                "<li><a href=\"/kb/{id}/article/{}\">{}</a></li>",
                article_slug(i),
                esc(ARTICLES[i].title)
            );
        }
        body.push_str("</ul>");
    }
    layout("Knowledge base", &body)
}

pub fn article(id: &str, index: usize) -> String {
    let a = &ARTICLES[index];
    let mut body = format!("<article><h1>{}</h1>", esc(a.title));
    for p in a.body {
        let _ = write!(body, "<p>{}</p>", esc(p));
    }
    let _ = write!(body, "</article><p><a href=\"/kb/{}\">Back to search</a></p>", esc(id));
    layout(a.title, &body)
}

// ---- dashboard ----------------------------------------------------------------

pub fn dashboard(seed: u64) -> String {
    let mut body = String::from("<h1>Operations dashboard</h1>");
    for (c, (title, unit, labels)) in CHARTS.iter().enumerate() {
        let values = chart_values(seed, c);
        let _ = write!(body, "<section aria-labelledby=\"chart-{c}\"><h2 id=\"chart-{c}\">{title}</h2>");
        for (label, value) in labels.iter().zip(&values) {
            let _ = write!(
                body,
                "<div class=\"row\"><span class=\"label\">{label}</span>\
                 <div class=\"bar\" role=\"img\" aria-label=\"{label}: {value} {unit}\" style=\"width:{}px\"></div> \
                 <span class=\"value\">{value}</span></div>",
                value * 2
            );
        }
        body.push_str("</section>");
    }
    layout("Operations dashboard", &body)
}

// ---- fixtures for the browser-level tests -------------------------------------

pub fn fixture(name: &str, id: &str) -> Option<String> {
    let page = match name {
        "blank" => "<!doctype html><html><head></head><body></body></html>".to_string(),
        "flat" => layout(
            "Flat",
            "<h1>Flat page</h1><p>Some text</p><a href=\"#top\">Top link</a>\
             <button type=\"button\">Press me</button>\
             <label for=\"name\">Name</label><input id=\"name\">\
             <select id=\"color\"><option>Red</option><option>Green</option></select>\
             <textarea aria-label=\"Notes\"></textarea>\
             <ul><li>one</li><li>two</li><li>three</li></ul>",
        ),
        "nested" => layout(
            "Nested",
            "<h1>Outer</h1><iframe src=\"/fixture/nested-inner\" title=\"inner frame\" width=\"900\" height=\"500\"></iframe>",
        ),
        "nested-inner" => {
            let mut body = String::from(
                "<script>customElements.define('x-chip', class extends HTMLElement {\
                 constructor(){super();this.attachShadow({mode:'open'}).innerHTML='<span>chip</span>';}});</script>",
            );
            for _ in 0..27 {
                body.push_str("<x-chip></x-chip>");
            }
            body.push_str("<iframe src=\"/fixture/nested-leaf\" title=\"leaf frame\" width=\"600\" height=\"300\"></iframe>");
            layout("Inner", &body)
        }
        "nested-leaf" => "<!doctype html><html><head><title>Leaf</title></head><body><main>\
             <h2>Leaf</h2><p>Deep content</p><button type=\"button\" onclick=\"this.textContent='Pressed'\">Deep button</button>\
             </main></body></html>"
            .to_string(),
        "shadow" => layout(
            "Shadow",
            "<x-card id=\"open-host\"></x-card><x-secret id=\"closed-host\"></x-secret>\
             <script>\
             customElements.define('x-card', class extends HTMLElement {constructor(){super();\
             this.attachShadow({mode:'open'}).innerHTML='<button type=\"button\">Shadow button</button><input aria-label=\"Shadow input\">';}});\
             customElements.define('x-secret', class extends HTMLElement {constructor(){super();\
             this.attachShadow({mode:'closed'}).innerHTML='<button type=\"button\">Hidden away</button>';}});\
             </script>",
        ),
        "counter" => layout(
            "Counter",
            "<button id=\"counter\" type=\"button\" style=\"position:absolute;left:0;top:0;width:40px;height:40px;margin:0\">0</button>\
             <input id=\"field\" aria-label=\"Field\" style=\"position:absolute;left:0;top:60px\">\
             <script>\
             window.keys = [];\
             document.getElementById('counter').addEventListener('click', (e) => { e.target.textContent = String(Number(e.target.textContent) + 1); });\
             document.addEventListener('keydown', (e) => window.keys.push(e.key));\
             </script>",
        ),
        "red" => "<!doctype html><html><head><title>Red</title><style>body{margin:0;background:#fff}</style></head>\
             <body><div style=\"width:100px;height:100px;background:#ff0000\"></div></body></html>"
            .to_string(),
        "tall" => layout(
            "Tall",
            "<div style=\"height:3000px;position:relative\"><button id=\"far\" type=\"button\" style=\"position:absolute;top:2000px\" \
             onclick=\"this.textContent='Reached'\">Far button</button></div>",
        ),
        "list" => {
            let mut body = String::from("<h1>Long list</h1><ul>");
            for i in 0..200 {
                let _ = write!(body, "<li>Item number {i}</li>");
            }
            body.push_str("</ul>");
            layout("List", &body)
        }
        "visibility" => layout(
            "Visibility",
            "<button id=\"shown\" type=\"button\">Shown</button>\
             <div style=\"display:none\"><button id=\"undisplayed\" type=\"button\">Undisplayed</button></div>\
             <div style=\"opacity:0\"><button id=\"transparent\" type=\"button\">Transparent</button></div>\
             <button id=\"invisible\" type=\"button\" style=\"visibility:hidden\">Invisible</button>\
             <div id=\"empty\" style=\"width:0;height:0\"></div>\
             <button id=\"offscreen\" type=\"button\" style=\"position:absolute;left:-500px;top:0\">Offscreen</button>\
             <button id=\"disabled\" type=\"button\" disabled>Disabled</button>\
             <span id=\"pointer\" style=\"cursor:pointer\">Pointer span</span>\
             <span id=\"plain\">Plain span</span>\
             <div id=\"aria\" role=\"checkbox\" aria-checked=\"false\" tabindex=\"0\">Aria checkbox</div>",
        ),
        "effects" => layout(
            "Effects",
            &format!(
                "<button id=\"alpha\" type=\"button\">Alpha</button>\
                 <a id=\"beta\" href=\"#beta-target\">Beta</a>\
                 <label><input id=\"gamma\" type=\"checkbox\"> Gamma</label>\
                 <div id=\"delta\" role=\"button\" tabindex=\"0\" style=\"cursor:pointer;display:inline-block;padding:4px\">Delta</div>\
                 <p id=\"beta-target\">Target</p>\
                 <script>\
                 const log = (target, extra) => fetch('/store/{id}', {{method: 'POST', headers: {{'content-type': 'application/json'}},\
                   body: JSON.stringify(Object.assign({{kind: 'effect', target}}, extra || {{}}))}});\
                 for (const id of ['alpha', 'beta', 'delta']) document.getElementById(id).addEventListener('click', () => log(id));\
                 document.getElementById('gamma').addEventListener('change', (e) => log('gamma', {{checked: e.target.checked}}));\
                 </script>",
                id = esc(id)
            ),
        ),
        "form" => layout(
            "Form Task",
            &format!(
                "<h1>Form</h1><form method=\"post\" action=\"/fixture/form/{id}\">\
                 <label for=\"name\">Name</label><input id=\"name\" name=\"name\">\
                 <button type=\"submit\">Submit</button></form>",
                id = esc(id)
            ),
        ),
        "popup" => layout(
            "Popup",
            "<a href=\"/fixture/blank\" target=\"_blank\">Open popup</a>",
        ),
        "select" => layout(
            "Select",
            "<label for=\"one\">Single</label><select id=\"one\"><option value=\"a\">Apple</option><option value=\"b\">Banana</option></select>\
             <label for=\"many\">Multiple</label><select id=\"many\" multiple><option>Red</option><option>Green</option><option>Blue</option></select>",
        ),
        _ => return None,
    };
    Some(page)
}
