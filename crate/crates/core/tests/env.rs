mod common;

use async_trait::async_trait;
use tokio::sync::SemaphorePermit;
use webgym_core::actions::{build_catalog, ActionSet};
use webgym_core::chat::{Chat, ChatRole};
use webgym_core::driver::{NavCommand, Session};
use webgym_core::env::{Budgets, Env, EnvConfig, EnvError, Task, TaskError, TraceRecord, TraceWriter, Validation};
use webgym_core::observation::{CharEstimator, TokenEstimator, TRUNCATION_MARKER};
use webgym_core::tasks::{self, FixtureServer};

/// Opens a page; succeeds once the agent says "finished".
struct PageTask {
    url: String,
}

#[async_trait]
impl Task for PageTask {
    fn name(&self) -> &str {
        "page"
    }

    fn seed(&self) -> u64 {
        0
    }

    async fn setup(&mut self, session: &mut Session, _chat: &Chat) -> Result<String, TaskError> {
        session
            .navigate(NavCommand::Goto(self.url.clone()))
            .await
            .map_err(|e| TaskError::Setup(e.to_string()))?;
        Ok(format!("Look at {}", self.url))
    }

    async fn validate(&self, _session: &mut Session, chat: &Chat) -> Validation {
        if chat.last_agent_message().as_deref() == Some("finished") {
            Validation::success()
        } else {
            Validation::pending()
        }
    }

    async fn teardown(&mut self, _session: &mut Session) -> Result<(), TaskError> {
        Ok(())
    }
}

async fn env_with(config: EnvConfig) -> (Env, SemaphorePermit<'static>) {
    let slot = common::slot().await;
    let session = Session::launch(Default::default()).await.unwrap();
    (Env::new(session, build_catalog(ActionSet::BidCoord, true), config), slot)
}

#[tokio::test]
async fn reset_delivers_the_goal_through_the_chat() {
    require_browser!();
    let server = FixtureServer::start().await.unwrap();
    let (mut env, _b) = env_with(EnvConfig::default()).await;
    let task = tasks::instantiate("create-user-form", 3).unwrap().with_base_url(server.base_url());
    let params = task.params.clone();
    let obs = env.reset(Box::new(task)).await.unwrap();
    assert_eq!(obs.chat.len(), 1);
    assert_eq!(obs.chat[0].role, ChatRole::User);
    for value in params.values() {
        assert!(obs.chat[0].text.contains(value.as_str()), "goal lacks {value:?}");
    }
    let url = &obs.open_pages[obs.active_page];
    assert!(url.starts_with(&format!("{}/form/3-", server.base_url())), "{url}");

    let again = tasks::instantiate("create-user-form", 3).unwrap().with_base_url(server.base_url());
    let obs2 = env.reset(Box::new(again)).await.unwrap();
    assert_eq!(obs2.goal(), obs.goal());
}

#[tokio::test]
async fn setup_failure_names_the_url() {
    require_browser!();
    let closed = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", closed.local_addr().unwrap());
    drop(closed);
    let (mut env, _b) = env_with(EnvConfig::default()).await;
    let task = tasks::instantiate("navigate-menu", 0).unwrap().with_base_url(&base);
    match env.reset(Box::new(task)).await {
        Err(EnvError::Setup(msg)) => assert!(msg.contains(&base), "{msg}"),
        other => panic!("expected a setup error, got {:?}", other.map(|o| o.goal().to_string())),
    }
}

#[tokio::test]
async fn stepping_protocol() {
    require_browser!();
    let server = FixtureServer::start().await.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (env, _b) = env_with(EnvConfig::default()).await;
    let trace = TraceWriter::create(dir.path().join("t.jsonl")).unwrap();
    let mut env = env.with_trace(trace);
    env.reset(Box::new(PageTask {
        url: server.base_url() + "/fixture/flat",
    }))
    .await
    .unwrap();

    let out = env.step("noop()").await.unwrap();
    assert_eq!((out.reward, out.done, out.info.step), (0.0, false, 1));
    assert_eq!(out.observation.last_action_error, None);

    let out = env.step("garbage(((").await.unwrap();
    assert!(!out.done);
    assert!(!out.observation.last_action_error.clone().unwrap_or_default().is_empty());
    assert_eq!(out.info.step, 2);

    // Validation is pure: asking twice gives the same answer.
    assert_eq!(env.validate().await.unwrap(), env.validate().await.unwrap());

    let out = env.step("send_msg_to_user(\"working\")").await.unwrap();
    assert!(!out.done);
    let out = env.step("send_msg_to_user(\"finished\")").await.unwrap();
    assert_eq!((out.reward, out.done, out.info.step), (1.0, true, 4));
    assert!(matches!(env.step("noop()").await, Err(EnvError::EpisodeDone)));

    // Every agent message comes from exactly one executed send_msg_to_user.
    let agent: Vec<String> = env.chat().messages().into_iter().filter(|m| m.role == ChatRole::Agent).map(|m| m.text).collect();
    assert_eq!(agent, ["working", "finished"]);

    let records: Vec<TraceRecord> = std::fs::read_to_string(dir.path().join("t.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(matches!(records[0], TraceRecord::Reset { .. }));
    let steps: Vec<u64> = records
        .iter()
        .filter_map(|r| match r {
            TraceRecord::Step { step, .. } => Some(*step),
            _ => None,
        })
        .collect();
    assert_eq!(steps, [1, 2, 3, 4]);
    match &records[4] {
        TraceRecord::Step { action, reward, done, chat_delta, .. } => {
            assert_eq!(action, "send_msg_to_user(\"finished\")");
            assert_eq!((*reward, *done), (1.0, true));
            assert_eq!(chat_delta.len(), 1);
        }
        other => panic!("{other:?}"),
    }
}

#[tokio::test]
async fn axtree_budgets() {
    require_browser!();
    let server = FixtureServer::start().await.unwrap();
    let (mut env, _b) = env_with(EnvConfig {
        budgets: Budgets {
            axtree: Some(8000),
            dom: None,
        },
        ..EnvConfig::default()
    })
    .await;
    let obs = env
        .reset(Box::new(PageTask {
            url: server.base_url() + "/fixture/form/x",
        }))
        .await
        .unwrap();
    assert!(!obs.axtree_text.contains(TRUNCATION_MARKER));

    env.set_config(EnvConfig {
        budgets: Budgets {
            axtree: Some(50),
            dom: Some(50),
        },
        include_dom: true,
        ..EnvConfig::default()
    });
    let obs = env
        .reset(Box::new(PageTask {
            url: server.base_url() + "/fixture/list",
        }))
        .await
        .unwrap();
    assert!(obs.axtree_text.ends_with(TRUNCATION_MARKER));
    assert!(CharEstimator.estimate(&obs.axtree_text) <= 50);
    assert!(CharEstimator.estimate(obs.dom_text.as_deref().unwrap()) <= 50);
}

#[tokio::test]
async fn focused_element_follows_clicks() {
    require_browser!();
    let server = FixtureServer::start().await.unwrap();
    let (mut env, _b) = env_with(EnvConfig::default()).await;
    let obs = env
        .reset(Box::new(PageTask {
            url: server.base_url() + "/fixture/form/x",
        }))
        .await
        .unwrap();
    let input = common::bid_by_id(obs.dom.as_ref().unwrap(), "name");
    assert_ne!(obs.focused_bid.as_ref(), Some(&input));
    let out = env.step(&format!("click(\"{input}\")")).await.unwrap();
    assert_eq!(out.observation.focused_bid, Some(input));
}

#[tokio::test]
async fn screenshots_and_marks_are_optional_channels() {
    require_browser!();
    let server = FixtureServer::start().await.unwrap();
    let (mut env, _b) = env_with(EnvConfig::default()).await;
    let url = server.base_url() + "/fixture/effects/x";
    let obs = env.reset(Box::new(PageTask { url: url.clone() })).await.unwrap();
    assert!(obs.screenshot.is_none() && obs.dom_text.is_none());

    env.set_config(EnvConfig {
        screenshot: true,
        ..EnvConfig::default()
    });
    let plain = env.observe().await.unwrap().screenshot.unwrap();
    env.set_config(EnvConfig {
        screenshot: true,
        som: true,
        ..EnvConfig::default()
    });
    let marked = env.observe().await.unwrap().screenshot.unwrap();
    assert_eq!(plain.dimensions(), (1280, 720));
    assert_eq!(marked.dimensions(), plain.dimensions());
    assert_ne!(marked, plain);
}
