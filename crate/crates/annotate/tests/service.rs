use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::mpsc;
use std::thread::JoinHandle;

use hesitancy_annotate::{ServeConfig, ServeError, Server};
use hesitancy_core::cluster::ClusterModel;
use hesitancy_core::ingest::CleanPost;
use hesitancy_core::labels::{AnnotationStore, LabelTaxonomy, NONE_LABEL};
use serde_json::{json, Value};
use tokio::sync::oneshot;

fn post(id: &str, text: &str) -> CleanPost {
    CleanPost {
        id: id.into(),
        author_id: format!("u{id}"),
        dataset_tag: "spring".into(),
        normalized_text: text.into(),
        tokens: text.split(' ').map(String::from).collect(),
        hashtags: vec![],
        char_len: text.chars().count(),
        is_retweet: false,
    }
}

fn corpus() -> (ClusterModel, Vec<CleanPost>) {
    let posts: Vec<CleanPost> = (0..30)
        .map(|i| post(&format!("p{i:02}"), &format!("text number {i}")))
        .collect();
    let assignments: BTreeMap<String, usize> = posts
        .iter()
        .enumerate()
        .map(|(i, p)| (p.id.clone(), usize::from(i >= 20)))
        .collect();
    let model = ClusterModel {
        k: 2,
        centroids: vec![vec![0.0], vec![1.0]],
        assignments,
        inertia: 3.5,
        iterations_run: 2,
        seed: 7,
    };
    (model, posts)
}

fn config(store: &Path) -> ServeConfig {
    let (model, posts) = corpus();
    ServeConfig {
        model,
        posts,
        dataset_tag: "spring".into(),
        taxonomy: LabelTaxonomy::bundled(),
        store_path: store.to_path_buf(),
        addr: "127.0.0.1:0".parse().unwrap(),
    }
}

struct Running {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl Running {
    fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }
}

impl Drop for Running {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn start(cfg: ServeConfig) -> Result<Running, ServeError> {
    let (ready_tx, ready_rx) = mpsc::channel();
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            match Server::bind(cfg).await {
                Ok(server) => {
                    ready_tx.send(Ok(server.local_addr().unwrap())).unwrap();
                    server
                        .run(async {
                            let _ = stop_rx.await;
                        })
                        .await
                        .unwrap();
                }
                Err(e) => ready_tx.send(Err(e)).unwrap(),
            }
        });
    });
    match ready_rx.recv().unwrap() {
        Ok(addr) => Ok(Running {
            addr,
            stop: Some(stop_tx),
            thread: Some(thread),
        }),
        Err(e) => {
            thread.join().unwrap();
            Err(e)
        }
    }
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into()
}

fn get(agent: &ureq::Agent, url: &str) -> (u16, Value) {
    let mut resp = agent.get(url).call().unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_json().unwrap())
}

fn post_json(agent: &ureq::Agent, url: &str, body: &Value) -> (u16, Value) {
    let mut resp = agent.post(url).send_json(body).unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_json().unwrap())
}

#[test]
fn health_and_cluster_overview() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(config(&dir.path().join("log.jsonl"))).unwrap();
    let a = agent();

    let (status, body) = get(&a, &srv.url("/health"));
    assert_eq!(status, 200);
    assert_eq!(body["status"], "ok");

    let (status, body) = get(&a, &srv.url("/v1/clusters"));
    assert_eq!(status, 200);
    assert_eq!(body["k"], 2);
    assert_eq!(body["sizes"], json!([20, 10]));
    assert_eq!(body["dataset"], "spring");
}

#[test]
fn sample_is_seeded_and_scoped_to_the_cluster() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(config(&dir.path().join("log.jsonl"))).unwrap();
    let a = agent();

    let (status, first) = get(&a, &srv.url("/v1/clusters/0/sample?n=5&seed=11"));
    assert_eq!(status, 200);
    let (_, again) = get(&a, &srv.url("/v1/clusters/0/sample?n=5&seed=11"));
    assert_eq!(first, again);
    let posts = first["posts"].as_array().unwrap();
    assert_eq!(posts.len(), 5);
    for p in posts {
        let id = p["post_id"].as_str().unwrap();
        let n: usize = id[1..].parse().unwrap();
        assert!(n < 20, "{id} is not in cluster 0");
        assert_eq!(p["text"], format!("text number {n}"));
    }

    // asking for more than the cluster holds returns the whole cluster
    let (_, all) = get(&a, &srv.url("/v1/clusters/1/sample?n=100&seed=1"));
    assert_eq!(all["posts"].as_array().unwrap().len(), 10);

    let (status, body) = get(&a, &srv.url("/v1/clusters/2/sample"));
    assert_eq!(status, 404);
    assert!(body["error"].as_str().unwrap().contains("out of range"));
}

#[test]
fn post_lookup() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(config(&dir.path().join("log.jsonl"))).unwrap();
    let a = agent();

    let (status, body) = get(&a, &srv.url("/v1/posts/p25"));
    assert_eq!(status, 200);
    assert_eq!(body["id"], "p25");
    assert_eq!(body["cluster"], 1);
    assert_eq!(body["normalized_text"], "text number 25");

    let (status, _) = get(&a, &srv.url("/v1/posts/nope"));
    assert_eq!(status, 404);
}

#[test]
fn submissions_validate_and_feed_prevalence() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.jsonl");
    let srv = start(config(&log)).unwrap();
    let a = agent();
    let url = srv.url("/v1/annotations");

    let (status, body) = post_json(
        &a,
        &url,
        &json!({"post_id": "p01", "cluster": 0, "label": "blatantly refuse", "annotator": "r1"}),
    );
    assert_eq!(status, 201);
    assert_eq!(body["seq"], 0);
    assert_eq!(body["dataset_tag"], "spring");

    let (status, _) = post_json(
        &a,
        &url,
        &json!({"post_id": "p02", "cluster": 0, "label": NONE_LABEL, "annotator": "r1"}),
    );
    assert_eq!(status, 201);

    let (status, body) = post_json(
        &a,
        &url,
        &json!({"post_id": "p03", "cluster": 0, "label": "vaccines cause magnetism", "annotator": "r1"}),
    );
    assert_eq!(status, 422);
    assert!(body["error"].as_str().unwrap().contains("unknown label"));

    let (status, _) = post_json(
        &a,
        &url,
        &json!({"post_id": "ghost", "cluster": 0, "label": "blatantly refuse", "annotator": "r1"}),
    );
    assert_eq!(status, 422);

    let (status, _) = post_json(
        &a,
        &url,
        &json!({"post_id": "p03", "cluster": 9, "label": "blatantly refuse", "annotator": "r1"}),
    );
    assert_eq!(status, 422);

    let (status, table) = get(&a, &srv.url("/v1/prevalence?dataset=spring"));
    assert_eq!(status, 200);
    assert_eq!(table["total_positive"], 1);
    assert_eq!(table["total_sampled"], 2);
    let refuse = table["rows"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["label"] == "blatantly refuse")
        .unwrap();
    assert_eq!(refuse["count"], 1);

    drop(srv);
    let store = AnnotationStore::open(&log, LabelTaxonomy::bundled()).unwrap();
    assert_eq!(store.record_count(), 2);
}

#[test]
fn taxonomy_lists_sentinel_last() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(config(&dir.path().join("log.jsonl"))).unwrap();
    let (status, body) = get(&agent(), &srv.url("/v1/taxonomy"));
    assert_eq!(status, 200);
    let labels = body["labels"].as_array().unwrap();
    assert_eq!(labels.len(), 8);
    assert_eq!(labels.last().unwrap(), NONE_LABEL);
    assert_eq!(body["sentinel"], NONE_LABEL);
}

#[test]
fn labels_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.jsonl");
    let a = agent();
    {
        let srv = start(config(&log)).unwrap();
        for i in 0..5 {
            let (status, _) = post_json(
                &a,
                &srv.url("/v1/annotations"),
                &json!({"post_id": format!("p{i:02}"), "cluster": 0, "label": "blatantly refuse", "annotator": "r1"}),
            );
            assert_eq!(status, 201);
        }
    }
    let srv = start(config(&log)).unwrap();
    let (_, table) = get(&a, &srv.url("/v1/prevalence"));
    assert_eq!(table["total_sampled"], 5);
}

#[test]
fn refuses_ids_missing_from_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(&dir.path().join("log.jsonl"));
    cfg.posts.retain(|p| p.id != "p07" && p.id != "p08");
    match start(cfg) {
        Err(ServeError::MismatchedIds { missing, first }) => {
            assert_eq!(missing, 2);
            assert_eq!(first, "p07");
        }
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("server started with missing ids"),
    }
}

#[test]
fn refuses_unwritable_store() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir.path().join("no/such/dir/log.jsonl"));
    assert!(matches!(start(cfg), Err(ServeError::Store(_))));
}

#[test]
fn refuses_busy_port() {
    let dir = tempfile::tempdir().unwrap();
    let held = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let mut cfg = config(&dir.path().join("log.jsonl"));
    cfg.addr = held.local_addr().unwrap();
    assert!(matches!(start(cfg), Err(ServeError::Bind { .. })));
}
