mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};
use trajql_workbench::api::{spawn, RunningServer};
use trajql_workbench::fixtures;
use trajql_workbench::jobs::JobManager;
use trajql_workbench::Workspace;

fn start(root: &std::path::Path) -> RunningServer {
    let ws = Workspace::open(root).unwrap();
    spawn(Arc::new(JobManager::start(Arc::new(ws), 2)), "127.0.0.1:0".parse().unwrap()).unwrap()
}

struct Api<'a> {
    server: &'a RunningServer,
    client: Client,
}

impl Api<'_> {
    fn get(&self, path: &str) -> (StatusCode, Value) {
        let r = self.client.get(self.server.url(path)).send().unwrap();
        let status = r.status();
        (status, r.json().unwrap_or(Value::Null))
    }

    fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        let r = self.client.post(self.server.url(path)).json(&body).send().unwrap();
        let status = r.status();
        (status, r.json().unwrap_or(Value::Null))
    }

    fn put(&self, path: &str, body: Value) -> (StatusCode, Value) {
        let r = self.client.put(self.server.url(path)).json(&body).send().unwrap();
        let status = r.status();
        (status, r.json().unwrap_or(Value::Null))
    }

    fn wait_job(&self, id: &str) -> Value {
        let deadline = Instant::now() + Duration::from_secs(120);
        loop {
            let (status, job) = self.get(&format!("/api/jobs/{}", id));
            assert_eq!(status, StatusCode::OK);
            if ["done", "failed", "cancelled"].contains(&job["state"].as_str().unwrap()) {
                return job;
            }
            assert!(Instant::now() < deadline, "job {} did not finish", id);
            std::thread::sleep(Duration::from_millis(20));
        }
    }
}

#[test]
fn toy_clinic_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(&dir.path().join("ws"));
    let api = Api { server: &server, client: Client::new() };

    assert_eq!(api.get("/api/health").1["status"], "ok");
    let config = common::toy_dir().join("dataset.json");
    let (status, summary) = api.post("/api/datasets", json!({ "path": config }));
    assert_eq!(status, StatusCode::CREATED, "{summary}");
    assert_eq!(summary["trajectories"], 2);
    assert_eq!(api.get("/api/datasets").1.as_array().unwrap().len(), 1);
    assert_eq!(api.get("/api/datasets/toy-clinic").1["name"], "toy-clinic");

    let (_, fields) = api.get("/api/datasets/toy-clinic/fields");
    let hr = fields.as_array().unwrap().iter().find(|f| f["name"] == "HeartRate").unwrap();
    assert_eq!((hr["kind"].as_str(), hr["dtype"].as_str(), hr["rows"].as_u64()), (Some("event"), Some("number"), Some(4)));

    let (status, err) = api.get("/api/datasets/nope/fields");
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "not_found");

    let (status, preview) = api.post(
        "/api/query/preview",
        json!({ "dataset": "toy-clinic", "query": "count {Diagnosis} from #now - 30 days to #now at every end({Admission})" }),
    );
    assert_eq!(status, StatusCode::OK);
    assert_eq!(preview["rows"], 3);
    assert_eq!(preview["profile"]["kind"], "timeseries");
    let values: Vec<f64> = preview["sample"].as_array().unwrap().iter().map(|r| r["value"].as_f64().unwrap()).collect();
    assert_eq!(values, [1.0, 0.0, 0.0]);

    let (status, err) = api.post("/api/query/preview", json!({ "dataset": "toy-clinic", "query": "count {" }));
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], "parse_error");
    assert_eq!(err["offset"], 6);

    let (status, err) = api.post("/api/query/preview", json!({ "query": 3 }));
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], "invalid_request");

    let (_, sugg) = api.post("/api/query/complete", json!({ "dataset": "toy-clinic", "source": "mean {Hea", "cursor": 9 }));
    assert_eq!(sugg[0]["label"], "HeartRate");

    let spec = serde_json::to_value(fixtures::toy_spec()).unwrap();
    let (status, created) = api.post("/api/specs", json!({ "dataset": "toy-clinic", "spec": spec }));
    assert_eq!(status, StatusCode::CREATED);
    let id = created["id"].as_str().unwrap().to_string();
    let mut edited = spec.clone();
    edited["target"] = json!("exists {Diagnosis} from #now to #now + 8 hours");
    let (status, updated) = api.put(&format!("/api/specs/{}", id), json!({ "version": 1, "spec": edited }));
    assert_eq!(status, StatusCode::OK);
    assert_eq!(updated["version"], 2);
    let (status, conflict) = api.put(&format!("/api/specs/{}", id), json!({ "version": 1, "spec": edited }));
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(conflict["code"], "conflict");
    let mut broken = spec.clone();
    broken["inputs"][0]["query"] = json!("mean {HeartRate from");
    let (status, err) = api.put(&format!("/api/specs/{}", id), json!({ "spec": broken }));
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["offset"], 5);

    let (status, dup) = api.post(&format!("/api/specs/{}/duplicate", id), json!({ "name": "toy copy" }));
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(dup["spec"]["name"], "toy copy");
    assert_eq!(dup["spec"]["target"], edited["target"]);
    let r = api.client.post(server.url(&format!("/api/specs/{}/duplicate", id))).send().unwrap();
    assert_eq!(r.status(), StatusCode::CREATED);
    let extra: Value = r.json().unwrap();
    let r = api.client.delete(server.url(&format!("/api/specs/{}", extra["id"].as_str().unwrap()))).send().unwrap();
    assert_eq!(r.status(), StatusCode::NO_CONTENT);
    assert_eq!(api.get("/api/specs?dataset=toy-clinic").1.as_array().unwrap().len(), 2);
    assert_eq!(api.get("/api/specs/spec-999").0, StatusCode::NOT_FOUND);

    let (status, job) = api.post(&format!("/api/specs/{}/train", id), json!({}));
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!(job["kind"], "train");
    // The toy target is true on one row only, so training fails cleanly.
    let job = api.wait_job(job["id"].as_str().unwrap());
    assert_eq!(job["state"], "failed", "{job}");
    assert!(job["error"].as_str().unwrap().len() > 5);

    assert_eq!(api.get("/api/cache/toy-clinic/stats").1["computed"], 2);
    assert_eq!(api.get("/api/nothing/here").0, StatusCode::NOT_FOUND);
    server.stop();
}

#[test]
fn training_mining_and_export_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("ws");
    let f = fixtures::planted_rule(2);
    let config = common::write_tables(&f.store, dir.path());
    let mut spec = serde_json::to_value(&f.spec).unwrap();
    spec["learner"] = json!({ "max_trees": 60, "patience": 10 });

    let server = start(&root);
    let api = Api { server: &server, client: Client::new() };
    assert_eq!(api.post("/api/datasets", json!({ "path": config })).0, StatusCode::CREATED);
    let (_, created) = api.post("/api/specs", json!({ "dataset": "planted-rule", "spec": spec }));
    let (_, job) = api.post(&format!("/api/specs/{}/train", created["id"].as_str().unwrap()), json!({}));
    let job = api.wait_job(job["id"].as_str().unwrap());
    assert_eq!(job["state"], "done", "{job}");
    let model = job["result"].as_str().unwrap().to_string();

    let (_, metrics) = api.get(&format!("/api/models/{}/metrics", model));
    assert_eq!(metrics["task"], "binary");
    assert!(metrics["metrics"]["val"]["auroc"].as_f64().unwrap() > 0.6);
    assert_eq!(metrics["counts"]["rows"], 5000);
    let (_, models) = api.get("/api/models?dataset=planted-rule");
    assert_eq!(models[0]["id"], model.as_str());

    let out = dir.path().join("export");
    let (status, files) = api.post(&format!("/api/models/{}/export", model), json!({ "destination": out }));
    assert_eq!(status, StatusCode::OK);
    assert_eq!(files["files"].as_array().unwrap().len(), 3);
    let csv = api.client.get(server.url(&format!("/api/models/{}/export/test", model))).send().unwrap();
    assert_eq!(csv.headers()["content-type"], "text/csv");
    assert_eq!(csv.text().unwrap(), std::fs::read_to_string(out.join("test.csv")).unwrap());
    assert_eq!(api.get(&format!("/api/models/{}/export/holdout", model)).0, StatusCode::BAD_REQUEST);

    let mine = json!({
        "model": model,
        "criteria": { "metric": { "type": "true_label" } },
        "scope": "all",
        "seed": 3,
    });
    let (status, job) = api.post("/api/subgroups/mine", mine.clone());
    assert_eq!(status, StatusCode::ACCEPTED);
    let job = api.wait_job(job["id"].as_str().unwrap());
    assert_eq!(job["state"], "done", "{job}");
    let run_id = job["result"].as_str().unwrap().to_string();
    let (_, run) = api.get(&format!("/api/subgroups/{}", run_id));
    let top = &run["reports"][0];
    let rule = top["rule"].clone();

    let (_, eval) = api.post("/api/subgroups/evaluate", json!({ "run": run_id, "rule": rule }));
    assert_eq!(eval["evaluation"], top["evaluation"]);
    let (status, edited) =
        api.post("/api/subgroups/edit", json!({ "run": run_id, "rule": rule, "edit": { "type": "drop_predicate", "index": 0 } }));
    assert_eq!(status, StatusCode::OK, "{edited}");
    assert_eq!(edited["report"]["rule"]["predicates"].as_array().unwrap().len(), rule["predicates"].as_array().unwrap().len() - 1);
    let (_, table) = api.post("/api/subgroups/distinguishing", json!({ "run": run_id, "rule": rule, "offset": 1 }));
    assert_eq!(table["offset"], 1);
    let (status, err) = api.post("/api/subgroups/distinguishing", json!({ "run": run_id, "rule": rule, "offset": 6 }));
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(err["message"].as_str().unwrap().contains('5'));

    let (status, err) = api.post(
        "/api/subgroups/mine",
        json!({ "model": model, "criteria": { "metric": { "type": "disagreement", "model": model, "other": "m-missing" } } }),
    );
    assert_eq!(status, StatusCode::ACCEPTED);
    let failed = api.wait_job(err["id"].as_str().unwrap());
    assert_eq!(failed["state"], "failed");
    assert_eq!(api.post("/api/subgroups/mine", json!({ "model": "m-none", "criteria": { "metric": { "type": "true_label" } } })).0, StatusCode::NOT_FOUND);

    let (_, specs_before) = api.get("/api/specs");
    let (_, metrics_before) = api.get(&format!("/api/models/{}/metrics", model));
    let (_, jobs_before) = api.get("/api/jobs");
    server.stop();

    let server = start(&root);
    let api = Api { server: &server, client: Client::new() };
    assert_eq!(api.get("/api/specs").1, specs_before);
    assert_eq!(api.get(&format!("/api/models/{}/metrics", model)).1, metrics_before);
    assert_eq!(api.get(&format!("/api/subgroups/{}", run_id)).1, run);
    assert_eq!(api.get("/api/jobs").1, jobs_before);
    assert_eq!(api.post("/api/subgroups/evaluate", json!({ "run": run_id, "rule": rule })).1, eval);
    server.stop();
}
