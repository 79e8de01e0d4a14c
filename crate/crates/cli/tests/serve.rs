use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};

use serde_json::{json, Value};
use ssg_core::inference::GameType;
use ssg_server::game::GameConfig;

struct Serving {
    child: Child,
    base: String,
}

impl Serving {
    fn start(config: &Path) -> Self {
        let mut child = Command::new(env!("CARGO_BIN_EXE_ssg"))
            .args(["serve", "--config", config.to_str().unwrap()])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let addr = line.trim().strip_prefix("listening on ").expect("address line").to_string();
        Self {
            child,
            base: format!("http://{addr}"),
        }
    }

    fn terminate(mut self) -> Option<i32> {
        Command::new("kill").args(["-TERM", &self.child.id().to_string()]).status().unwrap();
        self.child.wait().unwrap().code()
    }
}

async fn call(base: &str, method: &str, path: &str, token: Option<&str>, body: Option<Value>) -> (u16, String) {
    let client = reqwest::Client::new();
    let url = format!("{base}{path}");
    let mut req = if method == "GET" { client.get(url) } else { client.post(url) };
    if let Some(t) = token {
        req = req.bearer_auth(t);
    }
    if let Some(b) = body {
        req = req.json(&b);
    }
    let resp = req.send().await.unwrap();
    (resp.status().as_u16(), resp.text().await.unwrap())
}

async fn token(base: &str, route: &str) -> String {
    let creds = json!({"username": "boss", "password": "pw-1234"});
    let (s, body) = call(base, "POST", route, None, Some(creds)).await;
    assert_eq!(s, 200, "{body}");
    serde_json::from_str::<Value>(&body).unwrap()["token"].as_str().unwrap().to_string()
}

fn write_config(dir: &Path, listen: &str) -> std::path::PathBuf {
    let path = dir.join("server.toml");
    let text = format!(
        "listen = \"{listen}\"\ndata_dir = \"{}\"\nadmin_users = [\"boss\"]\n",
        dir.join("data").display()
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[tokio::test]
async fn bot_session_exports_and_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "127.0.0.1:0");
    let srv = Serving::start(&config);
    let admin = token(&srv.base, "/api/register").await;
    let cfg = serde_json::to_value(GameConfig::reference("smoke", GameType::Group, "A")).unwrap();
    let (s, body) = call(&srv.base, "POST", "/api/admin/games", Some(&admin), Some(cfg)).await;
    assert_eq!(s, 200, "{body}");
    let id = serde_json::from_str::<Value>(&body).unwrap()["game_id"].as_u64().unwrap();
    call(&srv.base, "POST", &format!("/api/admin/games/{id}/enable"), Some(&admin), None).await;
    let bots = json!({"policy": "replicator(-1)", "seed": 2});
    let (s, body) = call(&srv.base, "POST", &format!("/api/admin/games/{id}/bots"), Some(&admin), Some(bots)).await;
    assert_eq!(s, 200, "{body}");
    let (s, export) = call(&srv.base, "GET", &format!("/api/admin/games/{id}/export"), Some(&admin), None).await;
    assert_eq!(s, 200);
    assert_eq!(export.lines().count(), 800);
    for line in export.lines() {
        let rec: Value = serde_json::from_str(line).unwrap();
        assert_eq!(rec["vector"].as_str().map(str::len), Some(20));
    }
    let (_, before) = call(&srv.base, "GET", &format!("/api/admin/games/{id}"), Some(&admin), None).await;
    assert_eq!(srv.terminate(), Some(0));

    let srv = Serving::start(&config);
    let admin = token(&srv.base, "/api/login").await;
    let (_, after) = call(&srv.base, "GET", &format!("/api/admin/games/{id}"), Some(&admin), None).await;
    assert_eq!(serde_json::from_str::<Value>(&after).unwrap(), serde_json::from_str::<Value>(&before).unwrap());
    let (_, again) = call(&srv.base, "GET", &format!("/api/admin/games/{id}/export"), Some(&admin), None).await;
    assert_eq!(again, export);
    srv.terminate();
}

#[test]
fn bad_config_and_busy_port() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "listen = \"127.0.0.1:0\"\nepsilon = 2.0\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ssg"))
        .args(["serve", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon"));

    std::fs::write(&path, "port = 80\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ssg"))
        .args(["serve", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("port"));

    let held = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let config = write_config(dir.path(), &held.local_addr().unwrap().to_string());
    let out = Command::new(env!("CARGO_BIN_EXE_ssg"))
        .args(["serve", "--config", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
