//! Two nodes served over HTTP on localhost. A client signs in, files a
//! request at one node, and the lender fills it through the other node's API.

use std::sync::Arc;

use interlend_core::clock::SystemClock;
use interlend_node::sim::{network_configs, Scenario};
use interlend_node::{http, Node};
use serde_json::{json, Value};
use tokio::net::TcpListener;

type Error = Box<dyn std::error::Error>;

struct Client {
    http: reqwest::Client,
    base: String,
    token: String,
}

impl Client {
    async fn sign_in(base: &str, user: &str) -> Result<Client, Error> {
        let http = reqwest::Client::new();
        let creds = json!({ "user": user, "secret": "sim" });
        let reply: Value = http.post(format!("{base}/auth/token")).json(&creds).send().await?.json().await?;
        let token = reply["token"].as_str().ok_or("no token")?.to_string();
        Ok(Client { http, base: base.to_string(), token })
    }

    async fn post(&self, path: &str, body: Value) -> Result<Value, Error> {
        let res = self.http.post(format!("{}{path}", self.base)).bearer_auth(&self.token).json(&body).send().await?;
        let status = res.status();
        let body: Value = res.json().await?;
        println!("POST {path} -> {status}");
        Ok(body)
    }

    async fn get(&self, path: &str) -> Result<Value, Error> {
        Ok(self.http.get(format!("{}{path}", self.base)).bearer_auth(&self.token).send().await?.json().await?)
    }
}

#[tokio::main]
async fn main() -> Result<(), Error> {
    let listeners = [TcpListener::bind("127.0.0.1:0").await?, TcpListener::bind("127.0.0.1:0").await?];
    let urls: Vec<String> = listeners.iter().map(|l| Ok(format!("http://{}", l.local_addr()?))).collect::<std::io::Result<_>>()?;

    let mut nodes = Vec::new();
    for (i, mut cfg) in network_configs(2, &Scenario::default()).into_iter().enumerate() {
        for peer in &mut cfg.peers {
            let j = if peer.id().as_str() == "N1" { 0 } else { 1 };
            peer.url = Some(urls[j].clone());
        }
        cfg.listen = urls[i].trim_start_matches("http://").to_string();
        nodes.push(Arc::new(Node::open(cfg, Arc::new(SystemClock))?));
    }
    for (listener, node) in listeners.into_iter().zip(&nodes) {
        let app = http::router(node.clone());
        tokio::spawn(async move { axum::serve(listener, app).await });
    }
    let wire = reqwest::Client::new();
    // Push outboxes until every node is quiet; a reply can trigger another.
    let pump = || async {
        loop {
            let mut sent = 0;
            for node in &nodes {
                sent += http::dispatch_once(node, &wire).await;
            }
            if sent == 0 {
                break;
            }
        }
    };

    let borrower = Client::sign_in(&urls[0], "staff@N1").await?;
    let lender = Client::sign_in(&urls[1], "staff@N2").await?;

    let created = borrower
        .post(
            "/requests",
            json!({ "openurl": "rft.genre=article&rft.atitle=Shared%20Print&rft.jtitle=Interlending%20Quarterly&rft.issn=1234-5679&rft.date=2019&rft.spage=41&rft.epage=45" }),
        )
        .await?;
    let id = created["id"].as_str().ok_or("no id")?.to_string();
    borrower.post(&format!("/requests/{id}/send"), json!({ "partner": "N2" })).await?;
    pump().await;

    let pending = lender.get("/panels/lending/pending").await?;
    println!("lender's pending panel: {pending}");
    lender.post(&format!("/requests/{id}/accept"), json!({})).await?;
    pump().await;
    let shipped = lender.post(&format!("/requests/{id}/fulfil"), json!({})).await?;
    println!("package: {}", shipped["package"]["package_id"]);
    pump().await;
    borrower.post(&format!("/requests/{id}/receive"), json!({})).await?;
    pump().await;

    let seen = borrower.get(&format!("/requests/{id}")).await?;
    println!("{id} is {} after {} events", seen["status"], seen["history"].as_array().map_or(0, Vec::len));
    let stats = borrower.get("/stats?mode=OF_DECIDED").await?;
    println!("borrower fill rate: {}, filled {}", stats["fill_rate"], stats["window"]["aggregate"]["filled"]);
    let ledger = lender.get("/ledger/report").await?;
    println!("lender ledger: {}", serde_json::to_string(&ledger["totals"])?);
    Ok(())
}
