//! Generates the toy dataset, trains on it and prints the retrieval report.
//!
//! cargo run --release --example toy_pipeline -- [epochs] [seed]

use std::time::Instant;

use evlink::ingest::{generate_toy_dataset, ToyConfig};
use evlink::par::Exec;
use evlink::retrieval::{build_index, evaluate, QueryMode};
use evlink::train::{fit, Pool, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let mut cfg = TrainConfig::toy();
    if let Some(e) = args.get(1) {
        cfg.max_epochs = e.parse()?;
    }
    if let Some(s) = args.get(2) {
        cfg.seed = s.parse()?;
    }
    let exec = Exec::default();
    let dir = tempfile::tempdir()?;
    let manifest = generate_toy_dataset(&ToyConfig::new(10, 3, 7), dir.path(), exec)?;
    let pool = Pool::from_manifest(&manifest, &cfg, exec)?;
    let start = Instant::now();
    let ck = fit(&pool, &cfg, exec, |m| {
        println!(
            "epoch {:3} steps {} L_id {:.4} L_ct {:.4} L_dis {:.4} L {:.4}",
            m.epoch, m.steps, m.l_id, m.l_ct, m.l_dis, m.total
        )
    })?;
    println!("trained in {:.1}s", start.elapsed().as_secs_f64());
    let index = build_index(&manifest, &ck.model, exec)?;
    let report = evaluate(&index, &manifest, &ck.model, &ck.config, QueryMode::FirstBin, exec)?;
    println!("{}", report.to_json());
    Ok(())
}
