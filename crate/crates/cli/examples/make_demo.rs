//! Regenerates the bundled demo: `cargo run -p seqshap-cli --example make_demo -- <dir>`.

use std::path::PathBuf;

use seqshap::{build_background, write_dataset, EventSchema, FeatureKind, GruWeights, SequenceMatrix};

fn noise(a: usize, b: usize, c: usize) -> f64 {
    let v = ((a * 7919 + b * 104_729 + c * 31) as f64 * 0.618_033_988_7).sin() * 43_758.545_3;
    v - v.floor()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "crates/cli/demo".into()).into();
    std::fs::create_dir_all(&dir)?;

    let schema = EventSchema {
        feature_names: vec!["amount".into(), "hour".into(), "merchant_risk".into(), "channel".into()],
        feature_kinds: vec![
            FeatureKind::Numeric,
            FeatureKind::Numeric,
            FeatureKind::Numeric,
            FeatureKind::Categorical,
        ],
        entity_key: "account".into(),
        order_key: "ts".into(),
    };

    let data: Vec<SequenceMatrix> = (0..12)
        .map(|s| {
            let l = 6 + (s * 5) % 25;
            let events: Vec<Vec<f64>> = (0..l)
                .map(|e| {
                    let amount = (noise(s, e, 0) * 3.0).exp().round() / 10.0;
                    let hour = (noise(s, e, 1) * 24.0).floor() / 24.0;
                    let risk = (noise(s, e, 2) * 100.0).round() / 100.0;
                    let channel = (noise(s, e, 3) * 3.0).floor();
                    vec![amount, hour, risk, channel]
                })
                .collect();
            SequenceMatrix::from_events(format!("acct-{s:02}"), &events)
        })
        .collect::<Result<_, _>>()?;

    write_dataset(dir.join("events.csv"), &schema, &data)?;
    std::fs::write(dir.join("schema.json"), serde_json::to_string_pretty(&schema)? + "\n")?;
    build_background(&data, &schema)?.write_json_file(dir.join("background.json"))?;
    let weights = GruWeights::random(4, 8, 2024, 1.6)?;
    std::fs::write(dir.join("gru.json"), serde_json::to_string(&weights)? + "\n")?;
    println!("demo written to {}", dir.display());
    Ok(())
}
