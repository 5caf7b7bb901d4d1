use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};
use seqshap::{
    connect_protocol_model, score_batch, shapley_explain, Axis, BackgroundMatrix, Concurrency, Endpoint, Error,
    FnScorer, ModelError, ProtocolConfig, SamplerConfig, SequenceMatrix, SequenceScorer,
};

fn quick() -> ProtocolConfig {
    ProtocolConfig {
        handshake_timeout: Duration::from_millis(500),
        response_timeout: Some(Duration::from_secs(20)),
    }
}

/// Sum of the last event's features, the same rule the shell adapters use.
fn last_sum(seq: &Value) -> f64 {
    seq.as_array().unwrap().last().unwrap().as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum()
}

/// Serves one connection: sends `hello`, then hands each parsed request to `reply`
/// together with the writer.
fn fake_adapter<F>(hello: Value, mut reply: F) -> String
where
    F: FnMut(&Value, &mut TcpStream) + Send + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    thread::spawn(move || {
        let (mut stream, _) = listener.accept().unwrap();
        if !hello.is_null() {
            writeln!(stream, "{hello}").unwrap();
        }
        let reader = BufReader::new(stream.try_clone().unwrap());
        for line in reader.lines() {
            let Ok(line) = line else { break };
            let req: Value = serde_json::from_str(&line).unwrap();
            reply(&req, &mut stream);
        }
    });
    addr
}

fn answer(req: &Value, out: &mut TcpStream) {
    let scores: Vec<f64> = req["batch"].as_array().unwrap().iter().map(last_sum).collect();
    writeln!(out, "{}", json!({"type": "scores", "id": req["id"], "scores": scores})).unwrap();
}

fn seq(id: &str, events: &[[f64; 2]]) -> SequenceMatrix {
    SequenceMatrix::from_events(id, &events.iter().map(|e| e.to_vec()).collect::<Vec<_>>()).unwrap()
}

#[test]
fn tcp_round_trip() {
    let addr = fake_adapter(json!({"type":"hello","protocol":1,"concurrency":"serial"}), answer);
    let scorer = connect_protocol_model(&Endpoint::Tcp(addr), quick()).unwrap();
    assert_eq!(scorer.concurrency(), Concurrency::Serial);
    let batch = [seq("a", &[[1.0, 2.0], [0.25, 0.5]]), seq("b", &[[3.0, -1.0]])];
    assert_eq!(score_batch(&scorer, &batch).unwrap(), vec![0.75, 2.0]);
    // ids keep increasing across requests
    assert_eq!(score_batch(&scorer, &batch[..1]).unwrap(), vec![0.75]);
}

#[test]
fn request_wire_format() {
    let (tx, rx) = std::sync::mpsc::channel();
    let addr = fake_adapter(json!({"type":"hello","protocol":1}), move |req, out| {
        tx.send(req.clone()).unwrap();
        answer(req, out);
    });
    let scorer = connect_protocol_model(&Endpoint::Tcp(addr), quick()).unwrap();
    score_batch(&scorer, &[seq("a", &[[0.5, 1.5], [2.0, 3.0]])]).unwrap();
    score_batch(&scorer, &[seq("a", &[[0.5, 1.5]])]).unwrap();
    let first = rx.recv().unwrap();
    let second = rx.recv().unwrap();
    assert_eq!(first["type"], "score");
    assert_eq!(first["batch"], json!([[[0.5, 1.5], [2.0, 3.0]]]));
    assert!(second["id"].as_u64().unwrap() > first["id"].as_u64().unwrap());
}

#[test]
fn version_mismatch_is_rejected() {
    let addr = fake_adapter(json!({"type":"hello","protocol":99,"concurrency":"serial"}), answer);
    match connect_protocol_model(&Endpoint::Tcp(addr), quick()) {
        Err(Error::Model(ModelError::VersionMismatch { expected: 1, offered: 99 })) => {}
        Err(other) => panic!("unexpected error {other}"),
        Ok(_) => panic!("version 99 accepted"),
    }
}

#[test]
fn silent_adapter_times_out() {
    let addr = fake_adapter(Value::Null, answer);
    match connect_protocol_model(&Endpoint::Tcp(addr), quick()) {
        Err(Error::Model(ModelError::HandshakeTimeout(_))) => {}
        Err(other) => panic!("unexpected error {other}"),
        Ok(_) => panic!("connected without hello"),
    }
}

#[test]
fn mismatched_id_fails_the_request_and_the_connection() {
    let addr = fake_adapter(json!({"type":"hello","protocol":1}), |req, out| {
        let wrong = req["id"].as_u64().unwrap() + 1;
        writeln!(out, "{}", json!({"type":"scores","id":wrong,"scores":[0.0]})).unwrap();
    });
    let scorer = connect_protocol_model(&Endpoint::Tcp(addr), quick()).unwrap();
    let x = [seq("a", &[[1.0, 1.0]])];
    let err = score_batch(&scorer, &x).unwrap_err();
    assert!(matches!(err, Error::Model(ModelError::MalformedResponse { .. })), "{err}");
    assert!(err.is_model_failure());
    let again = score_batch(&scorer, &x).unwrap_err();
    assert!(matches!(again, Error::Model(ModelError::Transport(_))), "{again}");
}

#[test]
fn garbage_line_is_malformed() {
    let addr = fake_adapter(json!({"type":"hello","protocol":1}), |_, out| {
        writeln!(out, "not json").unwrap();
    });
    let scorer = connect_protocol_model(&Endpoint::Tcp(addr), quick()).unwrap();
    let err = score_batch(&scorer, &[seq("a", &[[1.0, 1.0]])]).unwrap_err();
    assert!(matches!(err, Error::Model(ModelError::MalformedResponse { .. })), "{err}");
}

#[test]
fn remote_error_is_reported() {
    let addr = fake_adapter(json!({"type":"hello","protocol":1}), |req, out| {
        writeln!(out, "{}", json!({"type":"error","id":req["id"],"message":"model exploded"})).unwrap();
    });
    let scorer = connect_protocol_model(&Endpoint::Tcp(addr), quick()).unwrap();
    match score_batch(&scorer, &[seq("a", &[[1.0, 1.0]])]) {
        Err(Error::Model(ModelError::Remote { message, .. })) => assert_eq!(message, "model exploded"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn wrong_score_count_is_rejected() {
    let addr = fake_adapter(json!({"type":"hello","protocol":1}), |req, out| {
        writeln!(out, "{}", json!({"type":"scores","id":req["id"],"scores":[1.0, 2.0, 3.0]})).unwrap();
    });
    let scorer = connect_protocol_model(&Endpoint::Tcp(addr), quick()).unwrap();
    let err = score_batch(&scorer, &[seq("a", &[[1.0, 1.0]])]).unwrap_err();
    assert!(matches!(err, Error::Model(ModelError::BatchSize { expected: 1, got: 3 })), "{err}");
}

#[test]
fn concurrent_adapter_may_answer_out_of_order() {
    // holds the first request until the second arrives, then answers both in reverse
    let mut held: Option<Value> = None;
    let addr = fake_adapter(json!({"type":"hello","protocol":1,"concurrency":"concurrent"}), move |req, out| {
        match held.take() {
            None => held = Some(req.clone()),
            Some(first) => {
                answer(req, out);
                answer(&first, out);
            }
        }
    });
    let scorer = Arc::new(connect_protocol_model(&Endpoint::Tcp(addr), quick()).unwrap());
    assert_eq!(scorer.concurrency(), Concurrency::Concurrent);
    let handles: Vec<_> = [1.0, 5.0]
        .into_iter()
        .map(|v| {
            let scorer = Arc::clone(&scorer);
            thread::spawn(move || score_batch(&*scorer, &[seq("a", &[[v, v]])]).unwrap())
        })
        .collect();
    let got: Vec<Vec<f64>> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(got, vec![vec![2.0], vec![10.0]]);
}

#[test]
fn adapter_hangup_fails_pending_request() {
    let addr = fake_adapter(json!({"type":"hello","protocol":1}), |_, out| {
        out.shutdown(std::net::Shutdown::Both).unwrap();
    });
    let scorer = connect_protocol_model(&Endpoint::Tcp(addr), quick()).unwrap();
    let err = score_batch(&scorer, &[seq("a", &[[1.0, 1.0]])]).unwrap_err();
    assert!(matches!(err, Error::Model(ModelError::Transport(_))), "{err}");
}

#[test]
fn refused_tcp_connection_is_transport_error() {
    let addr = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().to_string()
    };
    match connect_protocol_model(&Endpoint::Tcp(addr), quick()) {
        Err(Error::Model(ModelError::Transport(_))) => {}
        Err(other) => panic!("unexpected error {other}"),
        Ok(_) => panic!("connected to a closed port"),
    }
}

/// Adapter written in shell: echoes a constant score per sequence.
const SHELL_ADAPTER: &str = r#"echo '{"type":"hello","protocol":1,"concurrency":"serial"}'
while IFS= read -r line; do
  id=$(printf '%s' "$line" | sed 's/.*"id":\([0-9]*\).*/\1/')
  printf '{"type":"scores","id":%s,"scores":[0.25]}\n' "$id"
done"#;

#[test]
fn process_transport_round_trip() {
    let scorer = connect_protocol_model(&Endpoint::Process(SHELL_ADAPTER.into()), quick()).unwrap();
    assert_eq!(scorer.concurrency(), Concurrency::Serial);
    for _ in 0..3 {
        assert_eq!(score_batch(&scorer, &[seq("a", &[[1.0, 2.0]])]).unwrap(), vec![0.25]);
    }
}

#[test]
fn process_that_exits_early_is_transport_error() {
    match connect_protocol_model(&Endpoint::Process("exit 0".into()), quick()) {
        Err(Error::Model(ModelError::Transport(_))) => {}
        Err(other) => panic!("unexpected error {other}"),
        Ok(_) => panic!("connected to a process that never said hello"),
    }
}

#[test]
fn remote_model_explains_like_local_one() {
    let addr = fake_adapter(json!({"type":"hello","protocol":1,"concurrency":"concurrent"}), answer);
    let remote = connect_protocol_model(&Endpoint::Tcp(addr), quick()).unwrap();
    let local = FnScorer::new(|x: &SequenceMatrix| x.event(x.n_events() - 1).iter().sum());
    let x = seq("a", &[[0.3, 0.1], [0.5, -0.2], [1.0, 0.4], [0.2, 0.2]]);
    let b = BackgroundMatrix::from_values(vec![0.0, 0.1]).unwrap();
    let cfg = SamplerConfig::default();
    let a = shapley_explain(&remote, &x, &b, Axis::Events, &cfg).unwrap();
    let c = shapley_explain(&local, &x, &b, Axis::Events, &cfg).unwrap();
    for (p, q) in a.attributions.iter().zip(&c.attributions) {
        assert!((p - q).abs() < 1e-9);
    }
}
