//! Broker/client integration: framing properties, call correlation under
//! concurrency, and topic ordering.

use std::sync::Arc;
use std::time::Duration;

use proptest::prelude::*;
use serde_json::{json, Value};

use simrl::busline::{decode_frame, encode_frame, Broker, BrokerConfig, BusClient, NodeName};

fn json_value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::from),
        any::<i64>().prop_map(Value::from),
        // Finite doubles only: JSON has no NaN/Inf representation.
        prop::num::f64::NORMAL.prop_map(Value::from),
        "[a-zA-Z0-9 _.-]{0,24}".prop_map(Value::from),
    ];
    leaf.prop_recursive(3, 48, 6, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..6).prop_map(Value::Array),
            prop::collection::btree_map("[a-z]{1,8}", inner, 0..6)
                .prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    #[test]
    fn frame_round_trip(
        op in prop::sample::select(simrl::busline::KNOWN_OPS),
        body in prop::collection::btree_map("[a-z]{1,8}", json_value(), 0..8),
    ) {
        let mut body: serde_json::Map<String, Value> = body.into_iter().collect();
        body.insert("op".into(), Value::from(op));
        let body = Value::Object(body);
        let bytes = encode_frame(&body).unwrap();
        let mut cursor = std::io::Cursor::new(bytes);
        let back = decode_frame(&mut cursor).unwrap();
        prop_assert_eq!(back, body);
    }
}

#[test]
fn hundred_concurrent_calls_correlate() {
    let broker = Broker::start(BrokerConfig::default()).unwrap();
    let server = BusClient::connect(broker.addr()).unwrap();
    let node = NodeName::new("echo_node").unwrap();
    server.register(&node).unwrap();
    server.serve(
        "echo",
        Arc::new(|payload| {
            // Stagger replies so correlation cannot hide behind FIFO timing.
            std::thread::sleep(Duration::from_millis(
                (payload["i"].as_u64().unwrap() % 7) * 3,
            ));
            Ok(payload)
        }),
    );

    let mut handles = Vec::new();
    for i in 0..100u64 {
        let addr = broker.addr();
        let node = node.clone();
        handles.push(std::thread::spawn(move || {
            let client = BusClient::connect(addr).unwrap();
            let reply = client
                .call(&node, "echo", json!({ "i": i }), Duration::from_secs(10))
                .unwrap();
            assert_eq!(reply["i"].as_u64(), Some(i), "mis-correlated reply");
            client.close();
        }));
    }
    for h in handles {
        h.join().unwrap();
    }
    server.close();
    broker.shutdown();
}

#[test]
fn topic_ordering_preserved() {
    let broker = Broker::start(BrokerConfig::default()).unwrap();
    let publisher = BusClient::connect(broker.addr()).unwrap();
    let subscriber = BusClient::connect(broker.addr()).unwrap();
    let topic = NodeName::new("seq_topic").unwrap();
    let sub = subscriber.subscribe(&topic).unwrap();

    // Consume concurrently: the subscription buffer is bounded, so the
    // reader must keep up with the publisher.
    let reader = std::thread::spawn(move || {
        for expect in 0..1000u64 {
            let msg = sub.next(Duration::from_secs(10)).unwrap();
            assert_eq!(msg["seq"].as_u64(), Some(expect), "out-of-order message");
        }
    });
    for i in 0..1000u64 {
        publisher.publish(&topic, json!({ "seq": i })).unwrap();
        if i % 32 == 0 {
            std::thread::sleep(Duration::from_millis(1));
        }
    }
    reader.join().unwrap();
    publisher.close();
    subscriber.close();
    broker.shutdown();
}
