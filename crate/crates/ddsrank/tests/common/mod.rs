use ddsrank_core::data::{Item, QuerySession};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Session with awkward floats, optional unicode text and a random domain
/// in `0..3`.
pub fn random_session(rng: &mut ChaCha8Rng, id: usize) -> QuerySession {
    let dim = 4;
    let len = rng.random_range(1..=20);
    let items = (0..len)
        .map(|_| {
            let mut item = Item::new(
                (0..dim)
                    .map(|_| rng.random_range(-1e3..1e3) * rng.random::<f64>().powi(7))
                    .collect(),
                if rng.random_bool(0.3) { 1.0 } else { 0.0 },
            );
            if rng.random_bool(0.3) {
                item.query_text = Some(format!("q \"{id}\" ü\n"));
                item.title_text = Some(String::new());
            }
            item
        })
        .collect();
    QuerySession {
        query_id: format!("s{id}"),
        domain: rng.random_range(0..3),
        timestamp: rng.random_range(-5_000_000_000i64..5_000_000_000),
        items,
    }
}
