//! One pass through both codings by hand: the server lifts a model, three
//! clients' copies are averaged, the aggregator widens the average, and the
//! noise disappears on the way back down.

use nalgebra::DVector;
use sifl::coding::{
    decode_aggregate, decode_model, encode_aggregate, encode_model, gen_aggregator_keys, gen_server_keys,
    EncodedVector, KeyGenConfig,
};
use sifl::dp::sample_gaussian;
use sifl::seed::rng_from_seed;

fn show(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:>10.4}")).collect::<Vec<_>>().join(" ")
}

fn main() -> sifl::Result<()> {
    let cfg = KeyGenConfig::new(4, 7, 3, 1);
    let server = gen_server_keys(&cfg)?;
    let agg = gen_aggregator_keys(&cfg)?;
    let mut rng = rng_from_seed(9);

    let models = [
        DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]),
        DVector::from_vec(vec![0.0, -1.0, 0.5, 2.0]),
        DVector::from_vec(vec![2.0, 2.0, 2.0, 2.0]),
    ];
    let weights = [0.5, 0.3, 0.2];

    // One kernel draw per round, shared by every client.
    let r1 = sample_gaussian(3, 1, 100.0, &mut rng)?.column(0).into_owned();
    let encoded: Vec<EncodedVector> = models
        .iter()
        .map(|w| encode_model(&server, w, &r1))
        .collect::<sifl::Result<_>>()?;
    let avg = encoded
        .iter()
        .zip(weights)
        .fold(DVector::zeros(7), |acc, (e, c)| acc + e.values() * c);
    println!("encoded average  {}", show(avg.as_slice()));

    let r2 = sample_gaussian(7, 2, 100.0, &mut rng)?;
    let widened = encode_aggregate(&agg, &EncodedVector::new(avg), &r2)?;
    for (i, row) in widened.values().row_iter().enumerate() {
        let row: Vec<f64> = row.iter().copied().collect();
        println!("{:<16} {}", if i == 0 { "widened (ñ×p)" } else { "" }, show(&row));
    }

    let narrowed = decode_aggregate(agg.pi2_right(), &widened)?;
    let decoded = decode_model(server.immersion(), &narrowed)?;
    let expected = models.iter().zip(weights).fold(DVector::zeros(4), |acc, (w, c)| acc + w * c);
    println!("decoded          {}", show(decoded.as_slice()));
    println!("plain average    {}", show(expected.as_slice()));
    println!("max gap          {:.2e}", (decoded - expected).amax());
    Ok(())
}
