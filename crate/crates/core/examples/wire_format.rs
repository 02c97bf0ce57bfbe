//! Byte layout of one frame of each kind.

use nalgebra::{DMatrix, DVector};
use sifl::protocol::Message;

fn main() -> sifl::Result<()> {
    let frames = [
        Message::BroadcastEncoded { round: 0, model: DVector::from_vec(vec![1.0, -0.5, 2.0]) },
        Message::LocalUpdate { round: 1, client_id: 3, dataset_size: 6000, payload: DVector::from_vec(vec![0.25, 4.0]) },
        Message::AggregateToServer { round: 1, payload: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]) },
    ];
    for m in &frames {
        let bytes = m.encode();
        let hex: Vec<String> = bytes.iter().map(|b| format!("{b:02x}")).collect();
        println!("{} ({} bytes)", m.name(), bytes.len());
        for chunk in hex.chunks(24) {
            println!("  {}", chunk.join(" "));
        }
        assert_eq!(&Message::decode(&bytes)?, m);
    }
    Ok(())
}
