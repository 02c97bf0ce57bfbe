//! Generate immersion keys, check their invariants and round-trip them
//! through a key file.
//!
//!     cargo run --example keys -- 40 48 3

use sifl::coding::{gen_aggregator_keys, gen_server_keys, read_key_file, validate_keys, write_key_file, KeyGenConfig};

fn main() -> sifl::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer")).collect();
    let (n, n_tilde, p) = match args[..] {
        [n, nt, p] => (n, nt, p),
        _ => (40, 48, 3),
    };
    let cfg = KeyGenConfig::new(n, n_tilde, p, 2024);
    let server = gen_server_keys(&cfg)?;
    let agg = gen_aggregator_keys(&cfg)?;
    println!(
        "n={n} ñ={n_tilde} p={p} ({} layout)",
        if server.immersion().is_dense() { "dense" } else { "structured" }
    );
    println!("{}", validate_keys(&server, &agg));

    let path = std::env::temp_dir().join("sifl-example-keys.bin");
    write_key_file(&path, &server, &agg)?;
    let (server2, agg2) = read_key_file(&path)?;
    println!(
        "reloaded {} bytes from {}: ñ={} p={}",
        std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0),
        path.display(),
        server2.n_tilde(),
        agg2.p()
    );
    Ok(())
}
