//! Per-phase wall-clock as the model grows. An MLP 20→h→2 has 23h + 2
//! parameters. Keys up to n = 2048 are dense, so coding there costs
//! O(ñ·n); beyond that the structured layout costs O(ñ). Informational only.

use sifl::harness::{timing_report, timing_table_csv, ExperimentConfig};

fn config(hidden: usize) -> sifl::Result<ExperimentConfig> {
    ExperimentConfig::parse(&format!(
        r#"
seed = 1
[[modes]]
kind = "plain"
[[modes]]
kind = "sifl_m1"
[[modes]]
kind = "sifl_m2"
[model]
kind = "mlp"
layers = [20, {hidden}, 2]
[data]
kind = "synthetic"
samples = 400
dim = 20
[data.task]
kind = "blobs"
classes = 2
separation = 2.0
[training]
clients = 4
rounds = 3
local_steps = 2
batch_size = 32
[optimizer]
kind = "sgd"
lr = 0.05
"#
    ))
}

fn main() -> sifl::Result<()> {
    // n ≈ 10², 10³, 10⁴.
    let cfgs = [4, 44, 440].map(config).into_iter().collect::<sifl::Result<Vec<_>>>()?;
    print!("{}", timing_table_csv(&timing_report(&cfgs)?));
    Ok(())
}
