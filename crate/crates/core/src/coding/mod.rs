//! Server immersion map `π1`, aggregator map `π2`, and their inverses.
//!
//! ```text
//! π1(w)  = Π1·w + N1·r1          π1ᴸ(x) = Π1ᴸ·x        (server)
//! π2(w̃)  = w̃·Π2 + R2·N2          π2ᴿ(W) = W·Π2ᴿ        (aggregator)
//! ```
//!
//! `Π1ᴸ·N1 = 0` and `N2·Π2ᴿ = 0`, so the random terms vanish under the
//! matching inverse no matter how large they are.

mod keyfile;
mod keys;
mod structured;
mod validate;

use nalgebra::{DMatrix, DVector};

pub use keyfile::{
    decode_keys, decode_keys_unchecked, encode_keys, read_key_file, read_key_file_unchecked, write_key_file,
    KEY_FILE_MAGIC,
};
pub use keys::{
    AggregatorKeys, Immersion, KeyGenConfig, KeyLayout, ServerKeys, DENSE_LIMIT,
    GENERATION_RETRIES, ZERO_NORM_TOL,
};
pub use validate::{validate_keys, InvariantCheck, ValidationReport};

use crate::error::{Error, Result};
use crate::ModelVector;

/// Tolerance for algebraic identities on dense server keys.
pub const ALGEBRA_TOL: f64 = 1e-10;
/// Tolerance for the scalar aggregator identities.
pub const AGGREGATOR_TOL: f64 = 1e-12;
/// Tolerance for round trips through training arithmetic.
pub const ROUND_TRIP_TOL: f64 = 1e-9;

/// A model lifted into `R^ñ`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedVector(DVector<f64>);

impl EncodedVector {
    pub fn new(values: DVector<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// An `ñ×p` matrix produced by the aggregator map or by re-encoding one.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix(DMatrix<f64>);

impl EncodedMatrix {
    pub fn new(values: DMatrix<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }
}

pub fn gen_server_keys(cfg: &KeyGenConfig) -> Result<ServerKeys> {
    keys::generate_server_keys(cfg)
}

pub fn gen_aggregator_keys(cfg: &KeyGenConfig) -> Result<AggregatorKeys> {
    keys::generate_aggregator_keys(cfg)
}

/// `Π1·w + N1·r1`.
pub fn encode_model(keys: &ServerKeys, w: &ModelVector, r1: &DVector<f64>) -> Result<EncodedVector> {
    let lifted = keys.immersion().lift(w)?;
    let noise = keys.kernel_apply(r1)?;
    Ok(EncodedVector(lifted + noise))
}

/// `Π1·W + N1·R1`, column by column.
pub fn encode_model_matrix(
    keys: &ServerKeys,
    w: &DMatrix<f64>,
    r1: &DMatrix<f64>,
) -> Result<EncodedMatrix> {
    if w.ncols() != r1.ncols() {
        return Err(Error::dim("encode_model_matrix columns", w.ncols(), r1.ncols()));
    }
    let lifted = keys.immersion().lift_matrix(w)?;
    let noise = keys.kernel_apply_matrix(r1)?;
    Ok(EncodedMatrix(lifted + noise))
}

/// `Π1ᴸ·x`.
pub fn decode_model(immersion: &Immersion, x: &EncodedVector) -> Result<ModelVector> {
    immersion.project(&x.0)
}

/// `Π1ᴸ·X` for an `ñ×p` matrix; the result is still masked by `Π2`.
pub fn decode_model_matrix(immersion: &Immersion, x: &EncodedMatrix) -> Result<DMatrix<f64>> {
    immersion.project_matrix(&x.0)
}

/// `w̃·Π2 + R2·N2`.
pub fn encode_aggregate(
    keys: &AggregatorKeys,
    w: &EncodedVector,
    r2: &DMatrix<f64>,
) -> Result<EncodedMatrix> {
    let p = keys.p();
    if r2.nrows() != w.len() || r2.ncols() != p - 1 {
        return Err(Error::dim(
            "aggregator noise shape",
            format!("{}x{}", w.len(), p - 1),
            format!("{}x{}", r2.nrows(), r2.ncols()),
        ));
    }
    Ok(EncodedMatrix(&w.0 * keys.pi2() + r2 * keys.n2()))
}

/// `W·Π2ᴿ`. Clients hold only `Π2ᴿ`, so this takes the vector directly.
pub fn decode_aggregate(pi2_right: &DVector<f64>, x: &EncodedMatrix) -> Result<EncodedVector> {
    if x.0.ncols() != pi2_right.len() {
        return Err(Error::dim("decode_aggregate columns", pi2_right.len(), x.0.ncols()));
    }
    Ok(EncodedVector(&x.0 * pi2_right))
}
