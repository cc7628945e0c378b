//! Serialize nalgebra vectors as plain arrays and matrices as arrays of rows.

use nalgebra::{DMatrix, DVector};
use serde::ser::{SerializeSeq, Serializer};

pub fn vector<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}

pub fn opt_vector<S: Serializer>(v: &Option<DVector<f64>>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(v) => vector(v, s),
        None => s.serialize_none(),
    }
}

pub fn vectors<S: Serializer>(vs: &[DVector<f64>], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(vs.len()))?;
    for v in vs {
        seq.serialize_element(v.as_slice())?;
    }
    seq.end()
}

pub fn matrix<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for r in m.row_iter() {
        let row: Vec<f64> = r.iter().copied().collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}
