//! JSON encodings shared by the module wire formats: complex numbers are
//! `[re, im]` pairs, matrices are lists of rows.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::linalg::{c, CMat, C64};

pub type Pair = [f64; 2];
pub type MatrixJson = Vec<Vec<Pair>>;

pub fn pair(z: C64) -> Pair {
    [z.re, z.im]
}

pub fn complex(p: Pair) -> C64 {
    c(p[0], p[1])
}

pub fn matrix_to_json(m: &CMat) -> MatrixJson {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| pair(m[(i, j)])).collect()).collect()
}

/// Decode a row-major matrix, checking its shape when `shape` is given.
pub fn matrix_from_json(rows: &MatrixJson, shape: Option<(usize, usize)>) -> Result<CMat, String> {
    let r = rows.len();
    let cols = rows.first().map_or(0, |row| row.len());
    if rows.iter().any(|row| row.len() != cols) {
        return Err("ragged matrix rows".into());
    }
    if let Some((er, ec)) = shape {
        if (r, cols) != (er, ec) {
            return Err(format!("expected a {er}x{ec} matrix, found {r}x{cols}"));
        }
    }
    Ok(CMat::from_fn(r, cols, |i, j| complex(rows[i][j])))
}

/// `#[serde(with = "crate::wire::complex_pair")]` for a single complex number.
pub mod complex_pair {
    use super::*;

    pub fn serialize<S: Serializer>(z: &C64, s: S) -> Result<S::Ok, S::Error> {
        pair(*z).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<C64, D::Error> {
        Ok(complex(Pair::deserialize(d)?))
    }
}

/// `#[serde(with = "crate::wire::complex_list")]` for a list of complex numbers.
pub mod complex_list {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[C64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|z| pair(*z)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C64>, D::Error> {
        Ok(Vec::<Pair>::deserialize(d)?.into_iter().map(complex).collect())
    }
}

/// `#[serde(with = "crate::wire::matrix_list")]` for a list of matrices.
pub mod matrix_list {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[CMat], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(matrix_to_json).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMat>, D::Error> {
        Vec::<MatrixJson>::deserialize(d)?
            .iter()
            .map(|m| matrix_from_json(m, None).map_err(serde::de::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_roundtrip_is_row_major() {
        let m = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 1.0), c(3.0, 0.0), c(4.0, -1.0)]);
        let j = matrix_to_json(&m);
        assert_eq!(j[0][1], [2.0, 1.0]);
        assert_eq!(matrix_from_json(&j, Some((2, 2))).unwrap(), m);
        assert!(matrix_from_json(&j, Some((3, 2))).is_err());
    }
}
