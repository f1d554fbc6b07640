//! File formats: plant JSON, polynomial matrix text and compensator JSON.
//!
//! Polynomial matrix text starts with a `rows cols` line followed by one
//! line per nonzero entry, `r c : c0_re c0_im c1_re c1_im ...`, with
//! zero-based indices and ascending powers. Blank lines and lines starting
//! with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::plant::StateSpace;
use crate::poly::Poly;
use crate::polymat::PolyMatrix;
use crate::realize::Compensator;
use crate::C64;

/// Row-major complex matrix as nested `[re, im]` pairs.
pub type ComplexRows = Vec<Vec<[f64; 2]>>;

pub fn to_rows(m: &CMat) -> ComplexRows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

/// Inverse of [`to_rows`]; `cols` fixes the width when there are no rows.
pub fn from_rows(rows: &ComplexRows, cols: usize) -> Result<CMat> {
    if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
        return Err(Error::DimensionMismatch(format!(
            "row {bad} has {} entries, expected {cols}",
            rows[bad].len()
        )));
    }
    Ok(CMat::from_fn(rows.len(), cols, |i, j| {
        C64::new(rows[i][j][0], rows[i][j][1])
    }))
}

/// Serde adapter for `Vec<C64>` as `[[re, im], ...]`.
pub mod cvec {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[C64], s: S) -> std::result::Result<S::Ok, S::Error> {
        v.iter()
            .map(|z| [z.re, z.im])
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<C64>, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().map(|[re, im]| C64::new(re, im)).collect())
    }
}

/// Serde adapter for a complex matrix as nested `[re, im]` rows.
pub mod cmat {
    use super::*;
    use serde::{de, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &CMat, s: S) -> std::result::Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CMat, D::Error> {
        let rows = ComplexRows::deserialize(d)?;
        let cols = rows.first().map_or(0, Vec::len);
        from_rows(&rows, cols).map_err(de::Error::custom)
    }
}

/// On-disk compensator, `{"q", "F", "G", "H", "K"}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompensatorFile {
    pub q: usize,
    #[serde(rename = "F")]
    pub f: ComplexRows,
    #[serde(rename = "G")]
    pub g: ComplexRows,
    #[serde(rename = "H")]
    pub h: ComplexRows,
    #[serde(rename = "K")]
    pub k: ComplexRows,
}

impl From<Compensator> for CompensatorFile {
    fn from(c: Compensator) -> Self {
        CompensatorFile {
            q: c.q(),
            f: to_rows(&c.f),
            g: to_rows(&c.g),
            h: to_rows(&c.h),
            k: to_rows(&c.k),
        }
    }
}

impl TryFrom<CompensatorFile> for Compensator {
    type Error = Error;

    fn try_from(c: CompensatorFile) -> Result<Self> {
        let p = c.k.first().map_or(0, Vec::len);
        if c.f.len() != c.q || c.g.len() != c.q {
            return Err(Error::DimensionMismatch(format!(
                "F and G need q = {} rows, got {} and {}",
                c.q,
                c.f.len(),
                c.g.len()
            )));
        }
        if c.h.len() != c.k.len() {
            return Err(Error::DimensionMismatch(format!(
                "H has {} rows but K has {}",
                c.h.len(),
                c.k.len()
            )));
        }
        Compensator::new(
            from_rows(&c.f, c.q)?,
            from_rows(&c.g, p)?,
            from_rows(&c.h, c.q)?,
            from_rows(&c.k, p)?,
        )
    }
}

/// On-disk plant with row-major flat arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantFile {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
}

impl PlantFile {
    pub fn into_plant(self) -> Result<StateSpace> {
        StateSpace::from_rows(self.n, self.m, self.p, &self.a, &self.b, &self.c)
    }
}

impl From<&StateSpace> for PlantFile {
    fn from(s: &StateSpace) -> Self {
        let flat = |m: &crate::linalg::RMat| -> Vec<f64> {
            (0..m.nrows())
                .flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)]))
                .collect()
        };
        PlantFile {
            n: s.n(),
            m: s.m(),
            p: s.p(),
            a: flat(&s.a),
            b: flat(&s.b),
            c: flat(&s.c),
        }
    }
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

pub fn plant_from_json(text: &str) -> Result<StateSpace> {
    parse_json::<PlantFile>(text)?.into_plant()
}

pub fn plant_to_json(plant: &StateSpace) -> String {
    serde_json::to_string_pretty(&PlantFile::from(plant)).expect("plant serializes")
}

pub fn load_plant(path: &Path) -> Result<StateSpace> {
    plant_from_json(&std::fs::read_to_string(path)?)
}

pub fn compensator_from_json(text: &str) -> Result<Compensator> {
    parse_json(text)
}

pub fn compensator_to_json(comp: &Compensator) -> String {
    serde_json::to_string_pretty(comp).expect("compensator serializes")
}

pub fn load_compensator(path: &Path) -> Result<Compensator> {
    compensator_from_json(&std::fs::read_to_string(path)?)
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad number {tok:?}")))
}

pub fn parse_polymatrix(text: &str) -> Result<PolyMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (ln, header) = lines
        .next()
        .ok_or_else(|| Error::Parse("empty polynomial matrix".into()))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(Error::Parse(format!("line {ln}: expected \"rows cols\"")));
    }
    let rows: usize = parse_num(dims[0], ln)?;
    let cols: usize = parse_num(dims[1], ln)?;
    let mut out = PolyMatrix::zeros(rows, cols);
    let mut seen = vec![false; rows * cols];
    for (ln, line) in lines {
        let (idx, coeffs) = line
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("line {ln}: missing ':'")))?;
        let idx: Vec<&str> = idx.split_whitespace().collect();
        if idx.len() != 2 {
            return Err(Error::Parse(format!("line {ln}: expected \"r c :\"")));
        }
        let r: usize = parse_num(idx[0], ln)?;
        let c: usize = parse_num(idx[1], ln)?;
        if r >= rows || c >= cols {
            return Err(Error::DimensionMismatch(format!(
                "line {ln}: entry ({r}, {c}) outside {rows}x{cols}"
            )));
        }
        if std::mem::replace(&mut seen[r * cols + c], true) {
            return Err(Error::Parse(format!("line {ln}: entry ({r}, {c}) repeated")));
        }
        let nums = coeffs
            .split_whitespace()
            .map(|t| parse_num::<f64>(t, ln))
            .collect::<Result<Vec<f64>>>()?;
        if nums.len() % 2 != 0 {
            return Err(Error::Parse(format!(
                "line {ln}: coefficients must come in (re, im) pairs"
            )));
        }
        let cs: Vec<C64> = nums.chunks(2).map(|p| C64::new(p[0], p[1])).collect();
        out[(r, c)] = Poly::trimmed(cs, 0.0);
    }
    Ok(out)
}

/// Writes every nonzero entry with round-trip exact numbers.
pub fn format_polymatrix(a: &PolyMatrix) -> String {
    let mut s = format!("{} {}\n", a.rows(), a.cols());
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let p = &a[(i, j)];
            if p.is_zero() {
                continue;
            }
            let _ = write!(s, "{i} {j} :");
            for c in p.coeffs() {
                let _ = write!(s, " {:?} {:?}", c.re, c.im);
            }
            s.push('\n');
        }
    }
    s
}

pub fn load_polymatrix(path: &Path) -> Result<PolyMatrix> {
    parse_polymatrix(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polymatrix_text_round_trip() {
        let a = PolyMatrix::from_entries(
            2,
            2,
            vec![
                Poly::from_real(&[1.0, 0.1, 3.0]),
                Poly::zero(),
                Poly::new(vec![C64::new(0.0, -2.5e-7)]),
                Poly::from_real(&[1.0 / 3.0, 0.0, 0.0, 1.0]),
            ],
        )
        .unwrap();
        let text = format_polymatrix(&a);
        assert_eq!(parse_polymatrix(&text).unwrap(), a);
    }

    #[test]
    fn polymatrix_text_rejects_garbage() {
        assert!(matches!(parse_polymatrix(""), Err(Error::Parse(_))));
        assert!(matches!(parse_polymatrix("2 2\n0 0 1 0"), Err(Error::Parse(_))));
        assert!(matches!(parse_polymatrix("2 2\n0 0 : 1"), Err(Error::Parse(_))));
        assert!(matches!(parse_polymatrix("2 2\n0 5 : 1 0"), Err(Error::DimensionMismatch(_))));
        assert!(matches!(
            parse_polymatrix("1 1\n0 0 : 1 0\n0 0 : 2 0"),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn comments_and_blank_lines() {
        let a = parse_polymatrix("# d\n\n1 2\n0 1 : 0 0 1 0\n").unwrap();
        assert_eq!(a[(0, 1)].degree(), Some(1));
        assert!(a[(0, 0)].is_zero());
    }

    #[test]
    fn compensator_json_shapes() {
        let comp = Compensator::static_gain(CMat::from_element(2, 3, C64::new(0.5, -1.0)));
        let text = compensator_to_json(&comp);
        let back = compensator_from_json(&text).unwrap();
        assert_eq!(back, comp);
        assert_eq!(back.g.shape(), (0, 3));
        assert_eq!(back.h.shape(), (2, 0));
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["q"], 0);
        assert_eq!(v["K"][0][0], serde_json::json!([0.5, -1.0]));
    }

    #[test]
    fn compensator_json_is_bit_exact() {
        let k = CMat::from_row_slice(1, 2, &[C64::new(-92.97513820664071, -3.6758561401394774), C64::new(0.1 + 0.2, 1e-300)]);
        let comp = Compensator::static_gain(k);
        assert_eq!(compensator_from_json(&compensator_to_json(&comp)).unwrap(), comp);
    }

    #[test]
    fn compensator_json_rejects_bad_shapes() {
        let text = r#"{"q": 1, "F": [[[0,0]]], "G": [], "H": [[[1,0]]], "K": [[[1,0]]]}"#;
        assert!(matches!(
            compensator_from_json(text),
            Err(Error::Parse(_)) | Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn plant_json_round_trip() {
        let text = r#"{"n": 2, "m": 1, "p": 1, "A": [0, 1, -2, -3], "B": [0, 1], "C": [1, 0]}"#;
        let plant = plant_from_json(text).unwrap();
        assert_eq!(plant.a[(1, 0)], -2.0);
        assert_eq!(plant_from_json(&plant_to_json(&plant)).unwrap(), plant);
        let bad = r#"{"n": 2, "m": 1, "p": 1, "A": [0, 1, -2], "B": [0, 1], "C": [1, 0]}"#;
        assert!(matches!(plant_from_json(bad), Err(Error::DimensionMismatch(_))));
    }
}
