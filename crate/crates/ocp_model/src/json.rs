//! The `ocp-v1` problem document. Matrices are arrays of rows; finite numbers
//! are written with 17 significant digits, infinities as `"inf"`/`"-inf"`.

use crate::{Matrix, OCPProblem, OcpError, QpStage, Terminal, Vector};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

pub const SCHEMA: &str = "ocp-v1";

#[derive(Clone, Debug)]
struct Num(f64);

impl Serialize for Num {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let x = self.0;
        if x.is_finite() {
            let raw = RawValue::from_string(format!("{x:.16e}")).map_err(serde::ser::Error::custom)?;
            raw.serialize(s)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            F(f64),
            S(String),
        }
        match Repr::deserialize(d)? {
            Repr::F(x) => Ok(Num(x)),
            Repr::S(s) => match s.as_str() {
                "inf" | "+inf" => Ok(Num(f64::INFINITY)),
                "-inf" => Ok(Num(f64::NEG_INFINITY)),
                "nan" => Ok(Num(f64::NAN)),
                other => Err(serde::de::Error::custom(format!("invalid number {other:?}"))),
            },
        }
    }
}

type Rows = Vec<Vec<Num>>;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StageDoc {
    #[serde(rename = "A")]
    a: Rows,
    #[serde(rename = "B")]
    b: Rows,
    f: Vec<Num>,
    #[serde(rename = "R")]
    r_mat: Rows,
    #[serde(rename = "S")]
    s_mat: Rows,
    #[serde(rename = "Q")]
    q_mat: Rows,
    #[serde(rename = "r")]
    r_lin: Vec<Num>,
    #[serde(rename = "q")]
    q_lin: Vec<Num>,
    #[serde(rename = "C")]
    c: Rows,
    #[serde(rename = "D")]
    d: Rows,
    bl: Vec<Num>,
    bu: Vec<Num>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TerminalDoc {
    #[serde(rename = "Q")]
    q_mat: Rows,
    #[serde(rename = "q")]
    q_lin: Vec<Num>,
    #[serde(rename = "C")]
    c: Rows,
    bl: Vec<Num>,
    bu: Vec<Num>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemDoc {
    schema: String,
    #[serde(rename = "N")]
    n: usize,
    nx: usize,
    nu: usize,
    x_init: Vec<Num>,
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    e: Option<Vec<Rows>>,
    stages: Vec<StageDoc>,
    terminal: TerminalDoc,
}

fn rows(m: &Matrix) -> Rows {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| Num(m[(i, j)])).collect()).collect()
}

fn vec(v: &Vector) -> Vec<Num> {
    v.iter().map(|&x| Num(x)).collect()
}

fn mat(r: &Rows, cols: usize, what: &str) -> Result<Matrix, OcpError> {
    if r.iter().any(|row| row.len() != cols) {
        return Err(OcpError::Parse(format!("{what}: expected {cols} columns")));
    }
    Ok(Matrix::from_fn(r.len(), cols, |i, j| r[i][j].0))
}

fn mat_sized(r: &Rows, shape: (usize, usize), what: &str) -> Result<Matrix, OcpError> {
    let m = mat(r, shape.1, what)?;
    if m.nrows() != shape.0 {
        return Err(OcpError::Parse(format!("{what}: expected {} rows", shape.0)));
    }
    Ok(m)
}

fn vector(v: &[Num], len: usize, what: &str) -> Result<Vector, OcpError> {
    if v.len() != len {
        return Err(OcpError::Parse(format!("{what}: expected length {len}")));
    }
    Ok(Vector::from_iterator(len, v.iter().map(|x| x.0)))
}

pub fn to_json(p: &OCPProblem) -> String {
    let doc = ProblemDoc {
        schema: SCHEMA.into(),
        n: p.horizon(),
        nx: p.nx,
        nu: p.nu,
        x_init: vec(&p.x_init),
        e: p.e.as_ref().map(|e| e.iter().map(rows).collect()),
        stages: p
            .stages
            .iter()
            .map(|s| StageDoc {
                a: rows(&s.a),
                b: rows(&s.b),
                f: vec(&s.f),
                r_mat: rows(&s.r),
                s_mat: rows(&s.s),
                q_mat: rows(&s.q),
                r_lin: vec(&s.r_lin),
                q_lin: vec(&s.q_lin),
                c: rows(&s.c),
                d: rows(&s.d),
                bl: vec(&s.bl),
                bu: vec(&s.bu),
            })
            .collect(),
        terminal: TerminalDoc {
            q_mat: rows(&p.terminal.q),
            q_lin: vec(&p.terminal.q_lin),
            c: rows(&p.terminal.c),
            bl: vec(&p.terminal.bl),
            bu: vec(&p.terminal.bu),
        },
    };
    serde_json::to_string_pretty(&doc).expect("problem documents always serialize")
}

pub fn from_json(text: &str) -> Result<OCPProblem, OcpError> {
    let doc: ProblemDoc = serde_json::from_str(text).map_err(|e| OcpError::Parse(e.to_string()))?;
    if doc.schema != SCHEMA {
        return Err(OcpError::Parse(format!("unsupported schema {:?}", doc.schema)));
    }
    if doc.stages.len() != doc.n {
        return Err(OcpError::Parse(format!("expected {} stages, found {}", doc.n, doc.stages.len())));
    }
    let (nx, nu) = (doc.nx, doc.nu);
    let stages = doc
        .stages
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let w = |name: &str| format!("stage {j} {name}");
            let c = mat(&s.c, nx, &w("C"))?;
            let ny = c.nrows();
            Ok(QpStage {
                a: mat_sized(&s.a, (nx, nx), &w("A"))?,
                b: mat_sized(&s.b, (nx, nu), &w("B"))?,
                f: vector(&s.f, nx, &w("f"))?,
                r: mat_sized(&s.r_mat, (nu, nu), &w("R"))?,
                s: mat_sized(&s.s_mat, (nu, nx), &w("S"))?,
                q: mat_sized(&s.q_mat, (nx, nx), &w("Q"))?,
                r_lin: vector(&s.r_lin, nu, &w("r"))?,
                q_lin: vector(&s.q_lin, nx, &w("q"))?,
                d: mat_sized(&s.d, (ny, nu), &w("D"))?,
                c,
                bl: vector(&s.bl, ny, &w("bl"))?,
                bu: vector(&s.bu, ny, &w("bu"))?,
            })
        })
        .collect::<Result<Vec<_>, OcpError>>()?;
    let t = &doc.terminal;
    let c = mat(&t.c, nx, "terminal C")?;
    let ny = c.nrows();
    let terminal = Terminal {
        q: mat_sized(&t.q_mat, (nx, nx), "terminal Q")?,
        q_lin: vector(&t.q_lin, nx, "terminal q")?,
        c,
        bl: vector(&t.bl, ny, "terminal bl")?,
        bu: vector(&t.bu, ny, "terminal bu")?,
    };
    let e = match &doc.e {
        None => None,
        Some(e) => Some(e.iter().map(|m| mat_sized(m, (nx, nx), "E")).collect::<Result<Vec<_>, _>>()?),
    };
    let p = OCPProblem { nx, nu, stages, terminal, x_init: vector(&doc.x_init, nx, "x_init")?, e };
    p.validate().map_err(|e| OcpError::Parse(e.to_string()))?;
    Ok(p)
}
