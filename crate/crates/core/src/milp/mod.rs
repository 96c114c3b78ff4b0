//! MILP data model: `min cᵀx  s.t.  Ax {≤,≥,=} b,  l ≤ x ≤ u,  x_j ∈ ℤ for j ∈ I`.

mod generate;
mod io;

pub use generate::{generate, independent_set_from_edges, GeneratorSpec, ProblemClass};
pub use io::{decode, encode, read_instance, write_instance, INSTANCE_EXTENSION};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Row sense of a linear constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        })
    }
}

/// One sparse constraint row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub coefs: Vec<(usize, f64)>,
    pub rhs: f64,
    pub sense: Sense,
}

impl Row {
    pub fn new(coefs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> Self {
        Row { coefs, rhs, sense }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coefs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    pub fn is_satisfied(&self, x: &[f64], tol: f64) -> bool {
        let act = self.activity(x);
        match self.sense {
            Sense::Le => act <= self.rhs + tol,
            Sense::Ge => act >= self.rhs - tol,
            Sense::Eq => (act - self.rhs).abs() <= tol,
        }
    }

    pub fn norm(&self) -> f64 {
        self.coefs.iter().map(|&(_, a)| a * a).sum::<f64>().sqrt()
    }
}

/// A minimization MILP. Objective, bounds and the integrality mask all have
/// length `num_vars`.
#[derive(Debug, Clone, PartialEq)]
pub struct MilpInstance {
    pub name: String,
    pub num_vars: usize,
    pub num_cons: usize,
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub is_integer: Vec<bool>,
}

/// A single broken invariant, naming the offending field and index.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub index: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "{}[{}]: {}", self.field, i, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

impl MilpInstance {
    /// Builds an instance, deriving `num_vars`/`num_cons` from the vectors.
    pub fn new(
        name: impl Into<String>,
        objective: Vec<f64>,
        rows: Vec<Row>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        is_integer: Vec<bool>,
    ) -> Self {
        MilpInstance {
            name: name.into(),
            num_vars: objective.len(),
            num_cons: rows.len(),
            objective,
            rows,
            lower,
            upper,
            is_integer,
        }
    }

    /// Convenience constructor for pure 0-1 programs.
    pub fn binary(name: impl Into<String>, objective: Vec<f64>, rows: Vec<Row>) -> Self {
        let n = objective.len();
        Self::new(name, objective, rows, vec![0.0; n], vec![1.0; n], vec![true; n])
    }

    pub fn num_integer(&self) -> usize {
        self.is_integer.iter().filter(|&&b| b).count()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Checks bounds, rows and integrality of a candidate point.
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.num_vars
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&l, &u))| v >= l - tol && v <= u + tol)
            && self.rows.iter().all(|r| r.is_satisfied(x, tol))
            && x
                .iter()
                .zip(&self.is_integer)
                .all(|(&v, &int)| !int || (v - v.round()).abs() <= tol)
    }

    /// Returns every broken invariant; empty iff the instance is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |field: &str, index: Option<usize>, message: String| {
            out.push(Violation {
                field: field.to_string(),
                index,
                message,
            })
        };
        let n = self.num_vars;
        for (field, len) in [
            ("objective", self.objective.len()),
            ("lb", self.lower.len()),
            ("ub", self.upper.len()),
            ("is_integer", self.is_integer.len()),
        ] {
            if len != n {
                push(field, None, format!("length {len} != num_vars {n}"));
            }
        }
        if self.rows.len() != self.num_cons {
            push(
                "rows",
                None,
                format!("length {} != num_cons {}", self.rows.len(), self.num_cons),
            );
        }
        for (j, c) in self.objective.iter().enumerate() {
            if !c.is_finite() {
                push("objective", Some(j), format!("non-finite coefficient {c}"));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            let mut seen = std::collections::HashSet::new();
            for &(j, a) in &row.coefs {
                if j >= n {
                    push("rows", Some(i), format!("var_index {j} out of range (n = {n})"));
                } else if !seen.insert(j) {
                    push("rows", Some(i), format!("duplicate var_index {j}"));
                }
                if !a.is_finite() {
                    push("rows", Some(i), format!("non-finite coefficient for var {j}"));
                }
            }
            if !row.rhs.is_finite() {
                push("rows", Some(i), "non-finite rhs".to_string());
            }
        }
        let m = n.min(self.lower.len()).min(self.upper.len());
        for j in 0..m {
            let (l, u) = (self.lower[j], self.upper[j]);
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                push("bounds", Some(j), format!("invalid bound pair [{l}, {u}]"));
            } else if l > u {
                push("bounds", Some(j), format!("lower {l} > upper {u}"));
            }
            let int = self.is_integer.get(j).copied().unwrap_or(false);
            if int && ((l.is_finite() && l.fract() != 0.0) || (u.is_finite() && u.fract() != 0.0)) {
                push("bounds", Some(j), format!("integer variable with fractional bound [{l}, {u}]"));
            }
        }
        out
    }

    /// Like [`validate`](Self::validate) but additionally requires at least
    /// one integer variable, as the branch-and-bound engine does.
    pub fn check_for_branching(&self) -> crate::Result<()> {
        let violations = self.validate();
        if let Some(v) = violations.first() {
            return Err(crate::Error::Contract(format!(
                "instance '{}' is invalid ({} violations, first: {v})",
                self.name,
                violations.len()
            )));
        }
        if self.num_integer() == 0 {
            return Err(crate::Error::Contract(format!(
                "instance '{}' has no integer variables",
                self.name
            )));
        }
        Ok(())
    }

    /// Returns a copy with the variables reordered so that new variable `k`
    /// is old variable `perm[k]`.
    pub fn permute_vars(&self, perm: &[usize]) -> MilpInstance {
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let pick = |v: &[f64]| perm.iter().map(|&o| v[o]).collect::<Vec<_>>();
        MilpInstance {
            name: self.name.clone(),
            num_vars: self.num_vars,
            num_cons: self.num_cons,
            objective: pick(&self.objective),
            rows: self
                .rows
                .iter()
                .map(|r| Row {
                    coefs: r.coefs.iter().map(|&(j, a)| (inverse[j], a)).collect(),
                    rhs: r.rhs,
                    sense: r.sense,
                })
                .collect(),
            lower: pick(&self.lower),
            upper: pick(&self.upper),
            is_integer: perm.iter().map(|&o| self.is_integer[o]).collect(),
        }
    }
}
