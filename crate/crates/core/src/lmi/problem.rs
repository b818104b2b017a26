use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{asymmetry, equilibrated_min_eig, sym_eig, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    /// `G(z) > 0`.
    Strict,
    /// `G(z) >= 0`.
    NonStrict,
}

/// `G(z) = G0 + sum_i z_i G_i`, all blocks symmetric of equal size.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatrixConstraint<S: Scalar> {
    pub name: String,
    pub constant: Matrix<S>,
    pub coefficients: Vec<Matrix<S>>,
    pub sense: Sense,
}

impl<S: Scalar> AffineMatrixConstraint<S> {
    pub fn zero(name: impl Into<String>, dim: usize, n_vars: usize, sense: Sense) -> Self {
        Self {
            name: name.into(),
            constant: Matrix::zeros(dim, dim),
            coefficients: vec![Matrix::zeros(dim, dim); n_vars],
            sense,
        }
    }

    pub fn dim(&self) -> usize {
        self.constant.rows()
    }

    pub fn value(&self, z: &[S]) -> Matrix<S> {
        let mut g = self.constant.clone();
        for (gi, &zi) in self.coefficients.iter().zip(z) {
            if zi != S::zero() {
                g += &gi.scale(zi);
            }
        }
        g
    }

    /// Adds `F(X)` for a symmetric matrix variable, where `F` is linear and is
    /// evaluated on the basis of `X`.
    pub fn add_linear_map(&mut self, var: &SymVar, f: impl Fn(&Matrix<S>) -> Matrix<S>) {
        for (k, (i, j)) in var.entries().enumerate() {
            let g = f(&var.basis(i, j));
            self.coefficients[var.start + k] += &g;
        }
    }

    /// Applies `W^T G W` to every block.
    pub fn congruence(&self, w: &Matrix<S>) -> Self {
        let wt = w.transpose();
        let f = |m: &Matrix<S>| &(&wt * m) * w;
        Self {
            name: self.name.clone(),
            constant: f(&self.constant),
            coefficients: self.coefficients.iter().map(f).collect(),
            sense: self.sense,
        }
    }

    pub fn scaled(&self, s: S) -> Self {
        Self {
            name: self.name.clone(),
            constant: self.constant.scale(s),
            coefficients: self.coefficients.iter().map(|g| g.scale(s)).collect(),
            sense: self.sense,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable<S> {
    pub name: String,
    pub lower: S,
    pub upper: S,
}

/// A symmetric matrix variable stored as its upper-triangular entries, row
/// by row, starting at `start` in the decision vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymVar {
    pub name: String,
    pub dim: usize,
    pub start: usize,
}

impl SymVar {
    pub fn count(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.dim).flat_map(move |i| (i..self.dim).map(move |j| (i, j)))
    }

    /// `E_ii` on the diagonal, `E_ij + E_ji` off it.
    pub fn basis<S: Scalar>(&self, i: usize, j: usize) -> Matrix<S> {
        let mut e = Matrix::zeros(self.dim, self.dim);
        e[(i, j)] = S::one();
        e[(j, i)] = S::one();
        e
    }

    pub fn unpack<S: Scalar>(&self, z: &[S]) -> Matrix<S> {
        let mut m = Matrix::zeros(self.dim, self.dim);
        for (k, (i, j)) in self.entries().enumerate() {
            m[(i, j)] = z[self.start + k];
            m[(j, i)] = z[self.start + k];
        }
        m
    }

    pub fn pack<S: Scalar>(&self, m: &Matrix<S>, z: &mut [S]) {
        for (k, (i, j)) in self.entries().enumerate() {
            z[self.start + k] = (m[(i, j)] + m[(j, i)]) * S::lit(0.5);
        }
    }
}

/// Decision variables with box bounds and a list of matrix inequalities.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiProblem<S: Scalar> {
    pub variables: Vec<Variable<S>>,
    pub constraints: Vec<AffineMatrixConstraint<S>>,
}

impl<S: Scalar> Default for LmiProblem<S> {
    fn default() -> Self {
        Self {
            variables: Vec::new(),
            constraints: Vec::new(),
        }
    }
}

impl<S: Scalar> LmiProblem<S> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn add_scalar(&mut self, name: impl Into<String>, lower: S, upper: S) -> usize {
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
        });
        self.variables.len() - 1
    }

    /// Entries bounded by `[-bound, bound]`.
    pub fn add_symmetric(&mut self, name: &str, dim: usize, bound: S) -> SymVar {
        let var = SymVar {
            name: name.to_string(),
            dim,
            start: self.variables.len(),
        };
        for (i, j) in var.entries() {
            self.add_scalar(format!("{name}[{i},{j}]"), -bound, bound);
        }
        var
    }

    /// A zero constraint sized for the variables declared so far.
    pub fn new_constraint(&self, name: impl Into<String>, dim: usize, sense: Sense) -> AffineMatrixConstraint<S> {
        AffineMatrixConstraint::zero(name, dim, self.n_vars(), sense)
    }

    pub fn push(&mut self, c: AffineMatrixConstraint<S>) {
        self.constraints.push(c);
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        for v in &self.variables {
            if !(v.lower.is_finite() && v.upper.is_finite() && v.lower < v.upper) {
                return Err(Error::invalid("box", format!("bad bounds for {}", v.name)));
            }
        }
        for c in &self.constraints {
            if c.coefficients.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "constraint {} references {} variables, problem has {n}",
                    c.name,
                    c.coefficients.len()
                )));
            }
            let d = c.constant.require_square()?;
            for g in std::iter::once(&c.constant).chain(&c.coefficients) {
                if g.rows() != d || g.cols() != d {
                    return Err(Error::DimensionMismatch(format!("blocks of {} differ in size", c.name)));
                }
                if asymmetry(g) > S::lit(1e-12) * g.max_abs().max(S::one()) {
                    return Err(Error::NotSymmetric {
                        asymmetry: asymmetry(g).as_f64(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Independent check of one constraint at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintMargin<S> {
    /// Smallest eigenvalue of the constraint value.
    pub min_eig: S,
    /// Smallest eigenvalue after unit-diagonal congruence scaling.
    pub equilibrated_min_eig: S,
    /// Frobenius norm of the constraint value.
    pub norm: S,
}

impl<S: Scalar> ConstraintMargin<S> {
    pub fn of(m: &Matrix<S>) -> Result<Self> {
        Ok(Self {
            min_eig: sym_eig(m)?.min(),
            equilibrated_min_eig: equilibrated_min_eig(m)?,
            norm: m.norm_fro(),
        })
    }

    /// Positive definite with a scale-free margin above `tol`.
    pub fn passes_strict(&self, tol: S) -> bool {
        self.min_eig > S::zero() && self.equilibrated_min_eig > tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedMargin<S> {
    pub name: String,
    #[serde(flatten)]
    pub margin: ConstraintMargin<S>,
}

/// Solver output re-verified in the original coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiCertificate<S> {
    /// Symmetric matrix variables (`P` or `H`) as nested rows.
    pub matrices: Vec<(String, Vec<Vec<S>>)>,
    /// Scalar variables (`eps` in 1/s for the existence test; `eps`, `nu` in
    /// volts for the stability test).
    pub scalars: Vec<(String, S)>,
    pub margins: Vec<NamedMargin<S>>,
    /// All margins verified strictly positive.
    pub feasible: bool,
    /// Best normalised margin found by the solver.
    pub solver_margin: S,
    /// Upper bound on the normalised margin from the cutting-plane phase.
    pub solver_upper_bound: S,
    pub iterations: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl<S: Scalar> LmiCertificate<S> {
    pub fn scalar(&self, name: &str) -> Option<S> {
        self.scalars.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn matrix(&self, name: &str) -> Option<Matrix<S>> {
        self.matrices
            .iter()
            .find(|(n, _)| n == name)
            .and_then(|(_, rows)| Matrix::from_rows(rows).ok())
    }

    pub fn margin(&self, name: &str) -> Option<&ConstraintMargin<S>> {
        self.margins.iter().find(|m| m.name == name).map(|m| &m.margin)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symvar_round_trip() {
        let mut p = LmiProblem::<f64>::new();
        p.add_scalar("eps", 0.0, 1.0);
        let h = p.add_symmetric("H", 3, 10.0);
        assert_eq!(h.count(), 6);
        assert_eq!(p.n_vars(), 7);
        let m = Matrix::<f64>::from_rows(&[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 5.0], vec![3.0, 5.0, 6.0]]).unwrap();
        let mut z = vec![0.0; 7];
        h.pack(&m, &mut z);
        assert_eq!(z[0], 0.0);
        assert_eq!(h.unpack(&z), m);
    }

    #[test]
    fn linear_map_reproduces_direct_evaluation() {
        let mut p = LmiProblem::<f64>::new();
        let x = p.add_symmetric("X", 2, 1.0);
        let a = Matrix::<f64>::from_rows(&[vec![-1.0, 2.0], vec![0.5, -3.0]]).unwrap();
        let mut c = p.new_constraint("lyap", 2, Sense::Strict);
        c.add_linear_map(&x, |e| &(&a * e) + &(e * &a.transpose()));
        let xv = Matrix::<f64>::from_rows(&[vec![2.0, -0.7], vec![-0.7, 1.5]]).unwrap();
        let mut z = vec![0.0; 3];
        x.pack(&xv, &mut z);
        let direct = &(&a * &xv) + &(&xv * &a.transpose());
        assert!((&c.value(&z) - &direct).max_abs() < 1e-14);
        p.push(c);
        p.validate().unwrap();
    }

    #[test]
    fn validate_rejects_bad_shapes() {
        let mut p = LmiProblem::<f64>::new();
        p.add_scalar("x", 0.0, 1.0);
        let c = AffineMatrixConstraint::zero("c", 2, 2, Sense::Strict);
        p.push(c);
        assert!(p.validate().is_err());
        let mut p = LmiProblem::<f64>::new();
        p.add_scalar("x", 1.0, 1.0);
        assert!(p.validate().is_err());
    }
}
