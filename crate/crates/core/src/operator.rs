//! Linear operators on complex vectors and the cyclic delay/Doppler shift.

use nalgebra::DMatrix;

use crate::{Cplx, Error, Result};

/// A square linear map on `C^dim`.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    fn apply(&self, x: &[Cplx]) -> Vec<Cplx>;

    fn apply_adjoint(&self, x: &[Cplx]) -> Vec<Cplx>;

    /// Dense matrix obtained by applying the operator to the unit vectors.
    fn to_dense(&self) -> DMatrix<Cplx> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        let mut e = vec![Cplx::default(); n];
        for j in 0..n {
            e[j] = Cplx::new(1.0, 0.0);
            for (i, v) in self.apply(&e).into_iter().enumerate() {
                out[(i, j)] = v;
            }
            e[j] = Cplx::default();
        }
        out
    }
}

impl LinearOperator for DMatrix<Cplx> {
    fn dim(&self) -> usize {
        self.ncols()
    }

    fn apply(&self, x: &[Cplx]) -> Vec<Cplx> {
        let mut out = vec![Cplx::default(); self.nrows()];
        for (j, xj) in x.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.column(j).iter()) {
                *o += a * xj;
            }
        }
        out
    }

    fn apply_adjoint(&self, x: &[Cplx]) -> Vec<Cplx> {
        (0..self.ncols())
            .map(|j| self.column(j).iter().zip(x).map(|(a, v)| a.conj() * v).sum())
            .collect()
    }

    fn to_dense(&self) -> DMatrix<Cplx> {
        self.clone()
    }
}

/// `Π^l Δ^k` on vectors of length `len`: a Doppler modulation
/// `diag(e^{i2πkn/len})` followed by a cyclic forward shift by `l` samples.
#[derive(Debug, Clone)]
pub struct TimeShift {
    delay: usize,
    doppler: f64,
    phase: Vec<Cplx>,
}

impl TimeShift {
    pub fn new(delay: usize, doppler: f64, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::input("shift length must be positive"));
        }
        if delay >= len {
            return Err(Error::input(format!("delay {delay} outside 0..{len}")));
        }
        if !doppler.is_finite() || doppler.abs() >= len as f64 {
            return Err(Error::input(format!("doppler {doppler} outside (-{len}, {len})")));
        }
        let w = 2.0 * std::f64::consts::PI * doppler / len as f64;
        let phase = (0..len).map(|n| Cplx::cis(w * n as f64)).collect();
        Ok(Self { delay, doppler, phase })
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn doppler(&self) -> f64 {
        self.doppler
    }

    pub fn len(&self) -> usize {
        self.phase.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phase.is_empty()
    }

    /// `out += gain · Π^l Δ^k x`
    pub fn accumulate(&self, x: &[Cplx], gain: Cplx, out: &mut [Cplx]) {
        let len = self.len();
        let (head, tail) = (len - self.delay, self.delay);
        // Indices m < len - l land on m + l, the rest wrap to m + l - len.
        for m in 0..head {
            out[m + tail] += gain * self.phase[m] * x[m];
        }
        for m in head..len {
            out[m - head] += gain * self.phase[m] * x[m];
        }
    }

    /// `out += gain · (Π^l Δ^k)^H x`
    pub fn accumulate_adjoint(&self, x: &[Cplx], gain: Cplx, out: &mut [Cplx]) {
        let len = self.len();
        for (m, o) in out.iter_mut().enumerate() {
            let src = (m + self.delay) % len;
            *o += gain * self.phase[m].conj() * x[src];
        }
    }

    pub fn shift(&self, x: &[Cplx]) -> Vec<Cplx> {
        let mut out = vec![Cplx::default(); self.len()];
        self.accumulate(x, Cplx::new(1.0, 0.0), &mut out);
        out
    }
}

impl LinearOperator for TimeShift {
    fn dim(&self) -> usize {
        self.len()
    }

    fn apply(&self, x: &[Cplx]) -> Vec<Cplx> {
        self.shift(x)
    }

    fn apply_adjoint(&self, x: &[Cplx]) -> Vec<Cplx> {
        let mut out = vec![Cplx::default(); self.len()];
        self.accumulate_adjoint(x, Cplx::new(1.0, 0.0), &mut out);
        out
    }
}

/// `a^H b`
pub fn dot(a: &[Cplx], b: &[Cplx]) -> Cplx {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(a: &[Cplx]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

pub fn norm(a: &[Cplx]) -> f64 {
    norm_sqr(a).sqrt()
}

/// `‖a − b‖`
pub fn distance(a: &[Cplx], b: &[Cplx]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn impulse(len: usize, at: usize) -> Vec<Cplx> {
        let mut v = vec![Cplx::default(); len];
        v[at] = Cplx::new(1.0, 0.0);
        v
    }

    #[test]
    fn shift_moves_impulse() {
        let t = TimeShift::new(3, 0.0, 8).unwrap();
        assert_eq!(t.shift(&impulse(8, 0)), impulse(8, 3));
        assert_eq!(t.shift(&impulse(8, 6)), impulse(8, 1));
    }

    #[test]
    fn shift_matches_matrix_definition() {
        let len = 6;
        let (l, k) = (2usize, 0.7);
        let c = |e: f64| Cplx::cis(2.0 * std::f64::consts::PI * e / len as f64);
        let mut pi = DMatrix::<Cplx>::zeros(len, len);
        let mut delta = DMatrix::<Cplx>::zeros(len, len);
        for n in 0..len {
            pi[((n + 1) % len, n)] = Cplx::new(1.0, 0.0);
            delta[(n, n)] = c(k * n as f64);
        }
        let mut pl = DMatrix::<Cplx>::identity(len, len);
        for _ in 0..l {
            pl = &pi * pl;
        }
        let dense = pl * delta;
        let op = TimeShift::new(l, k, len).unwrap().to_dense();
        assert!((dense.clone() - op).norm() < 1e-12);
        let x: Vec<Cplx> = (0..len).map(|i| Cplx::new(i as f64, 1.0 - i as f64)).collect();
        let adj = TimeShift::new(l, k, len).unwrap().apply_adjoint(&x);
        let want = dense.adjoint().apply(&x);
        assert!(distance(&adj, &want) < 1e-12);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(TimeShift::new(8, 0.0, 8).is_err());
        assert!(TimeShift::new(0, 8.0, 8).is_err());
        assert!(TimeShift::new(0, f64::NAN, 8).is_err());
    }
}
