//! Cadlag step paths and the path operations they support.
//!
//! A [`CadlagPath`] is a right-continuous piecewise-constant function on
//! `[0, t_end]` with values in `R^n`, stored as a strictly increasing sample
//! grid and one value per sample instant:
//!
//! ```text
//! x(s) = values[k]   for s in [times[k], times[k+1]),    x(t_end) = last value.
//! ```
//!
//! This is the exact class carried by bumped test paths in functional
//! calculus, so restriction, flat extension, endpoint bumps, concatenation,
//! sup norms and the pair metric `d_infinity` are all evaluated exactly on
//! the sample grids (grids need not be uniform; operations merge grids as
//! needed). A simulated continuous trajectory is represented by its grid
//! skeleton; the discretization error belongs to the simulator, not to this
//! module.
//!
//! Paths are immutable once constructed: every operation returns a new path,
//! so values can be shared freely across threads.

use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{CoreError, Result};

/// Componentwise symmetry tolerance for matrix-valued second arguments.
const PAIR_SYMMETRY_TOL: f64 = 1e-12;

/// A right-continuous piecewise-constant path on `[0, t_end]` with values in `R^n`.
#[derive(Debug, Clone)]
pub struct CadlagPath {
    times: Vec<f64>,
    /// Row-major sample values, `times.len() * dim` entries.
    data: Vec<f64>,
    dim: usize,
}

impl CadlagPath {
    /// Build a path from `(time, value)` samples.
    ///
    /// Requires a nonempty grid starting at exactly `0.0`, strictly increasing
    /// times, and equal-dimension values.
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() {
            return Err(CoreError::InvalidPath("empty sample grid".into()));
        }
        if times.len() != values.len() {
            return Err(CoreError::InvalidPath(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(CoreError::InvalidPath(format!(
                "first sample instant must be 0, got {}",
                times[0]
            )));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(CoreError::InvalidPath(format!(
                    "sample instants not strictly increasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        let dim = values[0].len();
        if dim == 0 {
            return Err(CoreError::InvalidPath("zero-dimensional values".into()));
        }
        let mut data = Vec::with_capacity(times.len() * dim);
        for v in &values {
            if v.len() != dim {
                return Err(CoreError::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            data.extend_from_slice(v);
        }
        if !times.iter().all(|t| t.is_finite()) || !data.iter().all(|x| x.is_finite()) {
            return Err(CoreError::InvalidPath("non-finite sample".into()));
        }
        Ok(CadlagPath { times, data, dim })
    }

    /// A single-instant path `{(0, value)}` on `[0, 0]`.
    pub fn point(value: &[f64]) -> Result<Self> {
        CadlagPath::new(vec![0.0], vec![value.to_vec()])
    }

    /// A constant path on `[0, t_end]`.
    pub fn constant(value: &[f64], t_end: f64) -> Result<Self> {
        if t_end < 0.0 {
            return Err(CoreError::NegativeDuration(t_end));
        }
        if t_end == 0.0 {
            return CadlagPath::point(value);
        }
        CadlagPath::new(vec![0.0, t_end], vec![value.to_vec(), value.to_vec()])
    }

    pub(crate) fn from_flat(times: Vec<f64>, data: Vec<f64>, dim: usize) -> Self {
        debug_assert_eq!(times.len() * dim, data.len());
        CadlagPath { times, data, dim }
    }

    /// Append a sample; `time` must exceed the current final instant.
    /// Crate-internal: used by simulators that grow a path step by step.
    pub(crate) fn push(&mut self, time: f64, value: &[f64]) {
        debug_assert!(time > self.t_end());
        debug_assert_eq!(value.len(), self.dim);
        self.times.push(time);
        self.data.extend_from_slice(value);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the grid always holds at least the sample at 0
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// The value at grid index `k`.
    pub fn sample(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    /// The final value `x(t_end)`.
    pub fn final_value(&self) -> &[f64] {
        self.sample(self.len() - 1)
    }

    /// Index of the grid segment containing `s`: largest `k` with `times[k] <= s`.
    fn segment_index(&self, s: f64) -> usize {
        self.times.partition_point(|&t| t <= s) - 1
    }

    /// Right-continuous evaluation `x(s)` for `s` in `[0, t_end]`.
    pub fn value_at(&self, s: f64) -> Result<&[f64]> {
        if !(0.0..=self.t_end()).contains(&s) {
            return Err(CoreError::TimeOutOfDomain {
                time: s,
                t_end: self.t_end(),
            });
        }
        Ok(self.sample(self.segment_index(s)))
    }

    /// Left limit `x(s-)`; at `s = 0` this is `x(0)`.
    pub fn left_limit_at(&self, s: f64) -> Result<&[f64]> {
        if !(0.0..=self.t_end()).contains(&s) {
            return Err(CoreError::TimeOutOfDomain {
                time: s,
                t_end: self.t_end(),
            });
        }
        // Largest index with times[k] < s; the step value is constant on
        // [times[k], s) so it is the left limit.
        let k = self.times.partition_point(|&t| t < s);
        Ok(self.sample(k.saturating_sub(1)))
    }

    /// The restriction `x_t` to `[0, t]`; inserts a sample at `t` if absent.
    pub fn restrict(&self, t: f64) -> Result<CadlagPath> {
        if !(0.0..=self.t_end()).contains(&t) {
            return Err(CoreError::TimeOutOfDomain {
                time: t,
                t_end: self.t_end(),
            });
        }
        let keep = self.times.partition_point(|&u| u <= t);
        let mut times = self.times[..keep].to_vec();
        let mut data = self.data[..keep * self.dim].to_vec();
        if *times.last().unwrap() < t {
            let v = self.sample(keep - 1).to_vec();
            times.push(t);
            data.extend_from_slice(&v);
        }
        Ok(CadlagPath::from_flat(times, data, self.dim))
    }

    /// The flat extension `x_{t,delta}`: equal to `x` on `[0, t_end)` and to
    /// the final value on `[t_end, t_end + delta]`.
    pub fn horizontal_extend(&self, delta: f64) -> Result<CadlagPath> {
        if delta < 0.0 || !delta.is_finite() {
            return Err(CoreError::NegativeDuration(delta));
        }
        if delta == 0.0 {
            return Ok(self.clone());
        }
        let mut out = self.clone();
        let last = out.final_value().to_vec();
        out.times.push(out.t_end() + delta);
        out.data.extend_from_slice(&last);
        Ok(out)
    }

    /// The endpoint bump `x_t^e`: equal to `x` on `[0, t_end)`, final value
    /// shifted by `e`. Only the final instant is touched.
    pub fn vertical_bump(&self, e: &[f64]) -> Result<CadlagPath> {
        if e.len() != self.dim {
            return Err(CoreError::DimensionMismatch {
                expected: self.dim,
                got: e.len(),
            });
        }
        let mut out = self.clone();
        let n = out.data.len();
        for (slot, de) in out.data[n - self.dim..].iter_mut().zip(e) {
            *slot += de;
        }
        Ok(out)
    }

    /// Concatenation: `head` on `[0, head.t_end)`, `tail` on
    /// `[head.t_end, tail.t_end]`.
    pub fn concat(head: &CadlagPath, tail: &CadlagPath) -> Result<CadlagPath> {
        if head.dim != tail.dim {
            return Err(CoreError::DimensionMismatch {
                expected: head.dim,
                got: tail.dim,
            });
        }
        let t_switch = head.t_end();
        if t_switch > tail.t_end() {
            return Err(CoreError::IncompatiblePaths(format!(
                "head ends at {} after tail end {}",
                t_switch,
                tail.t_end()
            )));
        }
        let keep = head.times.partition_point(|&u| u < t_switch);
        let mut times = head.times[..keep].to_vec();
        let mut data = head.data[..keep * head.dim].to_vec();
        // Value on [t_switch, ...) comes from the tail; make sure a sample
        // sits exactly at the switch instant.
        let from = tail.times.partition_point(|&u| u < t_switch);
        if tail.times.get(from) != Some(&t_switch) {
            times.push(t_switch);
            data.extend_from_slice(tail.value_at(t_switch)?);
        }
        times.extend_from_slice(&tail.times[from..]);
        data.extend_from_slice(&tail.data[from * tail.dim..]);
        Ok(CadlagPath::from_flat(times, data, head.dim))
    }

    /// `sup_{0 <= s <= t_end} |x(s)|` (Euclidean norm); exact for step paths.
    pub fn sup_norm(&self) -> f64 {
        (0..self.len())
            .map(|k| euclidean_norm(self.sample(k)))
            .fold(0.0, f64::max)
    }

    /// Euclidean norm of the final value.
    pub fn final_norm(&self) -> f64 {
        euclidean_norm(self.final_value())
    }

    /// Merged, deduplicated union of both sample grids (restricted to the
    /// shorter of the two domains if they differ).
    pub fn union_grid(&self, other: &CadlagPath) -> Vec<f64> {
        let mut grid = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        while i < self.times.len() || j < other.times.len() {
            let a = self.times.get(i).copied().unwrap_or(f64::INFINITY);
            let b = other.times.get(j).copied().unwrap_or(f64::INFINITY);
            let t = a.min(b);
            if a == t {
                i += 1;
            }
            if b == t {
                j += 1;
            }
            grid.push(t);
        }
        grid
    }

    /// Functional equality: same domain, same dimension, equal values at
    /// every instant of the union grid (bit-exact comparison).
    fn functionally_equal(&self, other: &CadlagPath) -> bool {
        if self.dim != other.dim || self.t_end() != other.t_end() {
            return false;
        }
        self.union_grid(other).iter().all(|&t| {
            let a = self.sample(self.segment_index(t));
            let b = other.sample(other.segment_index(t));
            a == b
        })
    }

    /// Serialize as CSV with header `time,c0,c1,...`, one row per sample.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        write!(w, "time")?;
        for c in 0..self.dim {
            write!(w, ",c{c}")?;
        }
        writeln!(w)?;
        for k in 0..self.len() {
            write!(w, "{}", self.times[k])?;
            for x in self.sample(k) {
                write!(w, ",{x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Parse the CSV format written by [`CadlagPath::write_csv`]; validates
    /// the header and monotone times via the usual constructor checks.
    pub fn read_csv<R: Read>(r: R) -> Result<CadlagPath> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| CoreError::CsvFormat("empty input".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.first() != Some(&"time") || cols.len() < 2 {
            return Err(CoreError::CsvFormat(format!("bad header `{header}`")));
        }
        for (i, c) in cols[1..].iter().enumerate() {
            if *c != format!("c{i}") {
                return Err(CoreError::CsvFormat(format!("bad header column `{c}`")));
            }
        }
        let dim = cols.len() - 1;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != dim + 1 {
                return Err(CoreError::CsvFormat(format!(
                    "row {}: expected {} fields, got {}",
                    lineno + 2,
                    dim + 1,
                    fields.len()
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| CoreError::CsvFormat(format!("row {}: {e}", lineno + 2)))
            };
            times.push(parse(fields[0])?);
            values.push(fields[1..].iter().map(|s| parse(s)).collect::<Result<Vec<_>>>()?);
        }
        CadlagPath::new(times, values)
    }
}

impl PartialEq for CadlagPath {
    /// Equality of the represented functions, not of the sample grids:
    /// `{(0,1),(1,1),(2,3)}` equals `{(0,1),(2,3)}`.
    fn eq(&self, other: &Self) -> bool {
        self.functionally_equal(other)
    }
}

pub(crate) fn euclidean_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `sup_{0<=r<=t_end} |a(r) - b(r)|` over the union grid; domains must agree.
pub(crate) fn sup_distance(a: &CadlagPath, b: &CadlagPath) -> f64 {
    sup_distance_on(&a.union_grid(b), a, b)
}

fn sup_distance_on(grid: &[f64], a: &CadlagPath, b: &CadlagPath) -> f64 {
    let mut sup: f64 = 0.0;
    for &t in grid {
        let xa = a.sample(a.segment_index(t));
        let xb = b.sample(b.segment_index(t));
        let d2: f64 = xa.iter().zip(xb).map(|(p, q)| (p - q) * (p - q)).sum();
        sup = sup.max(d2.sqrt());
    }
    sup
}

/// A pair `(x, v)` of paths on a common time interval: the state path in
/// `R^n` and a second argument with values in symmetric `n x n` matrices,
/// stored flattened row-major (so `v.dim == n^2`).
#[derive(Debug, Clone, PartialEq)]
pub struct PathPair {
    x: CadlagPath,
    v: CadlagPath,
}

impl PathPair {
    pub fn new(x: CadlagPath, v: CadlagPath) -> Result<Self> {
        if x.t_end() != v.t_end() {
            return Err(CoreError::IncompatiblePaths(format!(
                "state path ends at {}, second argument at {}",
                x.t_end(),
                v.t_end()
            )));
        }
        let n = x.dim();
        if v.dim() != n * n {
            return Err(CoreError::DimensionMismatch {
                expected: n * n,
                got: v.dim(),
            });
        }
        for k in 0..v.len() {
            let m = v.sample(k);
            for i in 0..n {
                for j in (i + 1)..n {
                    if (m[i * n + j] - m[j * n + i]).abs() > PAIR_SYMMETRY_TOL {
                        return Err(CoreError::InvalidPath(format!(
                            "second-argument sample {k} asymmetric at ({i},{j})"
                        )));
                    }
                }
            }
        }
        Ok(PathPair { x, v })
    }

    /// Pair a state path with an identically-zero second argument.
    pub fn with_zero_v(x: CadlagPath) -> Self {
        let n = x.dim();
        let zeros = vec![0.0; n * n];
        let v = CadlagPath::from_flat(
            x.times().to_vec(),
            zeros.repeat(x.len()),
            n * n,
        );
        PathPair { x, v }
    }

    pub fn x(&self) -> &CadlagPath {
        &self.x
    }

    pub fn v(&self) -> &CadlagPath {
        &self.v
    }

    pub fn t_end(&self) -> f64 {
        self.x.t_end()
    }

    pub fn state_dim(&self) -> usize {
        self.x.dim()
    }

    pub fn restrict(&self, t: f64) -> Result<PathPair> {
        Ok(PathPair {
            x: self.x.restrict(t)?,
            v: self.v.restrict(t)?,
        })
    }

    pub fn horizontal_extend(&self, delta: f64) -> Result<PathPair> {
        Ok(PathPair {
            x: self.x.horizontal_extend(delta)?,
            v: self.v.horizontal_extend(delta)?,
        })
    }

    /// Bump only the state path's final value.
    pub fn vertical_bump(&self, e: &[f64]) -> Result<PathPair> {
        Ok(PathPair {
            x: self.x.vertical_bump(e)?,
            v: self.v.clone(),
        })
    }

    /// Append a sample to both components. Crate-internal: used when growing
    /// a prefix pair step by step (skips the constructor's full revalidation).
    pub(crate) fn push(&mut self, time: f64, x_value: &[f64], v_value: &[f64]) {
        self.x.push(time, x_value);
        self.v.push(time, v_value);
    }

    /// Replace the final value of `v` by its left limit (the pair `(x, v_{t-})`).
    pub fn with_predictable_v(&self) -> PathPair {
        let left = self.v.left_limit_at(self.v.t_end()).unwrap().to_vec();
        let mut v = self.v.clone();
        let n = v.data.len();
        let d = v.dim;
        v.data[n - d..].copy_from_slice(&left);
        PathPair { x: self.x.clone(), v }
    }
}

/// The distance between two path pairs, the first of which may live on a
/// shorter time interval:
///
/// ```text
/// d((x,v),(x',v')) = sup |x_{t,h}(r) - x'(r)| + sup |v_{t,h}(r) - v'(r)| + h,
/// ```
///
/// with `h = b.t_end - a.t_end >= 0` and both sups over `[0, b.t_end]`,
/// evaluated exactly on the union of the sample grids. The roles are
/// asymmetric by definition: the shorter pair is flat-extended to match the
/// longer. Call with the shorter pair first; on pairs of equal `t_end` this
/// is a metric.
pub fn d_infinity(a: &PathPair, b: &PathPair) -> Result<f64> {
    let h = b.t_end() - a.t_end();
    if h < 0.0 {
        return Err(CoreError::IncompatiblePaths(format!(
            "first pair ends at {} after second pair end {}; swap the arguments",
            a.t_end(),
            b.t_end()
        )));
    }
    if a.state_dim() != b.state_dim() {
        return Err(CoreError::DimensionMismatch {
            expected: b.state_dim(),
            got: a.state_dim(),
        });
    }
    let ax = a.x.horizontal_extend(h)?;
    let av = a.v.horizontal_extend(h)?;
    let sup_x = sup_distance_on(&ax.union_grid(&b.x), &ax, &b.x);
    let sup_v = sup_distance_on(&av.union_grid(&b.v), &av, &b.v);
    Ok(sup_x + sup_v + h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(samples: &[(f64, f64)]) -> CadlagPath {
        CadlagPath::new(
            samples.iter().map(|s| s.0).collect(),
            samples.iter().map(|s| vec![s.1]).collect(),
        )
        .unwrap()
    }

    fn pair1(samples: &[(f64, f64)]) -> PathPair {
        PathPair::with_zero_v(path(samples))
    }

    #[test]
    fn right_continuous_evaluation() {
        let p = path(&[(0.0, 1.0), (1.0, 3.0)]);
        assert_eq!(p.value_at(0.5).unwrap(), &[1.0]);
        assert_eq!(p.value_at(1.0).unwrap(), &[3.0]);
        assert_eq!(p.value_at(0.0).unwrap(), &[1.0]);
        assert!(p.value_at(1.5).is_err());
        assert!(p.value_at(-0.1).is_err());
    }

    #[test]
    fn left_limits() {
        let p = path(&[(0.0, 1.0), (1.0, 3.0)]);
        assert_eq!(p.left_limit_at(1.0).unwrap(), &[1.0]);
        assert_eq!(p.left_limit_at(0.0).unwrap(), &[1.0]);
        assert_eq!(p.left_limit_at(0.5).unwrap(), &[1.0]);
    }

    #[test]
    fn restriction() {
        let p = CadlagPath::new(vec![0.0, 1.0, 2.0], vec![vec![1.0], vec![3.0], vec![7.0]]).unwrap();
        assert_eq!(p.restrict(2.0).unwrap(), p);
        let r = p.restrict(0.5).unwrap();
        assert_eq!(r.t_end(), 0.5);
        assert_eq!(r.times(), &[0.0, 0.5]);
        assert_eq!(r.value_at(0.5).unwrap(), &[1.0]);
        // Restriction composes.
        assert_eq!(
            p.restrict(1.5).unwrap().restrict(1.0).unwrap(),
            p.restrict(1.0).unwrap()
        );
        assert!(p.restrict(2.5).is_err());
    }

    #[test]
    fn horizontal_extension() {
        let p = path(&[(0.0, 1.0), (1.0, 3.0)]);
        let e = p.horizontal_extend(0.5).unwrap();
        assert_eq!(e.t_end(), 1.5);
        assert_eq!(e.value_at(1.25).unwrap(), &[3.0]);
        assert_eq!(p.horizontal_extend(0.0).unwrap(), p);
        // Flat extensions compose (functional equality).
        let ab = p.horizontal_extend(0.25).unwrap().horizontal_extend(0.25).unwrap();
        assert_eq!(ab, p.horizontal_extend(0.5).unwrap());
        // Mutually inverse with restriction on the flat segment.
        assert_eq!(e.restrict(p.t_end()).unwrap(), p);
        assert!(p.horizontal_extend(-0.1).is_err());
    }

    #[test]
    fn vertical_bump_touches_only_final_instant() {
        let p = path(&[(0.0, 1.0), (1.0, 3.0)]);
        let b = p.vertical_bump(&[0.5]).unwrap();
        assert_eq!(b.final_value(), &[3.5]);
        assert_eq!(b.value_at(0.5).unwrap(), &[1.0]);
        assert_eq!(
            b.left_limit_at(b.t_end()).unwrap(),
            p.left_limit_at(p.t_end()).unwrap()
        );
        assert_eq!(p.vertical_bump(&[0.0]).unwrap(), p);
        assert!(p.vertical_bump(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn concatenation() {
        let head = CadlagPath::new(vec![0.0, 1.0], vec![vec![5.0], vec![5.0]]).unwrap();
        let tail = CadlagPath::new(vec![0.0, 1.0, 2.0], vec![vec![0.0], vec![7.0], vec![9.0]]).unwrap();
        let c = CadlagPath::concat(&head, &tail).unwrap();
        assert_eq!(c.t_end(), 2.0);
        assert_eq!(c.value_at(0.5).unwrap(), &[5.0]);
        assert_eq!(c.value_at(1.0).unwrap(), &[7.0]);
        // Self-concatenation identities.
        let p = path(&[(0.0, 1.0), (1.0, 3.0)]);
        assert_eq!(CadlagPath::concat(&p, &p).unwrap(), p);
        let r = tail.restrict(1.0).unwrap();
        assert_eq!(CadlagPath::concat(&r, &tail).unwrap(), tail);
        // Head longer than tail is an error.
        assert!(CadlagPath::concat(&tail, &head).is_err());
    }

    #[test]
    fn sup_norm_is_exact_on_samples() {
        let p = CadlagPath::new(vec![0.0], vec![vec![3.0, 4.0]]).unwrap();
        assert_eq!(p.sup_norm(), 5.0);
        let q = path(&[(0.0, 1.0), (1.0, -2.0)]);
        assert_eq!(q.sup_norm(), 2.0);
        let bumped = q.vertical_bump(&[0.75]).unwrap();
        assert!(bumped.sup_norm() <= q.sup_norm() + 0.75 + 1e-15);
    }

    #[test]
    fn d_infinity_basics() {
        let a = pair1(&[(0.0, 1.0), (1.0, 3.0)]);
        assert_eq!(d_infinity(&a, &a).unwrap(), 0.0);

        // Pure flat extension: only the +h term survives.
        let b = a.horizontal_extend(0.5).unwrap();
        assert_eq!(d_infinity(&a, &b).unwrap(), 0.5);

        // Constant 0 vs constant 1 on the same interval.
        let z = pair1(&[(0.0, 0.0), (1.0, 0.0)]);
        let o = pair1(&[(0.0, 1.0), (1.0, 1.0)]);
        assert_eq!(d_infinity(&z, &o).unwrap(), 1.0);

        // Longer-first is rejected.
        assert!(d_infinity(&b, &a).is_err());
    }

    #[test]
    fn pair_symmetry_is_validated() {
        let x = path(&[(0.0, 1.0), (1.0, 2.0)]);
        let x2 = CadlagPath::new(
            vec![0.0, 1.0],
            vec![vec![1.0, 0.0], vec![2.0, 0.0]],
        )
        .unwrap();
        let v_bad = CadlagPath::new(
            vec![0.0, 1.0],
            vec![vec![1.0, 0.5, -0.5, 2.0], vec![1.0, 0.0, 0.0, 1.0]],
        )
        .unwrap();
        assert!(PathPair::new(x2, v_bad).is_err());
        // Scalar paths: v is 1x1, always symmetric.
        let v = path(&[(0.0, 0.5), (1.0, 0.25)]);
        assert!(PathPair::new(x, v).is_ok());
    }

    #[test]
    fn predictable_substitution_replaces_final_v() {
        let x = path(&[(0.0, 1.0), (1.0, 2.0)]);
        let v = path(&[(0.0, 0.5), (1.0, 0.25)]);
        let pair = PathPair::new(x, v).unwrap();
        let p = pair.with_predictable_v();
        assert_eq!(p.v().final_value(), &[0.5]);
        assert_eq!(p.v().value_at(0.5).unwrap(), &[0.5]);
        assert_eq!(p.x(), pair.x());
    }

    #[test]
    fn csv_round_trip() {
        let p = CadlagPath::new(
            vec![0.0, 0.5, 2.0],
            vec![vec![1.0, -2.0], vec![0.125, 3.5], vec![7.0, 0.0]],
        )
        .unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let q = CadlagPath::read_csv(&buf[..]).unwrap();
        assert_eq!(p.times(), q.times());
        assert_eq!(p, q);

        let bad = "time,c0\n1.0,2.0\n0.5,1.0\n";
        assert!(CadlagPath::read_csv(bad.as_bytes()).is_err());
        let bad_header = "t,c0\n0.0,1.0\n";
        assert!(CadlagPath::read_csv(bad_header.as_bytes()).is_err());
    }
}
