//! Built-in functionals, addressable by name from configs:
//! `endpoint_affine`, `endpoint_quadratic`, `path_integral`, `running_sup`,
//! `neg_oriented_distance` and `psi_barrier` (the last two need a domain).
//!
//! All catalog entries ignore the second path argument, so they are
//! predictable in `v` trivially. Where the generator needs them they are
//! continuous and boundedness-preserving for the pair metric because each
//! reads the path only through its endpoint, its exact step integral, or
//! its pre-final supremum, all of which are 1-Lipschitz (or locally
//! Lipschitz) under the sup distance.

use std::sync::Arc;

use crate::domains::{Barrier, SmoothDomain};
use crate::error::Result;
use crate::paths::PathPair;

use super::PathFunctional;

/// `F(x_t) = <a, x(t)> + b`. With `a = e_i` this is a coordinate projection,
/// which the divided-difference derivatives reproduce exactly.
pub struct EndpointAffine {
    pub a: Vec<f64>,
    pub b: f64,
}

impl EndpointAffine {
    /// The coordinate projection `x -> x_i(t)`.
    pub fn coordinate(dim: usize, i: usize) -> Self {
        let mut a = vec![0.0; dim];
        a[i] = 1.0;
        EndpointAffine { a, b: 0.0 }
    }
}

impl PathFunctional for EndpointAffine {
    fn name(&self) -> &str {
        "endpoint_affine"
    }

    fn eval(&self, pair: &PathPair) -> Result<f64> {
        let x = pair.x().final_value();
        let mut acc = 0.0;
        for (ai, xi) in self.a.iter().zip(x) {
            acc += ai * xi;
        }
        Ok(acc + self.b)
    }
}

/// `F(x_t) = |x(t)|^2`.
pub struct EndpointQuadratic;

impl PathFunctional for EndpointQuadratic {
    fn name(&self) -> &str {
        "endpoint_quadratic"
    }

    fn eval(&self, pair: &PathPair) -> Result<f64> {
        Ok(pair.x().final_value().iter().map(|x| x * x).sum())
    }
}

/// The exact step-path integral of the coordinate sum,
/// `F(x_t) = int_0^t sum_i x_i(s) ds = sum_k sum_i x_i(t_k) (t_{k+1} - t_k)`.
/// The final instant has zero weight, so the vertical derivative vanishes
/// identically.
pub struct PathIntegral;

impl PathFunctional for PathIntegral {
    fn name(&self) -> &str {
        "path_integral"
    }

    fn eval(&self, pair: &PathPair) -> Result<f64> {
        let x = pair.x();
        let mut acc = 0.0;
        for k in 0..x.len() - 1 {
            let w = x.times()[k + 1] - x.times()[k];
            acc += x.sample(k).iter().sum::<f64>() * w;
        }
        Ok(acc)
    }
}

/// The pre-final running supremum `sup_{s in grid, s < t} |x(s)|`
/// (Euclidean norm); on a single-instant path it falls back to `|x(0)|`.
/// Ignores the final instant, so its vertical derivative vanishes.
pub struct RunningSup;

impl PathFunctional for RunningSup {
    fn name(&self) -> &str {
        "running_sup"
    }

    fn eval(&self, pair: &PathPair) -> Result<f64> {
        let x = pair.x();
        let upto = (x.len() - 1).max(1);
        Ok((0..upto)
            .map(|k| x.sample(k).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max))
    }
}

/// `F(x_t) = -b_K(x(t))`: the test functional of the boundary condition.
pub struct NegOrientedDistance {
    domain: Arc<dyn SmoothDomain>,
}

impl NegOrientedDistance {
    pub fn new(domain: Arc<dyn SmoothDomain>) -> Self {
        NegOrientedDistance { domain }
    }
}

impl PathFunctional for NegOrientedDistance {
    fn name(&self) -> &str {
        "neg_oriented_distance"
    }

    fn eval(&self, pair: &PathPair) -> Result<f64> {
        Ok(-self.domain.oriented_distance(pair.x().final_value()))
    }
}

/// `F(x_t) = Psi(x(t)) = -log g(x(t))`; errors outside the open domain.
pub struct PsiBarrier {
    barrier: Arc<Barrier>,
}

impl PsiBarrier {
    pub fn new(barrier: Arc<Barrier>) -> Self {
        PsiBarrier { barrier }
    }
}

impl PathFunctional for PsiBarrier {
    fn name(&self) -> &str {
        "psi_barrier"
    }

    fn eval(&self, pair: &PathPair) -> Result<f64> {
        self.barrier.psi(pair.x().final_value())
    }
}

/// `F(x_t) = f(t, x(t))` from a closure; the workhorse of the derivative
/// oracle tests (classical partial derivatives must be recovered).
pub struct TimeEndpoint<F> {
    name: String,
    f: F,
}

impl<F> TimeEndpoint<F>
where
    F: Fn(f64, &[f64]) -> f64 + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        TimeEndpoint {
            name: name.into(),
            f,
        }
    }
}

impl<F> PathFunctional for TimeEndpoint<F>
where
    F: Fn(f64, &[f64]) -> f64 + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn eval(&self, pair: &PathPair) -> Result<f64> {
        Ok((self.f)(pair.t_end(), pair.x().final_value()))
    }
}

pub const FUNCTIONAL_NAMES: &[&str] = &[
    "endpoint_affine",
    "endpoint_quadratic",
    "path_integral",
    "running_sup",
    "neg_oriented_distance",
    "psi_barrier",
];

/// Look up a catalog functional. `endpoint_affine` defaults to the first
/// coordinate projection; the domain-bound entries require `domain`.
pub fn functional_by_name(
    name: &str,
    dim: usize,
    domain: Option<Arc<dyn SmoothDomain>>,
) -> Result<Arc<dyn PathFunctional>> {
    use crate::error::CoreError;
    match name {
        "endpoint_affine" => Ok(Arc::new(EndpointAffine::coordinate(dim, 0))),
        "endpoint_quadratic" => Ok(Arc::new(EndpointQuadratic)),
        "path_integral" => Ok(Arc::new(PathIntegral)),
        "running_sup" => Ok(Arc::new(RunningSup)),
        "neg_oriented_distance" => {
            let d = domain.ok_or_else(|| {
                CoreError::InvalidConfig("neg_oriented_distance needs a domain".into())
            })?;
            Ok(Arc::new(NegOrientedDistance::new(d)))
        }
        "psi_barrier" => {
            let d = domain.ok_or_else(|| {
                CoreError::InvalidConfig("psi_barrier needs a domain".into())
            })?;
            Ok(Arc::new(PsiBarrier::new(Arc::new(Barrier::new(d)))))
        }
        other => Err(CoreError::InvalidConfig(format!(
            "unknown functional `{other}` (catalog: {FUNCTIONAL_NAMES:?})"
        ))),
    }
}
