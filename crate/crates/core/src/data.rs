//! Problem data on the base domain (desired state).

use std::fmt;
use std::sync::Arc;

use crate::assembly::{assemble_trace_load, TraceData};
use crate::base_mesh::BaseGrid;

pub type PointFn = dyn Fn([f64; 2]) -> f64 + Send + Sync;

#[derive(Clone)]
pub enum Data {
    Constant(f64),
    Function(Arc<PointFn>),
}

impl fmt::Debug for Data {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Data::Constant(c) => write!(f, "Constant({c})"),
            Data::Function(_) => write!(f, "Function(..)"),
        }
    }
}

impl Data {
    pub fn function(f: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static) -> Self {
        Data::Function(Arc::new(f))
    }

    pub fn eval(&self, p: [f64; 2]) -> f64 {
        match self {
            Data::Constant(c) => *c,
            Data::Function(f) => f(p),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Data::Constant(c) => Some(*c),
            Data::Function(_) => None,
        }
    }

    /// `(u, phi_v)_{L2(Omega)}` for every base vertex.
    pub fn load<G: BaseGrid>(&self, base: &G) -> Vec<f64> {
        match self {
            Data::Constant(c) => {
                let ones = vec![*c; base.n_cells()];
                assemble_trace_load(base, TraceData::Cellwise(&ones))
            }
            Data::Function(f) => assemble_trace_load(base, TraceData::Function(f.as_ref())),
        }
    }
}
