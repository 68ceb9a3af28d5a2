//! WebAssembly bindings for the browser playground in `www/`.
//!
//! [`Playground`] holds the state and is plain Rust so it can be tested
//! natively; [`Demo`] is the thin `wasm-bindgen` wrapper the page talks to.

use serde::Serialize;
use svcluster::assignment::suggest_epsilon;
use svcluster::data::Shape;
use svcluster::{
    assign_clusters, cvi, train, AssignConfig, BudgetStrategy, ClusterSolution, Dataset, Error,
    KernelExpansion, KernelSpec, Result, TrainConfig,
};
use wasm_bindgen::prelude::*;

/// Training and assignment settings that work for a shape.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Preset {
    pub n: usize,
    pub gamma: f64,
    #[serde(rename = "C")]
    pub c: f64,
    /// 0 means no budget.
    pub budget: usize,
    pub max_steps: usize,
    pub stop_theta: f64,
    pub epsilon_quantile: f64,
}

pub fn preset(shape: Shape) -> Preset {
    match shape {
        Shape::Rings => Preset {
            n: 200,
            gamma: 8.0,
            c: 32.0,
            budget: 0,
            max_steps: 20_000,
            stop_theta: 0.0,
            epsilon_quantile: 0.1,
        },
        Shape::Moons => Preset {
            n: 100,
            gamma: 32.0,
            c: 32.0,
            budget: 0,
            max_steps: 100_000,
            stop_theta: 0.01,
            epsilon_quantile: 0.05,
        },
        Shape::Gauss3 | Shape::Gauss4 => Preset {
            n: 100,
            gamma: 2.0,
            c: 2.0,
            budget: 100,
            max_steps: 100_000,
            stop_theta: 0.01,
            epsilon_quantile: 0.7,
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainSummary {
    pub steps: usize,
    pub support_size: usize,
    pub w_norm: f64,
    /// Fraction of points with `f(x) ≥ 0`.
    pub inside: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterSummary {
    pub num_clusters: usize,
    pub epsilon: f64,
    pub equilibria: usize,
    pub boundary: usize,
    pub purity: Option<f64>,
    pub nmi: Option<f64>,
}

#[derive(Default)]
pub struct Playground {
    data: Option<Dataset>,
    model: Option<KernelExpansion>,
    solution: Option<ClusterSolution>,
}

impl Playground {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn generate(&mut self, shape: Shape, n: usize, seed: u64) -> Result<()> {
        self.data = Some(shape.generate(n, None, seed)?);
        self.model = None;
        self.solution = None;
        Ok(())
    }

    pub fn data(&self) -> Result<&Dataset> {
        self.data
            .as_ref()
            .ok_or_else(|| Error::InvalidState("generate a dataset first".into()))
    }

    pub fn model(&self) -> Result<&KernelExpansion> {
        self.model
            .as_ref()
            .ok_or_else(|| Error::InvalidState("train a model first".into()))
    }

    pub fn solution(&self) -> Option<&ClusterSolution> {
        self.solution.as_ref()
    }

    pub fn train(&mut self, cfg: &TrainConfig) -> Result<TrainSummary> {
        let data = self.data()?;
        let out = train(data, cfg)?;
        let inside = data
            .points()
            .map(|x| out.model.decision_value(x))
            .collect::<Result<Vec<_>>>()?
            .iter()
            .filter(|&&f| f >= 0.0)
            .count() as f64
            / data.len() as f64;
        let summary = TrainSummary {
            steps: out.trace.steps(),
            support_size: out.model.len(),
            w_norm: out.model.norm(),
            inside,
        };
        self.model = Some(out.model);
        self.solution = None;
        Ok(summary)
    }

    pub fn cluster(&mut self, epsilon_quantile: f64) -> Result<ClusterSummary> {
        let (data, model) = (self.data()?, self.model()?);
        let cfg = AssignConfig::with_epsilon(suggest_epsilon(model, data, epsilon_quantile)?);
        let sol = assign_clusters(model, data, &cfg)?;
        let truth = data.labels();
        let summary = ClusterSummary {
            num_clusters: sol.num_clusters,
            epsilon: sol.epsilon,
            equilibria: sol.num_equilibria(),
            boundary: sol.boundary_members.len(),
            purity: truth
                .map(|t| cvi::purity(&sol.labels, Some(t)))
                .transpose()?,
            nmi: truth.map(|t| cvi::nmi(&sol.labels, Some(t))).transpose()?,
        };
        self.solution = Some(sol);
        Ok(summary)
    }

    /// `f(x)` on a `cols × rows` lattice spanning the box, row-major from `y0`.
    pub fn decision_grid(
        &self,
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
        cols: usize,
        rows: usize,
    ) -> Result<Vec<f64>> {
        let model = self.model()?;
        if model.dim() != 2 {
            return Err(Error::InvalidInput(
                "the decision grid needs 2-D data".into(),
            ));
        }
        if cols < 2 || rows < 2 {
            return Err(Error::InvalidInput(
                "the grid needs at least 2 × 2 cells".into(),
            ));
        }
        let mut out = Vec::with_capacity(cols * rows);
        for r in 0..rows {
            let y = y0 + (y1 - y0) * r as f64 / (rows - 1) as f64;
            for c in 0..cols {
                let x = x0 + (x1 - x0) * c as f64 / (cols - 1) as f64;
                out.push(model.decision_value(&[x, y])?);
            }
        }
        Ok(out)
    }

    /// `[xmin, xmax, ymin, ymax]` of the data padded by `pad` on each side.
    pub fn bounds(&self, pad: f64) -> Result<[f64; 4]> {
        let data = self.data()?;
        let mut b = [
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        ];
        for p in data.points() {
            b[0] = b[0].min(p[0]);
            b[1] = b[1].max(p[0]);
            b[2] = b[2].min(p[1]);
            b[3] = b[3].max(p[1]);
        }
        Ok([b[0] - pad, b[1] + pad, b[2] - pad, b[3] + pad])
    }
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

fn parse_shape(shape: &str) -> std::result::Result<Shape, JsError> {
    shape.parse().map_err(js)
}

fn flatten<'a>(points: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    points.flat_map(|p| p.iter().copied()).collect()
}

fn to_json(value: &impl Serialize) -> std::result::Result<String, JsError> {
    serde_json::to_string(value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub struct Demo {
    inner: Playground,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Demo {
        Demo {
            inner: Playground::new(),
        }
    }

    /// JSON preset for `shape`.
    pub fn preset(shape: &str) -> std::result::Result<String, JsError> {
        to_json(&preset(parse_shape(shape)?))
    }

    pub fn generate(
        &mut self,
        shape: &str,
        n: usize,
        seed: u32,
    ) -> std::result::Result<(), JsError> {
        self.inner
            .generate(parse_shape(shape)?, n, seed.into())
            .map_err(js)
    }

    /// Interleaved `x, y` coordinates.
    pub fn points(&self) -> Vec<f64> {
        self.inner
            .data()
            .map(|d| flatten(d.points()))
            .unwrap_or_default()
    }

    pub fn truth(&self) -> Vec<u32> {
        self.inner
            .data()
            .ok()
            .and_then(|d| d.labels())
            .map(|l| l.iter().map(|&v| v as u32).collect())
            .unwrap_or_default()
    }

    pub fn bounds(&self, pad: f64) -> std::result::Result<Vec<f64>, JsError> {
        self.inner.bounds(pad).map(|b| b.to_vec()).map_err(js)
    }

    /// Trains and returns a JSON summary. A budget of 0 trains without one.
    #[allow(clippy::too_many_arguments)]
    pub fn train(
        &mut self,
        gamma: f64,
        c: f64,
        budget: usize,
        strategy: &str,
        max_steps: usize,
        stop_theta: f64,
        seed: u32,
    ) -> std::result::Result<String, JsError> {
        let mut cfg = TrainConfig::new(KernelSpec::rbf(gamma).map_err(js)?, c);
        cfg.budget = (budget > 0).then_some(budget);
        cfg.strategy = strategy.parse::<BudgetStrategy>().map_err(js)?;
        cfg.max_steps = max_steps;
        cfg.stop_theta = stop_theta;
        cfg.seed = seed.into();
        cfg.validate().map_err(js)?;
        to_json(&self.inner.train(&cfg).map_err(js)?)
    }

    /// Support point coordinates, interleaved.
    pub fn support(&self) -> Vec<f64> {
        self.inner
            .model()
            .map(|m| flatten(m.support().iter().map(|t| t.x.as_slice())))
            .unwrap_or_default()
    }

    #[wasm_bindgen(js_name = decisionGrid)]
    pub fn decision_grid(
        &self,
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
        cols: usize,
        rows: usize,
    ) -> std::result::Result<Vec<f64>, JsError> {
        self.inner
            .decision_grid(x0, x1, y0, y1, cols, rows)
            .map_err(js)
    }

    /// Clusters with ε set to the given quantile of |f| and returns a JSON summary.
    pub fn cluster(&mut self, epsilon_quantile: f64) -> std::result::Result<String, JsError> {
        to_json(&self.inner.cluster(epsilon_quantile).map_err(js)?)
    }

    pub fn labels(&self) -> Vec<u32> {
        self.inner
            .solution()
            .map(|s| s.labels.iter().map(|&v| v as u32).collect())
            .unwrap_or_default()
    }

    /// Equilibrium coordinates, interleaved.
    pub fn equilibria(&self) -> Vec<f64> {
        self.inner
            .solution()
            .map(|s| flatten(s.equilibria.iter().map(Vec::as_slice)))
            .unwrap_or_default()
    }
}

impl Default for Demo {
    fn default() -> Self {
        Self::new()
    }
}
