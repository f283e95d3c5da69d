//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Point clouds cross the boundary as flat `Float64Array`s laid out
//! `[x0, y0, x1, y1, ...]`.

pub mod demo;

use ddr_core::datagen::Shape;
use ddr_core::{DdrError, Matrix};
use wasm_bindgen::prelude::*;

use demo::{DependenceSample, EmbedSession, FlowSession, Relation, Start};

fn js_err(e: DdrError) -> JsError {
    JsError::new(&e.to_string())
}

fn flat(m: &Matrix) -> Vec<f64> {
    m.as_slice().to_vec()
}

/// Particle flow from a chosen 2-D start towards N(0, I).
#[wasm_bindgen]
pub struct FlowDemo {
    inner: FlowSession,
}

#[wasm_bindgen]
impl FlowDemo {
    /// `start` is `shifted`, `mixture` or `ring`.
    #[wasm_bindgen(constructor)]
    pub fn new(start: &str, n: usize, step_size: f64, seed: u32) -> Result<FlowDemo, JsError> {
        let start: Start = start.parse().map_err(js_err)?;
        let inner = FlowSession::new(start, n, step_size, seed as u64).map_err(js_err)?;
        Ok(FlowDemo { inner })
    }

    pub fn step(&mut self, k: usize) -> Result<(), JsError> {
        self.inner.step(k).map_err(js_err)
    }

    pub fn points(&self) -> Vec<f64> {
        flat(self.inner.particles())
    }

    #[wasm_bindgen(getter)]
    pub fn steps(&self) -> usize {
        self.inner.steps_taken()
    }

    /// `[mean_x, mean_y, var_x, cov_xy, var_y, mardia, disc_loss]`.
    pub fn stats(&self) -> Vec<f64> {
        let m = demo::moments(self.inner.particles());
        vec![m.mean[0], m.mean[1], m.cov[0], m.cov[1], m.cov[2], m.mardia, self.inner.disc_loss()]
    }
}

/// A sample from one of the named relations with its dependence measures.
#[wasm_bindgen]
pub struct DependenceView {
    inner: DependenceSample,
}

#[wasm_bindgen]
impl DependenceView {
    pub fn points(&self) -> Vec<f64> {
        self.inner.x.iter().zip(&self.inner.y).flat_map(|(a, b)| [*a, *b]).collect()
    }

    #[wasm_bindgen(getter)]
    pub fn dcorr(&self) -> f64 {
        self.inner.dcorr
    }

    #[wasm_bindgen(getter)]
    pub fn pearson(&self) -> f64 {
        self.inner.pearson
    }
}

/// `relation` is `linear`, `quadratic`, `circle`, `sine` or `independent`.
#[wasm_bindgen(js_name = sampleDependence)]
pub fn sample_dependence(relation: &str, n: usize, noise: f64, seed: u32) -> Result<DependenceView, JsError> {
    let rel: Relation = relation.parse().map_err(js_err)?;
    let inner = demo::dependence_sample(rel, n, noise, seed as u64).map_err(js_err)?;
    Ok(DependenceView { inner })
}

/// DDR on projected circles or moons, trained one epoch per call.
#[wasm_bindgen]
pub struct EmbedDemo {
    inner: EmbedSession,
}

#[wasm_bindgen]
impl EmbedDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(shape: &str, n_per_class: usize, ambient_dim: usize, seed: u32) -> Result<EmbedDemo, JsError> {
        let shape: Shape = shape.parse().map_err(js_err)?;
        let inner = EmbedSession::new(shape, n_per_class, ambient_dim, seed as u64).map_err(js_err)?;
        Ok(EmbedDemo { inner })
    }

    /// Runs one epoch; returns `[dcov_term, match_term, disc_loss]`.
    pub fn epoch(&mut self) -> Result<Vec<f64>, JsError> {
        let r = self.inner.epoch().map_err(js_err)?;
        Ok(vec![r.dcov_term, r.match_term, r.disc_loss])
    }

    #[wasm_bindgen(getter)]
    pub fn epochs(&self) -> usize {
        self.inner.epochs_done()
    }

    /// Held-out features, flat.
    pub fn points(&self) -> Result<Vec<f64>, JsError> {
        Ok(flat(&self.inner.test_features().map_err(js_err)?.0))
    }

    pub fn labels(&self) -> Result<Vec<u32>, JsError> {
        let (_, labels) = self.inner.test_features().map_err(js_err)?;
        Ok(labels.iter().map(|&l| l as u32).collect())
    }

    pub fn accuracy(&self) -> Result<f64, JsError> {
        self.inner.test_accuracy().map_err(js_err)
    }
}
