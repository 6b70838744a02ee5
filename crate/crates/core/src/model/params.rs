use std::collections::BTreeMap;

use rand::Rng;

use crate::corpus::GenreLabel;
use crate::nn::{prefixed, BiLstmParams, LinearParams, ParamSet, Tensor};
use crate::roll::{INPUT_WIDTH, NUM_KEYS};

/// Recurrent layers in every genre branch.
pub const GENRE_LAYERS: usize = 3;
/// Interpretation units per direction; both directions together give 176.
pub const DEFAULT_INTERP_HIDDEN: usize = 88;
pub const DEFAULT_GENRE_HIDDEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub input: usize,
    pub interp_hidden: usize,
    pub genre_hidden: usize,
    pub output: usize,
}

impl ModelDims {
    pub fn new(interp_hidden: usize, genre_hidden: usize) -> Self {
        Self { input: INPUT_WIDTH, interp_hidden, genre_hidden, output: NUM_KEYS }
    }
}

impl Default for ModelDims {
    fn default() -> Self {
        Self::new(DEFAULT_INTERP_HIDDEN, DEFAULT_GENRE_HIDDEN)
    }
}

/// One genre branch: three stacked bidirectional LSTMs and a linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct GenreNetParams {
    pub layers: Vec<BiLstmParams>,
    pub head: LinearParams,
}

impl GenreNetParams {
    pub fn zeros(dims: &ModelDims) -> Self {
        let layers = (0..GENRE_LAYERS)
            .map(|i| {
                let input = if i == 0 { 2 * dims.interp_hidden } else { 2 * dims.genre_hidden };
                BiLstmParams::zeros(input, dims.genre_hidden)
            })
            .collect();
        Self { layers, head: LinearParams::zeros(2 * dims.genre_hidden, dims.output) }
    }

    pub fn init<R: Rng + ?Sized>(dims: &ModelDims, rng: &mut R) -> Self {
        let layers = (0..GENRE_LAYERS)
            .map(|i| {
                let input = if i == 0 { 2 * dims.interp_hidden } else { 2 * dims.genre_hidden };
                BiLstmParams::init(input, dims.genre_hidden, rng)
            })
            .collect();
        Self { layers, head: LinearParams::init(2 * dims.genre_hidden, dims.output, rng) }
    }
}

impl ParamSet for GenreNetParams {
    fn names(&self) -> Vec<String> {
        let mut n: Vec<String> =
            self.layers.iter().enumerate().flat_map(|(i, l)| prefixed(&format!("layer{i}"), l.names())).collect();
        n.extend(prefixed("head", self.head.names()));
        n
    }
    fn tensors(&self) -> Vec<&Tensor> {
        let mut t: Vec<&Tensor> = self.layers.iter().flat_map(|l| l.tensors()).collect();
        t.extend(self.head.tensors());
        t
    }
    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut t: Vec<&mut Tensor> = self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect();
        t.extend(self.head.tensors_mut());
        t
    }
}

/// The shared interpretation layer and one branch per genre. There is a
/// single copy of the interpretation weights, used by every branch.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleNetParams {
    pub interpretation: BiLstmParams,
    pub branches: BTreeMap<GenreLabel, GenreNetParams>,
}

impl StyleNetParams {
    pub fn zeros(dims: &ModelDims, genres: &[GenreLabel]) -> Self {
        Self {
            interpretation: BiLstmParams::zeros(dims.input, dims.interp_hidden),
            branches: genres.iter().map(|g| (g.clone(), GenreNetParams::zeros(dims))).collect(),
        }
    }

    /// Seeded initialization; genres are initialized in label order.
    pub fn init<R: Rng + ?Sized>(dims: &ModelDims, genres: &[GenreLabel], rng: &mut R) -> Self {
        let interpretation = BiLstmParams::init(dims.input, dims.interp_hidden, rng);
        let mut sorted = genres.to_vec();
        sorted.sort();
        sorted.dedup();
        let branches = sorted.into_iter().map(|g| (g, GenreNetParams::init(dims, rng))).collect();
        Self { interpretation, branches }
    }

    pub fn dims(&self) -> ModelDims {
        let b = self.branches.values().next();
        ModelDims {
            input: self.interpretation.input_size(),
            interp_hidden: self.interpretation.forward.hidden_size(),
            genre_hidden: b.map_or(0, |b| b.layers[0].forward.hidden_size()),
            output: b.map_or(0, |b| b.head.output_size()),
        }
    }

    pub fn genres(&self) -> Vec<GenreLabel> {
        self.branches.keys().cloned().collect()
    }

    /// Positions (in [`ParamSet`] order) of the tensors a step on `genre`
    /// trains: the interpretation layer and that genre's branch.
    pub fn active_indices(&self, genre: &GenreLabel) -> Vec<usize> {
        let shared = self.interpretation.tensors().len();
        let mut idx: Vec<usize> = (0..shared).collect();
        let mut offset = shared;
        for (g, branch) in &self.branches {
            let n = branch.tensors().len();
            if g == genre {
                idx.extend(offset..offset + n);
            }
            offset += n;
        }
        idx
    }
}

impl ParamSet for StyleNetParams {
    fn names(&self) -> Vec<String> {
        let mut n = prefixed("interpretation", self.interpretation.names());
        for (g, b) in &self.branches {
            n.extend(prefixed(&format!("branch.{g}"), b.names()));
        }
        n
    }
    fn tensors(&self) -> Vec<&Tensor> {
        let mut t = self.interpretation.tensors();
        for b in self.branches.values() {
            t.extend(b.tensors());
        }
        t
    }
    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut t = self.interpretation.tensors_mut();
        for b in self.branches.values_mut() {
            t.extend(b.tensors_mut());
        }
        t
    }
}
