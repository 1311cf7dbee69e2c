//! Encoder and classifier graphs in ONNX format, executed with tract.
//!
//! Graphs take `input_ids` and `attention_mask` (int64, `[batch, seq]`).
//! Shapes are made concrete per call: sequence length and batch size are both
//! padded to powers of two, and one optimized plan is cached per padded shape.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use tract_onnx::prelude::*;

use super::{Encoder, LayerStates, Matrix, TokenSequence, POOLED_LAYERS};
use super::wordpiece::MAX_SEQ_LEN;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

type Plan = Arc<TypedRunnableModel>;

const MIN_BUCKET: usize = 8;

fn bucket(len: usize) -> usize {
    len.next_power_of_two().clamp(MIN_BUCKET, MAX_SEQ_LEN.max(len))
}

struct Graph {
    path: PathBuf,
    model: InferenceModel,
    output_names: Vec<String>,
    batch_size: usize,
    plans: Mutex<HashMap<(usize, usize), Plan>>,
}

impl Graph {
    fn load(path: &Path, batch_size: usize) -> Result<Self> {
        let err = |e: TractError| Error::backend(path.display().to_string(), format!("{e:#}"));
        if !path.is_file() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let model = tract_onnx::onnx().model_for_path(path).map_err(err)?;
        let output_names = model
            .output_outlets()
            .map_err(err)?
            .iter()
            .map(|o| model.outlet_label(*o).unwrap_or_default().to_string())
            .collect();
        Ok(Graph {
            path: path.to_path_buf(),
            model,
            output_names,
            batch_size: batch_size.max(1),
            plans: Mutex::new(HashMap::new()),
        })
    }

    fn plan(&self, batch: usize, seq: usize) -> Result<Plan> {
        let mut plans = self.plans.lock().expect("plan cache poisoned");
        if let Some(p) = plans.get(&(batch, seq)) {
            return Ok(p.clone());
        }
        let err = |e: TractError| Error::backend(self.path.display().to_string(), format!("{e:#}"));
        let plan = self
            .model
            .clone()
            .with_input_fact(0, i64::fact([batch, seq]).into())
            .map_err(err)?
            .with_input_fact(1, i64::fact([batch, seq]).into())
            .map_err(err)?
            .into_optimized()
            .map_err(err)?
            .into_runnable()
            .map_err(err)?;
        plans.insert((batch, seq), plan.clone());
        Ok(plan)
    }

    /// Runs padded chunks of `seqs`, calling `emit` with each chunk's outputs.
    fn run<F>(&self, seqs: &[TokenSequence], pad_id: u32, mut emit: F) -> Result<()>
    where
        F: FnMut(&[TokenSequence], &TVec<TValue>) -> Result<()>,
    {
        for chunk in seqs.chunks(self.batch_size) {
            let longest = chunk.iter().map(|s| s.attention_length).max().unwrap_or(1);
            let b = chunk.len().next_power_of_two().min(self.batch_size);
            let s = bucket(longest);
            let mut ids = tract_ndarray::Array2::<i64>::from_elem((b, s), pad_id as i64);
            let mut mask = tract_ndarray::Array2::<i64>::zeros((b, s));
            for (i, seq) in chunk.iter().enumerate() {
                for (j, &t) in seq.tokens[..seq.attention_length].iter().enumerate() {
                    ids[(i, j)] = t as i64;
                    mask[(i, j)] = 1;
                }
            }
            // Filler rows get a one-token mask so softmax rows stay finite.
            for i in chunk.len()..b {
                mask[(i, 0)] = 1;
            }
            let outputs = self
                .plan(b, s)?
                .run(tvec!(Tensor::from(ids).into(), Tensor::from(mask).into()))
                .map_err(|e| Error::backend(self.path.display().to_string(), format!("{e:#}")))?;
            emit(chunk, &outputs)?;
        }
        Ok(())
    }

    fn output_index(&self, name: &str) -> Option<usize> {
        self.output_names.iter().position(|n| n == name)
    }
}

fn view<'a>(path: &Path, t: &'a TValue) -> Result<tract_ndarray::ArrayViewD<'a, f32>> {
    t.to_plain_array_view::<f32>()
        .map_err(|e| Error::backend(path.display().to_string(), format!("{e:#}")))
}

/// Encoder graph exposing hidden states as outputs `hidden_<k>`; the four
/// highest-numbered ones are used.
pub struct OnnxEncoder {
    graph: Graph,
    hidden_outputs: Vec<usize>,
    pad_id: u32,
    hidden_size: usize,
}

impl OnnxEncoder {
    pub fn load(path: &Path, pad_id: u32, batch_size: usize) -> Result<Self> {
        let graph = Graph::load(path, batch_size)?;
        let mut hidden: Vec<(u32, usize)> = graph
            .output_names
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.strip_prefix("hidden_")?.parse().ok().map(|k| (k, i)))
            .collect();
        hidden.sort();
        if hidden.len() < POOLED_LAYERS {
            return Err(Error::backend(
                path.display().to_string(),
                format!("expected at least {POOLED_LAYERS} hidden_<k> outputs, found {:?}", graph.output_names),
            ));
        }
        let hidden_outputs: Vec<usize> = hidden[hidden.len() - POOLED_LAYERS..].iter().map(|&(_, i)| i).collect();
        let mut enc = OnnxEncoder {
            graph,
            hidden_outputs,
            pad_id,
            hidden_size: 0,
        };
        // Probe the hidden size with a two-token sequence.
        let probe = TokenSequence {
            tokens: vec![pad_id, pad_id],
            attention_length: 2,
            original_text: String::new(),
            truncated: false,
        };
        let states: Vec<LayerStates<f32>> = enc.run(&[probe])?;
        enc.hidden_size = states[0].layers[0].cols();
        Ok(enc)
    }

    fn run<T: Scalar>(&self, batch: &[TokenSequence]) -> Result<Vec<LayerStates<T>>> {
        let mut out = Vec::with_capacity(batch.len());
        let path = &self.graph.path;
        self.graph.run(batch, self.pad_id, |chunk, outputs| {
            let views = self
                .hidden_outputs
                .iter()
                .map(|&i| view(path, &outputs[i]))
                .collect::<Result<Vec<_>>>()?;
            for (b, seq) in chunk.iter().enumerate() {
                let layers = views
                    .iter()
                    .map(|v| {
                        if v.ndim() != 3 {
                            return Err(Error::backend(path.display().to_string(), "hidden state is not rank 3"));
                        }
                        let d = v.shape()[2];
                        let data = (0..seq.attention_length)
                            .flat_map(|t| (0..d).map(move |k| (t, k)))
                            .map(|(t, k)| T::lit(v[[b, t, k]] as f64))
                            .collect();
                        Ok(Matrix::new(seq.attention_length, d, data))
                    })
                    .collect::<Result<Vec<_>>>()?;
                out.push(LayerStates { layers });
            }
            Ok(())
        })?;
        Ok(out)
    }
}

impl<T: Scalar> Encoder<T> for OnnxEncoder {
    fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    fn encode_batch(&self, batch: &[TokenSequence]) -> Result<Vec<LayerStates<T>>> {
        self.run(batch)
    }
}

/// Full classifier graph (encoder + dense head) with a `logits` output.
pub struct OnnxClassifier {
    graph: Graph,
    logits_output: usize,
    pad_id: u32,
}

impl OnnxClassifier {
    pub fn load(path: &Path, pad_id: u32, batch_size: usize) -> Result<Self> {
        let graph = Graph::load(path, batch_size)?;
        let logits_output = graph.output_index("logits").ok_or_else(|| {
            Error::backend(path.display().to_string(), format!("no `logits` output among {:?}", graph.output_names))
        })?;
        Ok(OnnxClassifier {
            graph,
            logits_output,
            pad_id,
        })
    }

    pub fn logits(&self, batch: &[TokenSequence]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(batch.len());
        let path = &self.graph.path;
        self.graph.run(batch, self.pad_id, |chunk, outputs| {
            let v = view(path, &outputs[self.logits_output])?;
            if v.ndim() != 2 {
                return Err(Error::backend(path.display().to_string(), "logits are not rank 2"));
            }
            for b in 0..chunk.len() {
                out.push((0..v.shape()[1]).map(|k| v[[b, k]] as f64).collect());
            }
            Ok(())
        })?;
        Ok(out)
    }
}
