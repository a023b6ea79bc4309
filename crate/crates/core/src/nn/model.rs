use std::borrow::Borrow;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::matrix::Matrix;
use super::network::{Arch, ForwardPass, Network};
use super::real::Real;
use super::softmax::softmax_rows;
use crate::data::{Example, ImageShape};
use crate::{ClassId, Error, Result};

/// Meaning of one output unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "class", rename_all = "snake_case")]
pub enum Output {
    Class(ClassId),
    /// The out-of-class super-class.
    Novel,
    /// "Belongs to some known class" in the binary known/unknown head.
    Known,
}

/// A network together with the meaning of its outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<S = f32> {
    pub net: Network<S>,
    pub outputs: Vec<Output>,
}

const INFER_CHUNK: usize = 256;

/// Stacks example pixels into one contiguous batch buffer.
pub fn batch_input<S: Real, E: Borrow<Example>>(batch: &[E]) -> Vec<S> {
    let mut x = Vec::with_capacity(batch.iter().map(|e| e.borrow().pixels.len()).sum());
    for e in batch {
        x.extend(e.borrow().pixels.iter().map(|&p| <S as From<f32>>::from(p)));
    }
    x
}

impl<S: Real> Model<S> {
    pub fn new(arch: &Arch, input: ImageShape, outputs: Vec<Output>, seed: u64) -> Result<Self> {
        let net = Network::new(arch, input, outputs.len(), seed)?;
        Ok(Self { net, outputs })
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn embed_dim(&self) -> usize {
        self.net.embed_dim()
    }

    /// Known classes in output order.
    pub fn classes(&self) -> Vec<ClassId> {
        self.outputs
            .iter()
            .filter_map(|o| match o {
                Output::Class(c) => Some(*c),
                _ => None,
            })
            .collect()
    }

    pub fn output_index(&self, output: Output) -> Option<usize> {
        self.outputs.iter().position(|o| *o == output)
    }

    pub fn class_index(&self, class: ClassId) -> Option<usize> {
        self.output_index(Output::Class(class))
    }

    fn check_batch<E: Borrow<Example>>(&self, batch: &[E]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        let want = self.net.input_shape();
        if let Some(e) = batch.iter().map(Borrow::borrow).find(|e| e.shape != want || e.pixels.len() != want.len()) {
            return Err(Error::Input(format!(
                "instance {} has shape {:?}, model expects {:?}",
                e.id, e.shape, want
            )));
        }
        Ok(())
    }

    pub fn forward<E: Borrow<Example>>(&self, batch: &[E]) -> ForwardPass<S> {
        self.net.forward(batch_input(batch), batch.len())
    }

    /// Logits and embeddings of a batch, computed in chunks.
    pub fn logits_and_embeddings<E: Borrow<Example>>(&self, batch: &[E]) -> Result<(Matrix<S>, Matrix<S>)> {
        self.check_batch(batch)?;
        let mut logits = Vec::with_capacity(batch.len() * self.n_outputs());
        let mut emb = Vec::with_capacity(batch.len() * self.embed_dim());
        for chunk in batch.chunks(INFER_CHUNK) {
            let pass = self.forward(chunk);
            logits.extend_from_slice(pass.logits());
            emb.extend_from_slice(pass.embeddings());
        }
        Ok((
            Matrix::new(batch.len(), self.n_outputs(), logits),
            Matrix::new(batch.len(), self.embed_dim(), emb),
        ))
    }

    pub fn logits<E: Borrow<Example>>(&self, batch: &[E]) -> Result<Matrix<S>> {
        Ok(self.logits_and_embeddings(batch)?.0)
    }

    /// Softmax probabilities, N × n_outputs.
    pub fn predict_proba<E: Borrow<Example>>(&self, batch: &[E]) -> Result<Matrix<S>> {
        let logits = self.logits(batch)?;
        Ok(Matrix::new(logits.rows, logits.cols, softmax_rows(&logits.data, logits.cols)))
    }

    /// Penultimate features, N × embed_dim.
    pub fn embeddings<E: Borrow<Example>>(&self, batch: &[E]) -> Result<Matrix<S>> {
        Ok(self.logits_and_embeddings(batch)?.1)
    }

    /// Appends output units for `classes`, keeping existing outputs unchanged.
    pub fn extend_classes(&mut self, classes: &[ClassId]) -> Result<()> {
        if let Some(c) = classes.iter().find(|c| self.class_index(**c).is_some()) {
            return Err(Error::Protocol(format!("class {c} already has an output")));
        }
        self.net.extend_head(classes.len());
        self.outputs.extend(classes.iter().map(|&c| Output::Class(c)));
        Ok(())
    }

    /// Short content hash of outputs and parameters.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.outputs).expect("outputs serialize"));
        for p in self.net.params() {
            h.update((p.as_f64() as f32).to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }

    pub fn cast<T: Real>(&self) -> Model<T> {
        Model {
            net: self.net.cast(),
            outputs: self.outputs.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model<f32> {
        Model::new(
            &Arch::Mlp { hidden: vec![4] },
            ImageShape::new(1, 1, 3),
            vec![Output::Class(2), Output::Class(5), Output::Novel],
            0,
        )
        .unwrap()
    }

    #[test]
    fn proba_rows_sum_to_one() {
        let m = model();
        let batch: Vec<Example> = (0..5)
            .map(|i| Example::new(i, ImageShape::new(1, 1, 3), vec![i as f32, -1.0, 0.3], None))
            .collect();
        let p = m.predict_proba(&batch).unwrap();
        for row in p.iter_rows() {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|v| *v >= 0.0));
        }
        assert_eq!(m.embeddings(&batch).unwrap().cols, 4);
    }

    #[test]
    fn rejects_empty_and_misshapen_batches() {
        let m = model();
        assert!(matches!(m.predict_proba::<Example>(&[]), Err(Error::Input(_))));
        let bad = Example::new(0, ImageShape::new(1, 1, 4), vec![0.0; 4], None);
        assert!(matches!(m.predict_proba(&[bad]), Err(Error::Input(_))));
    }

    #[test]
    fn extend_classes_rejects_duplicates() {
        let mut m = model();
        m.extend_classes(&[7]).unwrap();
        assert_eq!(m.classes(), vec![2, 5, 7]);
        assert!(matches!(m.extend_classes(&[5]), Err(Error::Protocol(_))));
    }
}
