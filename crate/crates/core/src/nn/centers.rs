use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::model::Model;
use crate::data::Example;
use crate::{ClassId, Error, Result};

/// Mean penultimate embedding of every known class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassCenters {
    pub centers: BTreeMap<ClassId, Vec<f32>>,
    /// Fingerprint of the model whose embeddings were averaged.
    pub source_model: String,
}

impl ClassCenters {
    /// Averages embedding rows per label (in f64) for each of `classes`.
    pub fn from_embeddings(
        classes: &[ClassId],
        embeddings: &Matrix<f32>,
        labels: &[ClassId],
        source_model: String,
    ) -> Result<Self> {
        let mut sums: BTreeMap<ClassId, (Vec<f64>, usize)> =
            classes.iter().map(|&c| (c, (vec![0.0; embeddings.cols], 0))).collect();
        for (row, label) in embeddings.iter_rows().zip(labels) {
            let Some((sum, count)) = sums.get_mut(label) else {
                return Err(Error::Precondition(format!("label {label} is not a model class")));
            };
            for (s, &v) in sum.iter_mut().zip(row) {
                *s += f64::from(v);
            }
            *count += 1;
        }
        let mut centers = BTreeMap::new();
        for (class, (sum, count)) in sums {
            if count == 0 {
                return Err(Error::MissingClass(class));
            }
            centers.insert(class, sum.iter().map(|s| (s / count as f64) as f32).collect());
        }
        Ok(Self { centers, source_model })
    }

    pub fn dim(&self) -> usize {
        self.centers.values().next().map_or(0, Vec::len)
    }
}

/// Centers of the model's classes over `train`, from the model's own embeddings.
pub fn compute_centers(model: &Model, train: &[Example]) -> Result<ClassCenters> {
    let classes = model.classes();
    if train.is_empty() {
        return Err(Error::MissingClass(classes.first().copied().unwrap_or_default()));
    }
    let labels: Vec<ClassId> = train
        .iter()
        .map(|e| e.label.ok_or_else(|| Error::Input(format!("instance {} has no label", e.id))))
        .collect::<Result<_>>()?;
    let emb = model.embeddings(train)?;
    ClassCenters::from_embeddings(&classes, &emb, &labels, model.fingerprint())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_mean_of_rows() {
        let emb = Matrix::new(3, 2, vec![0.0, 0.0, 2.0, 0.0, 1.0, 3.0]);
        let c = ClassCenters::from_embeddings(&[4], &emb, &[4, 4, 4], "m".into()).unwrap();
        assert_eq!(c.centers[&4], vec![1.0, 1.0]);
    }

    #[test]
    fn duplicates_do_not_move_the_center() {
        let once = Matrix::new(2, 1, vec![1.0, 5.0]);
        let twice = Matrix::new(4, 1, vec![1.0, 1.0, 5.0, 5.0]);
        let a = ClassCenters::from_embeddings(&[0], &once, &[0, 0], String::new()).unwrap();
        let b = ClassCenters::from_embeddings(&[0], &twice, &[0, 0, 0, 0], String::new()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_class_is_reported() {
        let emb = Matrix::new(1, 1, vec![1.0]);
        assert!(matches!(
            ClassCenters::from_embeddings(&[0, 1], &emb, &[0], String::new()),
            Err(Error::MissingClass(1))
        ));
    }
}
