use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledImage {
    pub image: Image,
    pub label: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Unsplit,
}

/// A homogeneous labeled image collection. All items share dimensions and
/// every label is below `class_count`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    name: String,
    class_count: usize,
    items: Vec<LabeledImage>,
    split: Split,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        class_count: usize,
        items: Vec<LabeledImage>,
        split: Split,
    ) -> Result<Self> {
        let name = name.into();
        if class_count == 0 {
            return Err(Error::Argument(format!("{name}: class_count must be positive")));
        }
        if let Some(first) = items.first() {
            for (i, item) in items.iter().enumerate() {
                if !item.image.same_shape(&first.image) {
                    return Err(Error::Argument(format!(
                        "{name}: item {i} is {}×{}×{}, expected {}×{}×{}",
                        item.image.width(),
                        item.image.height(),
                        item.image.channels(),
                        first.image.width(),
                        first.image.height(),
                        first.image.channels()
                    )));
                }
                if item.label >= class_count {
                    return Err(Error::Argument(format!(
                        "{name}: item {i} has label {} but class_count is {class_count}",
                        item.label
                    )));
                }
            }
        }
        Ok(Dataset {
            name,
            class_count,
            items,
            split,
            class_names: Vec::new(),
        })
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Self {
        debug_assert!(names.is_empty() || names.len() == self.class_count);
        self.class_names = names;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn items(&self) -> &[LabeledImage] {
        &self.items
    }

    pub fn into_items(self) -> Vec<LabeledImage> {
        self.items
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// `(width, height, channels)` of the items, `None` when empty.
    pub fn dims(&self) -> Option<(usize, usize, usize)> {
        self.items
            .first()
            .map(|it| (it.image.width(), it.image.height(), it.image.channels()))
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for item in &self.items {
            counts[item.label] += 1;
        }
        counts
    }

    /// Applies `f` to every image, keeping labels, order and metadata.
    pub fn map_images<F>(&self, f: F) -> Result<Dataset>
    where
        F: Fn(&Image) -> Result<Image>,
    {
        let items = self
            .items
            .iter()
            .map(|it| {
                Ok(LabeledImage {
                    image: f(&it.image)?,
                    label: it.label,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset::new(self.name.clone(), self.class_count, items, self.split)?
            .with_class_names(self.class_names.clone()))
    }

    /// Same metadata, different items (which must satisfy the invariants).
    pub fn with_items(&self, items: Vec<LabeledImage>, split: Split) -> Result<Dataset> {
        Ok(Dataset::new(self.name.clone(), self.class_count, items, split)?
            .with_class_names(self.class_names.clone()))
    }

    /// The first `n` items (all of them when `n >= len`).
    pub fn take(&self, n: usize) -> Dataset {
        let mut d = self.clone();
        d.items.truncate(n);
        d
    }
}

/// Per class, moves exactly `train_per_class` items (picked by a seeded
/// shuffle) into the training set and the rest into the test set. Item order
/// inside each output follows the input order.
pub fn split_per_class(
    dataset: &Dataset,
    train_per_class: usize,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.class_count];
    for (i, item) in dataset.items.iter().enumerate() {
        by_class[item.label].push(i);
    }
    for (class, members) in by_class.iter().enumerate() {
        if members.len() <= train_per_class {
            let name = dataset
                .class_names
                .get(class)
                .map(|n| format!("{class} ({n})"))
                .unwrap_or_else(|| class.to_string());
            return Err(Error::Argument(format!(
                "class {name} has {} items, need more than {train_per_class} to leave a test item",
                members.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; dataset.items.len()];
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for &i in &members[..train_per_class] {
            in_train[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (item, &t) in dataset.items.iter().zip(&in_train) {
        if t {
            train.push(item.clone());
        } else {
            test.push(item.clone());
        }
    }
    Ok((
        dataset.with_items(train, Split::Train)?,
        dataset.with_items(test, Split::Test)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(classes: usize, per_class: usize) -> Dataset {
        let items = (0..classes * per_class)
            .map(|i| LabeledImage {
                image: Image::new(2, 1, 1, vec![(i % 256) as u8, (i / 256) as u8]).unwrap(),
                label: i % classes,
            })
            .collect();
        Dataset::new("toy", classes, items, Split::Unsplit).unwrap()
    }

    #[test]
    fn rejects_mixed_dims_and_bad_labels() {
        let a = LabeledImage {
            image: Image::filled(2, 2, 1, 0).unwrap(),
            label: 0,
        };
        let b = LabeledImage {
            image: Image::filled(3, 2, 1, 0).unwrap(),
            label: 0,
        };
        assert!(Dataset::new("x", 2, vec![a.clone(), b], Split::Unsplit).is_err());
        let bad = LabeledImage { label: 2, ..a };
        assert!(Dataset::new("x", 2, vec![bad], Split::Unsplit).is_err());
    }

    #[test]
    fn att_shaped_split_counts() {
        let d = toy(40, 10);
        let (train, test) = split_per_class(&d, 8, 3).unwrap();
        assert_eq!(train.len(), 320);
        assert_eq!(test.len(), 80);
        assert!(train.class_counts().iter().all(|&c| c == 8));
        assert!(test.class_counts().iter().all(|&c| c == 2));
        assert_eq!(train.split(), Split::Train);

        let mut all: Vec<_> = train.items().iter().chain(test.items()).cloned().collect();
        all.sort_by_key(|it| it.image.pixels().to_vec());
        let mut orig = d.items().to_vec();
        orig.sort_by_key(|it| it.image.pixels().to_vec());
        assert_eq!(all, orig);
    }

    #[test]
    fn split_is_seed_deterministic() {
        let d = toy(5, 10);
        let a = split_per_class(&d, 4, 99).unwrap();
        let b = split_per_class(&d, 4, 99).unwrap();
        assert_eq!(a, b);
        let c = split_per_class(&d, 4, 100).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn split_refuses_to_empty_a_class() {
        let d = toy(40, 10);
        let err = split_per_class(&d, 10, 0).unwrap_err();
        assert!(err.to_string().contains("class 0"), "{err}");
    }
}
