use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_point, GridSpec};

/// Index into a [`ClassTable`]. Ids follow the lexicographic order of the
/// labels, so comparing ids compares labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClassId(pub u32);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub id: u64,
    pub coords: Vec<f64>,
    /// Present on training points only.
    pub class: Option<ClassId>,
}

impl Point {
    pub fn unlabeled(id: u64, coords: Vec<f64>) -> Self {
        Self {
            id,
            coords,
            class: None,
        }
    }

    pub fn labeled(id: u64, coords: Vec<f64>, class: ClassId) -> Self {
        Self {
            id,
            coords,
            class: Some(class),
        }
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        check_point(self.id, &self.coords, grid)
    }
}

/// Sorted, deduplicated class labels.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassTable {
    labels: Vec<String>,
}

impl ClassTable {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Self {
        let set: BTreeSet<String> = labels.into_iter().map(Into::into).collect();
        Self {
            labels: set.into_iter().collect(),
        }
    }

    /// Labels `A`, `B`, ... for class indices `0..count` (`C26`, `C27`, ...
    /// past the alphabet).
    pub fn lettered(count: usize) -> Self {
        Self::new((0..count).map(index_label))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn id(&self, label: &str) -> Option<ClassId> {
        self.labels
            .binary_search_by(|l| l.as_str().cmp(label))
            .ok()
            .map(|i| ClassId(i as u32))
    }

    pub fn label(&self, id: ClassId) -> &str {
        &self.labels[id.0 as usize]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub(crate) fn require(&self, label: &str) -> Result<ClassId> {
        self.id(label)
            .ok_or_else(|| Error::Config(format!("unknown class label `{label}`")))
    }
}

pub fn index_label(index: usize) -> String {
    if index < 26 {
        char::from(b'A' + index as u8).to_string()
    } else {
        format!("C{index}")
    }
}

/// Labeled training points together with their label table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    pub points: Vec<Point>,
    pub classes: ClassTable,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_ids_follow_label_order() {
        let t = ClassTable::new(["C", "A", "B", "A"]);
        assert_eq!(t.len(), 3);
        assert_eq!(t.id("A"), Some(ClassId(0)));
        assert_eq!(t.id("C"), Some(ClassId(2)));
        assert_eq!(t.label(ClassId(1)), "B");
        assert_eq!(t.id("Z"), None);
    }

    #[test]
    fn lettered_labels() {
        let t = ClassTable::lettered(5);
        assert_eq!(t.labels(), &["A", "B", "C", "D", "E"]);
        assert_eq!(index_label(2), "C");
        assert_eq!(index_label(30), "C30");
    }
}
