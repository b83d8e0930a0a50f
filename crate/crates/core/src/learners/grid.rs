use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{LearnError, ModelSpec};

/// Maximum tree depth in configuration files: an integer or `"none"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxDepth(pub Option<usize>);

impl Serialize for MaxDepth {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Some(d) => s.serialize_u64(d as u64),
            None => s.serialize_str("none"),
        }
    }
}

impl<'de> Deserialize<'de> for MaxDepth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = MaxDepth;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a non-negative integer or \"none\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<MaxDepth, E> {
                Ok(MaxDepth(Some(v as usize)))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<MaxDepth, E> {
                usize::try_from(v).map(|v| MaxDepth(Some(v))).map_err(|_| E::custom("negative depth"))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<MaxDepth, E> {
                if v.eq_ignore_ascii_case("none") {
                    Ok(MaxDepth(None))
                } else {
                    Err(E::custom(format!("unknown depth `{v}`")))
                }
            }

            fn visit_unit<E: de::Error>(self) -> Result<MaxDepth, E> {
                Ok(MaxDepth(None))
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestGrid {
    pub n_estimators: Vec<usize>,
    pub max_depth: Vec<MaxDepth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostGrid {
    pub n_estimators: Vec<usize>,
    pub learning_rate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeGrid {
    pub max_depth: Vec<MaxDepth>,
}

/// Per-kind parameter lists; a missing section skips that model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_forest: Option<ForestGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra_trees: Option<ForestGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaboost: Option<BoostGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision_tree: Option<TreeGrid>,
    #[serde(default = "yes")]
    pub dummy: bool,
}

fn yes() -> bool {
    true
}

fn depths(list: &[Option<usize>]) -> Vec<MaxDepth> {
    list.iter().copied().map(MaxDepth).collect()
}

const FULL_ESTIMATORS: [usize; 8] = [100, 250, 500, 1000, 2500, 5000, 7500, 10000];

impl HyperGrid {
    /// The complete search space: 112 forest, 48 boosting and 10 tree points plus the baseline.
    pub fn full() -> Self {
        let forest = ForestGrid {
            n_estimators: FULL_ESTIMATORS.to_vec(),
            max_depth: depths(&[Some(1), Some(2), Some(3), Some(4), Some(5), Some(10), None]),
        };
        let mut tree_depths: Vec<Option<usize>> = (1..=9).map(Some).collect();
        tree_depths.push(None);
        Self {
            random_forest: Some(forest.clone()),
            extra_trees: Some(forest),
            adaboost: Some(BoostGrid {
                n_estimators: FULL_ESTIMATORS.to_vec(),
                learning_rate: vec![0.01, 0.05, 0.1, 0.25, 0.5, 1.0],
            }),
            decision_tree: Some(TreeGrid { max_depth: depths(&tree_depths) }),
            dummy: true,
        }
    }

    /// Reduced grid that runs on a single workstation.
    pub fn desk() -> Self {
        let forest = ForestGrid { n_estimators: vec![100, 500], max_depth: depths(&[Some(5), Some(10), None]) };
        Self {
            random_forest: Some(forest.clone()),
            extra_trees: Some(forest),
            adaboost: Some(BoostGrid { n_estimators: vec![100, 500], learning_rate: vec![0.1, 1.0] }),
            decision_tree: None,
            dummy: true,
        }
    }

    /// A grid holding exactly one model (plus the baseline when `dummy`).
    pub fn single(spec: ModelSpec, dummy: bool) -> Self {
        let mut g = Self { random_forest: None, extra_trees: None, adaboost: None, decision_tree: None, dummy };
        match spec {
            ModelSpec::RandomForest { n_estimators, max_depth } => {
                g.random_forest =
                    Some(ForestGrid { n_estimators: vec![n_estimators], max_depth: vec![MaxDepth(max_depth)] })
            }
            ModelSpec::ExtraTrees { n_estimators, max_depth } => {
                g.extra_trees =
                    Some(ForestGrid { n_estimators: vec![n_estimators], max_depth: vec![MaxDepth(max_depth)] })
            }
            ModelSpec::AdaBoost { n_estimators, learning_rate } => {
                g.adaboost = Some(BoostGrid { n_estimators: vec![n_estimators], learning_rate: vec![learning_rate] })
            }
            ModelSpec::DecisionTree { max_depth } => {
                g.decision_tree = Some(TreeGrid { max_depth: vec![MaxDepth(max_depth)] })
            }
            ModelSpec::StratifiedDummy => g.dummy = true,
        }
        g
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        let empty = |name: &str| Err(LearnError::InvalidParam(format!("grid `{name}` has an empty parameter list")));
        for (name, f) in [("random_forest", &self.random_forest), ("extra_trees", &self.extra_trees)] {
            if let Some(f) = f {
                if f.n_estimators.is_empty() || f.max_depth.is_empty() {
                    return empty(name);
                }
                if f.n_estimators.contains(&0) {
                    return Err(LearnError::InvalidParam(format!("grid `{name}` has n_estimators 0")));
                }
            }
        }
        if let Some(a) = &self.adaboost {
            if a.n_estimators.is_empty() || a.learning_rate.is_empty() {
                return empty("adaboost");
            }
        }
        if let Some(t) = &self.decision_tree {
            if t.max_depth.is_empty() {
                return empty("decision_tree");
            }
        }
        if self.points().is_empty() {
            return Err(LearnError::InvalidParam("grid contains no models".into()));
        }
        Ok(())
    }

    /// All grid points in a stable order; the baseline comes last.
    pub fn points(&self) -> Vec<ModelSpec> {
        let mut out = Vec::new();
        if let Some(f) = &self.random_forest {
            for &n in &f.n_estimators {
                for d in &f.max_depth {
                    out.push(ModelSpec::RandomForest { n_estimators: n, max_depth: d.0 });
                }
            }
        }
        if let Some(f) = &self.extra_trees {
            for &n in &f.n_estimators {
                for d in &f.max_depth {
                    out.push(ModelSpec::ExtraTrees { n_estimators: n, max_depth: d.0 });
                }
            }
        }
        if let Some(a) = &self.adaboost {
            for &n in &a.n_estimators {
                for &lr in &a.learning_rate {
                    out.push(ModelSpec::AdaBoost { n_estimators: n, learning_rate: lr });
                }
            }
        }
        if let Some(t) = &self.decision_tree {
            for d in &t.max_depth {
                out.push(ModelSpec::DecisionTree { max_depth: d.0 });
            }
        }
        if self.dummy {
            out.push(ModelSpec::StratifiedDummy);
        }
        out
    }
}
