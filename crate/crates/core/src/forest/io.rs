//! Versioned text format for forests, in the style of the network format.
//!
//! ```text
//! dropout-conformal-forest 1
//! n_trees 100
//! max_features all | <k>
//! min_samples_split 2
//! min_samples_leaf 1
//! bootstrap true
//! seed <u64>
//! n_features <d>
//! tree <n_nodes>
//! L <value>
//! S <feature> <threshold> <left> <right>
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{Forest, ForestConfig, MaxFeatures, Node, RegressionTree};
use crate::error::{Error, Result};
use crate::textfmt::Lines;

const MAGIC: &str = "dropout-conformal-forest";
const VERSION: u32 = 1;

pub fn forest_to_string(forest: &Forest) -> String {
    let c = &forest.config;
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC} {VERSION}");
    let _ = writeln!(s, "n_trees {}", c.n_trees);
    match c.max_features {
        MaxFeatures::All => {
            let _ = writeln!(s, "max_features all");
        }
        MaxFeatures::Count(k) => {
            let _ = writeln!(s, "max_features {k}");
        }
    }
    let _ = writeln!(s, "min_samples_split {}", c.min_samples_split);
    let _ = writeln!(s, "min_samples_leaf {}", c.min_samples_leaf);
    let _ = writeln!(s, "bootstrap {}", c.bootstrap);
    let _ = writeln!(s, "seed {}", forest.seed);
    let _ = writeln!(s, "n_features {}", forest.n_features);
    for tree in &forest.trees {
        let _ = writeln!(s, "tree {}", tree.nodes().len());
        for node in tree.nodes() {
            let _ = match *node {
                Node::Leaf { value } => writeln!(s, "L {value}"),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => writeln!(s, "S {feature} {threshold} {left} {right}"),
            };
        }
    }
    s
}

fn bad(no: usize, what: &str) -> Error {
    Error::Format(format!("line {no}: {what}"))
}

pub fn forest_from_str(text: &str) -> Result<Forest> {
    let mut lines = Lines::new(text);
    let version: u32 = lines.parse(MAGIC)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n_trees: usize = lines.parse("n_trees")?;
    let (no, mf) = lines.field("max_features")?;
    let max_features = if mf == "all" {
        MaxFeatures::All
    } else {
        MaxFeatures::Count(mf.parse().map_err(|_| bad(no, "bad max_features"))?)
    };
    let config = ForestConfig {
        n_trees,
        max_features,
        min_samples_split: lines.parse("min_samples_split")?,
        min_samples_leaf: lines.parse("min_samples_leaf")?,
        bootstrap: lines.parse("bootstrap")?,
    };
    config.validate()?;
    let seed: u64 = lines.parse("seed")?;
    let n_features: usize = lines.parse("n_features")?;

    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let (no, count) = lines.field("tree")?;
        let count: usize = count.parse().map_err(|_| bad(no, "bad node count"))?;
        let mut nodes = Vec::with_capacity(count);
        for _ in 0..count {
            let (no, line) = lines.next_line()?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            let node = match parts.as_slice() {
                ["L", v] => Node::Leaf {
                    value: v.parse().map_err(|_| bad(no, "bad leaf"))?,
                },
                ["S", f, t, l, r] => {
                    let feature: usize = f.parse().map_err(|_| bad(no, "bad split"))?;
                    if feature >= n_features {
                        return Err(bad(no, "split feature out of range"));
                    }
                    Node::Split {
                        feature,
                        threshold: t.parse().map_err(|_| bad(no, "bad split"))?,
                        left: l.parse().map_err(|_| bad(no, "bad split"))?,
                        right: r.parse().map_err(|_| bad(no, "bad split"))?,
                    }
                }
                _ => return Err(bad(no, "expected a node")),
            };
            nodes.push(node);
        }
        trees.push(RegressionTree::from_nodes(nodes).ok_or_else(|| bad(no, "malformed tree"))?);
    }
    Ok(Forest {
        trees,
        config,
        seed,
        n_features,
    })
}

pub fn write_forest(forest: &Forest, path: &Path) -> Result<()> {
    std::fs::write(path, forest_to_string(forest)).map_err(|e| Error::io(path, e))
}

pub fn read_forest(path: &Path) -> Result<Forest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    forest_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic, NoiseModel};
    use crate::forest::fit_forest;

    #[test]
    fn round_trip_is_exact() {
        let ds = make_synthetic(50, 3, NoiseModel::Heteroscedastic { scale: 0.4 }, 2).unwrap();
        for cfg in [
            ForestConfig { n_trees: 4, ..ForestConfig::default() },
            ForestConfig { n_trees: 3, max_features: MaxFeatures::Count(2), bootstrap: false, ..ForestConfig::default() },
        ] {
            let f = fit_forest(&ds, &cfg, 9).unwrap();
            assert_eq!(forest_from_str(&forest_to_string(&f)).unwrap(), f);
        }
    }

    #[test]
    fn file_round_trip_and_errors() {
        let ds = make_synthetic(20, 2, NoiseModel::Homoscedastic { scale: 0.4 }, 2).unwrap();
        let f = fit_forest(&ds, &ForestConfig { n_trees: 2, ..ForestConfig::default() }, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("forest.txt");
        write_forest(&f, &p).unwrap();
        assert_eq!(read_forest(&p).unwrap(), f);

        let text = forest_to_string(&f);
        assert!(forest_from_str(&text.replacen(" 1\n", " 9\n", 1)).is_err());
        assert!(forest_from_str(&text.replacen("S 0", "S 7", 1)).is_err());
        assert!(forest_from_str(&text[..text.len() / 2]).is_err());
    }
}
