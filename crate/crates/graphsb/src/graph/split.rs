//! Imbalance-controlled split protocol: majority classes get a fixed
//! number of labeled training nodes, minority classes get a rho-scaled
//! share, and the remaining nodes are divided between validation and
//! test so the overall proportions approach 1:1:2.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, Masks};
use crate::error::{Result, SbError};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum MinoritySelection {
    /// The k classes with the fewest nodes overall (ties by class id).
    KSmallest(usize),
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub rho: f64,
    pub labeled_per_majority: usize,
    pub minority: MinoritySelection,
    pub seed: u64,
}

impl SplitSpec {
    pub fn labeled_per_minority(&self) -> usize {
        (self.labeled_per_majority as f64 * self.rho).round() as usize
    }
}

pub fn resolve_minority_classes(g: &Graph, sel: &MinoritySelection) -> Result<Vec<usize>> {
    match sel {
        MinoritySelection::Explicit(classes) => {
            for &c in classes {
                if c >= g.num_classes {
                    return Err(SbError::Config(format!("unknown class {c}")));
                }
            }
            Ok(classes.clone())
        }
        MinoritySelection::KSmallest(k) => {
            if *k >= g.num_classes {
                return Err(SbError::Config(format!(
                    "k = {k} minority classes but only {} classes exist",
                    g.num_classes
                )));
            }
            let mut counts = vec![0usize; g.num_classes];
            for &y in &g.labels {
                counts[y] += 1;
            }
            let mut order: Vec<usize> = (0..g.num_classes).collect();
            order.sort_by_key(|&c| (counts[c], c));
            Ok(order[..*k].to_vec())
        }
    }
}

pub fn make_split(g: &Graph, spec: &SplitSpec) -> Result<Masks> {
    if !(spec.rho > 0.0 && spec.rho <= 1.0) {
        return Err(SbError::Config(format!("rho = {} not in (0, 1]", spec.rho)));
    }
    if spec.labeled_per_minority() < 1 {
        return Err(SbError::Config(format!(
            "rho = {} yields zero labeled minority nodes",
            spec.rho
        )));
    }
    let minority = resolve_minority_classes(g, &spec.minority)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut masks = Masks::empty(g.n);

    let mut remaining = Vec::new();
    for class in 0..g.num_classes {
        let want = if minority.contains(&class) {
            spec.labeled_per_minority()
        } else {
            spec.labeled_per_majority
        };
        let mut members: Vec<usize> = (0..g.n).filter(|&v| g.labels[v] == class).collect();
        if members.len() < want {
            return Err(SbError::Config(format!(
                "class {class} has {} nodes, needs {want} labeled",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for &v in &members[..want] {
            masks.train[v] = true;
        }
        remaining.extend_from_slice(&members[want..]);
    }

    remaining.sort_unstable();
    remaining.shuffle(&mut rng);
    let val_count = remaining.len() / 3;
    for (i, &v) in remaining.iter().enumerate() {
        if i < val_count {
            masks.val[v] = true;
        } else {
            masks.test[v] = true;
        }
    }
    Ok(masks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, SbmSpec};
    use ndarray::Array2;

    fn seven_class_graph() -> Graph {
        // 7 classes, 60 nodes each
        let n = 420;
        let labels: Vec<usize> = (0..n).map(|v| v / 60).collect();
        Graph::new(n, &[], Array2::zeros((n, 2)), labels).unwrap()
    }

    fn labeled_count(g: &Graph, masks: &Masks, class: usize) -> usize {
        (0..g.n)
            .filter(|&v| masks.train[v] && g.labels[v] == class)
            .count()
    }

    #[test]
    fn rho_half_gives_ten_labeled_minority() {
        let g = seven_class_graph();
        let spec = SplitSpec {
            rho: 0.5,
            labeled_per_majority: 20,
            minority: MinoritySelection::Explicit(vec![0, 1, 2]),
            seed: 1,
        };
        let masks = make_split(&g, &spec).unwrap();
        for c in 0..3 {
            assert_eq!(labeled_count(&g, &masks, c), 10);
        }
        for c in 3..7 {
            assert_eq!(labeled_count(&g, &masks, c), 20);
        }
    }

    #[test]
    fn rho_one_gives_twenty_everywhere() {
        let g = seven_class_graph();
        let spec = SplitSpec {
            rho: 1.0,
            labeled_per_majority: 20,
            minority: MinoritySelection::Explicit(vec![0]),
            seed: 1,
        };
        let masks = make_split(&g, &spec).unwrap();
        for c in 0..7 {
            assert_eq!(labeled_count(&g, &masks, c), 20);
        }
    }

    #[test]
    fn rho_point_one_gives_two_labeled() {
        let g = seven_class_graph();
        let spec = SplitSpec {
            rho: 0.1,
            labeled_per_majority: 20,
            minority: MinoritySelection::Explicit(vec![6]),
            seed: 1,
        };
        let masks = make_split(&g, &spec).unwrap();
        assert_eq!(labeled_count(&g, &masks, 6), 2);
    }

    #[test]
    fn masks_disjoint_and_deterministic() {
        let g = generate_sbm(
            &SbmSpec {
                n1: 60,
                n2: 120,
                p: 0.3,
                q: 0.05,
                seed: 7,
            },
            3,
            1.0,
        )
        .unwrap();
        let spec = SplitSpec {
            rho: 0.5,
            labeled_per_majority: 20,
            minority: MinoritySelection::KSmallest(1),
            seed: 42,
        };
        let m1 = make_split(&g, &spec).unwrap();
        let m2 = make_split(&g, &spec).unwrap();
        assert_eq!(m1, m2);
        for v in 0..g.n {
            let count = [m1.train[v], m1.val[v], m1.test[v]]
                .iter()
                .filter(|&&b| b)
                .count();
            assert!(count <= 1);
        }
    }

    #[test]
    fn insufficient_nodes_names_class() {
        let labels = vec![0, 0, 1];
        let g = Graph::new(3, &[], Array2::zeros((3, 1)), labels).unwrap();
        let spec = SplitSpec {
            rho: 1.0,
            labeled_per_majority: 5,
            minority: MinoritySelection::Explicit(vec![1]),
            seed: 0,
        };
        match make_split(&g, &spec) {
            Err(SbError::Config(msg)) => assert!(msg.contains("class 0")),
            other => panic!("expected config error, got {other:?}"),
        }
    }
}
