use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{train_gbdt, train_random_forest, BoosterConfig, ForestConfig, TreeEnsemble, TreeError, TreeInput};
use crate::eval::EvalError;

/// Tree counts 100, 200, ..., 3000.
pub fn full_tree_grid() -> Vec<usize> {
    (1..=30).map(|k| k * 100).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TreeFamily {
    Forest(ForestConfig),
    Booster(BoosterConfig),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n_trees: usize,
    pub score: f64,
}

/// Searches the tree count on the validation split.
///
/// One model is trained at the largest count and every grid point is scored
/// on its prefix; per-tree seeding makes a forest prefix identical to a
/// smaller forest, and a booster prefix is a smaller booster by definition.
/// Ties go to the smaller count.
pub fn grid_search_trees<M>(
    family: &TreeFamily,
    train: (&TreeInput, &[bool]),
    validation: (&TreeInput, &[bool]),
    grid: &[usize],
    metric: M,
) -> Result<(TreeEnsemble, Vec<GridPoint>), TreeError>
where
    M: Fn(&[f64], &[bool]) -> Result<f64, EvalError>,
{
    let mut counts: Vec<usize> = grid.to_vec();
    counts.sort_unstable();
    counts.dedup();
    let Some(&max) = counts.last() else { return Err(TreeError::EmptyGrid) };
    if counts[0] == 0 {
        return Err(TreeError::InvalidConfig("tree count must be >= 1"));
    }
    let full = match family {
        TreeFamily::Forest(cfg) => train_random_forest(train.0, train.1, &ForestConfig { n_trees: max, ..cfg.clone() })?,
        TreeFamily::Booster(cfg) => train_gbdt(train.0, train.1, &BoosterConfig { n_trees: max, ..cfg.clone() })?,
    };
    let staged = full.staged_predict(validation.0, &counts)?;
    let mut points = Vec::with_capacity(counts.len());
    let mut best = (counts[0], f64::NEG_INFINITY);
    for (&k, preds) in counts.iter().zip(&staged) {
        let score = metric(preds, validation.1)?;
        if score > best.1 {
            best = (k, score);
        }
        points.push(GridPoint { n_trees: k, score });
    }
    Ok((full.truncated(best.0), points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::truncated_pr_auc;
    use alloc::vec;
    use core::cell::Cell;

    fn data() -> (TreeInput, Vec<bool>) {
        let input = TreeInput::from_dense_rows(2, (0..60).map(|i| vec![(i % 10) as f64, (i % 7) as f64]));
        (input, (0..60).map(|i| i % 10 > 6).collect())
    }

    #[test]
    fn full_grid_has_thirty_points() {
        let g = full_tree_grid();
        assert_eq!(g.len(), 30);
        assert_eq!((g[0], g[29]), (100, 3000));
    }

    #[test]
    fn picks_strictly_better_count() {
        let (x, y) = data();
        let calls = Cell::new(0);
        let metric = |_: &[f64], _: &[bool]| {
            calls.set(calls.get() + 1);
            Ok(calls.get() as f64)
        };
        let fam = TreeFamily::Booster(BoosterConfig::default());
        let (model, pts) = grid_search_trees(&fam, (&x, &y), (&x, &y), &[20, 10], metric).unwrap();
        assert_eq!(pts.iter().map(|p| p.n_trees).collect::<Vec<_>>(), vec![10, 20]);
        assert_eq!(model.trees.len(), 20);
    }

    #[test]
    fn ties_prefer_fewer_trees() {
        let (x, y) = data();
        let fam = TreeFamily::Forest(ForestConfig::default());
        let (model, _) = grid_search_trees(&fam, (&x, &y), (&x, &y), &[10, 20], |_, _| Ok(0.05)).unwrap();
        assert_eq!(model.trees.len(), 10);
    }

    #[test]
    fn real_metric_and_errors() {
        let (x, y) = data();
        let fam = TreeFamily::Booster(BoosterConfig::default());
        let (_, pts) = grid_search_trees(&fam, (&x, &y), (&x, &y), &[1, 5], truncated_pr_auc).unwrap();
        assert!(pts.iter().all(|p| (0.0..=0.1).contains(&p.score)));
        assert_eq!(
            grid_search_trees(&fam, (&x, &y), (&x, &y), &[], truncated_pr_auc).unwrap_err(),
            TreeError::EmptyGrid
        );
    }
}
