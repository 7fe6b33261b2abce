//! Fusing per-layer correlation responses into a single translation estimate.

use crate::error::{Error, Result};

/// Grid position, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn l1(&self, other: &Cell) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

/// One layer's `m` x `n` correlation response, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMap {
    layer_id: String,
    m: usize,
    n: usize,
    values: Vec<f32>,
}

impl ResponseMap {
    pub fn new(layer_id: impl Into<String>, m: usize, n: usize, values: Vec<f32>) -> Result<Self> {
        if m == 0 || n == 0 || values.len() != m * n {
            return Err(Error::Shape(format!(
                "response of {} values for a {m}x{n} grid",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("response map".into()));
        }
        Ok(Self {
            layer_id: layer_id.into(),
            m,
            n,
            values,
        })
    }

    pub fn layer_id(&self) -> &str {
        &self.layer_id
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, cell: Cell) -> f32 {
        self.values[cell.row * self.m + cell.col]
    }

    pub fn max(&self) -> f32 {
        self.values.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    /// Position of the maximum; ties go to the smallest row-major index.
    pub fn argmax(&self) -> Cell {
        let idx = argmax_first(self.values.iter().map(|&v| v as f64));
        Cell::new(idx / self.m, idx % self.m)
    }

    /// Grid center, the zero-translation position.
    pub fn center(&self) -> Cell {
        Cell::new(self.n / 2, self.m / 2)
    }

    /// Offset of `cell` from the grid center as `(rows, cols)`.
    pub fn displacement(&self, cell: Cell) -> (isize, isize) {
        let c = self.center();
        (
            cell.row as isize - c.row as isize,
            cell.col as isize - c.col as isize,
        )
    }

    pub fn scaled(&self, factor: f32) -> ResponseMap {
        ResponseMap {
            layer_id: self.layer_id.clone(),
            m: self.m,
            n: self.n,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

fn argmax_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    SoftWeight,
    HardWeight,
    SoftMean,
    CoarseToFine,
}

impl std::fmt::Display for FusionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FusionMode::SoftWeight => "soft_weight",
            FusionMode::HardWeight => "hard_weight",
            FusionMode::SoftMean => "soft_mean",
            FusionMode::CoarseToFine => "coarse_to_fine",
        })
    }
}

impl std::str::FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft_weight" => Ok(FusionMode::SoftWeight),
            "hard_weight" => Ok(FusionMode::HardWeight),
            "soft_mean" => Ok(FusionMode::SoftMean),
            "coarse_to_fine" => Ok(FusionMode::CoarseToFine),
            other => Err(Error::Config(format!("unknown fusion mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionSpec {
    pub mode: FusionMode,
    /// Per-layer weights, deepest layer first.
    pub mu: Vec<f32>,
    /// L1 search radius in cells for coarse-to-fine.
    pub radius: usize,
    /// Guard for max-normalization.
    pub eps: f32,
}

impl FusionSpec {
    pub fn new(mode: FusionMode, mu: Vec<f32>, radius: usize) -> Self {
        Self {
            mode,
            mu,
            radius,
            eps: 1e-12,
        }
    }

    pub fn soft_weight(layers: usize) -> Self {
        Self::new(FusionMode::SoftWeight, hard_weights(layers), 0)
    }
}

/// Weights halving from the deepest layer (weight 1) to each shallower one.
pub fn hard_weights(num_layers: usize) -> Vec<f32> {
    (0..num_layers).map(|l| 0.5f32.powi(l as i32)).collect()
}

fn check_maps(maps: &[ResponseMap], spec: &FusionSpec) -> Result<()> {
    let first = maps
        .first()
        .ok_or_else(|| Error::Shape("no response maps to fuse".into()))?;
    if let Some(bad) = maps.iter().find(|f| f.m != first.m || f.n != first.n) {
        return Err(Error::Shape(format!(
            "layer {} is {}x{}, expected {}x{}",
            bad.layer_id, bad.m, bad.n, first.m, first.n
        )));
    }
    if spec.mu.len() < maps.len() {
        return Err(Error::Config(format!(
            "{} layer weights for {} layers",
            spec.mu.len(),
            maps.len()
        )));
    }
    Ok(())
}

/// The weighted sum whose argmax `localize` returns, for the three
/// single-pass modes.
pub fn fused_map(maps: &[ResponseMap], spec: &FusionSpec) -> Result<Vec<f64>> {
    check_maps(maps, spec)?;
    let len = maps[0].values.len();
    let mut fused = vec![0.0f64; len];
    for (f, &mu) in maps.iter().zip(&spec.mu) {
        let norm = (f.max() as f64).max(spec.eps as f64);
        let weight = match spec.mode {
            FusionMode::HardWeight => mu as f64,
            FusionMode::SoftMean => 1.0 / norm,
            FusionMode::SoftWeight | FusionMode::CoarseToFine => mu as f64 / norm,
        };
        for (acc, &v) in fused.iter_mut().zip(&f.values) {
            *acc += weight * v as f64;
        }
    }
    Ok(fused)
}

/// Fused peak position and the fused value there.
pub fn localize(maps: &[ResponseMap], spec: &FusionSpec) -> Result<(Cell, f32)> {
    if spec.mode == FusionMode::CoarseToFine && maps.len() >= 2 {
        return localize_coarse_to_fine(maps, spec);
    }
    let fused = fused_map(maps, spec)?;
    let idx = argmax_first(fused.iter().copied());
    let m = maps[0].m;
    Ok((Cell::new(idx / m, idx % m), fused[idx] as f32))
}

/// Hierarchical search: start at the deepest layer's peak, then for each
/// shallower layer maximize `f_shallow + mu_deeper * f_deeper` within L1
/// distance `radius` of the parent layer's choice.
pub fn localize_coarse_to_fine(maps: &[ResponseMap], spec: &FusionSpec) -> Result<(Cell, f32)> {
    check_maps(maps, spec)?;
    let deepest = &maps[0];
    let mut parent = deepest.argmax();
    let mut value = deepest.get(parent);
    let r = spec.radius as isize;
    for k in 1..maps.len() {
        let (shallow, deeper, mu) = (&maps[k], &maps[k - 1], spec.mu[k - 1] as f64);
        let mut best: Option<(Cell, f64)> = None;
        // row-major scan of the L1 ball keeps the smallest-index tie-break
        for dr in -r..=r {
            let row = parent.row as isize + dr;
            if row < 0 || row >= shallow.n as isize {
                continue;
            }
            let span = r - dr.abs();
            for dc in -span..=span {
                let col = parent.col as isize + dc;
                if col < 0 || col >= shallow.m as isize {
                    continue;
                }
                let cell = Cell::new(row as usize, col as usize);
                let score = shallow.get(cell) as f64 + mu * deeper.get(cell) as f64;
                if best.is_none_or(|(_, b)| score > b) {
                    best = Some((cell, score));
                }
            }
        }
        let (cell, score) = best.expect("the parent cell is always feasible");
        parent = cell;
        value = score as f32;
    }
    Ok((parent, value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(id: &str, m: usize, n: usize, values: Vec<f32>) -> ResponseMap {
        ResponseMap::new(id, m, n, values).unwrap()
    }

    #[test]
    fn hard_weight_values() {
        assert_eq!(hard_weights(3), vec![1.0, 0.5, 0.25]);
        assert_eq!(hard_weights(1), vec![1.0]);
        assert_eq!(hard_weights(5), vec![1.0, 0.5, 0.25, 0.125, 0.0625]);
    }

    #[test]
    fn soft_weight_worked_example() {
        let mut f1 = vec![0.0; 9];
        f1[0] = 1.0;
        f1[8] = 0.8;
        let mut f2 = vec![0.0; 9];
        f2[8] = 1.0;
        f2[0] = 0.2;
        let maps = [map("conv5", 3, 3, f1), map("conv4", 3, 3, f2)];
        let spec = FusionSpec::new(FusionMode::SoftWeight, vec![1.0, 0.5], 0);
        let fused = fused_map(&maps, &spec).unwrap();
        assert!((fused[0] - 1.1).abs() < 1e-6);
        assert!((fused[8] - 1.3).abs() < 1e-6);
        let (cell, value) = localize(&maps, &spec).unwrap();
        assert_eq!(cell, Cell::new(2, 2));
        assert!((value - 1.3).abs() < 1e-6);
    }

    #[test]
    fn common_peak_wins_in_every_mode() {
        let mk = |scale: f32| {
            let mut v: Vec<f32> = (0..16).map(|i| (i % 5) as f32 * 0.05 * scale).collect();
            v[6] = 2.0 * scale;
            map("l", 4, 4, v)
        };
        let maps = [mk(1.0), mk(0.3), mk(3.0)];
        for mode in [FusionMode::SoftWeight, FusionMode::HardWeight, FusionMode::SoftMean] {
            let spec = FusionSpec::new(mode, hard_weights(3), 1);
            assert_eq!(localize(&maps, &spec).unwrap().0, Cell::new(1, 2), "{mode:?}");
        }
    }

    #[test]
    fn all_zero_map_contributes_nothing() {
        let mut v = vec![0.0; 9];
        v[4] = 0.5;
        let maps = [map("a", 3, 3, vec![0.0; 9]), map("b", 3, 3, v)];
        let spec = FusionSpec::soft_weight(2);
        assert_eq!(localize(&maps, &spec).unwrap().0, Cell::new(1, 1));
    }

    #[test]
    fn mismatched_maps_are_rejected() {
        let maps = [map("a", 3, 3, vec![0.0; 9]), map("b", 2, 2, vec![0.0; 4])];
        assert!(matches!(localize(&maps, &FusionSpec::soft_weight(2)), Err(Error::Shape(_))));
    }

    #[test]
    fn coarse_to_fine_radius_zero_returns_deepest_peak() {
        let deep = map("d", 3, 3, vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.9, 0.0, 0.0, 0.0]);
        let shallow = map("s", 3, 3, vec![5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let spec = FusionSpec::new(FusionMode::CoarseToFine, vec![1.0, 0.5], 0);
        assert_eq!(localize_coarse_to_fine(&[deep, shallow], &spec).unwrap().0, Cell::new(1, 2));
    }

    fn arb_maps(layers: usize) -> impl Strategy<Value = Vec<ResponseMap>> {
        prop::collection::vec(prop::collection::vec(-1f32..1.0, 25), layers)
            .prop_map(|vs| vs.into_iter().map(|v| map("l", 5, 5, v)).collect())
    }

    proptest! {
        #[test]
        fn single_pass_modes_match_brute_force(maps in arb_maps(3), mode in 0usize..3) {
            let mode = [FusionMode::SoftWeight, FusionMode::HardWeight, FusionMode::SoftMean][mode];
            let spec = FusionSpec::new(mode, hard_weights(3), 0);
            let (cell, _) = localize(&maps, &spec).unwrap();
            let mut best = (0, f64::NEG_INFINITY);
            for i in 0..25 {
                let mut s = 0.0f64;
                for (l, f) in maps.iter().enumerate() {
                    let mx = f.values().iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
                    let w = match mode {
                        FusionMode::HardWeight => spec.mu[l] as f64,
                        FusionMode::SoftMean => 1.0 / mx.max(1e-12),
                        _ => spec.mu[l] as f64 / mx.max(1e-12),
                    };
                    s += w * f.values()[i] as f64;
                }
                if s > best.1 { best = (i, s); }
            }
            prop_assert_eq!(cell, Cell::new(best.0 / 5, best.0 % 5));
        }

        #[test]
        fn hard_weight_ignores_uniform_offset(maps in arb_maps(3), offset in -2f32..2.0) {
            let spec = FusionSpec::new(FusionMode::HardWeight, hard_weights(3), 0);
            let shifted: Vec<ResponseMap> = maps
                .iter()
                .map(|f| map("l", 5, 5, f.values().iter().map(|v| v + offset).collect()))
                .collect();
            let a = fused_map(&maps, &spec).unwrap();
            let b = fused_map(&shifted, &spec).unwrap();
            // uniform shift moves every fused value by the same amount
            let shift = b[0] - a[0];
            prop_assert!(a.iter().zip(&b).all(|(x, y)| (y - x - shift).abs() < 1e-4));
            let best = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let runner_up_gap = a.iter().filter(|&&v| v < best).map(|v| best - v).fold(f64::INFINITY, f64::min);
            if runner_up_gap > 1e-3 {
                prop_assert_eq!(localize(&maps, &spec).unwrap().0, localize(&shifted, &spec).unwrap().0);
            }
        }

        #[test]
        fn coarse_to_fine_chain_respects_radius(maps in arb_maps(3), r in 0usize..4) {
            let spec = FusionSpec::new(FusionMode::CoarseToFine, hard_weights(3), r);
            let (cell, _) = localize_coarse_to_fine(&maps, &spec).unwrap();
            let mid = localize_coarse_to_fine(&maps[..2], &spec).unwrap().0;
            prop_assert!(mid.l1(&maps[0].argmax()) <= r);
            prop_assert!(cell.l1(&mid) <= r);
        }
    }
}
