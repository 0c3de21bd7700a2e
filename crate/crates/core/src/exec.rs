//! Functional execution of an AIE tiling plan on integer matrices.
//!
//! The executor walks the same loop nest the hardware would: spatial tiles,
//! API repetitions, unrolled macroblocks and the west-to-east cascade. Its
//! output is compared against a textbook GEMM.
//!
//! Canonical order: for each output sub-block `(p_n, r_m, r_n)`, columns
//! `p_k` run west to east, each reducing over `r_k`, and within a repetition
//! the unrolled calls go m-outer, n-middle, k-inner. Accumulation is exact in
//! 64 bits and cast to a saturating 32-bit result at the end.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AieMapping, Dims3, Domain, LayerPlan, TilingPlan};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Copy + Default> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::default(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }
}

impl Matrix<i32> {
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1);
        }
        m
    }

    /// Uniform int8-range entries.
    pub fn random_i8(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(-128..=127)).collect();
        Self { rows, cols, data }
    }
}

/// Reference product with a 64-bit accumulator.
pub fn naive_gemm(a: &Matrix<i32>, b: &Matrix<i32>) -> Result<Matrix<i64>> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{}, B is {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut c = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for j in 0..b.cols {
            let mut acc = 0i64;
            for k in 0..a.cols {
                acc += a.get(i, k) as i64 * b.get(k, j) as i64;
            }
            c.set(i, j, acc);
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileChecksum {
    pub p_k: u64,
    pub p_n: u64,
    /// Wrapping sum of every partial product block the tile emitted.
    pub checksum: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecTrace {
    /// Logical `m x n` result after the saturating cast.
    pub c: Matrix<i32>,
    pub macroblock_invocations: u64,
    pub cascade_hops: u64,
    /// In canonical order: `p_n` outer, `p_k` inner.
    pub tile_checksums: Vec<TileChecksum>,
    /// Output coordinates clamped by the final cast.
    pub saturated: Vec<(usize, usize)>,
}

fn mapping(layer: &LayerPlan) -> Result<&AieMapping> {
    if layer.domain != Domain::Aie {
        return Err(Error::IllegalPlan(format!(
            "layer '{}' is not mapped to the AIE",
            layer.name
        )));
    }
    layer
        .aie
        .as_ref()
        .ok_or_else(|| Error::IllegalPlan(format!("layer '{}' has no AIE mapping", layer.name)))
}

/// Structural checks the loop nest relies on.
fn check_mapping(layer: &LayerPlan, a: &AieMapping, unroll: Dims3) -> Result<()> {
    let eff = a.api_shape.times(&unroll);
    let fail = |what: String| Err(Error::IllegalPlan(format!("layer '{}': {what}", layer.name)));
    if !eff.all_positive() || a.p_k == 0 || a.p_n == 0 {
        return fail("zero tiling factor".into());
    }
    if a.padded.m < layer.m || a.padded.k < layer.k || a.padded.n < layer.n {
        return fail(format!(
            "padded {} smaller than logical ({},{},{})",
            a.padded, layer.m, layer.k, layer.n
        ));
    }
    if a.p_k * a.q_k != a.padded.k || a.p_n * a.q_n != a.padded.n {
        return fail(format!(
            "spatial split ({}, {}) x ({}, {}) does not tile padded {}",
            a.p_k, a.p_n, a.q_k, a.q_n, a.padded
        ));
    }
    if a.r.times(&eff) != Dims3::new(a.padded.m, a.q_k, a.q_n) {
        return fail(format!(
            "repetitions {} of {eff} do not cover ({}, {}, {})",
            a.r, a.padded.m, a.q_k, a.q_n
        ));
    }
    Ok(())
}

/// Runs one layer's tiling plan on `a` (`m x k`) and `b` (`k x n`).
pub fn execute_plan(layer: &LayerPlan, unroll: Dims3, a: &Matrix<i32>, b: &Matrix<i32>) -> Result<ExecTrace> {
    let map = mapping(layer)?;
    check_mapping(layer, map, unroll)?;
    run(layer, map, unroll, a, b)
}

fn run(layer: &LayerPlan, map: &AieMapping, unroll: Dims3, a: &Matrix<i32>, b: &Matrix<i32>) -> Result<ExecTrace> {
    let (m, k, n) = (layer.m as usize, layer.k as usize, layer.n as usize);
    if (a.rows, a.cols, b.rows, b.cols) != (m, k, k, n) {
        return Err(Error::DimensionMismatch(format!(
            "layer '{}' is ({m},{k},{n}) but A is {}x{} and B is {}x{}",
            layer.name, a.rows, a.cols, b.rows, b.cols
        )));
    }
    // Zero-fill outside the logical region.
    let a_at = |r: usize, c: usize| if r < m && c < k { a.get(r, c) as i64 } else { 0 };
    let b_at = |r: usize, c: usize| if r < k && c < n { b.get(r, c) as i64 } else { 0 };

    let s = map.api_shape;
    let (sm, sk, sn) = (s.m as usize, s.k as usize, s.n as usize);
    let eff = s.times(&unroll);
    let (em, ek, en) = (eff.m as usize, eff.k as usize, eff.n as usize);
    let (q_k, q_n) = (map.q_k as usize, map.q_n as usize);

    let mut wide = Matrix::<i64>::zeros(m, n);
    let mut invocations = 0u64;
    let mut hops = 0u64;
    let mut sums = vec![0i64; (map.p_k * map.p_n) as usize];
    let mut block = vec![0i64; em * en];

    for pn in 0..map.p_n as usize {
        for rm in 0..map.r.m as usize {
            for rn in 0..map.r.n as usize {
                // The cascade carries this running block from column to column.
                block.iter_mut().for_each(|v| *v = 0);
                for pk in 0..map.p_k as usize {
                    if pk > 0 {
                        hops += 1;
                    }
                    let mut partial = vec![0i64; em * en];
                    for rk in 0..map.r.k as usize {
                        for um in 0..unroll.m as usize {
                            for un in 0..unroll.n as usize {
                                for uk in 0..unroll.k as usize {
                                    invocations += 1;
                                    for i in 0..sm {
                                        let row = rm * em + um * sm + i;
                                        for j in 0..sn {
                                            let col = pn * q_n + rn * en + un * sn + j;
                                            let mut acc = 0i64;
                                            for kk in 0..sk {
                                                let kidx = pk * q_k + rk * ek + uk * sk + kk;
                                                acc += a_at(row, kidx) * b_at(kidx, col);
                                            }
                                            partial[(um * sm + i) * en + un * sn + j] += acc;
                                        }
                                    }
                                }
                            }
                        }
                    }
                    let tile = pn * map.p_k as usize + pk;
                    sums[tile] = partial.iter().fold(sums[tile], |s, &v| s.wrapping_add(v));
                    block.iter_mut().zip(&partial).for_each(|(acc, p)| *acc += p);
                }
                for bi in 0..em {
                    for bj in 0..en {
                        let (row, col) = (rm * em + bi, pn * q_n + rn * en + bj);
                        if row < m && col < n {
                            wide.set(row, col, block[bi * en + bj]);
                        }
                    }
                }
            }
        }
    }

    let mut c = Matrix::<i32>::zeros(m, n);
    let mut saturated = Vec::new();
    for r in 0..m {
        for col in 0..n {
            let v = wide.get(r, col);
            let clamped = v.clamp(i32::MIN as i64, i32::MAX as i64);
            if clamped != v {
                saturated.push((r, col));
            }
            c.set(r, col, clamped as i32);
        }
    }
    let tile_checksums = (0..map.p_n)
        .flat_map(|pn| (0..map.p_k).map(move |pk| (pk, pn)))
        .map(|(pk, pn)| TileChecksum {
            p_k: pk,
            p_n: pn,
            checksum: sums[(pn * map.p_k + pk) as usize],
        })
        .collect();
    Ok(ExecTrace {
        c,
        macroblock_invocations: invocations,
        cascade_hops: hops,
        tile_checksums,
        saturated,
    })
}

/// Deliberate plan corruption used as a negative control.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Runs one fewer `r_k` repetition than the plan states.
    RkOffByOne,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub layer: usize,
    pub trial: u64,
    pub row: usize,
    pub col: usize,
    pub expected: i64,
    pub actual: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VerifyReport {
    pub trials: u64,
    pub seed: u64,
    pub layers_checked: usize,
    /// First mismatch per layer, if any.
    pub mismatches: Vec<Mismatch>,
    /// Broken trace invariants or execution errors.
    pub failures: Vec<String>,
    pub warnings: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty() && self.failures.is_empty()
    }
}

/// Checks every AIE layer of `plan` against [`naive_gemm`] on `trials`
/// seeded random int8 matrices.
pub fn verify_plan(plan: &TilingPlan, unroll: Dims3, trials: u64, seed: u64) -> VerifyReport {
    verify_plan_with_fault(plan, unroll, trials, seed, None)
}

#[doc(hidden)]
pub fn verify_plan_with_fault(
    plan: &TilingPlan,
    unroll: Dims3,
    trials: u64,
    seed: u64,
    fault: Option<Fault>,
) -> VerifyReport {
    let mut report = VerifyReport {
        trials,
        seed,
        ..Default::default()
    };
    if trials == 0 {
        report
            .warnings
            .push("no trials requested; verification is vacuous".into());
    }
    for (idx, layer) in plan.layers.iter().enumerate() {
        let Some(map) = layer.aie.as_ref().filter(|_| layer.domain == Domain::Aie) else {
            continue;
        };
        report.layers_checked += 1;
        if let Err(e) = check_mapping(layer, map, unroll) {
            report.failures.push(e.to_string());
            continue;
        }
        let mut map = map.clone();
        if fault == Some(Fault::RkOffByOne) {
            map.r.k = map.r.k.saturating_sub(1);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let expected_calls = map.p_k * map.p_n * map.r.product() * unroll.product();
        let sub_blocks = map.p_n * map.r.m * map.r.n;
        for trial in 0..trials {
            let a = Matrix::random_i8(layer.m as usize, layer.k as usize, &mut rng);
            let b = Matrix::random_i8(layer.k as usize, layer.n as usize, &mut rng);
            let trace = match run(layer, &map, unroll, &a, &b) {
                Ok(t) => t,
                Err(e) => {
                    report.failures.push(format!("layer {idx}: {e}"));
                    break;
                }
            };
            let oracle = naive_gemm(&a, &b).expect("dimensions checked by run");
            if trace.macroblock_invocations != expected_calls {
                report.failures.push(format!(
                    "layer {idx}: {} macroblock calls, expected {expected_calls}",
                    trace.macroblock_invocations
                ));
            }
            if trace.cascade_hops != (map.p_k - 1) * sub_blocks {
                report.failures.push(format!(
                    "layer {idx}: {} cascade hops, expected {}",
                    trace.cascade_hops,
                    (map.p_k - 1) * sub_blocks
                ));
            }
            let first_bad = (0..oracle.rows)
                .flat_map(|r| (0..oracle.cols).map(move |c| (r, c)))
                .find(|&(r, c)| trace.c.get(r, c) as i64 != oracle.get(r, c));
            if let Some((row, col)) = first_bad {
                report.mismatches.push(Mismatch {
                    layer: idx,
                    trial,
                    row,
                    col,
                    expected: oracle.get(row, col),
                    actual: trace.c.get(row, col) as i64,
                });
                break;
            }
            if !report.failures.is_empty() {
                break;
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DeviceSpec, LayerSpec, NetworkSpec};
    use crate::planner::{candidate_tilings, plan_network, PlanConstraints};

    fn plan_for(m: u64, k: u64, n: u64, max_tiles: u64) -> TilingPlan {
        let net = NetworkSpec::new("x", vec![LayerSpec::new("l", m, k, n).unwrap()], None).unwrap();
        let c = PlanConstraints {
            max_tiles_per_layer: max_tiles,
            ..Default::default()
        };
        plan_network(&net, &DeviceSpec::vek280(), &c, None).unwrap().plan
    }

    fn unroll() -> Dims3 {
        DeviceSpec::vek280().unroll
    }

    #[test]
    fn naive_examples() {
        let a = Matrix::from_vec(1, 1, vec![7]).unwrap();
        let b = Matrix::from_vec(1, 1, vec![-6]).unwrap();
        assert_eq!(naive_gemm(&a, &b).unwrap().data, vec![-42]);
        let z = Matrix::<i32>::zeros(2, 3);
        let any = Matrix::from_vec(3, 2, vec![1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(naive_gemm(&z, &any).unwrap().data, vec![0; 4]);
        // Worked by hand:
        // [1 2 3]   [1 0 2]   [ 1+ 4+ 9, 0+ 6+ 3, 2+ 2+ 6]   [14  9 10]
        // [4 5 6] x [2 3 1] = [ 4+10+18, 0+15+ 6, 8+ 5+12] = [32 21 25]
        // [7 8 9]   [3 1 2]   [ 7+16+27, 0+24+ 9,14+ 8+18]   [50 33 40]
        let a = Matrix::from_vec(3, 3, vec![1, 2, 3, 4, 5, 6, 7, 8, 9]).unwrap();
        let b = Matrix::from_vec(3, 3, vec![1, 0, 2, 2, 3, 1, 3, 1, 2]).unwrap();
        assert_eq!(
            naive_gemm(&a, &b).unwrap().data,
            vec![14, 9, 10, 32, 21, 25, 50, 33, 40]
        );
        assert!(naive_gemm(&a, &Matrix::<i32>::zeros(2, 2)).is_err());
    }

    #[test]
    fn identity_reproduces_b() {
        let plan = plan_for(8, 8 * 2, 32, 4);
        let layer = &plan.layers[0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // A is 8x16: identity in the leading 8 columns.
        let mut a = Matrix::<i32>::zeros(8, 16);
        for i in 0..8 {
            a.set(i, i, 1);
        }
        let b = Matrix::random_i8(16, 32, &mut rng);
        let t = execute_plan(layer, unroll(), &a, &b).unwrap();
        for r in 0..8 {
            for c in 0..32 {
                assert_eq!(t.c.get(r, c), b.get(r, c));
            }
        }
    }

    #[test]
    fn planned_128_square_matches_oracle() {
        let plan = plan_for(8, 128, 128, 8);
        let layer = &plan.layers[0];
        let map = layer.aie.as_ref().unwrap();
        assert_eq!((map.p_k, map.p_n), (4, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = Matrix::random_i8(8, 128, &mut rng);
        let b = Matrix::random_i8(128, 128, &mut rng);
        let t = execute_plan(layer, unroll(), &a, &b).unwrap();
        let oracle = naive_gemm(&a, &b).unwrap();
        assert!(t.c.data.iter().zip(&oracle.data).all(|(&x, &y)| x as i64 == y));
        assert_eq!(t.macroblock_invocations, map.p_k * map.p_n * map.r.product() * 8);
        assert_eq!(t.cascade_hops, 3 * map.p_n * map.r.m * map.r.n);
        assert_eq!(t.tile_checksums.len(), 8);
        assert!(t.saturated.is_empty());
    }

    #[test]
    fn all_candidates_agree_bit_for_bit() {
        let layer = LayerSpec::new("l", 8, 96, 80).unwrap();
        let dev = DeviceSpec::vek280();
        let c = PlanConstraints {
            max_tiles_per_layer: 6,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Matrix::random_i8(8, 96, &mut rng);
        let b = Matrix::random_i8(96, 80, &mut rng);
        let mut outputs = Vec::new();
        for cand in candidate_tilings(&layer, &dev, &c) {
            let lp = LayerPlan {
                name: "l".into(),
                m: 8,
                k: 96,
                n: 80,
                domain: Domain::Aie,
                aie: Some(AieMapping {
                    p_k: cand.p_k,
                    p_n: cand.p_n,
                    padded: cand.padded,
                    q_k: cand.per_tile.k,
                    q_n: cand.per_tile.n,
                    api_shape: cand.tiling.api_shape,
                    r: cand.tiling.repetitions,
                    band: 0,
                    column_span: [7, 6 + cand.p_k],
                }),
                rf: None,
                latency_cycles: 0.0,
                latency_seconds: 0.0,
                flags: vec![],
            };
            outputs.push(execute_plan(&lp, dev.unroll, &a, &b).unwrap().c);
        }
        assert!(outputs.len() > 3);
        assert!(outputs.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn saturation_is_reported() {
        let plan = plan_for(8, 16, 32, 1);
        let layer = &plan.layers[0];
        // 16 * 2^20 * 2^20 = 2^44 overflows the 32-bit output.
        let a = Matrix::from_vec(8, 16, vec![1 << 20; 8 * 16]).unwrap();
        let mut b = Matrix::from_vec(16, 32, vec![1 << 20; 16 * 32]).unwrap();
        for r in 0..16 {
            b.set(r, 0, -(1 << 20));
        }
        b.set(0, 1, 0);
        let t = execute_plan(layer, unroll(), &a, &b).unwrap();
        assert_eq!(t.saturated.len(), 8 * 32);
        assert_eq!(t.c.get(0, 0), i32::MIN);
        assert_eq!(t.c.get(0, 2), i32::MAX);
    }

    #[test]
    fn verify_passes_and_catches_rk_fault() {
        let plan = plan_for(8, 128, 128, 8);
        let ok = verify_plan(&plan, unroll(), 20, 42);
        assert!(ok.passed(), "{ok:?}");
        let bad = verify_plan_with_fault(&plan, unroll(), 20, 42, Some(Fault::RkOffByOne));
        assert!(!bad.passed());
        assert_eq!(bad.mismatches.len(), 1);
        let empty = verify_plan(&plan, unroll(), 0, 42);
        assert!(empty.passed());
        assert_eq!(empty.warnings.len(), 1);
    }

    #[test]
    fn wrong_shapes_are_rejected() {
        let plan = plan_for(8, 128, 128, 8);
        let a = Matrix::<i32>::zeros(8, 64);
        let b = Matrix::<i32>::zeros(64, 128);
        assert!(matches!(
            execute_plan(&plan.layers[0], unroll(), &a, &b),
            Err(Error::DimensionMismatch(_))
        ));
        let mut broken = plan.layers[0].clone();
        broken.aie.as_mut().unwrap().q_k = 48;
        let a = Matrix::<i32>::zeros(8, 128);
        let b = Matrix::<i32>::zeros(128, 128);
        assert!(matches!(
            execute_plan(&broken, unroll(), &a, &b),
            Err(Error::IllegalPlan(_))
        ));
    }
}
