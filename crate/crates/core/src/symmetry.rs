//! Positional parity of system-matrix rows: expected reflection rules,
//! residual scores against those rules, and mirror completion of rows that
//! were only measured on a fundamental domain.

use num_complex::Complex64;

use crate::error::{domain, Error, Result};
use crate::model::{Channel, Grid3, SMRow, ScanSequence};

/// Relation between a row and its reflection along one axis:
/// `f(R r) = s · f(r)` or `f(R r) = s · conj(f(r))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisRule {
    Even,
    Odd,
    ConjEven,
    ConjOdd,
}

impl AxisRule {
    pub fn new(sign: i32, conjugate: bool) -> Self {
        match (sign >= 0, conjugate) {
            (true, false) => AxisRule::Even,
            (false, false) => AxisRule::Odd,
            (true, true) => AxisRule::ConjEven,
            (false, true) => AxisRule::ConjOdd,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            AxisRule::Even | AxisRule::ConjEven => 1.0,
            AxisRule::Odd | AxisRule::ConjOdd => -1.0,
        }
    }

    pub fn conjugates(self) -> bool {
        matches!(self, AxisRule::ConjEven | AxisRule::ConjOdd)
    }

    #[inline]
    pub fn apply(self, v: Complex64) -> Complex64 {
        let v = if self.conjugates() { v.conj() } else { v };
        v * self.sign()
    }

    pub fn name(self) -> &'static str {
        match self {
            AxisRule::Even => "even",
            AxisRule::Odd => "odd",
            AxisRule::ConjEven => "conj-even",
            AxisRule::ConjOdd => "conj-odd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Derivation {
    OneD,
    TwoD,
    /// Three-dimensional drives: no closed-form rule is known.
    Unknown3D,
    /// The sequence does not satisfy the premise of the 1D/2D rules.
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParityDescriptor {
    pub rules: [Option<AxisRule>; 3],
    pub derivation: Derivation,
}

impl ParityDescriptor {
    pub fn unknown(derivation: Derivation) -> Self {
        Self { rules: [None; 3], derivation }
    }

    pub fn has_rules(&self) -> bool {
        self.rules.iter().any(Option::is_some)
    }

    fn ruled_axes(&self) -> Vec<(usize, AxisRule)> {
        self.rules.iter().enumerate().filter_map(|(a, r)| r.map(|r| (a, r))).collect()
    }
}

fn parity_sign(exponent: u32) -> i32 {
    if exponent.is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// Reflection rules for channel `l` at frequency index `k`.
///
/// 1D: `m̃(-x) = (-1)^{k+1} m̃(x)`. 2D: the x-reflection keeps the value up to
/// the sign `(-1)^{k+1}` (x channel) or `(-1)^k` (y channel); the
/// y-reflection carries the same signs together with complex conjugation.
pub fn expected_parity(channel: Channel, k: u32, dimensionality: usize) -> Result<ParityDescriptor> {
    match dimensionality {
        1 => {
            if channel != Channel::X {
                return Ok(ParityDescriptor::unknown(Derivation::Unknown));
            }
            let rule = AxisRule::new(parity_sign(k + 1), false);
            Ok(ParityDescriptor { rules: [Some(rule), None, None], derivation: Derivation::OneD })
        }
        2 => {
            let sign = match channel {
                Channel::X => parity_sign(k + 1),
                Channel::Y => parity_sign(k),
                Channel::Z => return Ok(ParityDescriptor::unknown(Derivation::Unknown)),
            };
            Ok(ParityDescriptor {
                rules: [Some(AxisRule::new(sign, false)), Some(AxisRule::new(sign, true)), None],
                derivation: Derivation::TwoD,
            })
        }
        3 => Ok(ParityDescriptor::unknown(Derivation::Unknown3D)),
        d => Err(domain(format!("unsupported dimensionality {d}"))),
    }
}

/// [`expected_parity`] after checking that `seq` satisfies the rules' premise:
/// a 1D drive along x, or a 2D xy-drive with an even x divider, an odd y
/// divider and sine-phased drives.
pub fn expected_parity_for_sequence(seq: &ScanSequence, channel: Channel, k: u32) -> Result<ParityDescriptor> {
    let axes = seq.axes();
    match seq.drive_dimensionality() {
        1 if axes[0].is_active() => expected_parity(channel, k, 1),
        2 if axes[0].is_active() && axes[1].is_active() => {
            let premise = axes[0].divider.is_multiple_of(2)
                && axes[1].divider % 2 == 1
                && axes[0].phase.cos().abs() < 1e-12
                && axes[1].phase.cos().abs() < 1e-12;
            if premise {
                expected_parity(channel, k, 2)
            } else {
                Ok(ParityDescriptor::unknown(Derivation::Unknown))
            }
        }
        3 => Ok(ParityDescriptor::unknown(Derivation::Unknown3D)),
        _ => Ok(ParityDescriptor::unknown(Derivation::Unknown)),
    }
}

#[inline]
fn reflect_index(grid: &Grid3, v: usize, axis: usize) -> usize {
    let mut p = grid.unravel(v);
    p[axis] = grid.dims()[axis] - 1 - p[axis];
    grid.linear_index(p[0], p[1], p[2])
}

/// Index-reverses the row along `axis` (the discrete `r_a → -r_a`).
pub fn reflect_row(row: &SMRow, grid: &Grid3, axis: usize) -> SMRow {
    let n = row.len();
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    for v in 0..n {
        let w = reflect_index(grid, v, axis);
        re[w] = row.re()[v];
        im[w] = row.im()[v];
    }
    row.with_values(re, im).expect("reflection keeps values finite")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisResidual {
    pub axis: usize,
    pub rule: AxisRule,
    pub residual: f64,
}

/// Guard for the residual denominator of an all-zero row.
pub const RESIDUAL_EPS: f64 = 1e-30;

/// `‖f - rule(reflect(f))‖ / max(‖f‖, ε)` for every ruled axis.
pub fn symmetry_residual(row: &SMRow, grid: &Grid3, desc: &ParityDescriptor) -> Result<Vec<AxisResidual>> {
    if !desc.has_rules() {
        return Err(domain("parity descriptor has no axis rules"));
    }
    if row.len() != grid.len() {
        return Err(domain("row does not match grid"));
    }
    let norm = row.norm_sqr().sqrt().max(RESIDUAL_EPS);
    Ok(desc
        .ruled_axes()
        .into_iter()
        .map(|(axis, rule)| {
            let mut acc = 0.0;
            for v in 0..row.len() {
                let mirrored = rule.apply(row.value(reflect_index(grid, v, axis)));
                acc += (row.value(v) - mirrored).norm_sqr();
            }
            AxisResidual { axis, rule, residual: acc.sqrt() / norm }
        })
        .collect())
}

/// Mask of the fundamental domain kept by mirror completion: the upper half
/// (centre slice included) along every ruled axis.
pub fn fundamental_domain(grid: &Grid3, desc: &ParityDescriptor) -> Vec<bool> {
    let dims = grid.dims();
    (0..grid.len())
        .map(|v| {
            let p = grid.unravel(v);
            (0..3).all(|a| desc.rules[a].is_none() || p[a] >= dims[a] / 2)
        })
        .collect()
}

/// Number of voxels that must be measured: `⌈n/2⌉` per ruled axis, `n` otherwise.
pub fn measurement_count(grid: &Grid3, desc: &ParityDescriptor) -> usize {
    grid.dims()
        .iter()
        .zip(desc.rules.iter())
        .map(|(&n, r)| if r.is_some() { n.div_ceil(2) } else { n })
        .product()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MirrorCompletion {
    pub row: SMRow,
    /// Voxels filled from more than one mirror partner.
    pub multi_path: usize,
    /// Multi-path voxels whose predictions disagreed beyond `1e-9` relative.
    pub inconsistent: usize,
}

/// Fills voxels outside `known` from their mirror partners.
///
/// A voxel may be reachable through several reflection combinations; the
/// predictions are averaged.
pub fn mirror_complete(row: &SMRow, grid: &Grid3, known: &[bool], desc: &ParityDescriptor) -> Result<MirrorCompletion> {
    if !desc.has_rules() {
        return Err(domain("parity descriptor has no axis rules"));
    }
    if row.len() != grid.len() || known.len() != grid.len() {
        return Err(domain("row, mask and grid sizes differ"));
    }
    let axes = desc.ruled_axes();
    let n_subsets = 1usize << axes.len();
    let scale = row
        .to_complex()
        .iter()
        .zip(known)
        .filter(|(_, &k)| k)
        .map(|(v, _)| v.norm())
        .fold(0.0, f64::max);
    let mut re = row.re().to_vec();
    let mut im = row.im().to_vec();
    let mut missing = 0;
    let mut multi_path = 0;
    let mut inconsistent = 0;
    let mut preds = Vec::with_capacity(n_subsets);
    for v in 0..grid.len() {
        if known[v] {
            continue;
        }
        preds.clear();
        for subset in 1..n_subsets {
            let mut w = v;
            let mut sign = 1.0;
            let mut conj = false;
            for (bit, &(axis, rule)) in axes.iter().enumerate() {
                if subset & (1 << bit) != 0 {
                    w = reflect_index(grid, w, axis);
                    sign *= rule.sign();
                    conj ^= rule.conjugates();
                }
            }
            if w != v && known[w] {
                let src = row.value(w);
                let src = if conj { src.conj() } else { src };
                preds.push(src * sign);
            }
        }
        match preds.len() {
            0 => missing += 1,
            n => {
                let mean = preds.iter().sum::<Complex64>() / n as f64;
                if n > 1 {
                    multi_path += 1;
                    let spread = preds.iter().map(|p| (p - mean).norm()).fold(0.0, f64::max);
                    if spread > 1e-9 * scale.max(RESIDUAL_EPS) {
                        inconsistent += 1;
                    }
                }
                re[v] = mean.re;
                im[v] = mean.im;
            }
        }
    }
    if missing > 0 {
        return Err(Error::IncompleteDomain { missing });
    }
    Ok(MirrorCompletion { row: row.with_values(re, im)?, multi_path, inconsistent })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1(n: usize) -> Grid3 {
        Grid3::new([n, 1, 1], [0.01, 1.0, 1.0]).unwrap()
    }

    fn real_row(grid: &Grid3, f: impl Fn(f64) -> f64) -> SMRow {
        let re = (0..grid.len()).map(|p| f(grid.axis_coordinate(0, p))).collect();
        SMRow::new(Channel::X, 1, re, vec![0.0; grid.len()]).unwrap()
    }

    #[test]
    fn expected_parity_examples() {
        let d = expected_parity(Channel::X, 3, 1).unwrap();
        assert_eq!(d.rules[0], Some(AxisRule::Even));
        let d = expected_parity(Channel::X, 4, 1).unwrap();
        assert_eq!(d.rules[0], Some(AxisRule::Odd));
        let d = expected_parity(Channel::Y, 4, 2).unwrap();
        assert_eq!(d.rules[0], Some(AxisRule::Even));
        assert_eq!(d.rules[1], Some(AxisRule::ConjEven));
        let d = expected_parity(Channel::X, 4, 2).unwrap();
        assert_eq!(d.rules[0], Some(AxisRule::Odd));
        assert_eq!(d.rules[1], Some(AxisRule::ConjOdd));
        let d = expected_parity(Channel::Z, 4, 3).unwrap();
        assert_eq!(d.derivation, Derivation::Unknown3D);
        assert!(!d.has_rules());
        assert!(matches!(expected_parity(Channel::X, 1, 4), Err(Error::Domain(_))));
        assert_eq!(expected_parity(Channel::Y, 7, 2).unwrap(), expected_parity(Channel::Y, 7, 2).unwrap());
    }

    #[test]
    fn premise_violations_report_unknown() {
        let seq = ScanSequence::lissajous_2d([2.0, 2.0], [0.01, 0.01], [17, 16], 2.5e-6).unwrap();
        let d = expected_parity_for_sequence(&seq, Channel::X, 3).unwrap();
        assert_eq!(d.derivation, Derivation::Unknown);
        let seq = ScanSequence::lissajous_2d([2.0, 2.0], [0.01, 0.01], [16, 17], 2.5e-6).unwrap();
        let d = expected_parity_for_sequence(&seq, Channel::X, 3).unwrap();
        assert_eq!(d.derivation, Derivation::TwoD);
    }

    #[test]
    fn reflect_examples() {
        let g = Grid3::new([4, 3, 1], [0.01; 3]).unwrap();
        let row = SMRow::new(Channel::X, 1, (0..12).map(|v| v as f64).collect(), (0..12).map(|v| -(v as f64)).collect()).unwrap();
        for axis in 0..3 {
            assert_eq!(reflect_row(&reflect_row(&row, &g, axis), &g, axis), row);
        }
        let c = SMRow::new(Channel::X, 1, vec![2.5; 12], vec![1.0; 12]).unwrap();
        assert_eq!(reflect_row(&c, &g, 1), c);
        let g = grid1(6);
        let lin = real_row(&g, |x| x);
        let neg = real_row(&g, |x| -x);
        assert_eq!(reflect_row(&lin, &g, 0), neg);
    }

    #[test]
    fn residual_examples() {
        let g = grid1(7);
        let desc_even = ParityDescriptor { rules: [Some(AxisRule::Even), None, None], derivation: Derivation::OneD };
        let desc_odd = ParityDescriptor { rules: [Some(AxisRule::Odd), None, None], derivation: Derivation::OneD };
        let zero = SMRow::zeros(Channel::X, 1, 7);
        assert_eq!(symmetry_residual(&zero, &g, &desc_even).unwrap()[0].residual, 0.0);
        let sq = real_row(&g, |x| x * x);
        assert_eq!(symmetry_residual(&sq, &g, &desc_even).unwrap()[0].residual, 0.0);
        let r = symmetry_residual(&sq, &g, &desc_odd).unwrap()[0].residual;
        assert!((r - 2.0).abs() < 1e-15);
        let none = ParityDescriptor::unknown(Derivation::Unknown3D);
        assert!(symmetry_residual(&sq, &g, &none).is_err());
    }

    #[test]
    fn measurement_count_quadrant() {
        for n in [3usize, 5, 9, 17, 37] {
            let g = Grid3::new([n, n, 1], [0.01; 3]).unwrap();
            let d = expected_parity(Channel::X, 2, 2).unwrap();
            assert_eq!(measurement_count(&g, &d), n.div_ceil(2).pow(2));
            assert_eq!(fundamental_domain(&g, &d).iter().filter(|&&k| k).count(), n.div_ceil(2).pow(2));
        }
    }

    #[test]
    fn even_completion_is_exact() {
        let g = grid1(9);
        let row = real_row(&g, |x| (300.0 * x).cos() + x * x * 1e4);
        let d = ParityDescriptor { rules: [Some(AxisRule::Even), None, None], derivation: Derivation::OneD };
        let mask = fundamental_domain(&g, &d);
        let mut re = row.re().to_vec();
        for (v, &k) in mask.iter().enumerate() {
            if !k {
                re[v] = 123.0;
            }
        }
        let partial = row.with_values(re, row.im().to_vec()).unwrap();
        let done = mirror_complete(&partial, &g, &mask, &d).unwrap();
        for (a, b) in done.row.re().iter().zip(row.re()) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn incomplete_mask_is_rejected() {
        let g = grid1(9);
        let d = ParityDescriptor { rules: [Some(AxisRule::Even), None, None], derivation: Derivation::OneD };
        let mut mask = fundamental_domain(&g, &d);
        mask[8] = false;
        let row = real_row(&g, |x| x);
        assert!(matches!(mirror_complete(&row, &g, &mask, &d), Err(Error::IncompleteDomain { missing: 2 })));
    }

    #[test]
    fn asymmetric_completion_error_matches_defect() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let g = Grid3::new([9, 9, 1], [0.01; 3]).unwrap();
        let re: Vec<f64> = (0..81).map(|_| rng.random_range(-1.0..1.0)).collect();
        let im: Vec<f64> = (0..81).map(|_| rng.random_range(-1.0..1.0)).collect();
        let row = SMRow::new(Channel::X, 2, re, im).unwrap();
        let d = ParityDescriptor { rules: [Some(AxisRule::ConjOdd), None, None], derivation: Derivation::OneD };
        let mask = fundamental_domain(&g, &d);
        let done = mirror_complete(&row, &g, &mask, &d).unwrap();

        // Brute force: the completion error on the unknown half equals half of
        // the reflection defect outside the centre column.
        let mut err2 = 0.0;
        let mut defect2 = 0.0;
        let mut centre2 = 0.0;
        for y in 0..9 {
            for x in 0..9 {
                let v = g.linear_index(x, y, 0);
                let m = g.linear_index(8 - x, y, 0);
                let diff = row.value(v) - (-row.value(m).conj());
                defect2 += diff.norm_sqr();
                if x == 4 {
                    centre2 += diff.norm_sqr();
                }
                err2 += (done.row.value(v) - row.value(v)).norm_sqr();
            }
        }
        assert!(err2 > 0.0);
        assert!((err2 - (defect2 - centre2) / 2.0).abs() < 1e-12 * defect2);
        let res = symmetry_residual(&row, &g, &d).unwrap()[0].residual;
        assert!((res - defect2.sqrt() / row.norm_sqr().sqrt()).abs() < 1e-12);
    }
}
