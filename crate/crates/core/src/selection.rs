//! Extended selection matrices: weighted combinations of point-velocity
//! components that cancel the constrained freedoms (v_x, w_z) of the
//! TyTzRxRy motion class.
//!
//! A row built from the pair (v_iy, v_jz) uses
//!
//!   w_i v_iy + w_j v_jy + v_kz,
//!
//! where `k` is the lower of `i`, `j`. The z components carry no v_x or w_z
//! term; the y components carry `v_y + a_x w_z - a_z w_x`, so the weights must
//! satisfy `w_i a_ix + w_j a_jx = 0`.

use std::fmt;

use nalgebra::{DMatrix, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pointmap::PointVelocityMap;

/// Columns of the twist (v_x, v_y, v_z, w_x, w_y, w_z) that are free.
pub const INDEPENDENT: [usize; 4] = [1, 2, 3, 4];
/// Columns of the twist that the PRS hinges lock.
pub const CONSTRAINED: [usize; 2] = [0, 5];

/// How the two y weights of a row are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// Weights sum to one: `w_i = -a_jx / (a_ix - a_jx)`,
    /// `w_j = a_ix / (a_ix - a_jx)`. Every row then carries `v_y + v_z`, so
    /// the nominal map has rank at most 3.
    Printed,
    /// Orthogonal projection of the plain pick `v_iy` onto the cancelling
    /// direction: `w_i = a_jx^2 / d`, `w_j = -a_ix a_jx / d`,
    /// `d = a_ix^2 + a_jx^2`. Collapses to the 0/1 pick when `v_iy` is
    /// already free of `w_z`.
    Projected,
}

impl SelectionRule {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectionRule::Printed => "printed",
            SelectionRule::Projected => "projected",
        }
    }
}

impl std::str::FromStr for SelectionRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "printed" => Ok(SelectionRule::Printed),
            "projected" => Ok(SelectionRule::Projected),
            other => Err(format!("unknown selection rule `{other}` (expected projected or printed)")),
        }
    }
}

/// One row of a plan. Indices are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SelectionPair {
    /// Point whose y component is the row's named pick.
    pub y_point: usize,
    /// Point whose y component absorbs the w_z term.
    pub partner: usize,
    /// Point whose z component enters with unit weight.
    pub z_point: usize,
}

impl SelectionPair {
    /// The pair (v_iy, v_jz) from the admissible list.
    pub fn from_pair(i: usize, j: usize) -> Self {
        SelectionPair { y_point: i, partner: j, z_point: i.min(j) }
    }
}

impl fmt::Display for SelectionPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (i, j, k) = (self.y_point + 1, self.partner + 1, self.z_point + 1);
        if self.z_point == self.y_point.min(self.partner) {
            write!(f, "[\"{i}y\",\"{j}z\"]")
        } else {
            write!(f, "[\"{i}y\",\"{j}y\",\"{k}z\"]")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SelectionPlan {
    pub pairs: Vec<SelectionPair>,
}

impl fmt::Display for SelectionPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (n, p) in self.pairs.iter().enumerate() {
            if n > 0 {
                f.write_str(",")?;
            }
            write!(f, "{p}")?;
        }
        f.write_str("]")
    }
}

fn parse_token(tok: &str, f: usize) -> Result<(usize, char)> {
    let bad = || Error::InvalidPlan(format!("bad component `{tok}` (expected e.g. \"2y\")"));
    let comp = tok.chars().last().ok_or_else(bad)?;
    if !matches!(comp, 'x' | 'y' | 'z') {
        return Err(bad());
    }
    let idx: usize = tok[..tok.len() - 1].parse().map_err(|_| bad())?;
    if idx == 0 || idx > f {
        return Err(Error::InvalidPlan(format!("point index {idx} outside 1..={f}")));
    }
    Ok((idx - 1, comp))
}

impl SelectionPlan {
    /// (v1y,v2z), (v2y,v3z), (v3y,v4z), (v4y,v1z).
    pub fn primary() -> Self {
        Self::cyclic(4, 1)
    }

    /// (v1y,v3z), (v2y,v4z), (v3y,v1z), (v4y,v2z).
    pub fn alternate() -> Self {
        Self::cyclic(4, 2)
    }

    fn cyclic(f: usize, shift: usize) -> Self {
        SelectionPlan { pairs: (0..f).map(|i| SelectionPair::from_pair(i, (i + shift) % f)).collect() }
    }

    /// Accepts `primary`, `alternate`, or a JSON list of pairs such as
    /// `[["1y","2z"],["2y","3z"],["3y","4z"],["4y","1z"]]`. A triple
    /// `["1y","2y","2z"]` names the z point explicitly.
    pub fn parse(s: &str, f: usize) -> Result<Self> {
        let plan = match s.trim() {
            "primary" => Self::primary(),
            "alternate" => Self::alternate(),
            text => {
                let rows: Vec<Vec<String>> =
                    serde_json::from_str(text).map_err(|e| Error::InvalidPlan(e.to_string()))?;
                let pairs = rows
                    .iter()
                    .map(|row| {
                        let toks = row.iter().map(|t| parse_token(t, f)).collect::<Result<Vec<_>>>()?;
                        match toks.as_slice() {
                            [(i, 'y'), (j, 'z')] => Ok(SelectionPair::from_pair(*i, *j)),
                            [(i, 'y'), (j, 'y'), (k, 'z')] => {
                                Ok(SelectionPair { y_point: *i, partner: *j, z_point: *k })
                            }
                            _ => Err(Error::InvalidPlan(format!(
                                "row {row:?} must be [\"iy\",\"jz\"] or [\"iy\",\"jy\",\"kz\"]"
                            ))),
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                SelectionPlan { pairs }
            }
        };
        plan.validate(f)?;
        Ok(plan)
    }

    pub fn validate(&self, f: usize) -> Result<()> {
        if self.pairs.len() != f {
            return Err(Error::InvalidPlan(format!("plan has {} rows, expected {f}", self.pairs.len())));
        }
        for (r, p) in self.pairs.iter().enumerate() {
            if p.y_point >= f || p.partner >= f || p.z_point >= f {
                return Err(Error::InvalidPlan(format!("row {} references a point outside 1..={f}", r + 1)));
            }
            if p.y_point == p.partner {
                return Err(Error::InvalidPlan(format!("row {} pairs point {} with itself", r + 1, p.y_point + 1)));
            }
        }
        Ok(())
    }
}

/// Admissible pairs per limb: limb i may use (v_iy, v_jz) for every j != i.
pub fn enumerate_pairings(f: usize) -> Vec<Vec<SelectionPair>> {
    (0..f)
        .map(|i| (0..f).filter(|&j| j != i).map(|j| SelectionPair::from_pair(i, j)).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionMatrix {
    /// f x 3f, columns ordered (v_1x, v_1y, v_1z, ..., v_fz).
    pub s: DMatrix<f64>,
    pub plan: SelectionPlan,
    pub rule: SelectionRule,
}

/// y weights (w_i, w_j) of one row.
pub fn row_weights(rule: SelectionRule, row: usize, pair: &SelectionPair, points: &[Vector3<f64>]) -> Result<(f64, f64)> {
    let (i, j) = (pair.y_point, pair.partner);
    let max_ax = points.iter().map(|p| p.x.abs()).fold(0.0, f64::max);
    let scale = points.iter().map(|p| p.norm()).fold(0.0, f64::max);
    match rule {
        SelectionRule::Printed => {
            let (ai, aj) = (points[i].x, points[j].x);
            let denom = ai - aj;
            if !(denom.abs() > 1e-9 * max_ax) {
                return Err(Error::DegeneratePair { row: row + 1, i: i + 1, j: j + 1 });
            }
            Ok((-aj / denom, ai / denom))
        }
        SelectionRule::Projected => {
            let clean = |v: f64| if v.abs() <= 1e-12 * scale { 0.0 } else { v };
            let (ai, aj) = (clean(points[i].x), clean(points[j].x));
            let d = ai * ai + aj * aj;
            if d == 0.0 {
                Ok((1.0, 0.0))
            } else {
                Ok((aj * aj / d, -ai * aj / d))
            }
        }
    }
}

pub fn build_selection_matrix(
    plan: &SelectionPlan,
    points: &[Vector3<f64>],
    rule: SelectionRule,
) -> Result<SelectionMatrix> {
    let f = points.len();
    plan.validate(f)?;
    let mut s = DMatrix::zeros(f, 3 * f);
    for (r, pair) in plan.pairs.iter().enumerate() {
        let (wi, wj) = row_weights(rule, r, pair, points)?;
        s[(r, 3 * pair.y_point + 1)] += wi;
        s[(r, 3 * pair.partner + 1)] += wj;
        s[(r, 3 * pair.z_point + 2)] += 1.0;
    }
    Ok(SelectionMatrix { s, plan: plan.clone(), rule })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NominalMap {
    /// V_ps = S V_p, f x 6.
    pub full: DMatrix<f64>,
    /// Columns (v_y, v_z, w_x, w_y) of V_ps.
    pub restricted: DMatrix<f64>,
}

pub fn nominal_map(s: &SelectionMatrix, vp: &PointVelocityMap) -> Result<NominalMap> {
    if s.s.ncols() != vp.vp.nrows() {
        return Err(Error::Shape(format!(
            "S has {} columns but V_p has {} rows",
            s.s.ncols(),
            vp.vp.nrows()
        )));
    }
    let full = &s.s * &vp.vp;
    let restricted = full.select_columns(INDEPENDENT.iter());
    Ok(NominalMap { full, restricted })
}

/// Restricted nominal map for the primary plan exactly as typeset, entry by
/// entry. Only used to report how far the typeset expressions sit from
/// `S V_p`; the w_x column contains index patterns that do not follow from
/// the selection matrix.
pub fn typeset_nominal_map(points: &[Vector3<f64>]) -> DMatrix<f64> {
    let ax = |i: usize| points[i - 1].x;
    let ay = |i: usize| points[i - 1].y;
    let az = |i: usize| points[i - 1].z;
    let mut m = DMatrix::zeros(4, 4);
    let pairs = [(1, 2), (2, 3), (3, 4), (1, 4)];
    for (r, &(i, j)) in pairs.iter().enumerate() {
        m[(r, 0)] = ax(i) / (ax(i) - ax(j)) - ax(j) / (ax(i) - ax(j));
        m[(r, 1)] = 1.0;
    }
    m[(0, 2)] = (ay(1) * ax(1) - ax(2) * az(1) + ax(1) * az(3)) / (ax(1) - ax(2));
    m[(1, 2)] = (ay(3) * ax(2) + ax(2) * az(3) - ax(3) * az(3)) / (ax(2) - ax(3));
    m[(2, 2)] = (ay(3) * ax(3) + ax(3) * az(4) - ax(4) * az(3)) / (ax(3) - ax(4));
    m[(3, 2)] = (ay(1) * ax(1) + ax(1) * az(4) - ax(4) * az(1)) / (ax(1) - ax(4));
    m[(0, 3)] = -ax(1);
    m[(1, 3)] = -ax(2);
    m[(2, 3)] = -ax(3);
    m[(3, 3)] = -ax(1);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointmap::build_vp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng) -> Vec<Vector3<f64>> {
        (0..4).map(|_| Vector3::from_fn(|_, _| rng.gen_range(-250.0..250.0))).collect()
    }

    #[test]
    fn enumeration_matches_admissible_list() {
        let all = enumerate_pairings(4);
        assert_eq!(all.iter().map(|v| v.len()).sum::<usize>(), 12);
        let limb1: Vec<_> = all[0].iter().map(|p| (p.y_point, p.partner)).collect();
        assert_eq!(limb1, vec![(0, 1), (0, 2), (0, 3)]);
        assert_eq!(all[3][0], SelectionPair::from_pair(3, 0));
    }

    #[test]
    fn plan_parsing() {
        let p = SelectionPlan::parse(r#"[["1y","2z"],["2y","3z"],["3y","4z"],["4y","1z"]]"#, 4).unwrap();
        assert_eq!(p, SelectionPlan::primary());
        assert_eq!(SelectionPlan::parse("alternate", 4).unwrap().pairs[1], SelectionPair::from_pair(1, 3));
        let round = SelectionPlan::parse(&SelectionPlan::alternate().to_string(), 4).unwrap();
        assert_eq!(round, SelectionPlan::alternate());
        let t = SelectionPlan::parse(r#"[["1y","2y","2z"],["2y","3z"],["3y","4z"],["4y","1z"]]"#, 4).unwrap();
        assert_eq!(t.pairs[0].z_point, 1);
        assert!(SelectionPlan::parse(r#"[["1y","1z"],["2y","3z"],["3y","4z"],["4y","1z"]]"#, 4).is_err());
        assert!(SelectionPlan::parse(r#"[["1y","5z"],["2y","3z"],["3y","4z"],["4y","1z"]]"#, 4).is_err());
        assert!(SelectionPlan::parse(r#"[["1z","2y"]]"#, 4).is_err());
        assert!(SelectionPlan::parse("nonsense", 4).is_err());
    }

    #[test]
    fn printed_rule_reproduces_typeset_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_points(&mut rng);
        let s = build_selection_matrix(&SelectionPlan::primary(), &a, SelectionRule::Printed).unwrap().s;
        let x = |i: usize| a[i - 1].x;
        let mut e = DMatrix::zeros(4, 12);
        e[(0, 1)] = -x(2) / (x(1) - x(2));
        e[(0, 2)] = 1.0;
        e[(0, 4)] = x(1) / (x(1) - x(2));
        e[(1, 4)] = -x(3) / (x(2) - x(3));
        e[(1, 5)] = 1.0;
        e[(1, 7)] = x(2) / (x(2) - x(3));
        e[(2, 7)] = -x(4) / (x(3) - x(4));
        e[(2, 8)] = 1.0;
        e[(2, 10)] = x(3) / (x(3) - x(4));
        e[(3, 1)] = -x(4) / (x(1) - x(4));
        e[(3, 2)] = 1.0;
        e[(3, 10)] = x(1) / (x(1) - x(4));
        assert!((&s - &e).amax() < 1e-15);
    }

    #[test]
    fn half_weights_for_opposite_points() {
        let a = vec![
            Vector3::new(1.0, 0.3, 0.0),
            Vector3::new(-1.0, 0.2, 0.1),
            Vector3::new(0.4, -1.0, 0.0),
            Vector3::new(0.2, 0.9, 0.0),
        ];
        for rule in [SelectionRule::Printed, SelectionRule::Projected] {
            let s = build_selection_matrix(&SelectionPlan::primary(), &a, rule).unwrap().s;
            assert!((s[(0, 1)] - 0.5).abs() < 1e-15, "{rule:?}");
            assert!((s[(0, 4)] - 0.5).abs() < 1e-15, "{rule:?}");
            assert_eq!(s[(0, 2)], 1.0);
        }
    }

    #[test]
    fn equal_x_is_degenerate_for_printed_rule() {
        let a = vec![
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(1.0, 1.0, 0.0),
            Vector3::new(-1.0, 0.0, 0.0),
            Vector3::new(0.0, -1.0, 0.0),
        ];
        let err = build_selection_matrix(&SelectionPlan::primary(), &a, SelectionRule::Printed).unwrap_err();
        assert_eq!(err, Error::DegeneratePair { row: 1, i: 1, j: 2 });
        assert!(build_selection_matrix(&SelectionPlan::primary(), &a, SelectionRule::Projected).is_ok());
    }

    #[test]
    fn constrained_columns_vanish_and_sparsity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let a = random_points(&mut rng);
            let vp = build_vp(&a).unwrap();
            for plan in [SelectionPlan::primary(), SelectionPlan::alternate()] {
                for rule in [SelectionRule::Printed, SelectionRule::Projected] {
                    let sm = build_selection_matrix(&plan, &a, rule).unwrap();
                    for r in 0..4 {
                        assert!(sm.s.row(r).iter().filter(|v| **v != 0.0).count() <= 3);
                    }
                    let nm = nominal_map(&sm, &vp).unwrap();
                    for &c in &CONSTRAINED {
                        let col_max = nm.full.column(c).amax();
                        assert!(col_max < 1e-12 * 250.0, "{rule:?} {col_max}");
                    }
                }
            }
        }
    }

    #[test]
    fn printed_rule_gives_unit_translation_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_points(&mut rng);
        let vp = build_vp(&a).unwrap();
        let sm = build_selection_matrix(&SelectionPlan::primary(), &a, SelectionRule::Printed).unwrap();
        let nm = nominal_map(&sm, &vp).unwrap();
        let typeset = typeset_nominal_map(&a);
        for r in 0..4 {
            assert!((nm.restricted[(r, 0)] - 1.0).abs() < 1e-12);
            assert!((nm.restricted[(r, 1)] - 1.0).abs() < 1e-12);
            assert!((nm.restricted[(r, 3)] - typeset[(r, 3)]).abs() < 1e-12);
        }
        assert!((nm.restricted[(0, 3)] + a[0].x).abs() < 1e-12);
    }

    #[test]
    fn weights_are_scale_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_points(&mut rng);
        let scaled: Vec<_> = a.iter().map(|p| p * 1e-3).collect();
        for rule in [SelectionRule::Printed, SelectionRule::Projected] {
            let s1 = build_selection_matrix(&SelectionPlan::primary(), &a, rule).unwrap().s;
            let s2 = build_selection_matrix(&SelectionPlan::primary(), &scaled, rule).unwrap().s;
            assert!((&s1 - &s2).amax() < 1e-12);
        }
    }
}
