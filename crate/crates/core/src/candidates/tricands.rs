use std::io::Write;

use nalgebra::DMatrix;

use super::delaunay::{centroid_of, delaunay, Triangulation};
use crate::error::{invalid, PboError, Result};

pub const DEFAULT_FRINGE_FRAC: f64 = 0.9;
const DEDUP_TOL: f64 = 1e-9;

/// Where a nuisance candidate came from.
#[derive(Debug, Clone, PartialEq)]
pub enum CandidateTag {
    /// Centroid of simplex `simplex` (or midpoint of an interval in 1-D).
    Internal { simplex: usize },
    /// Pushed from `origin` toward `boundary` (a point on the domain
    /// boundary) by the fringe fraction.
    Fringe { origin: Vec<f64>, boundary: Vec<f64> },
    /// Fallback grid point used when no triangulation exists.
    Fallback,
}

impl CandidateTag {
    pub fn label(&self) -> &'static str {
        match self {
            CandidateTag::Internal { .. } => "internal",
            CandidateTag::Fringe { .. } => "fringe",
            CandidateTag::Fallback => "fallback",
        }
    }
}

/// Nuisance-space candidates with their provenance.
#[derive(Debug, Clone)]
pub struct Tricands {
    pub points: Vec<Vec<f64>>,
    pub tags: Vec<CandidateTag>,
    pub triangulation: Option<Triangulation>,
}

impl Tricands {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn push(&mut self, p: Vec<f64>, tag: CandidateTag) {
        let p: Vec<f64> = p.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let dup = self
            .points
            .iter()
            .any(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() <= DEDUP_TOL));
        if !dup {
            self.points.push(p);
            self.tags.push(tag);
        }
    }
}

fn dedup_points(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for p in points {
        if !out
            .iter()
            .any(|q| q.iter().zip(p).all(|(a, b)| (a - b).abs() <= DEDUP_TOL))
        {
            out.push(p.clone());
        }
    }
    out
}

/// Distance along unit direction `dir` from `origin` to the unit-cube boundary.
fn ray_to_boundary(origin: &[f64], dir: &[f64]) -> f64 {
    origin
        .iter()
        .zip(dir)
        .filter(|(_, d)| d.abs() > 1e-12)
        .map(|(&o, &d)| if d > 0.0 { (1.0 - o) / d } else { -o / d })
        .fold(f64::INFINITY, f64::min)
        .max(0.0)
}

fn push_fringe(out: &mut Tricands, origin: Vec<f64>, boundary: Vec<f64>, frac: f64) {
    let gap: f64 = origin
        .iter()
        .zip(&boundary)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    if gap <= 1e-12 {
        return;
    }
    let p = origin
        .iter()
        .zip(&boundary)
        .map(|(o, b)| o + frac * (b - o))
        .collect();
    out.push(p, CandidateTag::Fringe { origin, boundary });
}

/// Fallback for too few or affinely dependent points: the Cartesian product
/// of per-dimension 1-D candidates (midpoints plus the two fringe values).
fn fallback(points: &[Vec<f64>], frac: f64) -> Tricands {
    let k = points.first().map_or(0, |p| p.len());
    let axes: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let mut v: Vec<f64> = points.iter().map(|p| p[j]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup_by(|a, b| (*a - *b).abs() <= DEDUP_TOL);
            let mut axis: Vec<f64> = v.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
            if let (Some(lo), Some(hi)) = (v.first(), v.last()) {
                axis.push(lo - frac * lo);
                axis.push(hi + frac * (1.0 - hi));
            } else {
                axis.push(0.5);
            }
            axis
        })
        .collect();
    let mut out = Tricands {
        points: Vec::new(),
        tags: Vec::new(),
        triangulation: None,
    };
    let total: usize = axes.iter().map(|a| a.len()).product();
    for idx in 0..total {
        let mut rest = idx;
        let p = axes
            .iter()
            .map(|a| {
                let v = a[rest % a.len()];
                rest /= a.len();
                v
            })
            .collect();
        out.push(p, CandidateTag::Fallback);
    }
    out
}

/// Triangulation candidates for points in `[0,1]^k`: one internal candidate
/// per simplex centroid, plus fringe candidates pushed from each boundary
/// face (along its outward normal) and from the hull vertex nearest each
/// domain corner (toward that corner), `fringe_frac` of the way to the
/// domain boundary.
pub fn tricands(points: &[Vec<f64>], fringe_frac: f64) -> Result<Tricands> {
    if !(fringe_frac > 0.0 && fringe_frac <= 1.0) {
        return invalid(format!("fringe fraction must be in (0, 1], got {fringe_frac}"));
    }
    let k = points.first().map_or(0, |p| p.len());
    if k == 0 {
        return invalid("need at least one nuisance dimension and one point");
    }
    if points.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
        return invalid("nuisance points must lie in the unit cube");
    }
    let unique = dedup_points(points);
    if unique.len() < k + 1 {
        return Ok(fallback(&unique, fringe_frac));
    }
    let tri = match delaunay(&unique) {
        Ok(t) => t,
        Err(PboError::Degenerate(_)) => return Ok(fallback(&unique, fringe_frac)),
        Err(e) => return Err(e),
    };

    let mut out = Tricands {
        points: Vec::new(),
        tags: Vec::new(),
        triangulation: None,
    };
    for s in 0..tri.simplices.len() {
        out.push(tri.centroid(s), CandidateTag::Internal { simplex: s });
    }
    if k == 1 {
        let lo = tri.vertices.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = tri.vertices.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        push_fringe(&mut out, vec![lo], vec![0.0], fringe_frac);
        push_fringe(&mut out, vec![hi], vec![1.0], fringe_frac);
    } else {
        for f in 0..tri.hull_facets.len() {
            let origin = centroid_of(&tri.vertices, &tri.hull_facets[f]);
            let normal = tri.outward_normal(f);
            let t = ray_to_boundary(&origin, &normal);
            let boundary: Vec<f64> = origin.iter().zip(&normal).map(|(o, n)| o + t * n).collect();
            push_fringe(&mut out, origin, boundary, fringe_frac);
        }
        let mut hull_vertices: Vec<usize> = tri.hull_facets.iter().flatten().copied().collect();
        hull_vertices.sort_unstable();
        hull_vertices.dedup();
        for corner_idx in 0..(1usize << k) {
            let corner: Vec<f64> = (0..k).map(|j| ((corner_idx >> j) & 1) as f64).collect();
            let nearest = hull_vertices
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    let da: f64 = tri.vertices[a].iter().zip(&corner).map(|(x, c)| (x - c).powi(2)).sum();
                    let db: f64 = tri.vertices[b].iter().zip(&corner).map(|(x, c)| (x - c).powi(2)).sum();
                    da.total_cmp(&db)
                })
                .expect("hull has vertices");
            push_fringe(&mut out, tri.vertices[nearest].clone(), corner, fringe_frac);
        }
    }
    out.triangulation = Some(tri);
    Ok(out)
}

/// Modified tricands: every control-axis value paired with every nuisance
/// candidate. Rows are slice-major: row `k * c + j` holds axis value `k`
/// and candidate `j`.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub tri_cands: Tricands,
    pub xstar_axis: Vec<f64>,
    pub full: DMatrix<f64>,
    pub control_index: usize,
}

impl CandidateSet {
    /// Candidates per slice.
    pub fn per_slice(&self) -> usize {
        self.tri_cands.len()
    }

    /// Full input vector for axis value `xstar` and nuisance candidate `j`.
    pub fn assemble(&self, xstar: f64, j: usize) -> Vec<f64> {
        assemble(&self.tri_cands.points[j], xstar, self.control_index)
    }

    /// One row per full candidate: `x1..xd,tag`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.full.ncols();
        let header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
        writeln!(w, "{},tag", header.join(","))?;
        let c = self.per_slice();
        for r in 0..self.full.nrows() {
            let vals: Vec<String> = self.full.row(r).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{}", vals.join(","), self.tri_cands.tags[r % c].label())?;
        }
        Ok(())
    }
}

pub(crate) fn assemble(nuisance: &[f64], xstar: f64, control_index: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(nuisance.len() + 1);
    x.extend_from_slice(&nuisance[..control_index]);
    x.push(xstar);
    x.extend_from_slice(&nuisance[control_index..]);
    x
}

pub(crate) fn project_out(x: &DMatrix<f64>, control_index: usize) -> Vec<Vec<f64>> {
    (0..x.nrows())
        .map(|i| {
            x.row(i)
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != control_index)
                .map(|(_, &v)| v)
                .collect()
        })
        .collect()
}

/// Builds the modified tricands set from training inputs `x` (n x d).
pub fn tricands_plus(
    x: &DMatrix<f64>,
    control_index: usize,
    axis: &[f64],
    fringe_frac: f64,
) -> Result<CandidateSet> {
    let d = x.ncols();
    if d < 2 {
        return invalid("need at least one nuisance dimension");
    }
    if control_index >= d {
        return invalid(format!("control index {control_index} out of range for d = {d}"));
    }
    if axis.is_empty() || axis.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return invalid("control axis must be non-empty and inside [0, 1]");
    }
    let tri = tricands(&project_out(x, control_index), fringe_frac)?;
    let c = tri.len();
    let mut full = DMatrix::zeros(axis.len() * c, d);
    for (k, &xs) in axis.iter().enumerate() {
        for (j, p) in tri.points.iter().enumerate() {
            for (col, v) in assemble(p, xs, control_index).into_iter().enumerate() {
                full[(k * c + j, col)] = v;
            }
        }
    }
    Ok(CandidateSet {
        tri_cands: tri,
        xstar_axis: axis.to_vec(),
        full,
        control_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_midpoints_and_fringe() {
        let t = tricands(&[vec![0.2], vec![0.6]], 0.9).unwrap();
        let mut pts: Vec<f64> = t.points.iter().map(|p| p[0]).collect();
        pts.sort_by(f64::total_cmp);
        let expected = [0.2 - 0.9 * 0.2, 0.4, 0.6 + 0.9 * 0.4];
        assert_eq!(pts.len(), 3);
        for (a, b) in pts.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((expected[0] - 0.02).abs() < 1e-12 && (expected[2] - 0.96).abs() < 1e-12);
    }

    #[test]
    fn triangle_centroid() {
        let pts = vec![vec![0.2, 0.2], vec![0.8, 0.25], vec![0.5, 0.75]];
        let t = tricands(&pts, 0.9).unwrap();
        let internal: Vec<_> = t
            .points
            .iter()
            .zip(&t.tags)
            .filter(|(_, tag)| matches!(tag, CandidateTag::Internal { .. }))
            .collect();
        assert_eq!(internal.len(), 1);
        assert!((internal[0].0[0] - 0.5).abs() < 1e-12);
        assert!((internal[0].0[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn full_fraction_reaches_boundary() {
        let pts = vec![vec![0.2, 0.3], vec![0.7, 0.2], vec![0.4, 0.8], vec![0.6, 0.6]];
        let t = tricands(&pts, 1.0).unwrap();
        for (p, tag) in t.points.iter().zip(&t.tags) {
            if let CandidateTag::Fringe { .. } = tag {
                assert!(p.iter().any(|v| v.abs() < 1e-12 || (v - 1.0).abs() < 1e-12), "{p:?}");
            }
        }
    }

    #[test]
    fn kronecker_size_and_layout() {
        let x = DMatrix::from_row_slice(
            5,
            3,
            &[0.1, 0.2, 0.3, 0.5, 0.7, 0.2, 0.9, 0.4, 0.8, 0.3, 0.9, 0.6, 0.6, 0.1, 0.9],
        );
        let axis = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
        let set = tricands_plus(&x, 0, &axis, 0.9).unwrap();
        let c = set.per_slice();
        assert_eq!(set.full.nrows(), 6 * c);
        for k in 0..6 {
            for j in 0..c {
                let row = set.full.row(k * c + j);
                assert_eq!(row[0], axis[k]);
                assert_eq!(row[1], set.tri_cands.points[j][0]);
                assert_eq!(row[2], set.tri_cands.points[j][1]);
            }
        }
    }

    #[test]
    fn singleton_axis() {
        let x = DMatrix::from_row_slice(4, 2, &[0.1, 0.2, 0.5, 0.7, 0.9, 0.4, 0.3, 0.9]);
        let set = tricands_plus(&x, 1, &[0.25], 0.9).unwrap();
        assert_eq!(set.full.nrows(), set.per_slice());
        assert!(set.full.column(1).iter().all(|v| *v == 0.25));
    }

    #[test]
    fn degenerate_projection_falls_back() {
        // All nuisance coordinates identical after dropping the control column.
        let x = DMatrix::from_row_slice(3, 3, &[0.1, 0.5, 0.5, 0.4, 0.5, 0.5, 0.8, 0.5, 0.5]);
        let set = tricands_plus(&x, 0, &[0.5], 0.9).unwrap();
        assert!(set.per_slice() > 0);
        assert!(set.tri_cands.tags.iter().all(|t| *t == CandidateTag::Fallback));
    }

    #[test]
    fn bad_arguments() {
        let x = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.5, 0.7]);
        assert!(tricands_plus(&x, 2, &[0.5], 0.9).is_err());
        assert!(tricands_plus(&x, 0, &[], 0.9).is_err());
        assert!(tricands_plus(&x, 0, &[0.5], 0.0).is_err());
    }
}
