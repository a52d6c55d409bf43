use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{PboError, Result};

/// Oriented hyperplane through `dim` hull vertices; `normal . x > offset`
/// is outside.
#[derive(Debug, Clone)]
pub struct HullFacet {
    pub vertices: Vec<usize>,
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl HullFacet {
    pub fn signed_distance(&self, p: &[f64]) -> f64 {
        self.normal.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() - self.offset
    }
}

/// Unit normal of the hyperplane through `pts` (exactly `dim` points in
/// `dim` dimensions), by cofactor expansion. `None` if they are affinely
/// dependent.
fn plane_normal(pts: &[&[f64]]) -> Option<Vec<f64>> {
    let dim = pts[0].len();
    let rows = dim - 1;
    let diffs = DMatrix::from_fn(rows, dim, |i, j| pts[i + 1][j] - pts[0][j]);
    let mut normal = vec![0.0; dim];
    for (j, nj) in normal.iter_mut().enumerate() {
        let minor = diffs.clone().remove_column(j);
        let det = if rows == 0 { 1.0 } else { minor.determinant() };
        *nj = if j % 2 == 0 { det } else { -det };
    }
    let len = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = diffs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    if !(len > 1e-14 * scale.powi(rows as i32)) {
        return None;
    }
    Some(normal.into_iter().map(|v| v / len).collect())
}

fn facet(points: &[Vec<f64>], vertices: Vec<usize>, interior: &[f64]) -> Option<HullFacet> {
    let refs: Vec<&[f64]> = vertices.iter().map(|&i| points[i].as_slice()).collect();
    let mut normal = plane_normal(&refs)?;
    let mut offset: f64 = normal.iter().zip(refs[0]).map(|(a, b)| a * b).sum();
    let inside: f64 = normal.iter().zip(interior).map(|(a, b)| a * b).sum::<f64>() - offset;
    if inside > 0.0 {
        normal.iter_mut().for_each(|v| *v = -*v);
        offset = -offset;
    }
    Some(HullFacet {
        vertices,
        normal,
        offset,
    })
}

/// Picks `dim + 1` affinely independent points, farthest-first.
fn initial_simplex(points: &[Vec<f64>], eps: f64) -> Result<Vec<usize>> {
    let dim = points[0].len();
    let first = (0..points.len())
        .min_by(|&a, &b| points[a][0].total_cmp(&points[b][0]))
        .expect("non-empty");
    let mut chosen = vec![first];
    // Orthonormal basis of the span of chosen - first.
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while chosen.len() < dim + 1 {
        let origin = &points[first];
        let mut best = (usize::MAX, -1.0, Vec::new());
        for (i, p) in points.iter().enumerate() {
            let mut r: Vec<f64> = p.iter().zip(origin).map(|(a, b)| a - b).collect();
            for b in &basis {
                let dot: f64 = r.iter().zip(b).map(|(x, y)| x * y).sum();
                r.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > best.1 {
                best = (i, norm, r);
            }
        }
        if best.1 <= eps {
            return Err(PboError::Degenerate(format!(
                "points span only a {}-dimensional affine subspace of R^{dim} (through point {first})",
                basis.len()
            )));
        }
        let (idx, norm, r) = best;
        basis.push(r.into_iter().map(|v| v / norm).collect());
        chosen.push(idx);
    }
    Ok(chosen)
}

fn ridge_key(vertices: &[usize], skip: usize) -> Vec<usize> {
    let mut key: Vec<usize> = vertices
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != skip)
        .map(|(_, &v)| v)
        .collect();
    key.sort_unstable();
    key
}

/// Convex hull of points in `dim >= 2` dimensions by incremental insertion.
/// Facets are simplicial; coplanar regions come out triangulated.
pub fn convex_hull(points: &[Vec<f64>]) -> Result<Vec<HullFacet>> {
    if points.is_empty() {
        return Err(PboError::Degenerate("no points".into()));
    }
    let dim = points[0].len();
    if dim < 2 {
        return Err(PboError::InvalidArgument("convex_hull needs dimension >= 2".into()));
    }
    let scale = points
        .iter()
        .flat_map(|p| p.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    let eps = 1e-10 * scale;
    let simplex = initial_simplex(points, eps)?;
    let interior: Vec<f64> = (0..dim)
        .map(|j| simplex.iter().map(|&i| points[i][j]).sum::<f64>() / (dim + 1) as f64)
        .collect();

    let mut facets: Vec<HullFacet> = Vec::new();
    for skip in 0..=dim {
        let verts = ridge_key(&simplex, skip);
        facets.push(facet(points, verts, &interior).ok_or_else(|| {
            PboError::Degenerate("initial simplex is flat".into())
        })?);
    }

    for (p_idx, p) in points.iter().enumerate() {
        if simplex.contains(&p_idx) {
            continue;
        }
        let visible: Vec<bool> = facets.iter().map(|f| f.signed_distance(p) > eps).collect();
        if !visible.iter().any(|&v| v) {
            continue;
        }
        let mut ridge_count: HashMap<Vec<usize>, usize> = HashMap::new();
        for (f, _) in facets.iter().zip(&visible).filter(|(_, &v)| v) {
            for skip in 0..dim {
                *ridge_count.entry(ridge_key(&f.vertices, skip)).or_default() += 1;
            }
        }
        let mut horizon: Vec<Vec<usize>> = ridge_count
            .into_iter()
            .filter(|&(_, c)| c == 1)
            .map(|(r, _)| r)
            .collect();
        horizon.sort();
        let mut next: Vec<HullFacet> = facets
            .into_iter()
            .zip(&visible)
            .filter(|(_, &v)| !v)
            .map(|(f, _)| f)
            .collect();
        for ridge in horizon {
            let mut verts = ridge;
            verts.push(p_idx);
            if let Some(f) = facet(points, verts, &interior) {
                next.push(f);
            }
        }
        facets = next;
    }
    Ok(facets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_hull_encloses_everything() {
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push(vec![(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64]);
        }
        pts.push(vec![0.5, 0.5, 0.5]);
        pts.push(vec![0.2, 0.7, 0.1]);
        let facets = convex_hull(&pts).unwrap();
        assert_eq!(facets.len(), 12);
        for f in &facets {
            assert!(!f.vertices.contains(&8) && !f.vertices.contains(&9));
            for p in &pts {
                assert!(f.signed_distance(p) <= 1e-9);
            }
        }
    }

    #[test]
    fn flat_input_is_degenerate() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.5, 0.5]];
        assert!(matches!(convex_hull(&pts), Err(PboError::Degenerate(_))));
    }
}
