use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::hull::convex_hull;
use crate::error::{invalid, PboError, Result};

/// Delaunay triangulation of a point set in `k` dimensions.
#[derive(Debug, Clone)]
pub struct Triangulation {
    pub vertices: Vec<Vec<f64>>,
    /// Each simplex lists `k + 1` vertex indices.
    pub simplices: Vec<Vec<usize>>,
    /// Boundary faces (`k` vertex indices each), shared by exactly one simplex.
    pub hull_facets: Vec<Vec<usize>>,
    /// For each boundary face, the simplex it belongs to.
    pub hull_facet_owner: Vec<usize>,
}

impl Triangulation {
    pub fn dim(&self) -> usize {
        self.vertices.first().map_or(0, |v| v.len())
    }

    pub fn centroid(&self, simplex: usize) -> Vec<f64> {
        centroid_of(&self.vertices, &self.simplices[simplex])
    }

    /// Outward unit normal of boundary face `f` (relative to its simplex).
    pub fn outward_normal(&self, f: usize) -> Vec<f64> {
        let face = &self.hull_facets[f];
        let k = self.dim();
        let owner = &self.simplices[self.hull_facet_owner[f]];
        let apex = owner.iter().find(|v| !face.contains(v)).copied().expect("simplex apex");
        let base = &self.vertices[face[0]];
        let mut normal = if k == 1 {
            vec![1.0]
        } else {
            let m = DMatrix::from_fn(k - 1, k, |i, j| self.vertices[face[i + 1]][j] - base[j]);
            (0..k)
                .map(|j| {
                    let det = if k - 1 == 0 { 1.0 } else { m.clone().remove_column(j).determinant() };
                    if j % 2 == 0 {
                        det
                    } else {
                        -det
                    }
                })
                .collect()
        };
        let len = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
        normal.iter_mut().for_each(|v| *v /= len);
        let toward_apex: f64 = normal
            .iter()
            .zip(self.vertices[apex].iter().zip(base))
            .map(|(n, (a, b))| n * (a - b))
            .sum();
        if toward_apex > 0.0 {
            normal.iter_mut().for_each(|v| *v = -*v);
        }
        normal
    }
}

pub(crate) fn centroid_of(points: &[Vec<f64>], idx: &[usize]) -> Vec<f64> {
    let k = points[idx[0]].len();
    (0..k)
        .map(|j| idx.iter().map(|&i| points[i][j]).sum::<f64>() / idx.len() as f64)
        .collect()
}

/// Unsigned `k`-volume of a simplex given by `k + 1` points.
pub fn simplex_volume(pts: &[&[f64]]) -> f64 {
    let k = pts[0].len();
    let m = DMatrix::from_fn(k, k, |i, j| pts[i + 1][j] - pts[0][j]);
    let fact: f64 = (1..=k).map(|v| v as f64).product();
    m.determinant().abs() / fact
}

/// Circumcenter and squared circumradius of a simplex.
pub fn circumsphere(pts: &[&[f64]]) -> Option<(Vec<f64>, f64)> {
    let k = pts[0].len();
    let a = DMatrix::from_fn(k, k, |i, j| 2.0 * (pts[i + 1][j] - pts[0][j]));
    let sq = |p: &[f64]| p.iter().map(|v| v * v).sum::<f64>();
    let b = DVector::from_fn(k, |i, _| sq(pts[i + 1]) - sq(pts[0]));
    let c = a.lu().solve(&b)?;
    let r2 = c.iter().zip(pts[0]).map(|(x, y)| (x - y).powi(2)).sum();
    Some((c.iter().copied().collect(), r2))
}

fn boundary_faces(simplices: &[Vec<usize>]) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut count: HashMap<Vec<usize>, (usize, usize)> = HashMap::new();
    for (s, simplex) in simplices.iter().enumerate() {
        for skip in 0..simplex.len() {
            let mut face: Vec<usize> = simplex
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != skip)
                .map(|(_, &v)| v)
                .collect();
            face.sort_unstable();
            count.entry(face).or_insert((0, s)).0 += 1;
        }
    }
    let mut faces: Vec<(Vec<usize>, usize)> = count
        .into_iter()
        .filter(|(_, (c, _))| *c == 1)
        .map(|(f, (_, s))| (f, s))
        .collect();
    faces.sort();
    faces.into_iter().unzip()
}

/// Delaunay triangulation by lifting onto the paraboloid `z = |x|^2` and
/// keeping the lower convex hull. One dimension is handled by sorting.
pub fn delaunay(points: &[Vec<f64>]) -> Result<Triangulation> {
    let m = points.len();
    let k = points.first().map_or(0, |p| p.len());
    if k == 0 {
        return invalid("points must have at least one coordinate");
    }
    if m < k + 1 {
        return Err(PboError::Degenerate(format!(
            "{m} points cannot span a simplex in {k} dimensions"
        )));
    }
    let simplices: Vec<Vec<usize>> = if k == 1 {
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]));
        let mut simplices = Vec::new();
        for w in order.windows(2) {
            if points[w[1]][0] - points[w[0]][0] > 1e-12 {
                let mut s = vec![w[0], w[1]];
                s.sort_unstable();
                simplices.push(s);
            }
        }
        if simplices.is_empty() {
            return Err(PboError::Degenerate("all points coincide".into()));
        }
        simplices
    } else {
        let mut lifted: Vec<Vec<f64>> = points
            .iter()
            .map(|p| {
                let mut q = p.clone();
                q.push(p.iter().map(|v| v * v).sum());
                q
            })
            .collect();
        // A point above every lower facet keeps the hull full-dimensional
        // even when all inputs are cospherical.
        let zmax = lifted.iter().map(|q| q[k]).fold(f64::NEG_INFINITY, f64::max);
        let zmin = lifted.iter().map(|q| q[k]).fold(f64::INFINITY, f64::min);
        let mut top = centroid_of(points, &(0..m).collect::<Vec<_>>());
        top.push(zmax + 1.0 + (zmax - zmin));
        lifted.push(top);
        let facets = convex_hull(&lifted).map_err(|e| match e {
            PboError::Degenerate(msg) => {
                PboError::Degenerate(format!("nuisance points are affinely dependent: {msg}"))
            }
            other => other,
        })?;
        let mut simplices = Vec::new();
        for f in facets {
            if f.vertices.contains(&m) || f.normal[k] > -1e-12 {
                continue;
            }
            let refs: Vec<&[f64]> = f.vertices.iter().map(|&i| points[i].as_slice()).collect();
            if simplex_volume(&refs) > 1e-12 {
                let mut s = f.vertices.clone();
                s.sort_unstable();
                simplices.push(s);
            }
        }
        simplices.sort();
        if simplices.is_empty() {
            return Err(PboError::Degenerate("no non-degenerate simplices".into()));
        }
        simplices
    };
    let (hull_facets, hull_facet_owner) = boundary_faces(&simplices);
    Ok(Triangulation {
        vertices: points.to_vec(),
        simplices,
        hull_facets,
        hull_facet_owner,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty_circumspheres(t: &Triangulation) -> bool {
        t.simplices.iter().all(|s| {
            let refs: Vec<&[f64]> = s.iter().map(|&i| t.vertices[i].as_slice()).collect();
            let (c, r2) = circumsphere(&refs).unwrap();
            t.vertices.iter().enumerate().all(|(i, p)| {
                s.contains(&i) || p.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>() >= r2 - 1e-9
            })
        })
    }

    #[test]
    fn one_dimension_is_sorting() {
        let t = delaunay(&[vec![0.9], vec![0.2], vec![0.6]]).unwrap();
        assert_eq!(t.simplices, vec![vec![1, 2], vec![0, 2]]);
        assert_eq!(t.hull_facets.len(), 2);
    }

    #[test]
    fn single_triangle() {
        let t = delaunay(&[vec![0.1, 0.1], vec![0.9, 0.2], vec![0.4, 0.8]]).unwrap();
        assert_eq!(t.simplices.len(), 1);
        assert_eq!(t.hull_facets.len(), 3);
    }

    #[test]
    fn unit_square_corners() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let t = delaunay(&pts).unwrap();
        assert_eq!(t.simplices.len(), 2);
        assert!(empty_circumspheres(&t));
        let area: f64 = t
            .simplices
            .iter()
            .map(|s| simplex_volume(&s.iter().map(|&i| pts[i].as_slice()).collect::<Vec<_>>()))
            .sum();
        assert!((area - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_is_degenerate() {
        let pts = vec![vec![0.0, 0.0], vec![0.5, 0.5], vec![1.0, 1.0], vec![0.25, 0.25]];
        let err = delaunay(&pts).unwrap_err();
        assert!(matches!(err, PboError::Degenerate(_)), "{err}");
    }

    #[test]
    fn too_few_points() {
        assert!(delaunay(&[vec![0.1, 0.2], vec![0.3, 0.4]]).is_err());
    }

    #[test]
    fn outward_normals_point_away() {
        let pts = vec![vec![0.2, 0.2], vec![0.8, 0.3], vec![0.5, 0.9], vec![0.5, 0.45]];
        let t = delaunay(&pts).unwrap();
        assert_eq!(t.hull_facets.len(), 3);
        let c = [0.5, 0.45];
        for f in 0..t.hull_facets.len() {
            let n = t.outward_normal(f);
            let mid = centroid_of(&t.vertices, &t.hull_facets[f]);
            let dot: f64 = n.iter().zip(mid.iter().zip(&c)).map(|(a, (m, cc))| a * (m - cc)).sum();
            assert!(dot > 0.0);
        }
    }
}
