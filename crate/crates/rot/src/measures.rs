//! Discretized marginal measures, domains, and the quadratic cost kernel.
//!
//! Marginals live on Euclidean boxes or on the flat unit torus `[0,1)^d`.
//! Grid-built measures record the Lebesgue volume of each node's cell so
//! that downstream volume estimates are meaningful.

use crate::error::{Result, RotError};

/// Ambient domain of a measure.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    /// Axis-aligned box with per-axis `(lower, upper)` bounds.
    Box { bounds: Vec<(f64, f64)> },
    /// Flat unit torus `[0,1)^d` with wraparound geodesics.
    Torus { dim: usize },
}

impl Domain {
    pub fn unit_box(d: usize) -> Result<Self> {
        Self::new_box(vec![(0.0, 1.0); d])
    }

    pub fn new_box(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(RotError::InvalidArgument("box dimension must be >= 1".into()));
        }
        for (a, b) in &bounds {
            if !(a < b) {
                return Err(RotError::InvalidArgument(format!(
                    "box bounds must satisfy lower < upper, got ({a}, {b})"
                )));
            }
        }
        Ok(Domain::Box { bounds })
    }

    pub fn torus(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(RotError::InvalidArgument("torus dimension must be >= 1".into()));
        }
        Ok(Domain::Torus { dim })
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Box { bounds } => bounds.len(),
            Domain::Torus { dim } => *dim,
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, Domain::Torus { .. })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            Domain::Box { bounds } => bounds
                .iter()
                .zip(x)
                .all(|((a, b), xi)| *a <= *xi && *xi <= *b),
            Domain::Torus { .. } => x.iter().all(|xi| (0.0..1.0).contains(xi)),
        }
    }
}

/// Cost kernel kind; always paired with a compatible domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    SquaredEuclidean,
    TorusSquaredGeodesic,
}

/// Half squared distance cost `c(x,y) = d(x,y)^2 / 2`.
#[derive(Debug, Clone)]
pub struct CostKernel {
    pub kind: CostKind,
    pub domain: Domain,
}

impl CostKernel {
    pub fn new(kind: CostKind, domain: Domain) -> Result<Self> {
        match (kind, &domain) {
            (CostKind::TorusSquaredGeodesic, Domain::Torus { .. }) => {}
            (CostKind::TorusSquaredGeodesic, _) => {
                return Err(RotError::InvalidArgument(
                    "torus geodesic kernel requires a torus domain".into(),
                ))
            }
            (CostKind::SquaredEuclidean, _) => {}
        }
        Ok(CostKernel { kind, domain })
    }

    /// Kernel matching the domain's natural metric.
    pub fn for_domain(domain: Domain) -> Self {
        let kind = if domain.is_torus() {
            CostKind::TorusSquaredGeodesic
        } else {
            CostKind::SquaredEuclidean
        };
        CostKernel { kind, domain }
    }

    /// Unchecked evaluation; callers must have validated dimensions.
    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match self.kind {
            CostKind::SquaredEuclidean => {
                let mut s = 0.0;
                for (a, b) in x.iter().zip(y) {
                    let d = a - b;
                    s += d * d;
                }
                0.5 * s
            }
            CostKind::TorusSquaredGeodesic => {
                let mut s = 0.0;
                for (a, b) in x.iter().zip(y) {
                    let d = torus_delta(a - b);
                    s += d * d;
                }
                0.5 * s
            }
        }
    }

    /// Distance (not halved, not squared) under the kernel metric.
    #[inline]
    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        (2.0 * self.eval(x, y)).sqrt()
    }
}

/// Signed representative of `d` in `[-1/2, 1/2)`: the per-axis geodesic
/// displacement on the unit torus.
#[inline]
pub fn torus_delta(d: f64) -> f64 {
    d - d.round()
}

/// `cost(x, y) = d(x,y)^2 / 2` with dimension checking.
pub fn cost(x: &[f64], y: &[f64], kernel: &CostKernel) -> Result<f64> {
    let d = kernel.domain.dim();
    if x.len() != d || y.len() != d {
        return Err(RotError::DimensionMismatch(format!(
            "cost: expected dimension {d}, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(kernel.eval(x, y))
}

/// Weighted point cloud; discretization of a marginal measure.
///
/// Points are stored flattened, row-major (`n * d` entries). Grid-built
/// measures keep the per-axis resolution so neighbor lookups (finite
/// differences) are possible.
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    pub domain: Domain,
    points: Vec<f64>,
    pub weights: Vec<f64>,
    /// Lebesgue volume represented by one grid node; `None` for generic clouds.
    pub cell_volume: Option<f64>,
    /// Per-axis node counts for grid-built measures, lexicographic ordering
    /// with axis 0 slowest.
    pub grid_shape: Option<Vec<usize>>,
}

impl DiscreteMeasure {
    pub fn new(domain: Domain, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let d = domain.dim();
        if points.len() != weights.len() * d {
            return Err(RotError::DimensionMismatch(format!(
                "points length {} does not match {} weights in dimension {d}",
                points.len(),
                weights.len()
            )));
        }
        if weights.is_empty() {
            return Err(RotError::InvalidArgument("measure needs at least one point".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(RotError::InvalidArgument("all weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(RotError::InvalidArgument(format!(
                "weights must sum to 1 within 1e-12, got {total}"
            )));
        }
        for i in 0..weights.len() {
            let x = &points[i * d..(i + 1) * d];
            if !domain.contains(x) {
                return Err(RotError::InvalidArgument(format!(
                    "point {i} = {x:?} lies outside the domain"
                )));
            }
        }
        Ok(DiscreteMeasure {
            domain,
            points,
            weights,
            cell_volume: None,
            grid_shape: None,
        })
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.points[i * d..(i + 1) * d]
    }

    pub fn points_flat(&self) -> &[f64] {
        &self.points
    }

    /// Grid spacing along `axis`; requires a grid-built measure.
    pub fn grid_spacing(&self, axis: usize) -> Option<f64> {
        let shape = self.grid_shape.as_ref()?;
        let m = shape[axis] as f64;
        Some(match &self.domain {
            Domain::Torus { .. } => 1.0 / m,
            Domain::Box { bounds } => (bounds[axis].1 - bounds[axis].0) / m,
        })
    }

    /// Neighbor of grid node `i` along `axis`, `step` in {-1, +1}.
    /// Wraps on the torus; `None` past a box edge.
    pub fn grid_neighbor(&self, i: usize, axis: usize, step: isize) -> Option<usize> {
        let shape = self.grid_shape.as_ref()?;
        let d = shape.len();
        // decode lexicographic multi-index, axis 0 slowest
        let mut idx = vec![0usize; d];
        let mut rem = i;
        for a in (0..d).rev() {
            idx[a] = rem % shape[a];
            rem /= shape[a];
        }
        let m = shape[axis] as isize;
        let k = idx[axis] as isize + step;
        let k = if self.domain.is_torus() {
            k.rem_euclid(m)
        } else if (0..m).contains(&k) {
            k
        } else {
            return None;
        };
        idx[axis] = k as usize;
        let mut out = 0usize;
        for a in 0..d {
            out = out * shape[a] + idx[a];
        }
        Some(out)
    }
}

/// Uniform tensor grid discretization of the normalized Lebesgue measure.
///
/// Torus grids use nodes `k/m` (no duplicated endpoint, exactly uniform
/// weights); box grids use cell-centered nodes.
pub fn uniform_grid_measure(domain: &Domain, resolution_per_axis: &[usize]) -> Result<DiscreteMeasure> {
    let d = domain.dim();
    if resolution_per_axis.len() != d {
        return Err(RotError::DimensionMismatch(format!(
            "expected {d} resolutions, got {}",
            resolution_per_axis.len()
        )));
    }
    if resolution_per_axis.iter().any(|m| *m < 2) {
        return Err(RotError::InvalidArgument("grid resolutions must be >= 2".into()));
    }
    let n: usize = resolution_per_axis.iter().product();
    let mut points = Vec::with_capacity(n * d);
    let mut idx = vec![0usize; d];
    let mut cell_volume = 1.0;
    for a in 0..d {
        let m = resolution_per_axis[a] as f64;
        cell_volume *= match domain {
            Domain::Torus { .. } => 1.0 / m,
            Domain::Box { bounds } => (bounds[a].1 - bounds[a].0) / m,
        };
    }
    for _ in 0..n {
        for a in 0..d {
            let m = resolution_per_axis[a] as f64;
            let k = idx[a] as f64;
            let coord = match domain {
                Domain::Torus { .. } => k / m,
                Domain::Box { bounds } => {
                    let (lo, hi) = bounds[a];
                    lo + (k + 0.5) * (hi - lo) / m
                }
            };
            points.push(coord);
        }
        // increment multi-index, axis d-1 fastest
        for a in (0..d).rev() {
            idx[a] += 1;
            if idx[a] < resolution_per_axis[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    let weights = vec![1.0 / n as f64; n];
    let mut measure = DiscreteMeasure::new(domain.clone(), points, weights)?;
    measure.cell_volume = Some(cell_volume);
    measure.grid_shape = Some(resolution_per_axis.to_vec());
    Ok(measure)
}

/// Grid measure on the 1d torus with density proportional to
/// `1 + amplitude * cos(2 pi x)`, renormalized.
pub fn cosine_perturbed_torus_measure(m: usize, amplitude: f64) -> Result<DiscreteMeasure> {
    if !(amplitude.abs() < 1.0) {
        return Err(RotError::InvalidArgument(
            "cosine amplitude must lie in (-1, 1) to keep the density positive".into(),
        ));
    }
    let domain = Domain::torus(1)?;
    let mut grid = uniform_grid_measure(&domain, &[m])?;
    let mut total = 0.0;
    for i in 0..m {
        let x = grid.point(i)[0];
        let w = 1.0 + amplitude * (2.0 * std::f64::consts::PI * x).cos();
        grid.weights[i] = w;
        total += w;
    }
    for w in &mut grid.weights {
        *w /= total;
    }
    Ok(grid)
}

/// `h_p(z) = (|z|^p - 1) / (p - 1)` for `p` in `(1, 2]`.
pub fn h_p(z: f64, p: f64) -> Result<f64> {
    check_p(p)?;
    if p == 2.0 {
        Ok(z * z - 1.0)
    } else {
        Ok((z.abs().powf(p) - 1.0) / (p - 1.0))
    }
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(RotError::InvalidArgument(format!(
            "p must lie in (1, 2], got {p}"
        )));
    }
    Ok(())
}

/// Interior test: distance from `x` to the domain boundary exceeds
/// `margin` times the shortest side. Every torus point is interior.
pub fn is_interior(domain: &Domain, x: &[f64], margin: f64) -> bool {
    match domain {
        Domain::Torus { .. } => true,
        Domain::Box { bounds } => bounds.iter().zip(x).all(|((lo, hi), xi)| {
            let side = hi - lo;
            xi - lo > margin * side && hi - xi > margin * side
        }),
    }
}
