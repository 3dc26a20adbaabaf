use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FlowModel, SampledFlow};
use crate::error::{Error, Result};
use crate::space::{GridSpace, Point, PointId};

/// Discretization of `phi_{mT}`, `m = 1..=m_max`, on a grid.
#[derive(Clone, Debug)]
pub struct GridTransition {
    t_step: f64,
    /// `images[m - 1][u]`: nearest grid point of `phi_{mT}(u)`.
    images: Vec<Vec<PointId>>,
    /// `exact[m - 1][u]`: the continuous image itself.
    exact: Vec<Vec<Point>>,
    sampled: bool,
}

impl GridTransition {
    pub fn t_step(&self) -> f64 {
        self.t_step
    }

    pub fn m_max(&self) -> usize {
        self.images.len()
    }

    /// Nearest-grid image after one step `T`.
    pub fn image(&self) -> &[PointId] {
        &self.images[0]
    }

    /// Nearest-grid images after `m T`, `1 <= m <= m_max`.
    pub fn multi_image(&self, m: usize) -> &[PointId] {
        &self.images[m - 1]
    }

    pub fn exact_image(&self, m: usize) -> &[Point] {
        &self.exact[m - 1]
    }

    /// True when the images came from a sampled file rather than an evaluator.
    pub fn is_sampled(&self) -> bool {
        self.sampled
    }

    pub fn len(&self) -> usize {
        self.images[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.images[0].is_empty()
    }

    /// Set image under the one-step map, sorted and deduplicated.
    pub fn image_of_set(&self, set: &[PointId]) -> Vec<PointId> {
        let img = self.image();
        let mut out: Vec<PointId> = set.iter().map(|&u| img[u.0]).collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Evaluates `phi_{mT}` at every grid point directly from the continuous
/// evaluator (never by iterating the projected map) and projects.
pub fn build_transition(flow: &FlowModel, space: &GridSpace, t_step: f64, m_max: usize) -> Result<GridTransition> {
    if !(t_step > 0.0) || m_max == 0 {
        return Err(Error::InvalidParameter(format!("need T > 0 and m_max >= 1 (T = {t_step}, m_max = {m_max})")));
    }
    if let Some(sampled) = flow.sampled_data() {
        if (sampled.t_step - t_step).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "sampled flow has T = {}, requested {t_step}",
                sampled.t_step
            )));
        }
        if sampled.images.len() < m_max {
            return Err(Error::InvalidParameter(format!(
                "sampled flow has m_max = {}, requested {m_max}",
                sampled.images.len()
            )));
        }
        let images: Vec<Vec<PointId>> = sampled.images[..m_max].to_vec();
        for img in &images {
            if img.len() != space.len() || img.iter().any(|v| v.0 >= space.len()) {
                return Err(Error::InvalidParameter("sampled image map is not total over the grid".into()));
            }
        }
        let exact = images.iter().map(|img| img.iter().map(|&v| space.point(v)).collect()).collect();
        return Ok(GridTransition { t_step, images, exact, sampled: true });
    }
    let mut images = Vec::with_capacity(m_max);
    let mut exact = Vec::with_capacity(m_max);
    for m in 1..=m_max {
        let t = m as f64 * t_step;
        let pts: Vec<Point> = space
            .points()
            .par_iter()
            .map(|&p| flow.eval(space, p, t).map(|q| space.canonicalize(q)))
            .collect::<Result<_>>()?;
        let img: Vec<PointId> = pts.par_iter().map(|p| space.nearest(p)).collect();
        images.push(img);
        exact.push(pts);
    }
    Ok(GridTransition { t_step, images, exact, sampled: false })
}

#[derive(Debug, Serialize, Deserialize)]
struct SampledRow {
    point_index: usize,
    m: usize,
    image_index: usize,
}

/// Reads `point_index,m,image_index` rows into a sampled flow.
pub fn read_sampled_csv(path: &Path, n_points: usize, t_step: f64) -> Result<SampledFlow> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        let row: SampledRow = row?;
        rows.push(row);
    }
    let m_max = rows.iter().map(|r| r.m).max().unwrap_or(0);
    if m_max == 0 {
        return Err(Error::InvalidParameter("sampled flow file has no rows with m >= 1".into()));
    }
    let mut images = vec![vec![None; n_points]; m_max];
    for r in rows {
        if r.m == 0 || r.point_index >= n_points || r.image_index >= n_points {
            return Err(Error::InvalidParameter(format!(
                "bad sampled row ({}, {}, {})",
                r.point_index, r.m, r.image_index
            )));
        }
        images[r.m - 1][r.point_index] = Some(PointId(r.image_index));
    }
    let images = images
        .into_iter()
        .enumerate()
        .map(|(m, img)| {
            img.into_iter()
                .enumerate()
                .map(|(u, v)| {
                    v.ok_or_else(|| Error::InvalidParameter(format!("missing image of point {u} at m = {}", m + 1)))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SampledFlow { t_step, images })
}

pub fn write_sampled_csv(path: &Path, tr: &GridTransition) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for m in 1..=tr.m_max() {
        for (u, v) in tr.multi_image(m).iter().enumerate() {
            w.serialize(SampledRow { point_index: u, m, image_index: v.0 })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::CircleMarkers;
    use crate::space::Domain;

    #[test]
    fn identity_images_are_identity() {
        let s = GridSpace::build(Domain::Circle, 16).unwrap();
        let tr = build_transition(&FlowModel::identity(), &s, 1.0, 3).unwrap();
        assert_eq!(tr.m_max(), 3);
        for m in 1..=3 {
            assert!(tr.multi_image(m).iter().enumerate().all(|(u, v)| v.0 == u));
        }
        assert_eq!(tr.multi_image(1), tr.image());
    }

    #[test]
    fn projection_error_within_resolution() {
        let s = GridSpace::build(Domain::Circle, 64).unwrap();
        let f = FlowModel::circle(CircleMarkers::default()).unwrap();
        let tr = build_transition(&f, &s, 1.0, 2).unwrap();
        for m in 1..=2 {
            for (u, p) in tr.exact_image(m).iter().enumerate() {
                let v = tr.multi_image(m)[u];
                assert!(s.dist_point_grid(&s.probe(*p), v) <= s.resolution());
            }
        }
    }

    #[test]
    fn sampled_roundtrip() {
        let s = GridSpace::build(Domain::Circle, 16).unwrap();
        let f = FlowModel::circle(CircleMarkers::default()).unwrap();
        let tr = build_transition(&f, &s, 1.0, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flow.csv");
        write_sampled_csv(&path, &tr).unwrap();
        let sampled = read_sampled_csv(&path, s.len(), 1.0).unwrap();
        let model = FlowModel::sampled(sampled).unwrap();
        let back = build_transition(&model, &s, 1.0, 2).unwrap();
        assert_eq!(back.image(), tr.image());
        assert!(back.is_sampled());
        let p = model.eval(&s, s.point(PointId(3)), 3.0).unwrap();
        let two_then_one = tr.image()[tr.multi_image(2)[3].0];
        assert_eq!(p, s.point(two_then_one));
        assert!(model.eval(&s, s.point(PointId(3)), 0.5).is_err());
    }
}
