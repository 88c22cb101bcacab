//! Rays and axis-aligned boxes.

use super::V3;

#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: V3,
    /// Unit length.
    pub dir: V3,
}

impl Ray {
    pub fn new(origin: V3, dir: V3) -> Self {
        Ray {
            origin,
            dir: dir.normalize(),
        }
    }

    #[inline]
    pub fn at(&self, t: f64) -> V3 {
        self.origin + self.dir * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: V3,
    pub max: V3,
}

impl Aabb {
    pub fn new(min: V3, max: V3) -> Self {
        Aabb { min, max }
    }

    pub fn empty() -> Self {
        Aabb {
            min: V3::repeat(f64::INFINITY),
            max: V3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|i| self.min[i] > self.max[i])
    }

    pub fn expand_point(&mut self, p: &V3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn dilated(&self, margin: f64) -> Aabb {
        Aabb {
            min: self.min - V3::repeat(margin),
            max: self.max + V3::repeat(margin),
        }
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn contains(&self, p: &V3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn center(&self) -> V3 {
        (self.min + self.max) * 0.5
    }

    /// Slab test. Returns the forward parameter interval `[t_near, t_far]`
    /// with `t_near` clamped to 0; `None` when the box is missed or lies
    /// entirely behind the origin.
    pub fn ray_intersect(&self, ray: &Ray) -> Option<(f64, f64)> {
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for i in 0..3 {
            let d = ray.dir[i];
            let o = ray.origin[i];
            if d.abs() < 1e-15 {
                if o < self.min[i] || o > self.max[i] {
                    return None;
                }
            } else {
                let inv = 1.0 / d;
                let mut t0 = (self.min[i] - o) * inv;
                let mut t1 = (self.max[i] - o) * inv;
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                t_near = t_near.max(t0);
                t_far = t_far.min(t1);
                if t_near > t_far {
                    return None;
                }
            }
        }
        if t_far < 0.0 {
            return None;
        }
        Some((t_near.max(0.0), t_far))
    }
}
