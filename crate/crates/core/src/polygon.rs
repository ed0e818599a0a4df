//! Small convex-polygon toolkit used by the sweep construction.

pub type Point = [f64; 2];

/// Convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    pub vertices: Vec<Point>,
}

/// Half-plane `n · p <= c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub normal: Point,
    pub offset: f64,
}

impl HalfPlane {
    pub fn eval(&self, p: Point) -> f64 {
        self.normal[0] * p[0] + self.normal[1] * p[1] - self.offset
    }
}

impl ConvexPolygon {
    pub fn rect(x: (f64, f64), y: (f64, f64)) -> Self {
        Self {
            vertices: vec![[x.0, y.0], [x.1, y.0], [x.1, y.1], [x.0, y.1]],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        let mut a = 0.0;
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            a += p[0] * q[1] - q[0] * p[1];
        }
        0.5 * a
    }

    pub fn centroid(&self) -> Point {
        let n = self.vertices.len();
        let (mut cx, mut cy, mut a) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let w = p[0] * q[1] - q[0] * p[1];
            a += w;
            cx += (p[0] + q[0]) * w;
            cy += (p[1] + q[1]) * w;
        }
        if a.abs() < 1e-300 {
            let m = n.max(1) as f64;
            let sx: f64 = self.vertices.iter().map(|p| p[0]).sum();
            let sy: f64 = self.vertices.iter().map(|p| p[1]).sum();
            return [sx / m, sy / m];
        }
        [cx / (3.0 * a), cy / (3.0 * a)]
    }

    pub fn translate(&self, d: Point) -> Self {
        Self {
            vertices: self
                .vertices
                .iter()
                .map(|p| [p[0] + d[0], p[1] + d[1]])
                .collect(),
        }
    }

    /// Keeps the part with `h.eval(p) <= 0`.
    pub fn clip(&self, h: HalfPlane) -> Self {
        let n = self.vertices.len();
        let mut out = Vec::with_capacity(n + 1);
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let (fp, fq) = (h.eval(p), h.eval(q));
            if fp <= 0.0 {
                out.push(p);
            }
            if (fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0) {
                let t = fp / (fp - fq);
                out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
        Self { vertices: out }
    }

    pub fn clip_rect(&self, x: (f64, f64), y: (f64, f64)) -> Self {
        self.clip(HalfPlane {
            normal: [-1.0, 0.0],
            offset: -x.0,
        })
        .clip(HalfPlane {
            normal: [1.0, 0.0],
            offset: x.1,
        })
        .clip(HalfPlane {
            normal: [0.0, -1.0],
            offset: -y.0,
        })
        .clip(HalfPlane {
            normal: [0.0, 1.0],
            offset: y.1,
        })
    }

    /// Edge half-planes; the polygon is their intersection.
    pub fn half_planes(&self) -> Vec<HalfPlane> {
        let n = self.vertices.len();
        (0..n)
            .filter_map(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                let normal = [b[1] - a[1], a[0] - b[0]];
                let len = normal[0].hypot(normal[1]);
                if len < 1e-15 {
                    return None;
                }
                let normal = [normal[0] / len, normal[1] / len];
                Some(HalfPlane {
                    normal,
                    offset: normal[0] * a[0] + normal[1] * a[1],
                })
            })
            .collect()
    }

    /// Strict interior test with margin `tol`.
    pub fn contains_strictly(&self, p: Point, tol: f64) -> bool {
        !self.is_empty() && self.half_planes().iter().all(|h| h.eval(p) < -tol)
    }

    /// Convex hull of the polygon and its translate by `d`.
    pub fn sweep_hull(&self, d: Point) -> Self {
        let mut pts: Vec<Point> = self.vertices.clone();
        pts.extend(self.translate(d).vertices);
        convex_hull(pts)
    }

    pub fn bounds(&self) -> ((f64, f64), (f64, f64)) {
        let mut b = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
        for p in &self.vertices {
            b.0 .0 = b.0 .0.min(p[0]);
            b.0 .1 = b.0 .1.max(p[0]);
            b.1 .0 = b.1 .0.min(p[1]);
            b.1 .1 = b.1 .1.max(p[1]);
        }
        b
    }
}

/// Monotone-chain hull, counter-clockwise.
pub fn convex_hull(mut pts: Vec<Point>) -> ConvexPolygon {
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    pts.dedup();
    if pts.len() < 3 {
        return ConvexPolygon { vertices: pts };
    }
    let cross = |o: Point, a: Point, b: Point| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut lower: Vec<Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    ConvexPolygon { vertices: lower }
}
