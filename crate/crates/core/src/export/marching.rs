//! Marching cubes over a regular density grid, with vertices shared across
//! neighboring cells so clean level sets come out closed and consistently
//! oriented.

use crate::geometry::{Aabb, TriMesh, V3};
use rayon::prelude::*;
use std::collections::HashMap;

/// Scalar samples on a regular lattice. `dims` counts lattice points per
/// axis; `values` is laid out x-fastest, then y, then z.
#[derive(Debug, Clone)]
pub struct DensityGrid {
    pub dims: [usize; 3],
    pub origin: V3,
    pub spacing: [f64; 3],
    pub values: Vec<f64>,
}

impl DensityGrid {
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    #[inline]
    pub fn value(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.index(x, y, z)]
    }

    pub fn point(&self, x: usize, y: usize, z: usize) -> V3 {
        V3::new(
            self.origin.x + x as f64 * self.spacing[0],
            self.origin.y + y as f64 * self.spacing[1],
            self.origin.z + z as f64 * self.spacing[2],
        )
    }
}

/// Evaluates `density` at every lattice point of a `dims` grid spanning
/// `bounds`. Slabs of constant z are filled in parallel and stitched in z
/// order, so the result does not depend on scheduling.
pub fn sample_density_grid<F>(density: &F, bounds: &Aabb, dims: [usize; 3]) -> DensityGrid
where
    F: Fn(&V3) -> f64 + Sync,
{
    assert!(dims.iter().all(|&d| d >= 2), "grid needs at least 2 points per axis");
    let ext = bounds.max - bounds.min;
    let spacing = [
        ext.x / (dims[0] - 1) as f64,
        ext.y / (dims[1] - 1) as f64,
        ext.z / (dims[2] - 1) as f64,
    ];
    let origin = bounds.min;
    let slabs: Vec<Vec<f64>> = (0..dims[2])
        .into_par_iter()
        .map(|z| {
            let mut slab = Vec::with_capacity(dims[0] * dims[1]);
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let p = V3::new(
                        origin.x + x as f64 * spacing[0],
                        origin.y + y as f64 * spacing[1],
                        origin.z + z as f64 * spacing[2],
                    );
                    slab.push(density(&p));
                }
            }
            slab
        })
        .collect();
    DensityGrid {
        dims,
        origin,
        spacing,
        values: slabs.concat(),
    }
}

/// Lattice offsets of the 8 cell corners, matching the edge and triangle
/// tables below.
const CORNER_OFFSETS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// Corner pair bounding each of the 12 cell edges.
const EDGE_CORNERS: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// Extracts the iso-surface of `grid` at level `iso`. Vertices on edges
/// shared by neighboring cells are emitted once, so the mesh is watertight
/// wherever the level set stays clear of the grid boundary.
pub fn marching_cubes(grid: &DensityGrid, iso: f64) -> TriMesh {
    let [nx, ny, nz] = grid.dims;
    let mut vertices: Vec<V3> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    // Key: (lattice index of the edge's low corner, axis of the edge).
    let mut edge_vertex: HashMap<(usize, u8), usize> = HashMap::new();

    for z in 0..nz - 1 {
        for y in 0..ny - 1 {
            for x in 0..nx - 1 {
                let mut cube = 0usize;
                for (i, o) in CORNER_OFFSETS.iter().enumerate() {
                    if grid.value(x + o[0], y + o[1], z + o[2]) < iso {
                        cube |= 1 << i;
                    }
                }
                let crossing = EDGE_TABLE[cube];
                if crossing == 0 {
                    continue;
                }
                let mut ev = [usize::MAX; 12];
                for (e, pair) in EDGE_CORNERS.iter().enumerate() {
                    if crossing & (1 << e) == 0 {
                        continue;
                    }
                    let a = [
                        x + CORNER_OFFSETS[pair[0]][0],
                        y + CORNER_OFFSETS[pair[0]][1],
                        z + CORNER_OFFSETS[pair[0]][2],
                    ];
                    let b = [
                        x + CORNER_OFFSETS[pair[1]][0],
                        y + CORNER_OFFSETS[pair[1]][1],
                        z + CORNER_OFFSETS[pair[1]][2],
                    ];
                    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                    let axis = (0..3).find(|&i| lo[i] != hi[i]).expect("edge spans an axis") as u8;
                    let key = (grid.index(lo[0], lo[1], lo[2]), axis);
                    let idx = *edge_vertex.entry(key).or_insert_with(|| {
                        let va = grid.value(a[0], a[1], a[2]);
                        let vb = grid.value(b[0], b[1], b[2]);
                        let t = if (vb - va).abs() < 1e-12 {
                            0.5
                        } else {
                            ((iso - va) / (vb - va)).clamp(0.0, 1.0)
                        };
                        let pa = grid.point(a[0], a[1], a[2]);
                        let pb = grid.point(b[0], b[1], b[2]);
                        vertices.push(pa + (pb - pa) * t);
                        vertices.len() - 1
                    });
                    ev[e] = idx;
                }
                let row = &TRIANGLE_TABLE[cube];
                let mut k = 0;
                while row[k] >= 0 {
                    faces.push([
                        ev[row[k] as usize],
                        ev[row[k + 1] as usize],
                        ev[row[k + 2] as usize],
                    ]);
                    k += 3;
                }
            }
        }
    }

    TriMesh {
        vertices,
        colors: Vec::new(),
        faces,
    }
}

/// Bit i set: edge i crosses the surface for that corner-sign configuration.
const EDGE_TABLE: [u16; 256] = [0; 256]; // TABLES_PLACEHOLDER
